import sys

import numpy as np
import pytest

from conftest import make_captions, make_images
from s2p.data import DatasetManifest, ManifestEntry
from s2p.evaluate import (
    STYLE_PREFIXES,
    EvalReport,
    FallbackPerceptualBackend,
    ExternalScorerBackend,
    evaluate_reconstruction,
    perceptual_distance,
    style_sweep,
)
from s2p.images import InvalidInputError, save_image
from s2p.sampler import SamplerConfig


@pytest.fixture(scope="module")
def backend(tiny_codec):
    return FallbackPerceptualBackend(tiny_codec)


class TestFallbackMetric:
    def test_identity_is_zero(self, backend):
        x = make_images(1, res=16, seed=30)[0]
        assert perceptual_distance(x, x, backend) == 0.0

    def test_symmetry(self, backend):
        a, b = make_images(2, res=16, seed=31)
        assert perceptual_distance(a, b, backend) == pytest.approx(
            perceptual_distance(b, a, backend)
        )

    def test_nonnegative(self, backend):
        a, b = make_images(2, res=16, seed=32)
        assert perceptual_distance(a, b, backend) >= 0

    def test_noise_ordering(self, backend):
        # stronger corruption scores farther, averaged over 20 images
        rng = np.random.default_rng(33)
        images = make_images(20, res=16, seed=33)
        weak, strong = [], []
        for x in images:
            nw = np.clip(x + rng.normal(0, 0.05, x.shape), 0, 1).astype(np.float32)
            ns = np.clip(x + rng.normal(0, 0.3, x.shape), 0, 1).astype(np.float32)
            weak.append(perceptual_distance(x, nw, backend))
            strong.append(perceptual_distance(x, ns, backend))
        assert np.mean(strong) > np.mean(weak)

    def test_shape_mismatch_rejected(self, backend):
        a = make_images(1, res=16, seed=34)[0]
        with pytest.raises(InvalidInputError):
            perceptual_distance(a, a[:8, :8], backend)


class TestExternalAdapter:
    def test_subprocess_contract(self, tmp_path):
        scorer = tmp_path / "scorer.py"
        scorer.write_text(
            "import sys\n"
            "pairs = [l.split('\\t') for l in open(sys.argv[1]) if l.strip()]\n"
            "open(sys.argv[2], 'w').write(''.join('0.25\\n' for _ in pairs))\n"
        )
        backend = ExternalScorerBackend([sys.executable, str(scorer)])
        a, b = make_images(2, res=16, seed=35)
        assert backend.distance(a, b) == 0.25

    def test_failure_surfaces(self, tmp_path):
        scorer = tmp_path / "bad.py"
        scorer.write_text("import sys; sys.exit(3)\n")
        backend = ExternalScorerBackend([sys.executable, str(scorer)])
        a, b = make_images(2, res=16, seed=36)
        with pytest.raises(RuntimeError):
            backend.distance(a, b)


def _manifest_from_images(tmp_path, images, captions, resolution=16):
    entries = []
    for i, (img, cap) in enumerate(zip(images, captions)):
        p = tmp_path / f"e{i}.png"
        save_image(img, p)
        entries.append(ManifestEntry(path=str(p), caption=cap))
    return DatasetManifest(entries=entries, resolution=resolution)


class TestEvaluateReconstruction:
    def test_identity_sampler_scores_zero(self, tiny_model, backend, tmp_path):
        from s2p.data import prepare_example

        images = make_images(3, res=16, seed=37)
        manifest = _manifest_from_images(tmp_path, images, make_captions(3))
        prepared = {e.caption: prepare_example(e, 16)[0] for e in manifest.entries}
        stub = lambda model, edge, caption, cfg: prepared[caption]
        report = evaluate_reconstruction(
            tiny_model,
            manifest,
            SamplerConfig(steps=2, seed=0),
            backend,
            report_resolution=16,
            sample_fn=stub,
        )
        assert report.mean_distance == 0.0
        assert report.n == 3

    def test_mean_matches_per_item(self, tiny_model, backend, tmp_path):
        images = make_images(3, res=16, seed=38)
        manifest = _manifest_from_images(tmp_path, images, make_captions(3))
        report = evaluate_reconstruction(
            tiny_model,
            manifest,
            SamplerConfig(steps=2, guidance_scale=1.0, seed=0),
            backend,
            report_resolution=16,
        )
        assert report.mean_distance == pytest.approx(
            np.mean([i["distance"] for i in report.per_item]), abs=1e-9
        )

    def test_empty_manifest_rejected(self, tiny_model, backend):
        with pytest.raises(InvalidInputError):
            evaluate_reconstruction(
                tiny_model, DatasetManifest(entries=[]), SamplerConfig(steps=2), backend
            )

    def test_protocol_determinism(self, tiny_model, backend, tmp_path):
        images = make_images(2, res=16, seed=39)
        manifest = _manifest_from_images(tmp_path, images, make_captions(2))
        cfg = SamplerConfig(steps=2, guidance_scale=1.0, seed=5)
        r1 = evaluate_reconstruction(tiny_model, manifest, cfg, backend, report_resolution=16)
        r2 = evaluate_reconstruction(tiny_model, manifest, cfg, backend, report_resolution=16)
        assert r1.mean_distance == r2.mean_distance


class TestStyleSweep:
    def test_default_prefixes_exact(self):
        assert STYLE_PREFIXES == [
            "an anime scene of",
            "a watercolor painting of",
            "an ukiyo-e art of",
            "a black and white photograph of",
            "a fresco painting of",
            "a graffiti of",
            "an oil painting of",
            "a pop art of",
            "an abstract art of",
        ]

    def test_nine_outputs(self, tiny_model):
        sketch = np.zeros((16, 16), np.float32)
        sketch[4:12, 8] = 1.0
        results = style_sweep(tiny_model, sketch, "a mountain", SamplerConfig(steps=2, seed=1))
        assert len(results) == 9
        assert [p for p, _ in results] == STYLE_PREFIXES

    def test_prompts_change_output(self, tiny_model):
        sketch = np.zeros((16, 16), np.float32)
        sketch[4:12, 8] = 1.0
        results = style_sweep(
            tiny_model,
            sketch,
            "a mountain",
            SamplerConfig(steps=3, guidance_scale=3.0, seed=1),
            prefixes=["an oil painting of", "a graffiti of"],
        )
        assert np.abs(results[0][1] - results[1][1]).max() > 0

    def test_empty_prefix_list_rejected(self, tiny_model):
        with pytest.raises(InvalidInputError):
            style_sweep(tiny_model, np.zeros((16, 16), np.float32), "x", SamplerConfig(steps=2), prefixes=[])
