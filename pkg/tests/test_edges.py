import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from s2p.edges import EdgeParams, batch_standardize, load_external_edges, standardize
from s2p.images import InvalidInputError, save_image

from edge_oracle import oracle_edges


def step_image():
    img = np.zeros((8, 8, 1), np.float32)
    img[:, 4:, :] = 1.0
    return img


class TestStandardize:
    def test_constant_image_is_all_zero(self):
        img = np.full((32, 32, 3), 0.5, np.float32)
        assert standardize(img).max() == 0.0

    def test_step_edges_confined_to_adjacent_columns(self):
        edge = standardize(step_image(), EdgeParams(binarize=True))
        # oracle: central differences put all gradient in cols 3 and 4
        expected = oracle_edges(step_image(), 1.0, 0.1, 0.2, True)
        np.testing.assert_array_equal(edge, expected)
        cols = set(np.where(edge > 0)[1])
        assert cols == {3, 4}
        assert edge[:, [0, 1, 2, 5, 6, 7]].max() == 0.0

    def test_restandardization_overlap(self):
        # Stability of the standardized domain: re-running the detector on
        # its own output keeps at least half the edge support (IoU >= 0.5).
        # Needs near-delta blur so NMS plateau ties survive on thin lines.
        params = EdgeParams(blur_sigma=0.1, binarize=True)
        once = oracle_edges(step_image(), 0.1, 0.1, 0.2, True)
        twice = oracle_edges(once[:, :, None], 0.1, 0.1, 0.2, True)
        np.testing.assert_array_equal(standardize(step_image(), params), once)
        inter = np.logical_and(once > 0.5, twice > 0.5).sum()
        union = np.logical_or(once > 0.5, twice > 0.5).sum()
        assert union > 0 and inter / union >= 0.5

    def test_matches_oracle_on_random_images(self):
        rng = np.random.default_rng(42)
        for _ in range(5):
            img = rng.random((8, 8, 3)).astype(np.float32)
            got = standardize(img, EdgeParams(binarize=True))
            want = oracle_edges(img, 1.0, 0.1, 0.2, True)
            np.testing.assert_array_equal(got, want)

    def test_matches_oracle_soft_output(self):
        rng = np.random.default_rng(7)
        img = rng.random((8, 8, 3)).astype(np.float32)
        got = standardize(img)
        want = oracle_edges(img, 1.0, 0.1, 0.2, False)
        np.testing.assert_allclose(got, want, atol=1e-6)

    def test_deterministic(self):
        rng = np.random.default_rng(1)
        img = rng.random((16, 16, 3)).astype(np.float32)
        a = standardize(img)
        b = standardize(img)
        np.testing.assert_array_equal(a, b)

    def test_zero_sized_image_rejected(self):
        with pytest.raises(InvalidInputError):
            standardize(np.zeros((0, 4, 3), np.float32))

    @given(st.integers(min_value=0, max_value=2**32 - 1))
    @settings(max_examples=15, deadline=None)
    def test_output_range_and_shape(self, seed):
        rng = np.random.default_rng(seed)
        img = rng.random((12, 12, 3)).astype(np.float32)
        edge = standardize(img)
        assert edge.shape == (12, 12)
        assert edge.min() >= 0.0 and edge.max() <= 1.0
        binary = standardize(img, EdgeParams(binarize=True))
        assert set(np.unique(binary)) <= {0.0, 1.0}

    @given(st.integers(min_value=0, max_value=2**32 - 1))
    @settings(max_examples=10, deadline=None)
    def test_monotone_sparsity_in_high_threshold(self, seed):
        rng = np.random.default_rng(seed)
        img = rng.random((12, 12, 3)).astype(np.float32)
        counts = [
            (standardize(img, EdgeParams(high_threshold=h, binarize=True)) > 0).sum()
            for h in (0.15, 0.3, 0.5, 0.8)
        ]
        assert all(a >= b for a, b in zip(counts, counts[1:]))

    def test_threshold_ordering_enforced(self):
        with pytest.raises(InvalidInputError):
            EdgeParams(low_threshold=0.3, high_threshold=0.2)


class TestLoadExternalEdges:
    def test_white_png_is_blank(self, tmp_path):
        p = tmp_path / "white.png"
        Image.fromarray(np.full((16, 16), 255, np.uint8), mode="L").save(p)
        edge = load_external_edges(p, (16, 16))
        assert edge.shape == (16, 16)
        assert edge.max() == 0.0

    def test_black_line_on_white_inverts(self, tmp_path):
        data = np.full((16, 16), 255, np.uint8)
        data[8, :] = 0
        p = tmp_path / "line.png"
        Image.fromarray(data, mode="L").save(p)
        edge = load_external_edges(p, (16, 16))
        assert (edge[8, :] == 1.0).all()
        assert edge[[i for i in range(16) if i != 8], :].max() == 0.0

    def test_area_average_downsample(self, tmp_path):
        rng = np.random.default_rng(5)
        data = rng.integers(0, 128, (512, 512)).astype(np.uint8)  # mean < 0.5: no inversion
        p = tmp_path / "big.png"
        Image.fromarray(data, mode="L").save(p)
        edge = load_external_edges(p, (64, 64))
        want = (data.astype(np.float64) / 255.0).reshape(64, 8, 64, 8).mean(axis=(1, 3))
        np.testing.assert_allclose(edge, want, atol=1e-6)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_external_edges(tmp_path / "nope.png", (8, 8))

    def test_non_grayscale_rejected(self, tmp_path):
        p = tmp_path / "rgb.png"
        Image.fromarray(np.zeros((8, 8, 3), np.uint8), mode="RGB").save(p)
        with pytest.raises(InvalidInputError):
            load_external_edges(p, (8, 8))


class TestBatchStandardize:
    def test_all_valid(self, tmp_path):
        src = tmp_path / "in"
        src.mkdir()
        rng = np.random.default_rng(0)
        for i in range(3):
            save_image(rng.random((16, 16, 3)).astype(np.float32), src / f"img{i}.png")
        report = batch_standardize(src, tmp_path / "out")
        assert report["count"] == 3
        assert report["failures"] == []
        assert len(list((tmp_path / "out").glob("*.png"))) == 3

    def test_corrupt_file_recorded(self, tmp_path):
        src = tmp_path / "in"
        src.mkdir()
        rng = np.random.default_rng(0)
        for i in range(2):
            save_image(rng.random((16, 16, 3)).astype(np.float32), src / f"img{i}.png")
        (src / "broken.png").write_bytes(b"not a png")
        report = batch_standardize(src, tmp_path / "out")
        assert report["count"] == 2
        assert len(report["failures"]) == 1
        assert "broken" in report["failures"][0]["path"]

    def test_constant_image_roundtrip(self, tmp_path):
        src = tmp_path / "in"
        src.mkdir()
        save_image(np.full((16, 16, 3), 0.3, np.float32), src / "flat.png")
        batch_standardize(src, tmp_path / "out")
        edge = load_external_edges(tmp_path / "out" / "flat.png", (16, 16))
        assert edge.max() == 0.0

    def test_unreadable_directory(self, tmp_path):
        with pytest.raises(InvalidInputError):
            batch_standardize(tmp_path / "missing", tmp_path / "out")
