import numpy as np
import pytest
import torch

from s2p.images import InvalidInputError
from s2p.schedule import make_schedule, q_sample


class TestMakeSchedule:
    def test_linear_1000_first_alpha_bar(self):
        s = make_schedule(1000, "linear")
        assert s.alpha_bar_at(1) == 1.0 - 1e-4

    def test_linear_1000_terminal_alpha_bar(self):
        s = make_schedule(1000, "linear")
        # independent computation of the cumulative product
        beta = np.linspace(1e-4, 0.02, 1000)
        want = np.prod(1.0 - beta)
        assert abs(s.alpha_bar_at(1000) - want) < 1e-12
        assert s.alpha_bar_at(1000) < 0.05

    @pytest.mark.parametrize("T", [200, 1000])
    @pytest.mark.parametrize("kind", ["linear", "cosine"])
    def test_invariants(self, T, kind):
        s = make_schedule(T, kind)
        assert (s.beta > 0).all() and (s.beta < 1).all()
        assert (np.diff(s.alpha_bar) < 0).all()

    @pytest.mark.parametrize("T", [200, 1000])
    def test_linear_endpoints(self, T):
        s = make_schedule(T, "linear")
        assert s.alpha_bar_at(1) > 0.99
        assert s.alpha_bar_at(1) == 1.0 - s.beta[0]
        assert s.alpha_bar_at(T) < 0.05

    def test_too_short_rejected(self):
        with pytest.raises(InvalidInputError):
            make_schedule(1)

    def test_unknown_kind_rejected(self):
        with pytest.raises(InvalidInputError):
            make_schedule(100, "quadratic")


class TestQSample:
    def test_near_identity_at_t1(self):
        s = make_schedule(1000, "linear")
        z0 = torch.ones(4)
        zt = q_sample(z0, 1, torch.zeros(4), s)
        np.testing.assert_allclose(zt.numpy(), np.sqrt(1 - 1e-4) * np.ones(4))

    def test_pure_noise_limit(self):
        s = make_schedule(1000, "linear")
        eps = torch.randn(8, generator=torch.Generator().manual_seed(0))
        zt = q_sample(torch.zeros(8), 1000, eps, s)
        # alpha_bar_T ~ 4e-5: z_T is essentially eps
        np.testing.assert_allclose(zt.numpy(), np.sqrt(1 - s.alpha_bar_at(1000)) * eps.numpy())

    def test_scalar_substitution(self):
        s = make_schedule(10, "linear")
        t = int(np.argmin(np.abs(s.alpha_bar - 0.25))) + 1
        ab = s.alpha_bar_at(t)
        got = q_sample(torch.tensor([1.0]), t, torch.tensor([0.0]), s)
        assert abs(float(got) - np.sqrt(ab)) < 1e-7

    def test_shape_mismatch(self):
        s = make_schedule(10, "linear")
        with pytest.raises(InvalidInputError):
            q_sample(torch.zeros(3), 1, torch.zeros(4), s)

    def test_forward_statistics(self):
        # mean ~ sqrt(ab)*z0, var of (z_t - sqrt(ab) z0) ~ 1-ab within 5%
        s = make_schedule(200, "linear")
        gen = torch.Generator().manual_seed(9)
        z0 = torch.full((10000,), 0.7)
        for t in (10, 100, 200):
            eps = torch.randn(10000, generator=gen)
            zt = q_sample(z0, t, eps, s)
            ab = s.alpha_bar_at(t)
            resid = zt - np.sqrt(ab) * z0
            assert abs(float(resid.var()) - (1 - ab)) < 0.05 * (1 - ab)
