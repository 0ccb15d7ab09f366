"""Loss component values against hand-computed results, plus gradient and
linearity properties."""

import numpy as np
import pytest

from cyclegan.losses import (
    cycle_loss,
    identity_loss,
    lsgan_discriminator_term,
    lsgan_generator_term,
    total_generator_objective,
)
from cyclegan.tensor import ShapeError, Tensor, gradient_check


def t(arr):
    return Tensor(np.asarray(arr, dtype=np.float64))


class TestGeneratorTerm:
    def test_fully_fooled(self):
        assert lsgan_generator_term(t(np.ones((1, 1, 2, 2)))).item() == 0.0

    def test_fully_caught(self):
        assert lsgan_generator_term(t(np.zeros((1, 1, 2, 2)))).item() == 1.0

    def test_patch_example(self):
        assert lsgan_generator_term(t([0.5, 0.25])).item() == pytest.approx(0.40625)

    def test_nonnegative(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            assert lsgan_generator_term(t(rng.standard_normal((2, 3)))).item() >= 0.0


class TestDiscriminatorTerm:
    def test_perfect_discrimination(self):
        assert lsgan_discriminator_term(t(np.ones(4)), t(np.zeros(4))).item() == 0.0

    def test_fully_wrong(self):
        assert lsgan_discriminator_term(t(np.zeros(4)), t(np.ones(4))).item() == 2.0

    def test_half_half(self):
        assert lsgan_discriminator_term(t([0.5, 0.5]), t([0.5, 0.5])).item() == pytest.approx(0.5)

    def test_minimum_is_at_perfect_outputs(self):
        base = lsgan_discriminator_term(t(np.ones(4)), t(np.zeros(4))).item()
        assert base == 0.0
        for d in (1e-3, -1e-3):
            perturbed_real = lsgan_discriminator_term(t(np.ones(4) + d), t(np.zeros(4))).item()
            perturbed_fake = lsgan_discriminator_term(t(np.ones(4)), t(np.zeros(4) + d)).item()
            assert perturbed_real > 0.0 and perturbed_fake > 0.0


class TestCycleLoss:
    def test_perfect_reconstruction(self):
        x, y = t(np.ones(3)), t(np.zeros(3))
        assert cycle_loss(x, t(np.ones(3)), y, t(np.zeros(3))).item() == 0.0

    def test_uniform_offsets(self):
        x = t(np.zeros((2, 2)))
        y = t(np.ones((2, 2)))
        out = cycle_loss(x, t(np.full((2, 2), 0.3)), y, t(np.full((2, 2), 1.1)))
        assert out.item() == pytest.approx(0.4)

    def test_one_sided_modes(self):
        x = t(np.zeros(2))
        y = t(np.zeros(2))
        xr = t(np.full(2, 0.3))
        yr = t(np.full(2, 0.1))
        assert cycle_loss(x, xr, y, yr, mode="forward").item() == pytest.approx(0.3)
        assert cycle_loss(x, xr, y, yr, mode="backward").item() == pytest.approx(0.1)
        with pytest.raises(ValueError):
            cycle_loss(x, xr, y, yr, mode="sideways")

    def test_zero_iff_exact(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal(5)
        y = rng.standard_normal(5)
        assert cycle_loss(t(x), t(x.copy()), t(y), t(y.copy())).item() == 0.0
        assert cycle_loss(t(x), t(x + 1e-4), t(y), t(y.copy())).item() > 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            cycle_loss(t(np.zeros(2)), t(np.zeros(3)), t(np.zeros(2)), t(np.zeros(2)))


class TestIdentityLoss:
    def test_already_identity(self):
        y, x = t(np.ones(3)), t(np.zeros(3))
        assert identity_loss(t(np.ones(3)), y, t(np.zeros(3)), x).item() == 0.0

    def test_uniform_offset(self):
        y = t(np.zeros(4))
        x = t(np.ones(4))
        assert identity_loss(t(np.full(4, 0.2)), y, t(np.ones(4)), x).item() == pytest.approx(0.2)

    def test_disabled_returns_exact_zero(self):
        rng = np.random.default_rng(2)
        out = identity_loss(t(rng.standard_normal(3)), t(rng.standard_normal(3)),
                            t(rng.standard_normal(3)), t(rng.standard_normal(3)), enabled=False)
        assert out.item() == 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            identity_loss(t(np.zeros(2)), t(np.zeros(3)), t(np.zeros(2)), t(np.zeros(2)))


class TestTotalObjective:
    def test_lambda_ten_example(self):
        out = total_generator_objective(t(0.5), t(0.5), t(0.1), None, lam=10.0, lam_idt=0.0)
        assert out.item() == pytest.approx(2.0)

    def test_gan_alone(self):
        out = total_generator_objective(t(0.7), t(0.3), t(123.0), None, lam=0.0, lam_idt=0.0)
        assert out.item() == pytest.approx(1.0)

    def test_identity_weight_half_lambda(self):
        out = total_generator_objective(t(0.0), t(0.0), t(0.0), t(1.0), lam=10.0, lam_idt=5.0)
        assert out.item() == pytest.approx(5.0)

    def test_linear_in_each_component(self):
        lam, lam_idt = 10.0, 5.0
        base = total_generator_objective(t(0.2), t(0.3), t(0.05), t(0.01), lam, lam_idt).item()
        assert total_generator_objective(t(1.2), t(0.3), t(0.05), t(0.01), lam, lam_idt).item() == pytest.approx(base + 1.0)
        assert total_generator_objective(t(0.2), t(1.3), t(0.05), t(0.01), lam, lam_idt).item() == pytest.approx(base + 1.0)
        assert total_generator_objective(t(0.2), t(0.3), t(1.05), t(0.01), lam, lam_idt).item() == pytest.approx(base + lam)
        assert total_generator_objective(t(0.2), t(0.3), t(0.05), t(1.01), lam, lam_idt).item() == pytest.approx(base + lam_idt)

    def test_negative_weights_rejected(self):
        with pytest.raises(ValueError):
            total_generator_objective(t(0.0), t(0.0), t(0.0), None, lam=-1.0, lam_idt=0.0)


class TestLossGradients:
    def test_generator_term_grad(self):
        rng = np.random.default_rng(3)
        err = gradient_check(lambda d: lsgan_generator_term(d), [rng.standard_normal((1, 1, 3, 3))])
        assert err < 1e-4

    def test_discriminator_term_grad(self):
        rng = np.random.default_rng(4)
        err = gradient_check(
            lambda r, f: lsgan_discriminator_term(r, f),
            [rng.standard_normal((1, 1, 3, 3)), rng.standard_normal((1, 1, 3, 3))],
        )
        assert err < 1e-4

    def test_cycle_grad(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal(6)
        y = rng.standard_normal(6)
        err = gradient_check(
            lambda xr, yr: cycle_loss(Tensor(x, dtype=np.float64), xr, Tensor(y, dtype=np.float64), yr),
            [x + 0.5, y - 0.5],
        )
        assert err < 1e-4

    def test_combined_objective_grad(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal(4)
        y = rng.standard_normal(4)

        def fn(d_fake_y, d_fake_x, xr, yr):
            gg = lsgan_generator_term(d_fake_y)
            gf = lsgan_generator_term(d_fake_x)
            cyc = cycle_loss(Tensor(x, dtype=np.float64), xr, Tensor(y, dtype=np.float64), yr)
            return total_generator_objective(gg, gf, cyc, None, 10.0, 0.0)

        err = gradient_check(fn, [rng.standard_normal(4), rng.standard_normal(4), x + 0.3, y + 0.7])
        assert err < 1e-4
