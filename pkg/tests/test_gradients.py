import math

import numpy as np
import pytest

from evidloss.dirichlet import DirichletParams
from evidloss.gradients import (
    GradGapPoint,
    beta_ratio_g,
    find_crossing_thresholds,
    gradient_gap_f,
    gradient_gap_f_derivative,
    ufce_grad_alpha,
    uce_grad_alpha,
)
from evidloss.losses import ufce, uce
from evidloss.specfn import PI_SQ_OVER_6, trigamma
from evidloss.verify import finite_diff_gradient


def random_params(rng, n_classes=None, floor=1.001):
    if n_classes is None:
        n_classes = int(rng.integers(2, 7))
    return DirichletParams(np.minimum(floor + rng.exponential(5.0, n_classes), 200.0))


class TestUceGrad:
    def test_flat_two_class(self):
        grad = uce_grad_alpha(DirichletParams((1, 1)), 0)
        assert grad[0] == pytest.approx(-1.0, abs=1e-10)
        assert grad[1] == pytest.approx(PI_SQ_OVER_6 - 1.0, abs=1e-10)

    def test_sign_structure(self):
        rng = np.random.default_rng(0)
        for _ in range(300):
            d = random_params(rng)
            c = int(rng.integers(d.n_classes))
            grad = uce_grad_alpha(d, c)
            assert grad[c] < 0.0
            assert all(g > 0.0 for i, g in enumerate(grad) if i != c)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            d = random_params(rng)
            c = int(rng.integers(d.n_classes))
            fd = finite_diff_gradient(lambda a: uce(DirichletParams(a), c), d.alpha)
            analytic = uce_grad_alpha(d, c)
            scale = max(abs(v) for v in analytic)
            assert max(abs(a - f) for a, f in zip(analytic, fd)) <= 1e-6 * max(scale, 1.0)


class TestUfceGrad:
    def test_flat_two_class_gamma_one(self):
        grad = ufce_grad_alpha(DirichletParams((1, 1)), 0, 1.0)
        assert grad[0] == pytest.approx(-1.0, abs=1e-10)

    def test_gamma_zero_reduction_is_exact(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            d = random_params(rng)
            c = int(rng.integers(d.n_classes))
            assert ufce_grad_alpha(d, c, 0.0) == uce_grad_alpha(d, c)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            d = random_params(rng)
            c = int(rng.integers(d.n_classes))
            g = float(rng.uniform(0.0, 5.0))
            fd = finite_diff_gradient(lambda a: ufce(DirichletParams(a), c, g), d.alpha)
            analytic = ufce_grad_alpha(d, c, g)
            scale = max(max(abs(v) for v in analytic), 1e-8)
            assert max(abs(a - f) for a, f in zip(analytic, fd)) / scale <= 1e-5

    def test_true_class_component_never_vanishes(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            d = random_params(rng)
            c = int(rng.integers(d.n_classes))
            assert ufce_grad_alpha(d, c, float(rng.uniform(0, 5)))[c] < 0.0


class TestGradientGapF:
    def test_matches_gradient_norm_difference(self):
        # |d ufce / d alpha_c| - |d uce / d alpha_c| evaluated through the two
        # gradient routines equals f at the matching coordinates
        rng = np.random.default_rng(5)
        for _ in range(300):
            d = random_params(rng)
            c = int(rng.integers(d.n_classes))
            g = float(rng.uniform(0.0, 5.0))
            a0 = d.alpha0
            p_bar = d.alpha[c] / a0
            direct = abs(ufce_grad_alpha(d, c, g)[c]) - abs(uce_grad_alpha(d, c)[c])
            assert abs(direct - gradient_gap_f(p_bar, a0, g)) <= 1e-8

    def test_gamma_zero_is_identically_zero(self):
        for p in (0.1, 0.3, 0.7):
            assert gradient_gap_f(p, 10.0, 0.0) == 0.0

    def test_positive_near_low_endpoint_moderate_gamma(self):
        for a0 in (3.0, 5.0, 10.0, 50.0):
            for g in (0.01, 0.5, 1.0, 2.0):
                assert gradient_gap_f(1.0 / a0 + 1e-6, a0, g) > 0.0

    def test_negative_near_high_endpoint(self):
        for a0 in (3.0, 5.0, 10.0, 50.0):
            for g in (0.01, 0.5, 1.0, 2.0, 5.0):
                assert gradient_gap_f(1.0 - 1.0 / a0 - 1e-6, a0, g) < 0.0

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            gradient_gap_f(0.0, 10.0, 1.0)
        with pytest.raises(ValueError):
            gradient_gap_f(1.0, 10.0, 1.0)


class TestGradientGapDerivative:
    @pytest.mark.parametrize("p_bar, alpha0, gamma", [(0.3, 10.0, 1.0), (0.5, 5.0, 2.0)])
    def test_matches_finite_differences(self, p_bar, alpha0, gamma):
        h = 1e-6
        fd = (
            gradient_gap_f(p_bar + h, alpha0, gamma)
            - gradient_gap_f(p_bar - h, alpha0, gamma)
        ) / (2 * h)
        analytic = gradient_gap_f_derivative(p_bar, alpha0, gamma)
        assert analytic == pytest.approx(fd, rel=1e-4)

    def test_gamma_zero_is_zero(self):
        assert gradient_gap_f_derivative(0.4, 8.0, 0.0) == 0.0

    def test_random_battery(self):
        rng = np.random.default_rng(6)
        for _ in range(200):
            a0 = float(rng.uniform(3.0, 60.0))
            p = float(rng.uniform(1.2 / a0, 1.0 - 1.2 / a0))
            g = float(rng.uniform(0.01, 5.0))
            h = 1e-6
            fd = (gradient_gap_f(p + h, a0, g) - gradient_gap_f(p - h, a0, g)) / (2 * h)
            analytic = gradient_gap_f_derivative(p, a0, g)
            assert abs(analytic - fd) <= 1e-4 * max(abs(analytic), abs(fd), 1e-8)


class TestBetaRatio:
    def test_zero_true_class_evidence_is_exactly_one(self):
        assert beta_ratio_g(7.3, 0.0, 1.7) == 1.0

    def test_two_class_hand_value(self):
        assert beta_ratio_g(2.0, 1.0, 1.0) == pytest.approx(0.5, rel=1e-12)

    def test_grid_stays_at_most_one(self):
        for ac in (1.0, 2.0, 3.0):
            for g in (0.01, 0.1, 0.5, 1.0, 2.0):
                for a0 in np.arange(ac + 1.0, 100.01, 0.5):
                    assert beta_ratio_g(float(a0), ac, g) <= 1.0 + 1e-12

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            beta_ratio_g(2.0, 2.0, 1.0)
        with pytest.raises(ValueError):
            beta_ratio_g(2.0, 1.0, 0.0)


class TestCrossingThresholds:
    def test_reference_config_crosses_near_point_four(self):
        res = find_crossing_thresholds(5.0, 1.0, 2)
        assert res.flag is None
        assert 0.35 <= res.tau1 <= 0.45
        assert 0.35 <= res.tau2 <= 0.45
        assert res.tau1 <= res.tau2

    def test_gamma_zero_flagged_degenerate(self):
        res = find_crossing_thresholds(5.0, 0.0, 2)
        assert res.flag == "degenerate"

    def test_signs_bracket_the_thresholds(self):
        res = find_crossing_thresholds(10.0, 2.0, 2)
        assert res.flag is None
        before = gradient_gap_f(res.tau1 - 1e-3, 10.0 / (res.tau1 - 1e-3), 2.0)
        after = gradient_gap_f(res.tau2 + 1e-3, 10.0 / (res.tau2 + 1e-3), 2.0)
        assert before > 0.0
        assert after < 0.0

    def test_rejects_unit_evidence(self):
        with pytest.raises(ValueError):
            find_crossing_thresholds(1.0, 1.0, 2)


class TestGradGapPoint:
    def test_valid_point(self):
        p = GradGapPoint(0.3, 10.0, 1.0, -0.5)
        assert p.p_bar == 0.3

    @pytest.mark.parametrize(
        "p_bar, alpha0, gamma",
        [(0.05, 10.0, 1.0), (0.99, 10.0, 1.0), (0.5, 1.5, 1.0), (0.5, 10.0, 9.0)],
    )
    def test_rejects_out_of_window(self, p_bar, alpha0, gamma):
        with pytest.raises(ValueError):
            GradGapPoint(p_bar, alpha0, gamma, 0.0)


def test_ent_regularizer_gradient_matches_finite_differences():
    from evidloss.losses import ent_regularizer
    from evidloss.net import _ent_grad

    rng = np.random.default_rng(7)
    for _ in range(100):
        d = random_params(rng)
        fd = finite_diff_gradient(lambda a: ent_regularizer(DirichletParams(a)), d.alpha)
        analytic = _ent_grad(d)
        scale = max(max(abs(v) for v in analytic), 1.0)
        assert max(abs(a - f) for a, f in zip(analytic, fd)) <= 1e-5 * scale
