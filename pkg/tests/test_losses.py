import math

import numpy as np
import pytest

from evidloss.dirichlet import (
    DirichletParams,
    SimplexVector,
    expected_categorical_entropy,
    expected_p_log_p,
    sample_array,
)
from evidloss.losses import (
    LossConfig,
    SaturationError,
    SupervisedSample,
    combined_objective,
    cross_entropy,
    energy_bound_penalty,
    energy_score,
    ent_regularizer,
    er_loss,
    eus_multiplier,
    focal,
    softmax_entropy,
    uce,
    uce_digamma_sum,
    uce_ent_objective,
    ufce,
    ufce_eus,
    ufce_integer_gamma,
)


def random_params(rng, n_classes=None, cap=200.0):
    if n_classes is None:
        n_classes = int(rng.integers(2, 7))
    return DirichletParams(np.minimum(1.0 + rng.exponential(5.0, n_classes), cap))


class TestUce:
    def test_flat_two_class(self):
        assert uce(DirichletParams((1, 1)), 0) == pytest.approx(1.0, abs=1e-12)

    def test_three_class(self):
        assert uce(DirichletParams((2, 1, 1)), 0) == pytest.approx(5.0 / 6.0, abs=1e-12)

    def test_monotone_in_true_class_evidence(self):
        values = [uce(DirichletParams((a, 1.0, 1.0)), 0) for a in (1, 2, 5, 20, 100)]
        assert all(x > y for x, y in zip(values, values[1:]))

    def test_strictly_positive(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            d = random_params(rng)
            assert uce(d, int(rng.integers(d.n_classes))) > 0.0

    def test_index_error(self):
        with pytest.raises(IndexError):
            uce(DirichletParams((1, 1)), 5)


class TestUceDigammaSum:
    @pytest.mark.parametrize(
        "alpha_c, k, expected",
        [(1.0, 3, 1.5), (1.0, 2, 1.0), (2.0, 2, 0.5)],
    )
    def test_examples(self, alpha_c, k, expected):
        assert uce_digamma_sum(alpha_c, k) == pytest.approx(expected, abs=1e-12)

    def test_agrees_with_general_form(self):
        rng = np.random.default_rng(1)
        for _ in range(300):
            alpha_c = float(1.0 + rng.exponential(5.0))
            k = int(rng.integers(2, 9))
            d = DirichletParams((alpha_c,) + (1.0,) * (k - 1))
            assert abs(uce_digamma_sum(alpha_c, k) - uce(d, 0)) <= 1e-10


class TestUfce:
    def test_flat_two_class_gamma_one(self):
        assert ufce(DirichletParams((1, 1)), 0, 1.0) == pytest.approx(0.75, abs=1e-12)

    def test_gamma_zero_reduces_exactly(self):
        rng = np.random.default_rng(2)
        for _ in range(1000):
            d = random_params(rng)
            c = int(rng.integers(d.n_classes))
            assert ufce(d, c, 0.0) == uce(d, c)

    def test_tiny_gamma_continuity(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            d = random_params(rng)
            c = int(rng.integers(d.n_classes))
            assert ufce(d, c, 1e-9) == pytest.approx(uce(d, c), rel=1e-6)

    def test_never_exceeds_uce(self):
        rng = np.random.default_rng(4)
        for _ in range(500):
            d = random_params(rng)
            c = int(rng.integers(d.n_classes))
            g = float(rng.uniform(0.0, 5.0))
            assert ufce(d, c, g) <= uce(d, c) + 1e-12

    def test_against_monte_carlo(self):
        d = DirichletParams((3.0, 2.0, 1.0))
        p0 = sample_array(d, 1_000_000, np.random.default_rng(5))[:, 0]
        vals = (1.0 - p0) ** 2 * (-np.log(p0))
        sem = vals.std(ddof=1) / math.sqrt(len(vals))
        assert ufce(d, 0, 2.0) == pytest.approx(vals.mean(), abs=4 * sem)

    def test_positive(self):
        rng = np.random.default_rng(6)
        for _ in range(300):
            d = random_params(rng)
            assert ufce(d, 0, float(rng.uniform(0, 5))) > 0.0

    def test_rejects_negative_gamma(self):
        with pytest.raises(ValueError):
            ufce(DirichletParams((1, 1)), 0, -0.5)


class TestLowerBounds:
    def test_bounds_hold_for_gamma_at_least_one(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            d = random_params(rng)
            c = int(rng.integers(d.n_classes))
            g = float(rng.uniform(1.0, 5.0))
            f_val = ufce(d, c, g)
            u_val = uce(d, c)
            assert f_val >= u_val + g * expected_p_log_p(d, c) - 1e-9
            assert f_val >= u_val - g * expected_categorical_entropy(d) - 1e-9

    def test_tightness_two_class_gamma_one(self):
        rng = np.random.default_rng(8)
        for _ in range(300):
            d = random_params(rng, 2)
            c = int(rng.integers(2))
            lhs = ufce(d, c, 1.0)
            rhs = uce(d, c) + expected_p_log_p(d, c)
            assert abs(lhs - rhs) <= 1e-10


class TestUfceIntegerGamma:
    def test_flat_two_class(self):
        assert ufce_integer_gamma(1.0, 2, 1) == pytest.approx(0.75, abs=1e-12)

    @pytest.mark.parametrize(
        "alpha_c, k, gamma",
        [(2.0, 3, 1), (1.0, 2, 2), (3.5, 4, 3), (7.0, 2, 5)],
    )
    def test_agrees_with_general_form(self, alpha_c, k, gamma):
        d = DirichletParams((alpha_c,) + (1.0,) * (k - 1))
        assert abs(ufce_integer_gamma(alpha_c, k, gamma) - ufce(d, 0, float(gamma))) <= 1e-10

    def test_rejects_non_integer(self):
        with pytest.raises(ValueError):
            ufce_integer_gamma(1.0, 2, 1.5)


class TestEntRegularizer:
    def test_flat_prior_is_zero(self):
        assert ent_regularizer(DirichletParams((1, 1, 1))) == 0.0

    def test_positive_off_prior(self):
        assert ent_regularizer(DirichletParams((2, 1))) > 0.0

    def test_peakier_is_larger(self):
        assert ent_regularizer(DirichletParams((50, 50))) > ent_regularizer(
            DirichletParams((5, 5))
        )


class TestUceEntObjective:
    def test_beta_zero_is_plain(self):
        d = DirichletParams((3.0, 1.5))
        assert uce_ent_objective(d, 0, 0.0) == uce(d, 0)

    def test_flat_prior_regularizer_vanishes(self):
        d = DirichletParams((1.0, 1.0, 1.0))
        assert uce_ent_objective(d, 0, 0.001) == uce(d, 0)

    def test_adds_weighted_kl(self):
        d = DirichletParams((4.0, 2.0))
        assert uce_ent_objective(d, 0, 0.25) == pytest.approx(
            uce(d, 0) + 0.25 * ent_regularizer(d)
        )


class TestEus:
    def test_multiplier_examples(self):
        assert eus_multiplier(4.0, 4, 0.0) == 1.0
        assert eus_multiplier(128.0, 2, 64.0) == 2.0

    def test_multiplier_range(self):
        rng = np.random.default_rng(9)
        for _ in range(200):
            c = int(rng.integers(2, 7))
            a0 = float(c + rng.exponential(20.0))
            xi = float(rng.uniform(0.1, 128.0))
            m = eus_multiplier(a0, c, xi)
            assert 1.0 < m <= 1.0 + xi

    def test_ufce_eus_examples(self):
        d = DirichletParams((1, 1))
        assert ufce_eus(d, 0, 1.0, 0.0) == ufce(d, 0, 1.0)
        assert ufce_eus(d, 0, 1.0, 64.0) == pytest.approx(48.75, abs=1e-10)

    def test_multiplier_is_frozen_for_gradients(self):
        # finite differences of (frozen multiplier) * ufce match the analytic
        # gradient scaled by that same multiplier
        from evidloss.gradients import ufce_grad_alpha
        from evidloss.verify import finite_diff_gradient

        d = DirichletParams((3.0, 2.0, 1.5))
        frozen = eus_multiplier(d.alpha0, d.n_classes, 64.0)
        fd = finite_diff_gradient(
            lambda a: frozen * ufce(DirichletParams(a), 0, 1.0), d.alpha
        )
        analytic = [frozen * g for g in ufce_grad_alpha(d, 0, 1.0)]
        for a, f in zip(analytic, fd):
            assert a == pytest.approx(f, rel=1e-5)


class TestErLoss:
    def test_flat_is_zero(self):
        assert er_loss(DirichletParams((1, 1, 1))) == 0.0

    def test_decreases_toward_flat(self):
        values = [
            er_loss(DirichletParams((1.0 + t * 9.0, 1.0, 1.0)))
            for t in (1.0, 0.5, 0.25, 0.0)
        ]
        assert all(x > y for x, y in zip(values, values[1:-1])) and values[-1] == 0.0


class TestCombinedObjective:
    def test_all_id_xi_zero_is_mean_ufce(self):
        cfg = LossConfig(gamma=1.0, xi=0.0)
        batch = [
            SupervisedSample(DirichletParams((1, 1)), 0),
            SupervisedSample(DirichletParams((2, 1)), 0),
        ]
        expected = (ufce(batch[0].alpha, 0, 1.0) + ufce(batch[1].alpha, 0, 1.0)) / 2
        assert combined_objective(batch, cfg) == pytest.approx(expected)

    def test_flat_ood_contributes_nothing(self):
        cfg = LossConfig(gamma=1.0, xi=0.0)
        batch = [
            SupervisedSample(DirichletParams((1, 1)), 0),
            SupervisedSample(DirichletParams((1, 1)), role="pseudo-OOD"),
        ]
        assert combined_objective(batch, cfg) == pytest.approx(ufce(batch[0].alpha, 0, 1.0))

    def test_mixed_batch_hand_value(self):
        cfg = LossConfig(gamma=1.0, xi=0.0, lambda_=0.01)
        id1 = SupervisedSample(DirichletParams((1, 1)), 0)
        id2 = SupervisedSample(DirichletParams((2, 1)), 0)
        ood1 = SupervisedSample(DirichletParams((1, 1)), role="pseudo-OOD")
        ood2 = SupervisedSample(DirichletParams((2, 1)), role="pseudo-OOD")
        expected = (0.75 + ufce(id2.alpha, 0, 1.0)) / 2 + 0.01 * (
            0.0 + er_loss(ood2.alpha)
        ) / 2
        assert combined_objective([id1, id2, ood1, ood2], cfg) == pytest.approx(expected)

    def test_rejects_batch_without_id(self):
        cfg = LossConfig()
        with pytest.raises(ValueError):
            combined_objective(
                [SupervisedSample(DirichletParams((1, 1)), role="pseudo-OOD")], cfg
            )
        with pytest.raises(ValueError):
            combined_objective([], cfg)


class TestDeterministicLosses:
    def test_certain_prediction_is_zero(self):
        p = SimplexVector((1.0, 0.0))
        assert cross_entropy(p, 0) == 0.0
        assert focal(p, 0, 2.0) == 0.0

    def test_even_split(self):
        p = SimplexVector((0.5, 0.5))
        assert cross_entropy(p, 0) == pytest.approx(math.log(2.0))
        assert focal(p, 0, 1.0) == pytest.approx(0.5 * math.log(2.0))
        assert focal(p, 0, 0.0) == cross_entropy(p, 0)

    def test_focal_never_exceeds_cross_entropy(self):
        rng = np.random.default_rng(10)
        for _ in range(200):
            raw = rng.dirichlet((1.0, 1.0, 1.0))
            p = SimplexVector(tuple(raw / raw.sum()))
            g = float(rng.uniform(0.0, 5.0))
            assert focal(p, 0, g) <= cross_entropy(p, 0) + 1e-12

    def test_zero_probability_saturates(self):
        p = SimplexVector((0.0, 1.0))
        with pytest.raises(SaturationError):
            cross_entropy(p, 0)
        with pytest.raises(SaturationError):
            focal(p, 0, 1.0)


class TestSoftmaxEntropy:
    def test_uniform_logits(self):
        for c in (2, 3, 7):
            assert softmax_entropy([1.3] * c) == pytest.approx(math.log(c), abs=1e-12)

    def test_extreme_logits_stable(self):
        assert abs(softmax_entropy([1000.0, 0.0])) <= 1e-9

    def test_reference_value(self):
        assert softmax_entropy([1.0, 0.0]) == pytest.approx(0.5822031088882180, abs=1e-12)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            softmax_entropy([float("inf"), 0.0])


class TestEnergyScore:
    def test_two_zero_logits(self):
        assert energy_score([0.0, 0.0], 1.0) == pytest.approx(-math.log(2.0), abs=1e-12)

    def test_single_class(self):
        assert energy_score([3.25]) == -3.25

    def test_shift_identity(self):
        rng = np.random.default_rng(11)
        logits = list(rng.normal(0, 3, 5))
        base = energy_score(logits, 1.5)
        shifted = energy_score([v + 2.5 for v in logits], 1.5)
        assert shifted == pytest.approx(base - 2.5, abs=1e-12)

    def test_rejects_bad_temperature(self):
        with pytest.raises(ValueError):
            energy_score([1.0], 0.0)


class TestEnergyBoundPenalty:
    def test_satisfied_margins(self):
        assert energy_bound_penalty([-10.0, -8.0], [-1.0, 0.0], -6.0, -2.0) == 0.0

    def test_single_violation(self):
        assert energy_bound_penalty([-5.0], [], -6.0, -2.0) == 1.0

    def test_both_empty_rejected(self):
        with pytest.raises(ValueError):
            energy_bound_penalty([], [], -6.0, -2.0)


class TestLossConfig:
    def test_defaults_are_valid(self):
        cfg = LossConfig()
        assert cfg.beta == 0.001 and cfg.lambda_ == 0.01 and cfg.xi == 64.0

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"gamma": -0.1},
            {"gamma": 5.5},
            {"temperature": 0.0},
            {"beta": -1.0},
            {"positive_class_weight": 0.0},
        ],
    )
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ValueError):
            LossConfig(**kwargs)


class TestSupervisedSample:
    def test_id_requires_label(self):
        with pytest.raises(ValueError):
            SupervisedSample(DirichletParams((1, 1)), None, "ID")

    def test_ood_forbids_label(self):
        with pytest.raises(ValueError):
            SupervisedSample(DirichletParams((1, 1)), 0, "pseudo-OOD")
