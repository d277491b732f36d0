import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ikno.errors import CapExceededError, ShapeMismatchError, SingularAxisError
from ikno.kernels import AxisKernelParams, axis_gram
from ikno.resolvent import (
    TruncatedPropagator,
    apply_naive_inverse,
    apply_truncated,
    apply_tp,
    apply_vanilla,
    build_tp,
    build_vanilla,
    convergence_report,
    inverse_power_partial_sum,
    load_vanilla,
    save_vanilla,
)
from ikno.tensor_linalg import dense_inverse, kron_materialize

K2 = np.array([[1.0, 0.5], [0.5, 1.0]])  # eigenvalues 0.5, 1.5


def random_spd_grams(seed, d, n_max=8):
    rng = np.random.default_rng(seed)
    grams = []
    for _ in range(d):
        n = int(rng.integers(2, n_max + 1))
        coords = np.sort(rng.uniform(-1, 1, n))
        for i in range(1, n):
            if coords[i] - coords[i - 1] < 1e-3:
                coords[i] = coords[i - 1] + 1e-3
        grams.append(
            axis_gram(AxisKernelParams(c=1.0, beta=1.5, gamma=0.8), coords)
        )
    return grams


class TestBuildVanilla:
    def test_alpha_zero_identity(self):
        r = build_vanilla([K2, K2], 0.0)
        assert np.allclose(r.diag_weights, 1.0)
        t = np.arange(8.0).reshape(2, 2, 2)
        assert np.allclose(apply_vanilla(r, t), t)

    def test_scalar_geometric(self):
        r = build_vanilla([np.array([[1.0]])], -0.5)
        assert np.isclose(r.diag_weights[0], 2.0 / 3.0)

    def test_d2_analytic_weights(self):
        r = build_vanilla([K2, K2], 0.4)
        want = sorted(
            1.0 / (1.0 - 0.4 * la * lb)
            for la in (0.5, 1.5)
            for lb in (0.5, 1.5)
        )
        assert np.allclose(sorted(r.diag_weights.ravel()), want)
        assert np.isclose(r.diag_weights.max(), 10.0)

    def test_dense_oracle_d2(self):
        grams = random_spd_grams(7, 2, n_max=3)
        alpha = -0.7
        t = np.random.default_rng(8).standard_normal(
            tuple(g.shape[0] for g in grams) + (2,)
        )
        got = apply_vanilla(build_vanilla(grams, alpha), t)
        ref = apply_naive_inverse(grams, alpha, t)
        assert np.abs(got - ref).max() <= 1e-8

    def test_zero_tensor(self):
        r = build_vanilla([K2], -1.0)
        assert np.array_equal(apply_vanilla(r, np.zeros((2, 3))), np.zeros((2, 3)))

    def test_shape_mismatch(self):
        r = build_vanilla([K2], -1.0)
        with pytest.raises(ShapeMismatchError):
            apply_vanilla(r, np.zeros((3, 1)))

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 10_000))
    def test_negative_alpha_weights_in_unit_interval(self, seed):
        rng = np.random.default_rng(seed)
        grams = random_spd_grams(seed, int(rng.integers(1, 4)), n_max=5)
        alpha = float(-rng.uniform(0.01, 2.0))
        r = build_vanilla(grams, alpha)
        w = r.diag_weights.ravel()
        assert np.all(w > 0) and np.all(w <= 1.0)

    def test_positive_alpha_beyond_radius_flags_neumann(self):
        # rho(alpha*K) = 3 but no diagonal entry is singular
        r = build_vanilla([np.diag([2.0, 3.0])], 1.0 / 1.0)
        assert not r.neumann_valid


class TestTP:
    def test_alpha_zero_identity_factors(self):
        r = build_tp([K2, K2], 0.0)
        for f in r.axis_inverses:
            assert np.allclose(f, np.eye(2))

    def test_d1_matches_vanilla(self):
        grams = random_spd_grams(3, 1)
        alpha = -0.9
        t = np.random.default_rng(4).standard_normal((grams[0].shape[0], 2))
        a = apply_vanilla(build_vanilla(grams, alpha), t)
        b = apply_tp(build_tp(grams, alpha), t)
        assert np.abs(a - b).max() <= 1e-10

    def test_d2_closed_form_factors(self):
        r = build_tp([K2, K2], -1.0)
        want = dense_inverse(np.array([[2.0, 0.5], [0.5, 2.0]]))
        for f in r.axis_inverses:
            assert np.abs(f - want).max() <= 1e-12

    def test_d2_witness_gap_vs_vanilla(self):
        t = np.zeros((2, 2, 1))
        t[0, 0, 0] = 1.0  # unit impulse
        a = apply_vanilla(build_vanilla([K2, K2], -1.0), t)
        b = apply_tp(build_tp([K2, K2], -1.0), t)
        assert np.abs(a - b).max() > 1e-3

    def test_singular_axis_named(self):
        with pytest.raises(SingularAxisError) as err:
            build_tp([K2, np.array([[1.0]])], 1.0)
        assert err.value.axis == 1

    def test_matches_dense_kron_of_inverses(self):
        grams = random_spd_grams(11, 3, n_max=4)
        alpha = -1.3
        sizes = tuple(g.shape[0] for g in grams)
        t = np.random.default_rng(12).standard_normal(sizes + (2,))
        dense = kron_materialize(
            [dense_inverse(np.eye(g.shape[0]) - alpha * g) for g in grams]
        )
        m = int(np.prod(sizes))
        ref = (dense @ t.reshape(m, 2)).reshape(t.shape)
        got = apply_tp(build_tp(grams, alpha), t)
        assert np.abs(got - ref).max() <= 1e-10 * max(1.0, np.abs(ref).max())


class TestTruncated:
    def test_p0_identity(self):
        tp = TruncatedPropagator(axis_grams=(K2,), alpha=-0.5, order=0)
        t = np.array([[1.0], [2.0]])
        assert np.array_equal(apply_truncated(tp, t), t)

    def test_p1_scalar(self):
        tp = TruncatedPropagator(axis_grams=(np.array([[1.0]]),), alpha=-0.5, order=1)
        assert np.allclose(apply_truncated(tp, np.array([[1.0]])), [[0.5]])

    def test_geometric_decay_to_resolvent(self):
        alpha = 0.6  # rho(alpha*K2) = 0.9
        t = np.array([[1.0], [-0.5]])
        ref = apply_vanilla(build_vanilla([K2], alpha), t)
        rho = 0.9
        prev = None
        for p in (10, 50, 150):
            tp = TruncatedPropagator(axis_grams=(K2,), alpha=alpha, order=p)
            err = np.abs(apply_truncated(tp, t) - ref).max()
            bound = np.linalg.norm(t) * rho ** (p + 1) / (1 - rho)
            assert err <= bound + 1e-12
            if prev is not None:
                assert err < prev
            prev = err
        assert prev <= 1e-6

    def test_negative_order_rejected(self):
        with pytest.raises(ValueError):
            TruncatedPropagator(axis_grams=(K2,), alpha=0.1, order=-1)


class TestNaiveInverse:
    def test_alpha_zero(self):
        t = np.arange(4.0).reshape(2, 2)
        assert np.allclose(apply_naive_inverse([K2], 0.0, t), t)

    def test_cap_guard(self):
        grams = [np.eye(30)] * 3  # M = 27000
        with pytest.raises(CapExceededError):
            apply_naive_inverse(grams, -0.5, np.zeros((30, 30, 30, 1)))


class TestConvergenceReport:
    def test_alpha_zero(self):
        rep = convergence_report([K2], 0.0)
        assert rep.rho_alpha_k == 0.0
        assert rep.positive_series_converges
        assert not rep.inverse_series_converges

    def test_positive_regime(self):
        rep = convergence_report([K2], -0.6)
        assert np.isclose(rep.rho_alpha_k, 0.9)
        assert rep.positive_series_converges
        assert np.isclose(rep.abs_alpha_lambda_min, 0.3)
        assert not rep.inverse_series_converges

    def test_inverse_regime(self):
        rep = convergence_report([np.diag([2.0, 3.0])], -1.0)
        assert np.isclose(rep.abs_alpha_lambda_min, 2.0)
        assert rep.inverse_series_converges
        assert np.isclose(rep.rho_alpha_k, 3.0)
        assert not rep.positive_series_converges


class TestInversePower:
    def test_scalar_partial_sums(self):
        k = [np.array([[2.0]])]
        assert np.allclose(inverse_power_partial_sum(k, 1.0, 1), [[-0.5]])
        assert np.allclose(inverse_power_partial_sum(k, 1.0, 2), [[-0.75]])
        assert np.abs(inverse_power_partial_sum(k, 1.0, 40) - (-1.0)).max() <= 1e-10

    def test_tail_bound_when_convergent(self):
        k = np.diag([2.0, 3.0])
        alpha = -1.0
        ref = dense_inverse(np.eye(2) - alpha * k)
        rate = 0.5  # 1 / (|alpha| * lambda_min)
        for n in (5, 10, 20):
            dev = np.linalg.norm(
                inverse_power_partial_sum([k], alpha, n) - ref, 2
            )
            assert dev <= 2.0 * rate**n

    def test_divergence_when_subunit(self):
        k = np.diag([0.5, 1.5])
        norms = [
            np.linalg.norm(inverse_power_partial_sum([k], -1.0, n), 2)
            for n in (1, 5, 10, 20)
        ]
        assert all(b > a for a, b in zip(norms, norms[1:]))


class TestLinearityAndSerialization:
    def test_linearity(self):
        grams = random_spd_grams(5, 2, n_max=4)
        r = build_vanilla(grams, -0.8)
        rng = np.random.default_rng(6)
        sizes = tuple(g.shape[0] for g in grams)
        t1 = rng.standard_normal(sizes + (2,))
        t2 = rng.standard_normal(sizes + (2,))
        lhs = apply_vanilla(r, 2.0 * t1 - 3.0 * t2)
        rhs = 2.0 * apply_vanilla(r, t1) - 3.0 * apply_vanilla(r, t2)
        assert np.abs(lhs - rhs).max() <= 1e-12 * max(1.0, np.abs(rhs).max())

    def test_vanilla_round_trip_bit_exact(self, tmp_path):
        r = build_vanilla([K2, K2], -0.8)
        save_vanilla(tmp_path / "op", r)
        r2 = load_vanilla(tmp_path / "op")
        assert r2.alpha == r.alpha
        assert r2.neumann_valid == r.neumann_valid
        assert np.array_equal(r2.diag_weights, r.diag_weights)
        for a, b in zip(r.axis_eigs, r2.axis_eigs):
            assert np.array_equal(a.eigenvalues, b.eigenvalues)
            assert np.array_equal(a.eigenvectors, b.eigenvectors)
        t = np.random.default_rng(9).standard_normal((2, 2, 3))
        assert np.array_equal(apply_vanilla(r, t), apply_vanilla(r2, t))
