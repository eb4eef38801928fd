import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from ifeast.analysis import (
    SubspaceDeficientError,
    block_arnoldi,
    bracket_interval,
    convergence_condition,
    delta_value,
    filter_spectrum,
    fom_equivalence_check,
    oblique_error,
    predicted_rate,
    principal_angles,
    restarted_block_arnoldi,
    verify_bound,
)
from ifeast.contour import ContourPoleError, accumulate_Q, build_trapezoid, filter_value
from ifeast.feast import IFEASTConfig, feast_direct
from ifeast.krylov import block_fom
from ifeast.linalg import HermitianOperator, dense_eig

from conftest import random_hermitian, random_symmetric

DIAG = np.arange(1.0, 11.0)


class TestDelta:
    def test_single_eigenvalue(self):
        rule = build_trapezoid(-1.0, 1.0, 1)
        assert abs(delta_value(rule, [0.0]) - 1.0) < 1e-15

    def test_diag_resolvent_norms(self):
        rule = build_trapezoid(0.5, 3.5, 4)
        a = np.diag(DIAG)
        z, w = rule.full_nodes()
        brute = sum(np.linalg.svd(wk * np.linalg.inv(zk * np.eye(10) - a), compute_uv=False)[0]
                    for zk, wk in zip(z, w))
        assert abs(delta_value(rule, DIAG) - brute) < 1e-10

    def test_random_resolvent_norms(self):
        a = random_symmetric(40, 1)
        lam = np.linalg.eigvalsh(a)
        rule = build_trapezoid(lam[10], lam[15], 3)
        z, w = rule.full_nodes()
        brute = sum(np.linalg.norm(wk * np.linalg.inv(zk * np.eye(40) - a), 2) for zk, wk in zip(z, w))
        assert abs(delta_value(rule, lam) - brute) <= 1e-10 * brute

    def test_monotone_in_distance(self):
        rule = build_trapezoid(-1.0, 1.0, 4)
        # slide an eigenvalue towards the node nearest the real axis
        top = max(abs(z.real) for z in rule.nodes)
        deltas = [delta_value(rule, [0.0, top + t]) for t in (1.0, 0.5, 0.2, 0.1, 0.0)]
        assert np.all(np.diff(deltas) > 0)

    def test_pole(self):
        rule = build_trapezoid(-1.0, 1.0, 1)
        with pytest.raises(ContourPoleError):
            delta_value(rule, [1j])


class TestFilterSpectrum:
    def test_center_first(self):
        rule = build_trapezoid(-1.0, 1.0, 4)
        fs = filter_spectrum(rule, np.array([5.0, 0.0, -3.0]))
        assert fs.order[0] == 1
        assert abs(fs.gammas[0] - 1.0) < 1e-13
        assert np.all(np.diff(fs.magnitudes) <= 0)

    def test_diag_top_three(self):
        fs = filter_spectrum(build_trapezoid(0.5, 3.5, 4), DIAG)
        assert set(DIAG[fs.order[:3]]) == {1.0, 2.0, 3.0}
        assert_allclose(fs.ascending(), filter_value(build_trapezoid(0.5, 3.5, 4), DIAG))

    @given(st.floats(-5, 5), st.floats(0.2, 5))
    @settings(max_examples=30, deadline=None)
    def test_affine_invariance(self, shift, scale):
        lam = np.linspace(-2.3, 4.1, 17)
        a = filter_spectrum(build_trapezoid(0.0, 1.3, 4), lam)
        b = filter_spectrum(build_trapezoid(scale * 0.0 + shift, scale * 1.3 + shift, 4), scale * lam + shift)
        assert_allclose(b.magnitudes, a.magnitudes, rtol=1e-9, atol=1e-14)


class TestPredictedRate:
    RULE = build_trapezoid(0.5, 3.5, 4)

    def test_exact_limit(self):
        g = filter_spectrum(self.RULE, DIAG).magnitudes
        assert abs(predicted_rate(2, 5, 0.0, self.RULE, DIAG) - g[5] / g[1]) < 1e-15

    def test_hand_computed(self):
        # u = (lam - 2)/1.5, rho = 1/(1 + u^8)
        rho = lambda lam: 1.0 / (1.0 + ((lam - 2.0) / 1.5) ** 8)  # noqa: E731
        delta = delta_value(self.RULE, DIAG)
        got = predicted_rate(3, 5, 0.01, self.RULE, DIAG)
        assert abs(got - (rho(6.0) + 0.01 * delta) / rho(3.0)) < 1e-13

    @given(st.floats(0, 1), st.integers(1, 5))
    @settings(max_examples=40, deadline=None)
    def test_rate_below_one_iff_condition(self, alpha_j, j):
        rate = predicted_rate(j, 5, alpha_j, self.RULE, DIAG)
        if abs(rate - 1.0) < 1e-12:
            return
        assert (rate < 1.0) == convergence_condition(j, 5, alpha_j, self.RULE, DIAG)

    def test_bad_indices(self):
        with pytest.raises(ValueError):
            predicted_rate(6, 5, 0.0, self.RULE, DIAG)
        with pytest.raises(ValueError):
            predicted_rate(1, 10, 0.0, self.RULE, DIAG)

    def test_zero_gamma_infinite(self, monkeypatch):
        import ifeast.analysis as an

        zeros = an.FilterSpectrum(np.array([1.0, 0.0, 0.0], dtype=complex), np.arange(3))
        monkeypatch.setattr(an, "filter_spectrum", lambda rule, lam: zeros)
        with pytest.warns(RuntimeWarning):
            assert predicted_rate(2, 2, 0.0, self.RULE, np.array([2.0, 9.0, 10.0])) == float("inf")


class TestObliqueError:
    def setup_method(self):
        a = random_symmetric(30, 2)
        self.lam, self.v = dense_eig(a)
        self.x1 = self.v[:, :4]

    def test_exact_subspace(self):
        qj, w = oblique_error(self.x1, self.x1, 2)
        assert w < 1e-14
        assert_allclose(qj, self.x1[:, 1], atol=1e-14)

    def test_mixed_subspace(self):
        mix = np.random.default_rng(0).standard_normal((4, 4))
        for j in range(1, 5):
            _, w = oblique_error(self.x1 @ mix, self.x1, j)
            assert w < 1e-12

    def test_error_in_complement(self):
        q = self.x1 + 0.1 * np.random.default_rng(1).standard_normal((30, 4))
        for j in range(1, 5):
            qj, _ = oblique_error(q, self.x1, j)
            wj = qj - self.x1[:, j - 1]
            assert np.abs(self.x1.T @ wj).max() < 1e-10

    def test_deficient(self):
        q = np.hstack([self.x1[:, :3], self.v[:, 10:11]])
        with pytest.raises(SubspaceDeficientError):
            oblique_error(q, self.x1, 1)


class TestVerifyBound:
    def test_exact_solves_diag(self):
        op = HermitianOperator.from_dense(np.diag(DIAG))
        reports = verify_bound(op, 0.5, 3.5, IFEASTConfig(m0=5, solver="direct"), 4)
        assert reports
        for r in reports:
            assert r.epsilon < 1e-12
            assert r.observed <= r.gamma_next / r.gamma_j + 1e-8

    def test_loose_solves_flag_false(self):
        op = HermitianOperator.from_dense(random_symmetric(60, 3))
        lam = np.linalg.eigvalsh(op.to_dense())
        lo, hi = bracket_interval(lam, 27, 6, 0.5)
        cfg = IFEASTConfig(m0=10, alpha=0.9, initial_rf=1.0, max_inner=2)
        reports = verify_bound(op, lo, hi, cfg, 1)
        assert any(not r.condition for r in reports)

    @pytest.mark.parametrize("seed", [0, 1])
    def test_random_n100(self, seed):
        a = random_symmetric(100, seed)
        op = HermitianOperator.from_dense(a)
        lam = np.linalg.eigvalsh(a)
        lo, hi = bracket_interval(lam, 47, 6, 0.5)
        reports = verify_bound(op, lo, hi, IFEASTConfig(m0=10, alpha=0.1, nc_up=8), 5)
        flagged = [r for r in reports if r.condition]
        assert flagged
        assert all(r.holds for r in flagged)

    def test_guard(self):
        op = HermitianOperator.from_callback(600, lambda x: x)
        with pytest.raises(ValueError):
            verify_bound(op, 0.0, 2.0, IFEASTConfig(m0=2), 1)

    def test_exact_rate_not_exceeded_by_feast(self):
        op = HermitianOperator.from_dense(np.diag(DIAG))
        rule = build_trapezoid(0.5, 3.5, 4)
        rate = predicted_rate(3, 5, 0.0, rule, DIAG)
        rf = feast_direct(op, 0.5, 3.5, IFEASTConfig(m0=5)).log.rf
        ratios = np.array(rf[1:]) / np.array(rf[:-1])
        # last step may sit at the rounding floor
        assert np.all(ratios[:-1] <= rate)


class TestBlockArnoldi:
    def test_structure(self):
        a = random_symmetric(80, 4)
        op = HermitianOperator.from_dense(a)
        x0 = np.random.default_rng(4).standard_normal((80, 3))
        arn = block_arnoldi(op, x0, 6)
        v, h = arn.v, arn.h
        assert np.abs(v.T @ v - np.eye(v.shape[1])).max() < 1e-12
        assert_allclose(h, v.T @ a @ v, atol=1e-12)
        # upper block-Hessenberg: zero below the first block subdiagonal
        starts = np.cumsum([0] + arn.block_sizes)
        for bi in range(len(arn.block_sizes)):
            below = h[starts[min(bi + 2, len(starts) - 1)]:, starts[bi]:starts[bi + 1]]
            assert np.all(below == 0.0)

    def test_full_space_exact(self):
        a = random_symmetric(60, 5)
        op = HermitianOperator.from_dense(a)
        lam, vec = dense_eig(op)
        x0 = np.linalg.qr(np.random.default_rng(5).standard_normal((60, 7)))[0]
        rule = build_trapezoid(lam[0] - 0.1, lam[5] + 0.1, 4)
        res = restarted_block_arnoldi(op, x0, -(-60 // 7), rule, 0)
        assert res.arnoldi.dim == 60
        assert_allclose(np.sort(res.ritz_values), lam, atol=1e-10)
        assert res.residuals.max() < 1e-10

    def test_restart_improves(self):
        op = HermitianOperator.from_dense(np.diag(np.concatenate([DIAG, np.linspace(20, 60, 90)])))
        rule = build_trapezoid(0.5, 3.5, 4)
        x0 = np.linalg.qr(np.random.default_rng(6).standard_normal((100, 5)))[0]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            res = restarted_block_arnoldi(op, x0, 4, rule, 1)
        hist = [h["max_inside_residual"] for h in res.history]
        assert hist[1] < hist[0]

    def test_pad_warning(self):
        op = HermitianOperator.from_dense(np.diag(np.linspace(10, 20, 40)))
        rule = build_trapezoid(0.0, 1.0, 2)
        x0 = np.linalg.qr(np.random.default_rng(0).standard_normal((40, 3)))[0]
        with pytest.warns(RuntimeWarning, match="inside the contour"):
            restarted_block_arnoldi(op, x0, 2, rule, 1)


class TestFomEquivalence:
    def setup_method(self):
        a = random_symmetric(200, 0)
        self.op = HermitianOperator.from_dense(a)
        self.lam = np.linalg.eigvalsh(a)
        self.x0 = np.linalg.qr(np.random.default_rng(0).standard_normal((200, 6)))[0]

    @pytest.mark.parametrize("k", [1, 5, 10])
    def test_wide_interval(self, k):
        rule = build_trapezoid(*bracket_interval(self.lam, 50, 100, 0.5), 8)
        assert fom_equivalence_check(self.op, self.x0, k, rule) <= 1e-10

    @pytest.mark.parametrize("k", [1, 5, 10])
    def test_narrow_interval_absolute(self, k):
        # tiny ||Q_b|| makes the relative gap rounding-dominated; the absolute gap stays small
        rule = build_trapezoid(*bracket_interval(self.lam, 97, 6, 0.5), 8)
        shifts, _ = rule.solve_nodes()
        ys, _ = block_fom(self.op, self.x0, shifts, 0.0, max_inner=k)
        qa = accumulate_Q(rule, list(ys))
        arn = block_arnoldi(self.op, self.x0, k)
        th, s = np.linalg.eigh(0.5 * (arn.h + arn.h.T))
        qb = arn.v @ s @ (np.real(filter_value(rule, th))[:, None] * (s.T @ arn.v.T @ self.x0))
        assert np.linalg.norm(qa - qb) <= 1e-12 * np.linalg.norm(self.x0)

    def test_hermitian(self):
        a = random_hermitian(100, 1)
        op = HermitianOperator.from_dense(a)
        lam = np.linalg.eigvalsh(a)
        rule = build_trapezoid(*bracket_interval(lam, 25, 50, 0.5), 6, symmetrized=False)
        x0 = np.random.default_rng(1).standard_normal((100, 4)).astype(complex)
        assert fom_equivalence_check(op, x0, 6, rule) <= 1e-10

    def test_exact_integration_limit(self):
        # wanted cluster in [0, 1], the rest in [3, 10]: outside Ritz values stay >= 3
        rng = np.random.default_rng(3)
        spec = np.concatenate([np.linspace(0.0, 1.0, 6), rng.uniform(3.0, 10.0, 194)])
        u = np.linalg.qr(rng.standard_normal((200, 200)))[0]
        op = HermitianOperator.from_dense((u * spec) @ u.T)
        lo, hi = -0.25, 1.25
        rule = build_trapezoid(lo, hi, 64)
        x0 = np.linalg.qr(np.random.default_rng(3).standard_normal((200, 6)))[0]
        k = 10
        arn = block_arnoldi(op, x0, k)
        th, s = np.linalg.eigh(0.5 * (arn.h + arn.h.T))
        inside = (th > lo) & (th < hi)
        leak = np.abs(filter_value(rule, th[~inside])).max()
        assert leak < 1e-8
        ys, _ = block_fom(op, x0, rule.solve_nodes()[0], 0.0, max_inner=k)
        qa = accumulate_Q(rule, list(ys))
        ritz = arn.v @ s[:, inside]
        assert inside.sum() <= 6
        qa_basis = np.linalg.svd(qa, full_matrices=False)[0][:, : inside.sum()]
        assert principal_angles(qa_basis, ritz).max() < 1e-6


class TestBracketInterval:
    def test_interior(self):
        lam = np.arange(10.0)
        lo, hi = bracket_interval(lam, 3, 4, 0.1)
        assert abs(lo - 2.9) < 1e-12 and abs(hi - 6.1) < 1e-12

    def test_lowest(self):
        lo, hi = bracket_interval(np.arange(10.0), 0, 4, 0.1)
        assert abs(lo + 0.3) < 1e-12 and abs(hi - 3.1) < 1e-12

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            bracket_interval(np.arange(5.0), 3, 4)
