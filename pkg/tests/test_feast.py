import json
import warnings

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from ifeast.analysis import bracket_interval, principal_angles
from ifeast.feast import (
    TRACE_COLUMNS,
    EigenResult,
    IFEASTConfig,
    compute_residual,
    feast_direct,
    ifeast_solve,
)
from ifeast.linalg import HermitianOperator, dense_eig

from conftest import random_hermitian, random_symmetric

SOLVERS = ["minres", "fom", "gmres"]


def small_suite():
    """(name, operator, emin, emax, m0) cases with n <= 200."""
    cases = [("diag10", HermitianOperator.from_dense(np.diag(np.arange(1.0, 11.0))), 0.5, 3.5, 5)]
    for seed, n in ((1, 60), (2, 120)):
        a = random_symmetric(n, seed)
        lam = np.linalg.eigvalsh(a)
        lo, hi = bracket_interval(lam, n // 2 - 3, 6, margin=0.5)
        cases.append((f"sym{n}", HermitianOperator.from_dense(a), lo, hi, 10))
    a = random_hermitian(80, 3)
    lam = np.linalg.eigvalsh(a)
    lo, hi = bracket_interval(lam, 0, 5, margin=0.5)
    cases.append(("herm80", HermitianOperator.from_dense(a), lo, hi, 8))
    return cases


SUITE = small_suite()


class TestConfig:
    @pytest.mark.parametrize("alpha", [0.0, 1.0, 1.5, -0.1])
    def test_alpha_range(self, alpha):
        with pytest.raises(ValueError):
            IFEASTConfig(m0=4, alpha=alpha)

    @pytest.mark.parametrize("kw", [{"m0": 0}, {"m0": 2, "solver": "cg"}, {"m0": 2, "nc_up": 0},
                                    {"m0": 2, "tol_outer": 0.0}, {"m0": 2, "max_outer": 0}])
    def test_other_validation(self, kw):
        with pytest.raises(ValueError):
            IFEASTConfig(**kw)

    def test_round_trip(self):
        cfg = IFEASTConfig(m0=7, alpha=0.25, solver="fom", seed=3)
        assert IFEASTConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


class TestComputeResidual:
    def test_exact_pair(self):
        op = HermitianOperator.from_dense(np.diag([1.0, 2.0]))
        rf, count, res = compute_residual(op, np.eye(2)[:, :1], [1.0], 0.0, 1.5)
        assert rf == 0.0 and count == 1

    def test_wrong_value(self):
        op = HermitianOperator.from_dense(np.diag([1.0, 2.0]))
        rf, count, _ = compute_residual(op, np.eye(2)[:, :1], [2.0], 1.5, 2.5)
        assert rf == 1.0 and count == 1

    def test_against_loop(self):
        rng = np.random.default_rng(0)
        a = random_symmetric(30, 0)
        op = HermitianOperator.from_dense(a)
        x = rng.standard_normal((30, 6))
        lam = rng.uniform(-2, 2, 6)
        rf, count, res = compute_residual(op, x, lam, -1.0, 1.0)
        loop = [np.linalg.norm(a @ x[:, j] - lam[j] * x[:, j]) for j in range(6)]
        assert_allclose(res, loop, rtol=1e-15)
        inside = [r for r, l in zip(loop, lam) if -1.0 < l < 1.0]
        assert count == len(inside)
        assert abs(rf - max(inside)) <= 1e-15 * rf

    def test_boundary_tie_counts_inside(self):
        op = HermitianOperator.from_dense(np.diag([1.0, 2.0]))
        _, count, _ = compute_residual(op, np.eye(2), [1.0, 2.0], 1.0 + 5e-15, 2.0 - 5e-15)
        assert count == 2


class TestDirect:
    def test_diag10(self, diag10):
        res = feast_direct(diag10, 0.5, 3.5, IFEASTConfig(m0=5, nc_up=4))
        assert res.converged
        assert_allclose(res.eigenvalues, [1.0, 2.0, 3.0], atol=1e-12)
        # rate |rho(6)/rho(3)| ~ 4e-4 per step from the random start
        assert res.iterations <= 4

    def test_empty_interval(self, diag10):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            res = feast_direct(diag10, 4.2, 4.8, IFEASTConfig(m0=3, max_outer=5))
        assert not res.converged
        assert res.eigenvalues.size == 0
        assert set(res.log.column("inside_count")) == {0}

    def test_empty_interval_warns(self, diag10):
        with pytest.warns(RuntimeWarning, match="no Ritz value"):
            feast_direct(diag10, 4.2, 4.8, IFEASTConfig(m0=3, max_outer=2))

    def test_lowest_five(self):
        a = random_symmetric(50, 4)
        op = HermitianOperator.from_dense(a)
        lam, _ = dense_eig(op)
        lo, hi = bracket_interval(lam, 0, 5, margin=0.5)
        res = feast_direct(op, lo, hi, IFEASTConfig(m0=8))
        assert res.converged
        assert_allclose(res.eigenvalues, lam[:5], atol=1e-10)

    def test_m0_too_small_warns(self, diag10):
        with pytest.warns(RuntimeWarning, match="m0"):
            feast_direct(diag10, 0.5, 3.5, IFEASTConfig(m0=3, max_outer=3))


class TestIFEAST:
    @pytest.mark.parametrize("solver", SOLVERS)
    def test_diag10_matches_direct(self, diag10, solver):
        cfg = IFEASTConfig(m0=5, nc_up=4, alpha=0.1, solver=solver)
        res = ifeast_solve(diag10, 0.5, 3.5, cfg)
        ref = feast_direct(diag10, 0.5, 3.5, cfg)
        assert res.converged
        assert_allclose(res.eigenvalues, ref.eigenvalues, atol=1e-10)

    @pytest.mark.parametrize("case", SUITE, ids=[c[0] for c in SUITE])
    @pytest.mark.parametrize("solver", SOLVERS)
    def test_oracle_equivalence(self, case, solver):
        name, op, lo, hi, m0 = case
        lam, vec = dense_eig(op)
        res = ifeast_solve(op, lo, hi, IFEASTConfig(m0=m0, solver=solver))
        assert res.converged
        sel = (lam > lo) & (lam < hi)
        assert_allclose(res.eigenvalues, lam[sel], atol=1e-8)
        assert np.max(principal_angles(res.eigenvectors, vec[:, sel])) < 1e-6
        assert np.all(res.residuals <= 1e-10)
        assert_allclose(np.linalg.norm(res.eigenvectors, axis=0), 1.0, atol=1e-12)

    def test_monotone_trend(self):
        drops = total = 0
        for _, op, lo, hi, m0 in SUITE:
            for solver in SOLVERS + ["direct"]:
                rf = ifeast_solve(op, lo, hi, IFEASTConfig(m0=m0, solver=solver)).log.rf
                d = np.diff(rf)
                drops += int(np.sum(d < 0))
                total += d.size
        assert drops >= 0.9 * total

    def test_cumulative_counts(self):
        _, op, lo, hi, m0 = SUITE[1]
        log = ifeast_solve(op, lo, hi, IFEASTConfig(m0=m0)).log
        for col in ("matvec_seq_cum", "matvec_total_cum"):
            assert np.all(np.diff(log.column(col)) >= 0)
        assert log.records[-1].matvec_total_cum == sum(r.matvec_total for r in log)
        assert all(r.matvec_seq <= r.matvec_total for r in log)

    def test_matvec_total_from_counter(self):
        _, op, lo, hi, m0 = SUITE[1]
        op.reset_count()
        res = ifeast_solve(op, lo, hi, IFEASTConfig(m0=m0))
        assert res.matvecs_total == op.matvecs

    @pytest.mark.parametrize("solver", SOLVERS)
    def test_thread_determinism(self, solver):
        _, op, lo, hi, m0 = SUITE[2]
        runs = [ifeast_solve(op, lo, hi, IFEASTConfig(m0=m0, solver=solver, threads=t)) for t in (1, 4)]
        assert runs[0].log.to_csv() == runs[1].log.to_csv()
        assert_array_equal(runs[0].eigenvalues, runs[1].eigenvalues)

    def test_seed_changes_start(self):
        _, op, lo, hi, m0 = SUITE[1]
        a = ifeast_solve(op, lo, hi, IFEASTConfig(m0=m0, seed=0)).log.to_csv()
        b = ifeast_solve(op, lo, hi, IFEASTConfig(m0=m0, seed=1)).log.to_csv()
        assert a != b

    def test_exact_limit(self):
        _, op, lo, hi, m0 = SUITE[1]
        cfg = IFEASTConfig(m0=m0, alpha=1e-12)
        a = ifeast_solve(op, lo, hi, cfg)
        b = feast_direct(op, lo, hi, cfg)
        assert a.iterations == b.iterations
        assert_allclose(a.log.rf, b.log.rf, atol=1e-9)
        assert_allclose(a.eigenvalues, b.eigenvalues, atol=1e-10)

    def test_vacuous_inner_tolerance_is_a_fixed_point(self):
        # once alpha * rf >= 1 (unit rhs columns), one Krylov step returns Y in span(X)
        _, op, lo, hi, m0 = SUITE[1]
        cfg = IFEASTConfig(m0=m0, alpha=0.5, initial_rf=4.0, max_outer=4)
        rf = ifeast_solve(op, lo, hi, cfg).log.rf
        assert rf[0] > 2.0
        assert_allclose(rf, rf[0], rtol=1e-8)

    def test_alpha_half_converges_on_diag(self, diag10):
        res = ifeast_solve(diag10, 0.5, 3.5, IFEASTConfig(m0=5, alpha=0.5))
        assert res.converged

    def test_max_outer_reported(self):
        _, op, lo, hi, m0 = SUITE[2]
        res = ifeast_solve(op, lo, hi, IFEASTConfig(m0=m0, max_outer=2))
        assert not res.converged and res.iterations == 2

    def test_m0_exceeds_n(self):
        op = HermitianOperator.from_dense(np.eye(3))
        with pytest.raises(ValueError):
            ifeast_solve(op, 0.5, 1.5, IFEASTConfig(m0=4))


class TestSerialization:
    def test_result_round_trip(self, diag10):
        res = ifeast_solve(diag10, 0.5, 3.5, IFEASTConfig(m0=5))
        d = json.loads(json.dumps(res.to_dict(include_vectors=True)))
        back = EigenResult.from_dict(d)
        assert_array_equal(back.eigenvalues, res.eigenvalues)
        assert_array_equal(back.residuals, res.residuals)
        assert_array_equal(back.eigenvectors, res.eigenvectors)
        assert back.converged == res.converged
        assert back.log.to_list() == res.log.to_list()
        assert back.interval == res.interval
        assert back.matvecs_total == res.matvecs_total

    def test_trace_header(self, diag10):
        csv = ifeast_solve(diag10, 0.5, 3.5, IFEASTConfig(m0=5)).log.to_csv()
        lines = csv.splitlines()
        assert lines[0] == ",".join(TRACE_COLUMNS)
        rf = [float(line.split(",")[1]) for line in lines[1:]]
        assert all(repr(x) in csv for x in rf)
