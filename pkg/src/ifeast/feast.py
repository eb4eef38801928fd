"""FEAST subspace iteration with direct or inexact (Krylov) shifted solves."""

from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .contour import accumulate_Q, build_trapezoid
from .krylov import VARIANTS, ShiftedSolveRequest, solve_shifted
from .linalg import DENSE_GUARD, DenseShiftedSolver, orthonormalize, reduced_solve

log = logging.getLogger(__name__)

SOLVERS = VARIANTS + ("direct",)
BOUNDARY_TIE = 1e-14
TRACE_COLUMNS = ("iter", "rf", "max_inner", "matvec_seq_cum", "matvec_total_cum", "inside_count")


@dataclass(frozen=True)
class IFEASTConfig:
    m0: int
    alpha: float = 0.1
    tol_outer: float = 1e-10
    max_outer: int = 50
    nc_up: int = 4
    solver: str = "minres"
    seed: int = 0
    initial_rf: float = 1.0
    max_inner: int | None = None
    threads: int = 1

    def __post_init__(self):
        if self.m0 < 1:
            raise ValueError("m0 must be positive")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.tol_outer > 0:
            raise ValueError("tol_outer must be positive")
        if self.max_outer < 1:
            raise ValueError("max_outer must be at least 1")
        if self.nc_up < 1:
            raise ValueError("nc_up must be at least 1")
        if self.solver not in SOLVERS:
            raise ValueError(f"solver must be one of {SOLVERS}, got {self.solver!r}")
        if self.threads < 0:
            raise ValueError("threads must be nonnegative")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class IterationRecord:
    iter: int
    rf: float
    inside_count: int
    max_inner: int
    max_inner_per_shift: list
    matvec_seq: int
    matvec_total: int
    matvec_per_shift: int
    matvec_seq_cum: int
    matvec_total_cum: int
    inner_converged: bool = True


@dataclass
class IterationLog:
    records: list = field(default_factory=list)

    def append(self, rec):
        self.records.append(rec)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def rf(self):
        return [r.rf for r in self.records]

    def column(self, name):
        return [getattr(r, name) for r in self.records]

    def to_csv(self):
        lines = [",".join(TRACE_COLUMNS)]
        for r in self.records:
            lines.append(",".join(_fmt(getattr(r, c)) for c in TRACE_COLUMNS))
        return "\n".join(lines) + "\n"

    def to_list(self):
        return [asdict(r) for r in self.records]

    @classmethod
    def from_list(cls, rows):
        return cls([IterationRecord(**r) for r in rows])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(int(v))


@dataclass
class EigenResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray
    converged: bool
    log: IterationLog
    interval: tuple = (0.0, 0.0)
    matvecs_total: int = 0

    @property
    def iterations(self):
        return len(self.log)

    def to_dict(self, config=None, include_vectors=False):
        d = {
            "eigenvalues": [float(x) for x in self.eigenvalues],
            "residuals": [float(x) for x in self.residuals],
            "converged": bool(self.converged),
            "iterations": self.iterations,
            "interval": [float(self.interval[0]), float(self.interval[1])],
            "matvecs_total": int(self.matvecs_total),
            "matvec_seq_cum": int(self.log.records[-1].matvec_seq_cum) if self.log.records else 0,
            "log": self.log.to_list(),
        }
        if config is not None:
            d["config"] = config.to_dict()
        if include_vectors:
            v = self.eigenvectors
            d["eigenvectors"] = {"real": v.real.tolist(), "imag": v.imag.tolist()}
        return d

    @classmethod
    def from_dict(cls, d):
        if "eigenvectors" in d:
            v = np.asarray(d["eigenvectors"]["real"]) + 1j * np.asarray(d["eigenvectors"]["imag"])
            if not np.any(v.imag):
                v = v.real
        else:
            v = np.zeros((0, len(d["eigenvalues"])))
        return cls(
            eigenvalues=np.asarray(d["eigenvalues"], dtype=float),
            eigenvectors=v,
            residuals=np.asarray(d["residuals"], dtype=float),
            converged=bool(d["converged"]),
            log=IterationLog.from_list(d["log"]),
            interval=tuple(d["interval"]),
            matvecs_total=int(d["matvecs_total"]),
        )


def inside_mask(lam, lambda_min, lambda_max):
    lam = np.asarray(lam)
    return (lam > lambda_min - BOUNDARY_TIE) & (lam < lambda_max + BOUNDARY_TIE)


def compute_residual(op, x, lam, lambda_min, lambda_max, ax=None):
    """Eigenvector residual over the Ritz pairs inside the interval.

    Returns ``(rf, inside_count, per_pair_residuals)``. With no pair inside,
    ``rf`` is taken over all pairs and ``inside_count`` is 0.
    """
    if ax is None:
        ax = op.apply(x)
    lam = np.asarray(lam, dtype=float)
    res = np.linalg.norm(ax - x * lam[None, :], axis=0)
    inside = inside_mask(lam, lambda_min, lambda_max)
    count = int(inside.sum())
    if count:
        return float(res[inside].max()), count, res
    return float(res.max()) if res.size else 0.0, 0, res


def _initial_block(n, cfg):
    rng = np.random.default_rng(cfg.seed)
    x0 = rng.uniform(-1.0, 1.0, size=(n, cfg.m0))
    q, rank = orthonormalize(x0)
    if rank < cfg.m0:
        raise ValueError("random initial block is rank deficient; m0 too large for n?")
    return q


def _rayleigh_ritz(op, q, cfg, iteration):
    """Rayleigh-Ritz on span(Q) with the unnormalized pencil (Q^H A Q, Q^H Q)."""
    aq = op.apply(q)
    a_q = q.conj().T @ aq
    b_q = q.conj().T @ q
    lam, xq = reduced_solve(a_q, b_q)
    x = q @ xq
    ax = aq @ xq
    if xq.shape[1] < cfg.m0:
        # keep m0 columns: refill with fresh random directions, parked outside the interval
        missing = cfg.m0 - xq.shape[1]
        warnings.warn(f"reduced pencil truncated to {xq.shape[1]} of {cfg.m0} directions", RuntimeWarning)
        rng = np.random.default_rng([cfg.seed, iteration])
        extra = rng.uniform(-1.0, 1.0, size=(q.shape[0], missing)).astype(x.dtype)
        extra -= x @ np.linalg.lstsq(x, extra, rcond=None)[0]
        x = np.hstack([x, extra])
        ax = np.hstack([ax, op.apply(extra)])
        lam = np.concatenate([lam, np.full(missing, np.inf)])
    norms = np.linalg.norm(x, axis=0)
    return lam, x / norms, ax / norms


def _subspace_iteration(op, lambda_min, lambda_max, cfg, solve_block, rule):
    n = op.n
    if cfg.m0 > n:
        raise ValueError(f"m0 = {cfg.m0} exceeds the dimension n = {n}")
    start = op.matvecs
    x = _initial_block(n, cfg)
    if not op.is_real:
        x = x.astype(complex)
    rf = float(cfg.initial_rf)
    lam = np.zeros(cfg.m0)
    ritz_res = np.zeros(cfg.m0)
    trace = IterationLog()
    seq_cum = 0
    converged = False
    warned_empty = warned_m0 = False
    inside = 0
    for it in range(1, cfg.max_outer + 1):
        before = op.matvecs
        ys, stats = solve_block(x, cfg.alpha * rf)
        q = accumulate_Q(rule, ys)
        lam, x, ax = _rayleigh_ritz(op, q, cfg, it)
        rf, inside, ritz_res = compute_residual(op, x, lam, lambda_min, lambda_max, ax=ax)
        if inside == 0 and not warned_empty:
            warnings.warn("no Ritz value inside the interval; residual taken over all pairs", RuntimeWarning)
            warned_empty = True
        if inside >= cfg.m0 and not warned_m0:
            warnings.warn(f"{inside} Ritz values inside the interval; m0 = {cfg.m0} may be too small",
                          RuntimeWarning)
            warned_m0 = True
        seq_cum += stats["matvec_seq"]
        trace.append(IterationRecord(
            iter=it,
            rf=rf,
            inside_count=inside,
            max_inner=int(max(stats["max_inner_per_shift"], default=0)),
            max_inner_per_shift=[int(v) for v in stats["max_inner_per_shift"]],
            matvec_seq=int(stats["matvec_seq"]),
            matvec_total=op.matvecs - before,
            matvec_per_shift=int(stats["matvec_per_shift"]),
            matvec_seq_cum=seq_cum,
            matvec_total_cum=op.matvecs - start,
            inner_converged=bool(stats["inner_converged"]),
        ))
        log.info("iter %d: rf=%.3e inside=%d max_inner=%d", it, rf, inside, trace.records[-1].max_inner)
        if inside > 0 and rf <= cfg.tol_outer:
            converged = True
            break

    sel = np.flatnonzero(inside_mask(lam, lambda_min, lambda_max))
    sel = sel[np.argsort(lam[sel], kind="stable")]
    vecs = x[:, sel]
    return EigenResult(
        eigenvalues=lam[sel].copy(),
        eigenvectors=vecs,
        residuals=ritz_res[sel].copy(),
        converged=converged,
        log=trace,
        interval=(float(lambda_min), float(lambda_max)),
        matvecs_total=op.matvecs - start,
    )


def make_rule(op, lambda_min, lambda_max, nc_up):
    # conjugate-node shortcut is only valid for real data
    return build_trapezoid(lambda_min, lambda_max, nc_up, symmetrized=op.is_real)


def feast_direct(op, lambda_min, lambda_max, cfg):
    """FEAST with dense LU solves at every quadrature node (baseline)."""
    if op.n > DENSE_GUARD:
        raise ValueError(f"n = {op.n} is too large for dense factorizations; use ifeast_solve")
    rule = make_rule(op, lambda_min, lambda_max, cfg.nc_up)
    shifts, _ = rule.solve_nodes()
    solver = DenseShiftedSolver(op, shifts)

    def solve_block(x, tol):
        ys = [solver.solve(k, x) for k in range(len(shifts))]
        return ys, {
            "max_inner_per_shift": [0] * len(shifts),
            "matvec_seq": 0,
            "matvec_per_shift": 0,
            "inner_converged": True,
        }

    return _subspace_iteration(op, lambda_min, lambda_max, cfg, solve_block, rule)


def ifeast_solve(op, lambda_min, lambda_max, cfg):
    """FEAST with inexact Krylov solves to the adaptive tolerance ``alpha * ||R_F||``.

    The tolerance at each outer iteration uses the residual of the
    previous iteration (``cfg.initial_rf`` for the first).
    """
    if cfg.solver == "direct":
        return feast_direct(op, lambda_min, lambda_max, cfg)
    rule = make_rule(op, lambda_min, lambda_max, cfg.nc_up)
    shifts, _ = rule.solve_nodes()
    threads = cfg.threads
    if threads == 0:
        import os

        threads = os.cpu_count() or 1

    def solve_block(x, tol):
        req = ShiftedSolveRequest(op, shifts, x, tol, max_inner=cfg.max_inner,
                                  variant=cfg.solver, threads=threads)
        ys, rep = solve_shifted(req)
        if not rep.all_converged:
            log.warning("%d shifted lanes hit the inner iteration cap", int((~rep.converged).sum()))
        return ys, {
            "max_inner_per_shift": rep.max_iterations_per_shift().tolist(),
            "matvec_seq": rep.matvecs_sequential,
            "matvec_per_shift": rep.matvecs_per_shift,
            "inner_converged": rep.all_converged,
        }

    return _subspace_iteration(op, lambda_min, lambda_max, cfg, solve_block, rule)
