"""Krylov solvers for families of shifted systems ``(z_k I - A) y = x``.

The Krylov space of ``z I - A`` does not depend on ``z``, so MINRES and FOM
build one basis per right-hand side (or per block) and update a small
projected problem for every shift. GMRES runs one Arnoldi process per
(shift, column) pair and is kept for comparison.

Residual tolerances are absolute and per column. Every solver performs
at least one iteration per lane.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .linalg import SingularShiftError

VARIANTS = ("minres", "fom", "gmres")


@dataclass
class ShiftedSolveRequest:
    op: object
    shifts: np.ndarray
    rhs: np.ndarray
    tol_abs: float
    max_inner: int | None = None
    variant: str = "minres"
    threads: int = 1

    def __post_init__(self):
        self.shifts = np.atleast_1d(np.asarray(self.shifts, dtype=complex))
        rhs = np.asarray(self.rhs)
        self.rhs = rhs[:, None] if rhs.ndim == 1 else rhs
        if self.rhs.shape[0] != self.op.n:
            raise ValueError("rhs row count does not match the operator")
        if not self.tol_abs >= 0:
            raise ValueError("tol_abs must be nonnegative")
        if self.max_inner is None:
            self.max_inner = 10 * self.op.n
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown solver variant {self.variant!r}")


@dataclass
class ShiftedSolveReport:
    """Per-(shift, column) outcome of a shifted solve.

    ``matvecs_total`` comes from the operator's counter. ``matvecs_sequential``
    is the longest recurrence over the independent lanes, and
    ``matvecs_per_shift`` is the count a solver without shared recurrences
    would have needed (the sum of the lane iteration counts).
    """

    iterations: np.ndarray
    residual_norms: np.ndarray
    converged: np.ndarray
    matvecs_total: int
    matvecs_sequential: int
    matvecs_per_shift: int
    breakdown: bool = False

    @property
    def all_converged(self):
        return bool(self.converged.all())

    def max_iterations_per_shift(self):
        return self.iterations.max(axis=1)


@dataclass
class LaneResult:
    y: np.ndarray
    iterations: np.ndarray
    residuals: np.ndarray
    converged: np.ndarray
    steps: int
    breakdown: bool = False
    history: list = field(default_factory=list)
    basis: list = field(default_factory=list)


def _givens(a, b):
    """Complex rotations ``G = [[c, s], [-conj(s), c]]`` with ``G (a, b) = (rho, 0)``.

    Vectorized over ``a`` (complex) with a shared or matching ``b``.
    """
    a = np.asarray(a, dtype=complex)
    b = np.broadcast_to(np.asarray(b, dtype=complex), a.shape)
    aa = np.abs(a)
    r = np.hypot(aa, np.abs(b))
    if np.any(r == 0.0):
        raise SingularShiftError(None, "zero column in projected shifted system")
    safe = np.where(aa > 0.0, aa, 1.0)
    ph = np.where(aa > 0.0, a / safe, 1.0)
    c = aa / r
    s = ph * np.conj(b) / r
    return c, s, ph * r


def _map(fn, items, threads):
    if threads is None or threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def shifted_minres(op, b, shifts, tol, max_inner=None, record=False):
    """MINRES for ``(z_k I - A) y_k = b`` on all shifts with one Lanczos recurrence.

    Each shift keeps its own QR factorization of the shifted tridiagonal
    matrix, updated with complex Givens rotations, so the minimal residual
    norm of every shift is available without extra matvecs. A shift stops
    updating once its residual drops to ``tol``; the recurrence stops when
    every shift has.
    """
    shifts = np.atleast_1d(np.asarray(shifts, dtype=complex))
    ns = shifts.size
    b = np.asarray(b)
    n = b.shape[0]
    if max_inner is None:
        max_inner = 10 * n
    beta1 = np.linalg.norm(b)
    if beta1 == 0.0:
        raise ValueError("right-hand side is zero")
    tol_rel = tol / beta1

    v = b / beta1
    v_prev = np.zeros_like(v)
    beta = 0.0
    anorm = 0.0

    cs1 = np.ones(ns)
    sn1 = np.zeros(ns, dtype=complex)
    cs2 = np.ones(ns)
    sn2 = np.zeros(ns, dtype=complex)
    phi = np.ones(ns, dtype=complex)
    d1 = np.zeros((ns, n), dtype=complex)
    d2 = np.zeros((ns, n), dtype=complex)
    y = np.zeros((ns, n), dtype=complex)

    active = np.ones(ns, dtype=bool)
    iters = np.zeros(ns, dtype=int)
    res = np.ones(ns)
    history = []
    basis = [v.copy()] if record else []
    breakdown = False
    steps = 0

    while active.any() and steps < max_inner:
        steps += 1
        w = op.apply(v)
        if beta:
            w = w - beta * v_prev
        alpha = float(np.real(np.vdot(v, w)))
        w = w - alpha * v
        beta_next = float(np.linalg.norm(w))
        anorm = max(anorm, abs(alpha) + beta + beta_next)
        if beta_next <= 1e-14 * anorm:
            beta_next = 0.0
            breakdown = True

        eps_ = sn2 * (-beta)
        tmp = cs2 * (-beta)
        diag = shifts - alpha
        delta = cs1 * tmp + sn1 * diag
        gbar = -np.conj(sn1) * tmp + cs1 * diag
        cs, sn, gamma = _givens(gbar, -beta_next)

        tau = cs * phi
        phi = -np.conj(sn) * phi
        dnew = (v[None, :] - delta[:, None] * d1 - eps_[:, None] * d2) / gamma[:, None]
        y[active] += tau[active, None] * dnew[active]

        res_now = np.abs(phi)
        iters[active] = steps
        res[active] = res_now[active]
        active &= res_now > tol_rel
        if record:
            history.append(res.copy())

        cs2, sn2 = cs1, sn1
        cs1, sn1 = cs, sn
        d2, d1 = d1, dnew
        if breakdown:
            break
        v_prev = v
        v = w / beta_next
        beta = beta_next
        if record:
            basis.append(v.copy())

    converged = res <= tol_rel
    return LaneResult(
        y=y * beta1,
        iterations=iters,
        residuals=res * beta1,
        converged=converged,
        steps=steps,
        breakdown=breakdown,
        history=[h * beta1 for h in history],
        basis=basis,
    )


def shifted_gmres(op, b, z, tol, max_inner=None):
    """Restart-free GMRES for one shifted system; storage grows with the iteration count."""
    z = complex(z)
    b = np.asarray(b)
    n = b.shape[0]
    if max_inner is None:
        max_inner = 10 * n
    beta1 = np.linalg.norm(b)
    if beta1 == 0.0:
        raise ValueError("right-hand side is zero")
    tol_rel = tol / beta1
    basis = [b / beta1]
    rot_c = []
    rot_s = []
    r_cols = []
    g = [1.0 + 0j]
    res = 1.0
    steps = 0
    breakdown = False
    anorm = 0.0
    while steps < max_inner:
        steps += 1
        w = op.apply(basis[-1]).astype(complex)
        h = np.zeros(steps + 1, dtype=complex)
        for _ in range(2):
            for i, vi in enumerate(basis):
                c = np.vdot(vi, w)
                h[i] += c
                w = w - c * vi
        hnext = float(np.linalg.norm(w))
        anorm = max(anorm, float(np.abs(h).sum()) + hnext)
        if hnext <= 1e-14 * anorm:
            hnext = 0.0
            breakdown = True
        col = -h.copy()
        col[steps - 1] += z
        col[steps] = -hnext
        for i in range(steps - 1):
            a0, a1 = col[i], col[i + 1]
            col[i] = rot_c[i] * a0 + rot_s[i] * a1
            col[i + 1] = -np.conj(rot_s[i]) * a0 + rot_c[i] * a1
        c, s, rho = _givens(col[steps - 1], col[steps])
        c, s, rho = float(c), complex(s), complex(rho)
        col[steps - 1] = rho
        col[steps] = 0.0
        rot_c.append(c)
        rot_s.append(s)
        r_cols.append(col[:steps])
        g.append(-np.conj(s) * g[-1])
        g[-2] = c * g[-2]
        res = abs(g[-1])
        if res <= tol_rel or breakdown:
            break
        basis.append(w / hnext)
    k = steps
    r = np.zeros((k, k), dtype=complex)
    for j, colj in enumerate(r_cols):
        r[: j + 1, j] = colj
    coef = np.linalg.solve(np.triu(r), np.asarray(g[:k]))
    y = np.column_stack(basis[:k]) @ coef
    return LaneResult(
        y=(y * beta1)[None, :],
        iterations=np.array([steps]),
        residuals=np.array([res * beta1]),
        converged=np.array([res <= tol_rel]),
        steps=steps,
        breakdown=breakdown,
    )


def _svd_block(w, drop):
    u, s, vh = np.linalg.svd(w, full_matrices=False)
    keep = s > drop
    return u[:, keep], s[keep, None] * vh[keep]


def block_fom(op, b, shifts, tol, max_inner=None):
    """Block FOM (Galerkin) on all shifts with one block Arnoldi basis.

    The Arnoldi basis ``V`` is fully orthogonalized and stored, and
    ``Y(z) = V (zI - H)^{-1} V^H B`` is extracted per shift. A lane's
    residual norm is read off the last block row of the projected
    solution. Rank-deficient blocks are deflated.

    Parameters
    ----------
    tol
        Absolute residual tolerance per column (scalar or length ``m``).
        ``tol = 0`` with ``max_inner = k`` gives exactly ``k`` block steps.

    Returns
    -------
    ys : ndarray, shape (n_shifts, n, m)
    info : dict
        ``iterations``, ``residuals``, ``converged`` (each ``(n_shifts, m)``),
        ``steps`` (block steps) and ``breakdown``.
    """
    shifts = np.atleast_1d(np.asarray(shifts, dtype=complex))
    ns = shifts.size
    b = np.asarray(b)
    if b.ndim == 1:
        b = b[:, None]
    n, m = b.shape
    if max_inner is None:
        max_inner = 10 * n
    norms = np.linalg.norm(b, axis=0)
    if np.any(norms == 0.0):
        raise ValueError("right-hand side block has a zero column")
    tol_rel = np.broadcast_to(np.asarray(tol, dtype=float), (m,)) / norms
    scale = max(op.norm_est(), 1.0)

    v1, r0 = _svd_block(b / norms, 1e-14)
    blocks = [v1]
    h = np.zeros((v1.shape[1], v1.shape[1]), dtype=np.result_type(v1.dtype, op.dtype))

    iters = np.zeros((ns, m), dtype=int)
    res = np.ones((ns, m))
    conv = np.zeros((ns, m), dtype=bool)
    coefs = [[None] * m for _ in range(ns)]
    prev = [None] * ns
    breakdown = False
    steps = 0

    while steps < max_inner and not conv.all():
        steps += 1
        vk = blocks[-1]
        rk = vk.shape[1]
        p = h.shape[0]
        vall = np.hstack(blocks)
        w = op.apply(vk)
        cblk = np.zeros((p, rk), dtype=np.result_type(w.dtype, vall.dtype))
        for _ in range(2):
            c = vall.conj().T @ w
            w = w - vall @ c
            cblk += c
        h = h.astype(cblk.dtype, copy=False)
        h[:, p - rk:] = cblk
        vnext, hsub = _svd_block(w, 1e-13 * scale)
        rhs = np.zeros((p, m), dtype=complex)
        rhs[: r0.shape[0]] = r0
        for k, z in enumerate(shifts):
            mat = z * np.eye(p) - h
            singular = np.linalg.cond(mat) > 1e14
            if singular:
                if prev[k] is None:
                    raise SingularShiftError(z)
                breakdown = True
                ycoef = prev[k]
            else:
                ycoef = np.linalg.solve(mat, rhs)
                prev[k] = ycoef
            if hsub.shape[0] and not singular:
                lane_res = np.linalg.norm(hsub @ ycoef[p - rk:], axis=0)
            elif not singular:
                lane_res = np.zeros(m)
            else:
                lane_res = res[k]
            for j in range(m):
                if conv[k, j]:
                    continue
                res[k, j] = lane_res[j]
                iters[k, j] = steps
                coefs[k][j] = ycoef[:, j]
                if lane_res[j] <= tol_rel[j]:
                    conv[k, j] = True
        if hsub.shape[0] == 0 or breakdown:
            if hsub.shape[0] == 0:
                breakdown = True
            break
        pn = p + vnext.shape[1]
        hn = np.zeros((pn, pn), dtype=h.dtype)
        hn[:p, :p] = h
        hn[p:, p - rk:p] = hsub
        h = hn
        blocks.append(vnext)

    vall = np.hstack(blocks)
    ys = np.zeros((ns, n, m), dtype=complex)
    for k in range(ns):
        for j in range(m):
            c = coefs[k][j]
            ys[k, :, j] = vall[:, : c.size] @ c
    ys *= norms[None, None, :]
    return ys, {
        "iterations": iters,
        "residuals": res * norms[None, :],
        "converged": res <= tol_rel[None, :],
        "steps": steps,
        "breakdown": breakdown,
    }


def _rhs_columns(req):
    return [req.rhs[:, j] for j in range(req.rhs.shape[1])]


def solve_shifted_minres(req):
    """Shared-recurrence MINRES; returns ``(list of (n, m) blocks per shift, report)``."""
    start = req.op.matvecs
    lanes = _map(
        lambda col: shifted_minres(req.op, col, req.shifts, req.tol_abs, req.max_inner),
        _rhs_columns(req),
        req.threads,
    )
    ys = [np.column_stack([lane.y[k] for lane in lanes]) for k in range(req.shifts.size)]
    iters = np.column_stack([lane.iterations for lane in lanes])
    report = ShiftedSolveReport(
        iterations=iters,
        residual_norms=np.column_stack([lane.residuals for lane in lanes]),
        converged=np.column_stack([lane.converged for lane in lanes]),
        matvecs_total=req.op.matvecs - start,
        matvecs_sequential=max(lane.steps for lane in lanes),
        matvecs_per_shift=int(iters.sum()),
        breakdown=any(lane.breakdown for lane in lanes),
    )
    return ys, report


def solve_shifted_fom(req):
    """Block FOM sharing one block Arnoldi basis across shifts."""
    start = req.op.matvecs
    ys, info = block_fom(req.op, req.rhs, req.shifts, req.tol_abs, req.max_inner)
    report = ShiftedSolveReport(
        iterations=info["iterations"],
        residual_norms=info["residuals"],
        converged=info["converged"],
        matvecs_total=req.op.matvecs - start,
        matvecs_sequential=info["steps"],
        matvecs_per_shift=int(info["iterations"].max(axis=1).sum()) * req.rhs.shape[1],
        breakdown=info["breakdown"],
    )
    return [ys[k] for k in range(req.shifts.size)], report


def solve_shifted_gmres(req):
    """Independent GMRES per (shift, column)."""
    start = req.op.matvecs
    ns, m = req.shifts.size, req.rhs.shape[1]
    jobs = [(k, j) for k in range(ns) for j in range(m)]
    lanes = _map(
        lambda kj: shifted_gmres(req.op, req.rhs[:, kj[1]], req.shifts[kj[0]], req.tol_abs, req.max_inner),
        jobs,
        req.threads,
    )
    ys = [np.zeros((req.op.n, m), dtype=complex) for _ in range(ns)]
    iters = np.zeros((ns, m), dtype=int)
    res = np.zeros((ns, m))
    conv = np.zeros((ns, m), dtype=bool)
    for (k, j), lane in zip(jobs, lanes):
        ys[k][:, j] = lane.y[0]
        iters[k, j] = lane.iterations[0]
        res[k, j] = lane.residuals[0]
        conv[k, j] = lane.converged[0]
    report = ShiftedSolveReport(
        iterations=iters,
        residual_norms=res,
        converged=conv,
        matvecs_total=req.op.matvecs - start,
        matvecs_sequential=int(iters.max()),
        matvecs_per_shift=int(iters.sum()),
        breakdown=any(lane.breakdown for lane in lanes),
    )
    return ys, report


_SOLVERS = {
    "minres": solve_shifted_minres,
    "fom": solve_shifted_fom,
    "gmres": solve_shifted_gmres,
}


def solve_shifted(req):
    return _SOLVERS[req.variant](req)
