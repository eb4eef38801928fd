"""Convergence-bound instrumentation and Krylov equivalence checks.

Everything here needs the full spectrum of the operator, so it is meant
for small matrices (dense oracle via ``linalg.dense_eig``).

Eigenpair ranks ``j`` are 1-based throughout this module: ``j = 1`` is the
eigenpair whose filter value has the largest magnitude.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg

from .contour import ContourPoleError, accumulate_Q, filter_value
from .feast import _initial_block, _rayleigh_ritz, compute_residual, inside_mask, make_rule
from .krylov import ShiftedSolveRequest, block_fom, solve_shifted
from .linalg import DenseShiftedSolver, dense_eig


class SubspaceDeficientError(ValueError):
    """The search subspace has lost a wanted eigenvector direction."""


@dataclass
class FilterSpectrum:
    gammas: np.ndarray
    order: np.ndarray

    @property
    def magnitudes(self):
        return np.abs(self.gammas)

    def ascending(self):
        """Filter values back in ascending-eigenvalue order."""
        out = np.empty_like(self.gammas)
        out[self.order] = self.gammas
        return out


def filter_spectrum(rule, eigvals):
    """Filter values of all eigenvalues, sorted by descending magnitude."""
    g = np.asarray(filter_value(rule, np.asarray(eigvals)))
    order = np.argsort(-np.abs(g), kind="stable")
    return FilterSpectrum(g[order], order)


def delta_value(rule, eigvals):
    """Sum over all nodes of ``|w_k| / min_j |z_k - lam_j|``.

    For a normal matrix this equals ``sum_k ||w_k (z_k I - A)^{-1}||_2``.
    """
    z, w = rule.full_nodes()
    lam = np.asarray(eigvals)
    dist = np.abs(z[:, None] - lam[None, :]).min(axis=1)
    if np.any(dist < 1e-14 * rule.radius):
        raise ContourPoleError("quadrature node coincides with an eigenvalue")
    return float(np.sum(np.abs(w) / dist))


def predicted_rate(j, m0, alpha_j, rule, eigvals, delta=None):
    """Bound ratio ``(|gamma_{m0+1}| + alpha_j Delta) / |gamma_j|``; ``inf`` if ``gamma_j = 0``."""
    lam = np.asarray(eigvals)
    if not (1 <= j <= m0 < lam.size):
        raise ValueError(f"need 1 <= j <= m0 < n, got j={j}, m0={m0}, n={lam.size}")
    g = filter_spectrum(rule, lam).magnitudes
    if delta is None:
        delta = delta_value(rule, lam)
    if g[j - 1] == 0.0:
        warnings.warn(f"gamma_{j} is zero; rate is infinite", RuntimeWarning)
        return float("inf")
    return float((g[m0] + alpha_j * delta) / g[j - 1])


def convergence_condition(j, m0, alpha_j, rule, eigvals, delta=None):
    g = filter_spectrum(rule, eigvals).magnitudes
    if delta is None:
        delta = delta_value(rule, eigvals)
    return bool(alpha_j * delta < g[j - 1] - g[m0])


def oblique_error(q, x1, j):
    """The vector ``q_j`` in span(Q) with ``X1^H q_j = e_j``, and ``||q_j - x_j||``."""
    q = np.asarray(q)
    x1 = np.asarray(x1)
    m = x1.conj().T @ q
    if m.shape[0] != m.shape[1]:
        raise ValueError("Q and X1 must have the same number of columns")
    if np.linalg.cond(m) > 1e12:
        raise SubspaceDeficientError("X1^H Q is singular: the subspace misses a wanted direction")
    e = np.zeros(m.shape[0], dtype=m.dtype)
    e[j - 1] = 1.0
    c = np.linalg.solve(m, e)
    qj = q @ c
    return qj, float(np.linalg.norm(qj - x1[:, j - 1]))


@dataclass
class BoundReport:
    iteration: int
    j: int
    w_norm: float
    w_next: float
    w_next_oblique: float
    epsilon: float
    alpha_j: float
    delta: float
    gamma_j: float
    gamma_next: float
    predicted: float
    observed: float
    condition: bool

    @property
    def holds(self):
        return self.observed <= self.predicted + 1e-8

    def to_dict(self):
        return asdict(self)


def verify_bound(op, lambda_min, lambda_max, cfg, n_iters, w_floor=1e-9):
    """Run instrumented IFEAST iterations and check the eigenvector error bound.

    At each outer iteration, with current subspace span(X), the wanted
    vectors ``q_j`` (oblique projections onto the ``m0`` eigenvectors with
    the largest filter magnitude) are used as right-hand sides. The shifted
    systems are solved with ``cfg.solver`` to ``alpha * ||R_F||``, the
    largest explicitly recomputed residual is ``epsilon``, and the filtered
    vector ``q~_j = (sum_k w_k Y_k e_j) / gamma_j`` gives the observed error
    ``||q~_j - x_j||``. The next subspace comes from Rayleigh-Ritz on the
    filtered block, exactly as in IFEAST. Pairs whose error is already
    below ``w_floor`` are no longer tracked.

    Returns a list of ``BoundReport`` (one per tracked pair and iteration).
    """
    if op.n > 500:
        raise ValueError("verify_bound needs a dense oracle; n must be <= 500")
    m0 = cfg.m0
    lam, vec = dense_eig(op)
    rule = make_rule(op, lambda_min, lambda_max, cfg.nc_up)
    fs = filter_spectrum(rule, lam)
    g = fs.magnitudes
    x1 = vec[:, fs.order[:m0]]
    delta = delta_value(rule, lam)
    shifts, _ = rule.solve_nodes()
    direct = DenseShiftedSolver(op, shifts) if cfg.solver == "direct" else None

    x = _initial_block(op.n, cfg)
    rf = float(cfg.initial_rf)
    reports = []
    for it in range(1, n_iters + 1):
        m = x1.conj().T @ x
        if np.linalg.cond(m) > 1e12:
            warnings.warn(f"iteration {it}: subspace deficient, bound not evaluated", RuntimeWarning)
            qblock = x
            wn = None
        else:
            qblock = x @ np.linalg.inv(m)
            wn = np.linalg.norm(qblock - x1, axis=0)

        tol = cfg.alpha * rf
        if direct is not None:
            ys = [direct.solve(k, qblock) for k in range(len(shifts))]
        else:
            req = ShiftedSolveRequest(op, shifts, qblock, tol, max_inner=cfg.max_inner, variant=cfg.solver)
            ys, _ = solve_shifted(req)
        eps = 0.0
        for z, y in zip(shifts, ys):
            r = qblock - (z * y - op.apply(y))
            eps = max(eps, float(np.linalg.norm(r, axis=0).max()))
        qt = accumulate_Q(rule, ys)

        if wn is not None:
            for j in range(1, m0 + 1):
                if wn[j - 1] < w_floor:
                    continue
                gamma_j = fs.gammas[j - 1]
                wt = float(np.linalg.norm(qt[:, j - 1] / gamma_j - x1[:, j - 1]))
                try:
                    _, wt_obl = oblique_error(qt, x1, j)
                except SubspaceDeficientError:
                    wt_obl = float("nan")
                alpha_j = eps / wn[j - 1]
                reports.append(BoundReport(
                    iteration=it,
                    j=j,
                    w_norm=float(wn[j - 1]),
                    w_next=wt,
                    w_next_oblique=wt_obl,
                    epsilon=eps,
                    alpha_j=float(alpha_j),
                    delta=delta,
                    gamma_j=float(g[j - 1]),
                    gamma_next=float(g[m0]),
                    predicted=float((g[m0] + alpha_j * delta) / g[j - 1]),
                    observed=wt / float(wn[j - 1]),
                    condition=bool(alpha_j * delta < g[j - 1] - g[m0]),
                ))
        ritz, x, ax = _rayleigh_ritz(op, qt, cfg, it)
        rf, _, _ = compute_residual(op, x, ritz, lambda_min, lambda_max, ax=ax)
    return reports


# --- explicit block Arnoldi (independent of the block FOM solver) ---


@dataclass
class BlockArnoldi:
    v: np.ndarray
    h: np.ndarray
    block_sizes: list

    @property
    def dim(self):
        return self.v.shape[1]


def _pivoted_qr(w, tol):
    qf, rf, piv = scipy.linalg.qr(w, mode="economic", pivoting=True)
    d = np.abs(np.diag(rf))
    rank = int(np.sum(d > tol))
    r = np.zeros((rank, w.shape[1]), dtype=rf.dtype)
    r[:, piv] = rf[:rank]
    return qf[:, :rank], r


def block_arnoldi(op, x0, k):
    """Orthonormal basis of ``span{X0, A X0, ..., A^{k-1} X0}`` and ``H = V^H A V``.

    Block classical Gram-Schmidt with a second pass and pivoted-QR block
    orthonormalization. ``h`` holds the recurrence coefficients, so it is
    upper block-Hessenberg by construction.
    """
    x0 = np.asarray(x0)
    if x0.ndim == 1:
        x0 = x0[:, None]
    tol = 1e-12 * max(np.linalg.norm(x0, 2), 1e-300)
    v1, _ = _pivoted_qr(x0, tol)
    blocks = [v1]
    sizes = [v1.shape[1]]
    dtype = np.result_type(v1.dtype, op.dtype)
    hcols = []
    scale = max(op.norm_est(), 1.0)
    for step in range(k):
        vk = blocks[-1]
        w = op.apply(vk).astype(dtype)
        vall = np.hstack(blocks)
        c1 = vall.conj().T @ w
        w = w - vall @ c1
        c2 = vall.conj().T @ w
        w = w - vall @ c2
        coeff = c1 + c2
        if step == k - 1:
            hcols.append((coeff, None))
            break
        vn, r = _pivoted_qr(w, 1e-12 * scale)
        hcols.append((coeff, r))
        if vn.shape[1] == 0:
            break
        blocks.append(vn)
        sizes.append(vn.shape[1])
    v = np.hstack(blocks)
    p = v.shape[1]
    h = np.zeros((p, p), dtype=dtype)
    col = 0
    for i, (coeff, r) in enumerate(hcols):
        bs = sizes[i]
        h[: coeff.shape[0], col:col + bs] = coeff
        if r is not None and i + 1 < len(sizes):
            h[coeff.shape[0]: coeff.shape[0] + r.shape[0], col:col + bs] = r
        col += bs
    return BlockArnoldi(v, h, sizes)


def filtered_projection(arn, rule, x0):
    """``V rho(H) V^H X0`` with the filter applied through the eigendecomposition of ``H``."""
    hs = 0.5 * (arn.h + arn.h.conj().T)
    theta, s = np.linalg.eigh(hs)
    rho = np.asarray(filter_value(rule, theta))
    return arn.v @ (s @ (rho[:, None] * (s.conj().T @ (arn.v.conj().T @ x0))))


def fom_equivalence_check(op, x0, k, rule):
    """Relative gap between one IFEAST filter step with k-step block FOM and ``V rho(H) V^H X0``."""
    shifts, _ = rule.solve_nodes()
    ys, _ = block_fom(op, x0, shifts, 0.0, max_inner=k)
    qa = accumulate_Q(rule, list(ys))
    qb = filtered_projection(block_arnoldi(op, x0, k), rule, x0)
    return float(np.linalg.norm(qa - qb) / np.linalg.norm(qb))


@dataclass
class RestartedArnoldiResult:
    ritz_values: np.ndarray
    ritz_vectors: np.ndarray
    residuals: np.ndarray
    history: list = field(default_factory=list)
    arnoldi: BlockArnoldi | None = None


def restarted_block_arnoldi(op, x0, k, rule, n_restarts):
    """Explicitly restarted block Arnoldi keeping the Ritz vectors the contour selects.

    Each cycle builds a ``k``-block basis, solves the Rayleigh-Ritz problem
    for ``H``, and restarts from the ``m0`` Ritz vectors with the largest
    filter magnitude (the in-contour ones first, then those nearest the
    contour). Returns the Ritz pairs of the final cycle; ``history`` holds
    one dict per cycle with the largest in-interval residual.
    """
    x = np.asarray(x0)
    m0 = x.shape[1]
    lmin, lmax = rule.bounds
    history = []
    warned = False
    for cycle in range(n_restarts + 1):
        arn = block_arnoldi(op, x, k)
        hs = 0.5 * (arn.h + arn.h.conj().T)
        theta, s = np.linalg.eigh(hs)
        vecs = arn.v @ s
        res = np.linalg.norm(op.apply(vecs) - vecs * theta[None, :], axis=0)
        inside = inside_mask(theta, lmin, lmax)
        n_in = int(inside.sum())
        history.append({
            "cycle": cycle,
            "dim": arn.dim,
            "inside": n_in,
            "max_inside_residual": float(res[inside].max()) if n_in else float("nan"),
        })
        if cycle == n_restarts:
            break
        if n_in < m0 and not warned:
            warned = True
            warnings.warn(f"only {n_in} Ritz values inside the contour; padding the restart block",
                          RuntimeWarning)
        score = np.abs(np.asarray(filter_value(rule, theta)))
        pick = np.argsort(-score, kind="stable")[:m0]
        x, _ = scipy.linalg.qr(vecs[:, np.sort(pick)], mode="economic")
    return RestartedArnoldiResult(theta, vecs, res, history, arn)


def principal_angles(a, b):
    return scipy.linalg.subspace_angles(a, b)


def bracket_interval(eigvals, first, count, margin=0.1):
    """Search interval around ``eigvals[first:first + count]`` (ascending input).

    Each bound sits ``margin`` of the way from the outermost wanted
    eigenvalue to its unwanted neighbour. With no neighbour below (the
    lowest eigenvalues), the lower bound is placed ``margin`` times the
    cluster width below the cluster.
    """
    lam = np.sort(np.asarray(eigvals, dtype=float))
    last = first + count - 1
    if first < 0 or last >= lam.size:
        raise ValueError("requested eigenvalue range outside the spectrum")
    width = lam[last] - lam[first]
    if last + 1 < lam.size:
        emax = lam[last] + margin * (lam[last + 1] - lam[last])
    else:
        emax = lam[last] + margin * width
    if first > 0:
        emin = lam[first] - margin * (lam[first] - lam[first - 1])
    else:
        emin = lam[first] - margin * width
    return float(emin), float(emax)
