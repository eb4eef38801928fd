"""Dense and sparse kernels shared by the solvers.

The operator type counts every matrix-vector product it performs; all
matvec statistics reported elsewhere in the package are derived from
that counter.
"""

from __future__ import annotations

import threading
import warnings

import numba
import numpy as np
import scipy.linalg
import scipy.sparse as sp

REAL_SYMMETRIC = "real-symmetric"
COMPLEX_HERMITIAN = "complex-hermitian"

DENSE_GUARD = 10_000


class SingularShiftError(ValueError):
    """Raised when a shift coincides (numerically) with an eigenvalue."""

    def __init__(self, z, message=None):
        self.z = z
        super().__init__(message or f"shifted matrix (zI - A) is numerically singular at z = {z!r}")


class HermitianOperator:
    """Linear operator of dimension ``n`` with a Hermitian contract.

    Either a sparse (CSR) matrix or an opaque apply rule backs the
    operator. ``apply`` is read-only and may be called from several
    threads; the matvec counter is updated under a lock.

    Parameters
    ----------
    n
        Dimension.
    matrix
        Sparse or dense matrix. Mutually exclusive with ``apply_fn``.
    apply_fn
        Callable mapping an ``(n, m)`` block to ``A @ block``.
    kind
        ``"real-symmetric"`` or ``"complex-hermitian"``. Inferred from the
        matrix dtype when omitted.
    """

    def __init__(self, n, matrix=None, apply_fn=None, kind=None):
        if (matrix is None) == (apply_fn is None):
            raise ValueError("exactly one of matrix / apply_fn must be given")
        n = int(n)
        if n <= 0:
            raise ValueError("dimension must be positive")
        self.n = n
        self._apply_fn = apply_fn
        self.matrix = None
        if matrix is not None:
            if sp.issparse(matrix):
                matrix = sp.csr_matrix(matrix)
            else:
                matrix = np.asarray(matrix)
            if matrix.shape != (n, n):
                raise ValueError(f"matrix shape {matrix.shape} does not match n = {n}")
            if kind is None:
                kind = COMPLEX_HERMITIAN if np.iscomplexobj(matrix) else REAL_SYMMETRIC
            if kind == REAL_SYMMETRIC and np.iscomplexobj(matrix):
                raise ValueError("real-symmetric operator cannot carry complex entries")
            self.matrix = matrix
        if kind not in (REAL_SYMMETRIC, COMPLEX_HERMITIAN):
            raise ValueError(f"unknown symmetry kind {kind!r}")
        self.kind = kind
        self._lock = threading.Lock()
        self._matvecs = 0
        self._norm_est = None

    @classmethod
    def from_dense(cls, a, kind=None):
        a = np.asarray(a)
        return cls(a.shape[0], matrix=a, kind=kind)

    @classmethod
    def from_sparse(cls, a, kind=None):
        return cls(a.shape[0], matrix=sp.csr_matrix(a), kind=kind)

    @classmethod
    def from_callback(cls, n, fn, kind=REAL_SYMMETRIC):
        return cls(n, apply_fn=fn, kind=kind)

    @property
    def is_real(self):
        return self.kind == REAL_SYMMETRIC

    @property
    def dtype(self):
        return np.float64 if self.is_real else np.complex128

    @property
    def matvecs(self):
        return self._matvecs

    def reset_count(self):
        with self._lock:
            self._matvecs = 0

    def _raw_apply(self, x):
        if self.matrix is not None:
            return np.asarray(self.matrix @ x)
        return np.asarray(self._apply_fn(x))

    def apply(self, x):
        """Return ``A @ x`` for a vector or ``(n, m)`` block; counts ``m`` matvecs."""
        x = np.asarray(x)
        if x.ndim not in (1, 2) or x.shape[0] != self.n:
            raise ValueError(f"operand of shape {x.shape} does not have {self.n} rows")
        m = 1 if x.ndim == 1 else x.shape[1]
        y = self._raw_apply(x)
        with self._lock:
            self._matvecs += m
        return y

    __matmul__ = apply

    def to_dense(self):
        """Dense copy of the operator (not counted as matvecs)."""
        if self.n > DENSE_GUARD:
            raise ValueError(f"n = {self.n} exceeds the dense guard {DENSE_GUARD}")
        if self.matrix is not None:
            a = self.matrix.toarray() if sp.issparse(self.matrix) else np.array(self.matrix)
        else:
            a = self._raw_apply(np.eye(self.n, dtype=self.dtype))
        return a.astype(self.dtype, copy=False)

    def norm_est(self):
        """Cheap upper bound on the 2-norm (max absolute row sum)."""
        if self._norm_est is None:
            if self.matrix is not None:
                self._norm_est = float(abs(self.matrix).sum(axis=1).max())
            else:
                self._norm_est = float(np.abs(self.to_dense()).sum(axis=1).max())
        return self._norm_est


def hermitian_defect(op, rng=None, trials=3):
    """Largest ``|<Au, v> - <u, Av>| / (|A| |u| |v|)`` over random pairs."""
    rng = np.random.default_rng(rng)
    worst = 0.0
    for _ in range(trials):
        u = rng.standard_normal(op.n)
        v = rng.standard_normal(op.n)
        if not op.is_real:
            u = u + 1j * rng.standard_normal(op.n)
            v = v + 1j * rng.standard_normal(op.n)
        au = op._raw_apply(u)
        av = op._raw_apply(v)
        d = abs(np.vdot(v, au) - np.vdot(av, u))
        scale = max(op.norm_est(), 1e-300) * np.linalg.norm(u) * np.linalg.norm(v)
        worst = max(worst, d / scale)
    return worst


def orthonormalize(x, drop_tol=1e-10):
    """Orthonormal basis for the column span of ``x``.

    Classical Gram-Schmidt with one reorthogonalization pass. A column is
    dropped when less than ``drop_tol`` of its norm survives the
    projection, so the returned block has ``rank`` columns.

    Returns
    -------
    q : ndarray, shape (n, rank)
    rank : int
    """
    x = np.asarray(x)
    if x.ndim == 1:
        x = x[:, None]
    n, m = x.shape
    dtype = np.result_type(x.dtype, np.float64)
    q = np.zeros((n, m), dtype=dtype)
    rank = 0
    for j in range(m):
        v = x[:, j].astype(dtype, copy=True)
        nrm0 = np.linalg.norm(v)
        if nrm0 == 0.0:
            continue
        for _ in range(2):
            if rank:
                v -= q[:, :rank] @ (q[:, :rank].conj().T @ v)
        nrm = np.linalg.norm(v)
        if nrm <= drop_tol * nrm0:
            continue
        q[:, rank] = v / nrm
        rank += 1
    return q[:, :rank], rank


def reduced_solve(a_q, b_q, cond_limit=1e12, trunc=1e-14):
    """Solve the small Hermitian pencil ``A_Q X = B_Q X diag(lam)``.

    ``B_Q`` is Cholesky-reduced when its condition number is below
    ``cond_limit``. Otherwise the pencil is restricted to the eigenvectors
    of ``B_Q`` whose eigenvalues exceed ``trunc * max``, and fewer than
    ``m0`` pairs come back; the effective dimension is ``x.shape[1]``.

    Returns
    -------
    lam : ndarray
        Ascending real eigenvalues.
    x : ndarray, shape (m0, rank)
        ``B_Q``-orthonormal eigenvectors.
    """
    a_q = np.asarray(a_q)
    b_q = np.asarray(b_q)
    a_q = 0.5 * (a_q + a_q.conj().T)
    b_q = 0.5 * (b_q + b_q.conj().T)
    s, u = np.linalg.eigh(b_q)
    smax = s[-1] if s.size else 0.0
    if smax <= 0.0:
        raise ValueError("B_Q has no positive spectrum")
    if s[0] > smax / cond_limit:
        lam, x = scipy.linalg.eigh(a_q, b_q)
        return lam, x
    keep = s > trunc * smax
    t = u[:, keep] / np.sqrt(s[keep])
    c = t.conj().T @ a_q @ t
    lam, w = np.linalg.eigh(0.5 * (c + c.conj().T))
    return lam, t @ w


# --- dense Hermitian eigensolver (in-repo; used as an independent oracle) ---


def _tridiagonalize(a):
    """Householder reduction ``a = Q T Q^H`` with real tridiagonal ``T``."""
    a = np.array(a, dtype=np.result_type(a.dtype, np.float64))
    n = a.shape[0]
    q = np.eye(n, dtype=a.dtype)
    for k in range(n - 2):
        x = a[k + 1:, k]
        xnorm = np.linalg.norm(x)
        if xnorm == 0.0:
            continue
        x0 = x[0]
        phase = x0 / abs(x0) if x0 != 0 else 1.0
        alpha = -phase * xnorm
        v = x.copy()
        v[0] -= alpha
        vnorm = np.linalg.norm(v)
        if vnorm == 0.0:
            continue
        v /= vnorm
        a22 = a[k + 1:, k + 1:]
        p = 2.0 * (a22 @ v)
        kk = np.vdot(v, p)
        w = p - kk * v
        a22 -= np.outer(v, w.conj()) + np.outer(w, v.conj())
        a[k + 1, k] = alpha
        a[k, k + 1] = np.conj(alpha)
        a[k + 2:, k] = 0.0
        a[k, k + 2:] = 0.0
        qs = q[:, k + 1:]
        qs -= 2.0 * np.outer(qs @ v, v.conj())
    d = np.real(np.diag(a)).copy()
    off = np.diag(a, -1).copy()
    # diagonal unitary scaling makes the off-diagonal real and nonnegative
    phases = np.ones(n, dtype=a.dtype)
    e = np.zeros(n)
    for k in range(n - 1):
        mag = abs(off[k])
        e[k] = mag
        phases[k + 1] = phases[k] * (off[k] / mag if mag != 0 else 1.0)
    return d, e, q * phases[None, :]


@numba.njit(cache=True)
def _tql(d, e, zt):
    """Implicit QL with Wilkinson shifts on a real symmetric tridiagonal.

    ``e[i]`` couples ``i`` and ``i + 1``. Rotations are accumulated into the
    rows of ``zt`` (rows are eigenvectors of T on exit). Returns 0 on
    success, -1 if an eigenvalue failed to converge in 60 sweeps.
    """
    n = d.shape[0]
    eps = 2.220446049250313e-16
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= eps * dd:
                    break
                m += 1
            if m == l:
                break
            it += 1
            if it > 60:
                return -1
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = np.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + (r if g >= 0 else -r))
            s = 1.0
            c = 1.0
            p = 0.0
            i = m - 1
            underflow = False
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = np.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                for k in range(n):
                    f = zt[i + 1, k]
                    zt[i + 1, k] = s * zt[i, k] + c * f
                    zt[i, k] = c * zt[i, k] - s * f
                i -= 1
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return 0


def dense_eig(op):
    """Full eigendecomposition of a Hermitian operator.

    Householder tridiagonalization followed by implicit QL; no LAPACK
    eigensolver is involved, so this can serve as an oracle for code that
    does use one.

    Returns
    -------
    lam : ndarray, shape (n,)
        Ascending eigenvalues.
    v : ndarray, shape (n, n)
        Unitary matrix of eigenvectors (columns).
    """
    if isinstance(op, HermitianOperator):
        if op.n > DENSE_GUARD:
            raise ValueError(f"dense_eig refuses n = {op.n} > {DENSE_GUARD}")
        a = op.to_dense()
    else:
        a = np.asarray(op)
        if a.shape[0] > DENSE_GUARD:
            raise ValueError(f"dense_eig refuses n = {a.shape[0]} > {DENSE_GUARD}")
    n = a.shape[0]
    if n == 1:
        return np.real(a[0]).astype(float).copy(), np.ones((1, 1), dtype=a.dtype)
    d, e, q = _tridiagonalize(a)
    zt = np.eye(n)
    if _tql(d, e, zt) != 0:
        raise np.linalg.LinAlgError("QL iteration did not converge")
    order = np.argsort(d, kind="stable")
    return d[order], q @ zt[order].T


class DenseShiftedSolver:
    """LU factorizations of ``(z_k I - A)`` for a fixed set of shifts."""

    def __init__(self, op, shifts):
        a = op.to_dense() if isinstance(op, HermitianOperator) else np.asarray(op)
        n = a.shape[0]
        scale = max(float(np.abs(a).sum(axis=1).max()), 1.0)
        self.shifts = [complex(z) for z in shifts]
        self._factors = []
        for z in self.shifts:
            lu, piv = scipy.linalg.lu_factor(z * np.eye(n) - a, check_finite=False)
            if np.min(np.abs(np.diag(lu))) <= 1e-14 * scale:
                raise SingularShiftError(z)
            self._factors.append((lu, piv))

    def solve(self, k, x):
        return scipy.linalg.lu_solve(self._factors[k], np.asarray(x, dtype=complex), check_finite=False)


def dense_shifted_solve(op, z, x):
    """Solve ``(zI - A) Y = X`` with a dense LU factorization."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        return DenseShiftedSolver(op, [z]).solve(0, x)
