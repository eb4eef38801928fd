"""Matrix Market (coordinate) reader and writer for Hermitian operators."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .linalg import HermitianOperator

SYMMETRY_TOL = 1e-12
_FIELDS = ("real", "integer", "complex")
_SYMMETRIES = ("general", "symmetric", "hermitian")


class MatrixMarketError(ValueError):
    """Malformed or unsupported Matrix Market file."""

    def __init__(self, msg, line=None):
        self.line = line
        super().__init__(f"line {line}: {msg}" if line is not None else msg)


def _parse_header(line):
    parts = line.strip().split()
    if len(parts) != 5 or parts[0] != "%%MatrixMarket" or parts[1].lower() != "matrix":
        raise MatrixMarketError("missing or malformed '%%MatrixMarket matrix' banner", 1)
    fmt, field, sym = (p.lower() for p in parts[2:])
    if fmt != "coordinate":
        raise MatrixMarketError(f"unsupported format {fmt!r} (only coordinate)", 1)
    if field not in _FIELDS:
        raise MatrixMarketError(f"unsupported field {field!r}", 1)
    if sym not in _SYMMETRIES:
        raise MatrixMarketError(f"unsupported symmetry {sym!r}", 1)
    if sym == "hermitian" and field != "complex":
        raise MatrixMarketError("hermitian symmetry requires a complex field", 1)
    return field, sym


def read_matrix_market(path):
    """Read a Hermitian matrix stored in coordinate Matrix Market format.

    Symmetric and Hermitian files may store either triangle; the other is
    filled in. Duplicate entries are summed. A ``general`` file is accepted
    only if it is Hermitian to ``1e-12`` relative to its largest entry.
    """
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise MatrixMarketError("empty file", 1)
    field, sym = _parse_header(lines[0])
    is_complex = field == "complex"
    ncols_entry = 4 if is_complex else 3

    i = 1
    while i < len(lines) and (not lines[i].strip() or lines[i].lstrip().startswith("%")):
        i += 1
    if i == len(lines):
        raise MatrixMarketError("missing size line", i + 1)
    try:
        nrow, ncol, nnz = (int(t) for t in lines[i].split())
    except ValueError:
        raise MatrixMarketError("size line must hold three integers", i + 1) from None
    if nrow != ncol:
        raise MatrixMarketError(f"matrix is {nrow}x{ncol}, not square", i + 1)
    n = nrow

    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz, dtype=complex if is_complex else float)
    count = 0
    for lineno in range(i + 2, len(lines) + 1):
        text = lines[lineno - 1].strip()
        if not text or text.startswith("%"):
            continue
        toks = text.split()
        if len(toks) != ncols_entry:
            raise MatrixMarketError(f"expected {ncols_entry} fields, got {len(toks)}", lineno)
        if count == nnz:
            raise MatrixMarketError(f"more than the declared {nnz} entries", lineno)
        try:
            r, c = int(toks[0]), int(toks[1])
            v = complex(float(toks[2]), float(toks[3])) if is_complex else float(toks[2])
        except ValueError:
            raise MatrixMarketError(f"cannot parse entry {text!r}", lineno) from None
        if not (1 <= r <= n and 1 <= c <= n):
            raise MatrixMarketError(f"index ({r}, {c}) outside a {n}x{n} matrix", lineno)
        if sym == "hermitian" and r == c and is_complex and v.imag != 0.0:
            raise MatrixMarketError(f"diagonal entry ({r}, {c}) of a hermitian matrix is not real", lineno)
        rows[count], cols[count], vals[count] = r - 1, c - 1, v
        count += 1
    if count != nnz:
        raise MatrixMarketError(f"declared {nnz} entries, found {count}", len(lines))

    if sym != "general":
        off = rows != cols
        mirrored = vals[off].conj() if sym == "hermitian" else vals[off]
        rows, cols, vals = (np.concatenate([rows, cols[off]]),
                            np.concatenate([cols, rows[off]]),
                            np.concatenate([vals, mirrored]))
    mat = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    mat.sum_duplicates()

    if sym == "general":
        _check_hermitian(mat)
    if not is_complex:
        mat = mat.astype(float)
    return HermitianOperator.from_sparse(mat)


def _check_hermitian(mat):
    diff = (mat - mat.conj().T).tocoo()
    scale = max(abs(mat).max() if mat.nnz else 0.0, 1e-300)
    bad = np.flatnonzero(np.abs(diff.data) > SYMMETRY_TOL * scale)
    if bad.size:
        order = np.lexsort((diff.col[bad], diff.row[bad]))
        k = bad[order[0]]
        r, c = int(diff.row[k]), int(diff.col[k])
        raise MatrixMarketError(
            f"'general' matrix is not Hermitian: entry ({r + 1}, {c + 1}) = {mat[r, c].item()!r} "
            f"but ({c + 1}, {r + 1}) = {mat[c, r].item()!r}"
        )


def write_matrix_market(path, matrix, comment=None):
    """Write the lower triangle of a Hermitian matrix (dense or sparse)."""
    coo = sp.tril(sp.coo_matrix(matrix)).tocoo()
    is_complex = np.iscomplexobj(coo.data)
    sym = "hermitian" if is_complex else "symmetric"
    field = "complex" if is_complex else "real"
    order = np.lexsort((coo.row, coo.col))
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"%%MatrixMarket matrix coordinate {field} {sym}\n")
        if comment:
            for line in str(comment).splitlines():
                fh.write(f"% {line}\n")
        fh.write(f"{coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for k in order:
            v = coo.data[k]
            if is_complex:
                fh.write(f"{coo.row[k] + 1} {coo.col[k] + 1} {float(v.real)!r} {float(v.imag)!r}\n")
            else:
                fh.write(f"{coo.row[k] + 1} {coo.col[k] + 1} {float(v)!r}\n")
