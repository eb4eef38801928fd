"""Circular contours, trapezoidal quadrature and the rational filter."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


class ContourPoleError(ValueError):
    """Evaluation point lies on (or numerically at) a quadrature node."""


@dataclass(frozen=True)
class ContourRule:
    """Quadrature rule on the circle through ``lambda_min`` and ``lambda_max``.

    Only the upper-half nodes are stored. The lower half consists of
    their complex conjugates (with conjugated weights). When
    ``symmetrized`` is set, callers may solve at the upper nodes only and
    double the real part; that is valid for real symmetric matrices with
    real right-hand sides.
    """

    center: float
    radius: float
    nc_up: int
    nodes: tuple
    weights: tuple
    symmetrized: bool = True
    kind: str = "trapezoid"

    @property
    def nc(self):
        return 2 * self.nc_up

    @property
    def bounds(self):
        return self.center - self.radius, self.center + self.radius

    def full_nodes(self):
        """All ``n_c`` nodes and weights: upper half then conjugates, ascending ``k``."""
        z = np.asarray(self.nodes, dtype=complex)
        w = np.asarray(self.weights, dtype=complex)
        return np.concatenate([z, z.conj()]), np.concatenate([w, w.conj()])

    def solve_nodes(self):
        """Nodes (and weights) at which linear systems must actually be solved."""
        if self.symmetrized:
            return np.asarray(self.nodes, dtype=complex), np.asarray(self.weights, dtype=complex)
        return self.full_nodes()

    def with_symmetry(self, symmetrized):
        return replace(self, symmetrized=bool(symmetrized))


def build_trapezoid(lambda_min, lambda_max, nc_up, symmetrized=True):
    """Trapezoidal rule with ``2 * nc_up`` nodes on the enclosing circle.

    Angles are offset by half a step, ``theta_k = pi (2k - 1) / n_c``, so no
    node sits on the real axis.
    """
    lambda_min = float(lambda_min)
    lambda_max = float(lambda_max)
    nc_up = int(nc_up)
    if not lambda_min < lambda_max:
        raise ValueError(f"degenerate interval ({lambda_min}, {lambda_max})")
    if nc_up < 1:
        raise ValueError("nc_up must be at least 1")
    c = 0.5 * (lambda_min + lambda_max)
    r = 0.5 * (lambda_max - lambda_min)
    nc = 2 * nc_up
    theta = np.pi * (2 * np.arange(1, nc_up + 1) - 1) / nc
    e = np.exp(1j * theta)
    nodes = c + r * e
    weights = (r / nc) * e
    return ContourRule(c, r, nc_up, tuple(nodes), tuple(weights), bool(symmetrized))


def _check_poles(rule, lam):
    z, _ = rule.full_nodes()
    dist = np.abs(np.asarray(lam)[..., None] - z).min(axis=-1)
    if np.any(dist < 1e-14 * rule.radius):
        raise ContourPoleError("filter evaluated at a quadrature node")


def filter_value(rule, lam):
    """Rational filter ``sum_k w_k / (z_k - lam)`` over the full circle.

    Accepts scalars or arrays. For a symmetrized rule and real ``lam`` the
    sum is evaluated as twice the real part of the upper-half sum.
    """
    lam_arr = np.asarray(lam)
    _check_poles(rule, lam_arr)
    if rule.symmetrized and not np.iscomplexobj(lam_arr):
        z = np.asarray(rule.nodes, dtype=complex)
        w = np.asarray(rule.weights, dtype=complex)
        terms = w / (z - lam_arr[..., None].astype(float))
        out = 2.0 * np.real(terms.sum(axis=-1)) + 0j
    else:
        z, w = rule.full_nodes()
        out = (w / (z - lam_arr[..., None])).sum(axis=-1)
    if out.ndim == 0:
        return complex(out)
    return out


def accumulate_Q(rule, ys):
    """Weighted sum of the per-node solutions.

    ``ys`` holds one block per solve node (see ``ContourRule.solve_nodes``).
    The symmetrized form returns ``2 Re sum_k w_k Y_k`` as a real block.
    """
    _, w = rule.solve_nodes()
    if len(ys) != len(w):
        raise ValueError(f"expected {len(w)} solution blocks, got {len(ys)}")
    shape = np.shape(ys[0])
    acc = np.zeros(shape, dtype=complex)
    for k, y in enumerate(ys):
        if np.shape(y) != shape:
            raise ValueError("solution blocks differ in shape")
        acc += w[k] * np.asarray(y)
    if rule.symmetrized:
        return 2.0 * acc.real
    return acc
