"""Zero-perturbation manifold: the null space of the perturbation map."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import PerturbationMap

GROUP_DIM = 3
SINGULAR_TOL = 1e-8
ORTHOGONAL_TOL = 1e-6


@dataclass
class ZpmBasis:
    rows: np.ndarray
    at_shape: np.ndarray | None = None
    singular: bool = False
    singular_values: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.rows.shape[0]

    def projector(self) -> np.ndarray:
        return self.rows.T @ self.rows


def null_basis(P, singular_tol: float = SINGULAR_TOL) -> ZpmBasis:
    """Orthonormal rows spanning null(P), from the trailing right-singular vectors.

    ``singular_tol`` is relative to the largest singular value.  A rank drop
    is flagged on the result rather than raised.
    """
    at_shape = None
    if isinstance(P, PerturbationMap):
        at_shape = P.at_shape
        P = P.matrix
    P = np.asarray(P, dtype=float)
    m, n = P.shape
    if n <= m:
        raise ValueError(f"no null space: P is {m}x{n}")
    _, s, vt = np.linalg.svd(P)
    singular = bool(s[0] == 0.0 or s[m - 1] < singular_tol * s[0])
    return ZpmBasis(vt[m:].copy(), at_shape, singular, s)


def project_onto_zpm(delta, basis: ZpmBasis) -> np.ndarray:
    d = np.asarray(delta, dtype=float)
    return (d @ basis.rows.T) @ basis.rows


def is_orthogonal(basis: ZpmBasis, delta, tol: float = ORTHOGONAL_TOL) -> bool:
    """True when ``delta`` has no usable component on the manifold."""
    d = np.asarray(delta, dtype=float)
    norm = np.linalg.norm(d)
    if norm == 0.0:
        return True
    return bool(np.linalg.norm(d @ basis.rows.T) <= tol * norm)
