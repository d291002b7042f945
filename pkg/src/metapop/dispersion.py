"""Patch-to-patch dispersal structure."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

STOCHASTIC_TOL = 1e-12


@dataclass(frozen=True)
class DispersionSpec:
    """Per-stage dispersal probabilities.

    ``d[k, i, j]`` is the probability that a stage-``k`` individual moves from
    patch ``j`` to patch ``i`` during one step (0-based indices). Every
    ``d[k, :, j]`` column must sum to one: individuals are rearranged, never
    lost.
    """

    d: np.ndarray

    def __post_init__(self):
        d = np.array(self.d, dtype=float)
        if d.ndim != 3 or d.shape[1] != d.shape[2]:
            raise ValidationError(f"dispersal array must have shape (m, n, n), got {d.shape}")
        if not np.all(np.isfinite(d)) or (d < 0).any() or (d > 1).any():
            raise ValidationError(
                "dispersal probabilities must lie in [0, 1]", condition="dispersal-conservation"
            )
        sums = d.sum(axis=1)
        bad = np.argwhere(np.abs(sums - 1.0) > STOCHASTIC_TOL)
        if bad.size:
            k, j = bad[0]
            raise ValidationError(
                f"stage {k + 1}, source patch {j + 1}: dispersal probabilities sum to "
                f"{sums[k, j]!r}, must sum to 1 (dispersal conservation)",
                condition="dispersal-conservation",
            )
        d.setflags(write=False)
        object.__setattr__(self, "d", d)

    @property
    def m(self) -> int:
        return self.d.shape[0]

    @property
    def n(self) -> int:
        return self.d.shape[1]

    @classmethod
    def identity(cls, m: int, n: int) -> "DispersionSpec":
        """No dispersal: every individual stays in its patch."""
        return cls(np.broadcast_to(np.eye(n), (m, n, n)).copy())


def local_dispersion_matrix(spec: DispersionSpec, i: int, j: int) -> np.ndarray:
    """Diagonal m x m block moving each stage from patch j to patch i."""
    if not (0 <= i < spec.n and 0 <= j < spec.n):
        raise IndexError(f"patch indices ({i}, {j}) out of range for n={spec.n}")
    return np.diag(spec.d[:, i, j])


def global_dispersion_matrix(spec: DispersionSpec) -> np.ndarray:
    """Block matrix whose (i, j) block is the local dispersion matrix D(i, j).

    Row/column ``k + i*m`` (0-based) belongs to stage ``k`` in patch ``i``.
    """
    m, n = spec.m, spec.n
    D = np.zeros((m * n, m * n))
    for i in range(n):
        for j in range(n):
            D[i * m:(i + 1) * m, j * m:(j + 1) * m] = np.diag(spec.d[:, i, j])
    return D


def validate_stochasticity(D, tol: float = STOCHASTIC_TOL) -> bool:
    D = np.asarray(D, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ValueError("dispersion matrix must be square")
    return bool(np.all(np.abs(D.sum(axis=0) - 1.0) <= tol))
