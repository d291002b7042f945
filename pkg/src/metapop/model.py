"""Global multi-patch model: assembly, projection, next-generation analysis.

State vectors have length ``m*n``; entry ``k + i*m`` (0-based) counts stage
``k`` in patch ``i``. Stage 0 holds the newborns.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import block_diag

from .demography import LocalDemography
from .dispersion import DispersionSpec, global_dispersion_matrix
from .errors import ValidationError
from .linalg import (
    is_irreducible,
    l1_norm_matrix,
    solve_linear,
    spectral_radius,
)


@dataclass(frozen=True)
class GlobalModel:
    m: int
    n: int
    F: np.ndarray
    S: np.ndarray
    D: np.ndarray

    @property
    def A(self) -> np.ndarray:
        return self.F + self.S

    @property
    def P(self) -> np.ndarray:
        """One-step projection: demography first, then dispersal."""
        return self.D @ self.A

    def block(self, X, i, j=None):
        """The (i, j) m x m block of an mn x mn matrix (0-based patches)."""
        j = i if j is None else j
        m = self.m
        return X[i * m:(i + 1) * m, j * m:(j + 1) * m]

    def local(self, i: int) -> LocalDemography:
        return LocalDemography(self.block(self.F, i).copy(), self.block(self.S, i).copy())


def assemble(locals_: Sequence[LocalDemography], spec: DispersionSpec) -> GlobalModel:
    if not locals_:
        raise ValidationError("at least one patch is required")
    m = locals_[0].m
    if any(loc.m != m for loc in locals_):
        raise ValidationError("all patches must have the same number of stages")
    if spec.m != m or spec.n != len(locals_):
        raise ValidationError(
            f"dispersal spec is for m={spec.m}, n={spec.n}; "
            f"demography has m={m}, n={len(locals_)}"
        )
    F = block_diag(*[loc.F for loc in locals_])
    S = block_diag(*[loc.S for loc in locals_])
    return GlobalModel(m, len(locals_), F, S, global_dispersion_matrix(spec))


# -- newborn bookkeeping -------------------------------------------------------

def newborn_indices(m: int, n: int) -> np.ndarray:
    """0-based positions of the newborn stage in each patch."""
    return np.arange(n) * m


@dataclass(frozen=True)
class AuxiliaryMaps:
    """0/1 selector matrices tying full vectors to newborn-only vectors.

    ``G`` (n x mn) keeps the newborn rows, ``H = G.T`` re-inserts zeros, and
    ``L = H @ G`` zeroes the non-newborn rows.
    """

    L: np.ndarray
    G: np.ndarray
    H: np.ndarray

    @classmethod
    def build(cls, m: int, n: int) -> "AuxiliaryMaps":
        G = np.zeros((n, m * n))
        G[np.arange(n), newborn_indices(m, n)] = 1.0
        H = G.T.copy()
        return cls(H @ G, G, H)

    def phi(self, X) -> np.ndarray:
        return self.G @ X @ self.H


def newborn_submatrix(X, m: int, n: int) -> np.ndarray:
    """Keep only newborn rows and columns of an mn x mn matrix."""
    X = np.asarray(X, dtype=float)
    if X.shape != (m * n, m * n):
        raise ValueError(f"expected a {m * n}x{m * n} matrix, got {X.shape}")
    K = newborn_indices(m, n)
    return X[np.ix_(K, K)].copy()


# -- core quantities -----------------------------------------------------------

def simulate(model: GlobalModel, x0, steps: int) -> np.ndarray:
    """Trajectory ``x(t) = P^t x0`` for t = 0..steps, one row per time."""
    x = np.asarray(x0, dtype=float)
    if x.shape != (model.m * model.n,):
        raise ValidationError(f"initial population must have length {model.m * model.n}")
    if (x < 0).any():
        raise ValidationError("initial population must be nonnegative")
    P = model.P
    out = np.empty((steps + 1, x.size))
    out[0] = x
    for t in range(steps):
        out[t + 1] = P @ out[t]
    return out


def growth_rate(model: GlobalModel) -> float:
    return spectral_radius(model.P).value


def partial_next_generation(model: GlobalModel) -> np.ndarray:
    """W = F (I - D S)^-1, the offspring a cohort produces before dispersing."""
    I = np.eye(model.m * model.n)
    # X (I - DS) = F  <=>  (I - DS)^T X^T = F^T
    W = solve_linear((I - model.D @ model.S).T, model.F.T).T
    # W is a sum of nonnegative products; negatives can only be rounding
    return np.maximum(W, 0.0)


def next_generation(model: GlobalModel) -> np.ndarray:
    """N = D F (I - D S)^-1."""
    return model.D @ partial_next_generation(model)


def r0_upper_bound(model: GlobalModel) -> float:
    """||F|| / (1 - ||S||): no dispersal pattern can push R0 past this."""
    return l1_norm_matrix(model.F) / (1.0 - l1_norm_matrix(model.S))


def local_next_generation(model: GlobalModel, i: int) -> np.ndarray:
    loc = model.local(i)
    I = np.eye(model.m)
    return solve_linear((I - loc.S).T, loc.F.T).T


@dataclass(frozen=True)
class AnalysisReport:
    r: float
    R0: float
    R0_hat: float
    local_R0: tuple
    local_R0_hat: tuple
    local_r: tuple
    alpha: float
    beta: float
    newborn_distribution: Optional[tuple]
    P_irreducible: bool
    N_bar_irreducible: bool
    upper_bound: float

    @property
    def dispersion_free_R0(self) -> float:
        """R0 of the same patches with dispersal switched off."""
        return max(self.local_R0)

    @property
    def amplified(self) -> bool:
        """Isolated patches decline while the connected system grows."""
        return self.dispersion_free_R0 < 1.0 < self.R0


def net_reproductive_number(model: GlobalModel) -> float:
    """R0 = rho of the newborn submatrix of N (same nonzero spectrum as N)."""
    N_bar = newborn_submatrix(next_generation(model), model.m, model.n)
    return spectral_radius(N_bar).value


def analyze(model: GlobalModel) -> AnalysisReport:
    m, n = model.m, model.n
    W = partial_next_generation(model)
    N = model.D @ W
    N_bar = newborn_submatrix(N, m, n)
    W_bar = newborn_submatrix(W, m, n)

    perron = spectral_radius(N_bar)
    col_sums = N_bar.sum(axis=0)
    N_bar_irr = is_irreducible(N_bar)
    zeta = None
    if N_bar_irr and perron.right is not None:
        zeta = tuple(float(z) for z in perron.right)

    local_R0 = tuple(float(local_next_generation(model, i)[0, 0]) for i in range(n))
    local_r = tuple(spectral_radius(model.local(i).A).value for i in range(n))
    return AnalysisReport(
        r=spectral_radius(model.P).value,
        R0=perron.value,
        R0_hat=l1_norm_matrix(W_bar),
        local_R0=local_R0,
        local_R0_hat=tuple(float(c) for c in W_bar.sum(axis=0)),
        local_r=local_r,
        alpha=float(col_sums.min()),
        beta=float(col_sums.max()),
        newborn_distribution=zeta,
        P_irreducible=is_irreducible(model.P),
        N_bar_irreducible=N_bar_irr,
        upper_bound=r0_upper_bound(model),
    )


def sensitivity(model: GlobalModel) -> Optional[np.ndarray]:
    """d r / d P[k, l] = u_k v_l for irreducible P, else None."""
    P = model.P
    if not is_irreducible(P):
        return None
    perron = spectral_radius(P)
    if not perron.converged or perron.left is None:
        return None
    return np.outer(perron.left, perron.right)


def reproductive_output(model: GlobalModel, newborn_distribution) -> float:
    """Expected lifetime offspring of a newborn placed by ``newborn_distribution``."""
    zeta = np.asarray(newborn_distribution, dtype=float)
    if zeta.shape != (model.n,):
        raise ValidationError(f"newborn distribution must have length {model.n}")
    if (zeta < 0).any() or abs(zeta.sum() - 1.0) > 1e-9:
        raise ValidationError("newborn distribution must be nonnegative and sum to 1")
    H = AuxiliaryMaps.build(model.m, model.n).H
    return float(np.abs(next_generation(model) @ (H @ zeta)).sum())
