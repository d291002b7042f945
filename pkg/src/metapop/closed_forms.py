"""Closed-form net reproductive numbers and the named example models.

Covers the single-patch three-stage formula, newborn-only dispersal between
two and three patches, the two-stage larva/adult amplification example, and
the two-patch round goby model, plus critical-dispersal root finding.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import bisect

from .demography import StageVitals, build_usher
from .dispersion import DispersionSpec
from .errors import NumericalError, ValidationError
from .linalg import l1_norm_matrix
from .model import GlobalModel, assemble, net_reproductive_number


def usher_r0_closed_form(v: StageVitals) -> float:
    """R0 of a three-stage patch where only the last stage reproduces."""
    if v.m != 3 or v.fecundity[0] != 0.0 or v.fecundity[1] != 0.0:
        raise ValidationError("closed form needs m=3 with fecundity only in stage 3")
    (s11, s22, s33), (s21, s32) = v.stay, v.advance
    return v.fecundity[2] * s32 * s21 / ((1 - s11) * (1 - s22) * (1 - s33))


def patch_xi(v: StageVitals, d_stay: float, rho: float) -> float:
    """Larva-in to adult-out gain of one patch when a fraction ``d_stay`` of
    its larvae remain home (larvae cannot stay larvae)."""
    if v.m != 3 or v.stay[0] != 0.0:
        raise ValidationError("patch gain needs m=3 with no larval stasis")
    (_, s22, s33), (s21, s32) = v.stay, v.advance
    f3 = v.fecundity[2]
    denom = (1 - s22) * (1 - s33) - d_stay * f3 * s32 * s21 / rho
    if denom <= 0:
        raise NumericalError("patch gain is singular at this rho")
    return s32 * s21 / denom


# -- newborn-only dispersal between patches ------------------------------------

@dataclass(frozen=True)
class TwoPatchNewbornDispersal:
    R0_1: float
    R0_2: float
    d11: float
    d22: float

    def __post_init__(self):
        if self.R0_1 < 0 or self.R0_2 < 0:
            raise ValidationError("local net reproductive numbers must be >= 0")
        if not (0 <= self.d11 <= 1 and 0 <= self.d22 <= 1):
            raise ValidationError("stay-home probabilities must lie in [0, 1]")


def two_patch_quadratic(p: TwoPatchNewbornDispersal, R0: float) -> float:
    """Characteristic quadratic whose larger root is the global R0."""
    return (R0 ** 2 - (p.d11 * p.R0_1 + p.d22 * p.R0_2) * R0
            + (p.d11 + p.d22 - 1) * p.R0_1 * p.R0_2)


def two_patch_r0(p: TwoPatchNewbornDispersal) -> float:
    b = p.d11 * p.R0_1 + p.d22 * p.R0_2
    disc = b * b + 4 * (1 - p.d11 - p.d22) * p.R0_1 * p.R0_2
    # disc = (d11 R1 - d22 R2)^2 + 4 d12 d21 R1 R2 >= 0; tiny negatives are rounding
    return 0.5 * (b + math.sqrt(max(disc, 0.0)))


def xi_transmission(d_ij: float, d_jj: float, R0_j: float, rho: float) -> float:
    """Reduced-graph gain from patch j's newborns to patch i's newborns."""
    denom = rho - d_jj * R0_j
    if denom <= 0:
        raise NumericalError("xi transmission is singular: rho <= d_jj * R0_j")
    return d_ij * R0_j / denom


def three_patch_residual(xi) -> float:
    """Loop sum of the reduced three-patch graph minus one.

    ``xi[i][j]`` is the gain from patch j to patch i (0-based); the diagonal
    is ignored. Zero at the global R0.
    """
    x = np.asarray(xi, dtype=float)
    return (x[0, 1] * x[1, 0] + x[0, 2] * x[2, 0] + x[1, 2] * x[2, 1]
            + x[0, 1] * x[1, 2] * x[2, 0] + x[0, 2] * x[2, 1] * x[1, 0] - 1.0)


def cubic_positive_root(a: float, b: float) -> float:
    """Unique positive root of u^3 - a u - b for a, b > 0."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    g = lambda u: u ** 3 - a * u - b
    return bisect(g, 0.0, max(1.0, a + b) + 1.0, xtol=1e-13, rtol=4 * np.finfo(float).eps, maxiter=500)


def build_newborn_dispersal_model(vitals: Sequence[StageVitals], newborn_dispersal) -> GlobalModel:
    """Patches with their own vitals where only newborns disperse.

    ``newborn_dispersal[i][j]`` is the probability a newborn moves from j to i.
    """
    n = len(vitals)
    m = vitals[0].m
    d = np.broadcast_to(np.eye(n), (m, n, n)).copy()
    d[0] = np.asarray(newborn_dispersal, dtype=float)
    return assemble([build_usher(v) for v in vitals], DispersionSpec(d))


def vitals_with_r0(R0: float, s21: float, s22: float, s32: float, s33: float) -> StageVitals:
    """Three-stage vitals (no larval stasis) with adult fecundity set to hit ``R0``."""
    f3 = R0 * (1 - s22) * (1 - s33) / (s21 * s32)
    return StageVitals((0.0, 0.0, f3), (0.0, s22, s33), (s21, s32))


# -- two-stage amplification example -------------------------------------------

def example33_r0(R: float, p: float, d: float) -> tuple[float, float]:
    """(R0, R0_hat) of the two-stage, two-patch round-trip dispersal family."""
    inner = 4 * (1 - d) + p * d * d
    assert inner >= 0
    R0 = 0.5 * (2 * (1 - d) + p * d * d + math.sqrt(p) * d * math.sqrt(inner)) * R
    R0_hat = ((p - 1) * d + 1) * R
    return R0, R0_hat


def example33_critical_d(R: float, p: float) -> float:
    """Dispersal rate at which R0 crosses 1 for the amplification family."""
    if not (0 < R < 1 and p * R > 1):
        raise NumericalError("no crossing: need R < 1 < p R")
    return (1 + math.sqrt(p / R)) * (1 - R) / (p - R)


def build_example33_model(R: float, s: float, p: float, d: float, swapped: bool = False) -> GlobalModel:
    """Two stages, two patches; patch 1 favours reproduction, patch 2 survival.

    Newborns move 1 -> 2 and adults 2 -> 1 at rate ``d``. With ``swapped``
    the directions are reversed (newborns 2 -> 1, adults 1 -> 2).
    """
    if not (0 < R < 1 and 0 < s < 1 and 1 < p < 1 / s and 0 <= d <= 1):
        raise ValidationError("need 0 < R < 1, 0 < s < 1, 1 < p < 1/s and d in [0, 1]")
    vit1 = StageVitals((0.0, R / s), (0.0, 0.0), (s,))
    vit2 = StageVitals((0.0, R / (p * s)), (0.0, 0.0), (p * s,))
    out = np.array([[1 - d, 0.0], [d, 1.0]])  # patch 1 -> patch 2
    back = np.array([[1.0, d], [0.0, 1 - d]])  # patch 2 -> patch 1
    d_arr = np.array([back, out]) if swapped else np.array([out, back])
    return assemble([build_usher(vit1), build_usher(vit2)], DispersionSpec(d_arr))


# -- round goby two-patch model ------------------------------------------------

@dataclass(frozen=True)
class GobyTwoPatchParams:
    """Larva/juvenile/adult model; patch 2 has survival scaled up by ``p``.

    Larvae move 1 -> 2 at rate ``d``; juveniles move 2 -> 1 at rate ``d*q``.
    Adult fecundities are chosen so both isolated patches have R0 = ``R``.
    """

    R: float
    s21: float
    s22: float
    s32: float
    s33: float
    p: float
    d: float
    q: float

    def __post_init__(self):
        if not 0 < self.R < 1:
            raise ValidationError("R must lie in (0, 1)")
        if not (self.s21 > 0 and self.s32 > 0):
            raise ValidationError("s21 and s32 must be positive")
        for name in ("s21", "s22", "s32", "s33"):
            if not 0 <= getattr(self, name) < 1:
                raise ValidationError(f"{name} must lie in [0, 1)", condition="survival-bound")
        if not (0 <= self.d <= 1 and 0 <= self.q <= 1):
            raise ValidationError("d and q must lie in [0, 1]")
        norm = l1_norm_matrix(self.survival(1.0))
        if not (1 < self.p and self.p * norm < 1):
            raise ValidationError(
                f"need 1 < p < 1/||S1|| = {1 / norm:g}", condition="survival-bound"
            )

    def survival(self, scale: float) -> np.ndarray:
        return scale * np.array([[0.0, 0.0, 0.0],
                                 [self.s21, self.s22, 0.0],
                                 [0.0, self.s32, self.s33]])

    def fecundities(self) -> tuple[float, float]:
        R, p = self.R, self.p
        f1 = R * (1 - self.s22) * (1 - self.s33) / (self.s21 * self.s32)
        f2 = R * (1 - p * self.s22) * (1 - p * self.s33) / (p * p * self.s21 * self.s32)
        return f1, f2

    def vitals(self) -> tuple[StageVitals, StageVitals]:
        f1, f2 = self.fecundities()
        p = self.p
        v1 = StageVitals((0.0, 0.0, f1), (0.0, self.s22, self.s33), (self.s21, self.s32))
        v2 = StageVitals((0.0, 0.0, f2), (0.0, p * self.s22, p * self.s33), (p * self.s21, p * self.s32))
        return v1, v2

    def full_dispersal_gain(self) -> float:
        """Ratio R0 / R reached at d = 1."""
        p, q, s22 = self.p, self.q, self.s22
        return (p * q + (1 - q) * (1 - p * s22)) / (1 - p * (1 - q) * s22)


def build_goby_model(g: GobyTwoPatchParams) -> GlobalModel:
    d, dq = g.d, g.d * g.q
    larvae = np.array([[1 - d, 0.0], [d, 1.0]])
    juveniles = np.array([[1.0, dq], [0.0, 1 - dq]])
    adults = np.eye(2)
    v1, v2 = g.vitals()
    return assemble([build_usher(v1), build_usher(v2)],
                    DispersionSpec(np.array([larvae, juveniles, adults])))


GOBY_PAPER_PARAMS = dict(R=0.5, s21=1 / 20, s22=1 / 10, s32=1 / 20, s33=3 / 20, p=5.0, q=1 / 3)


# -- critical dispersal --------------------------------------------------------

def critical_dispersion(family: Callable[[float], GlobalModel], bracket=(0.0, 1.0),
                        xtol: float = 1e-12) -> float:
    """Scalar ``d`` in ``bracket`` where the family's R0 crosses 1, by bisection."""
    lo, hi = map(float, bracket)
    f = lambda d: net_reproductive_number(family(d)) - 1.0
    f_lo, f_hi = f(lo), f(hi)
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if f_lo * f_hi > 0:
        raise NumericalError(
            f"R0 - 1 does not change sign on [{lo:g}, {hi:g}] "
            f"(R0 = {f_lo + 1:.6g} and {f_hi + 1:.6g})"
        )
    return bisect(f, lo, hi, xtol=xtol, maxiter=500)
