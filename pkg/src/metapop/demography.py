"""Per-patch Usher (stage-structured) demography."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .linalg import spectral_radius


@dataclass(frozen=True)
class StageVitals:
    """Vital rates of one patch with ``m`` stages.

    Attributes:
        fecundity: length-m offspring per individual per time step.
        stay: length-m probability of surviving and remaining in the stage.
        advance: length m-1 probability of surviving and moving up one stage.
    """

    fecundity: tuple
    stay: tuple
    advance: tuple

    def __post_init__(self):
        f = tuple(float(v) for v in self.fecundity)
        s = tuple(float(v) for v in self.stay)
        a = tuple(float(v) for v in self.advance)
        object.__setattr__(self, "fecundity", f)
        object.__setattr__(self, "stay", s)
        object.__setattr__(self, "advance", a)
        m = len(f)
        if m < 2:
            raise ValidationError(f"need at least 2 stages, got {m}")
        if len(s) != m or len(a) != m - 1:
            raise ValidationError(
                f"expected {m} stay and {m - 1} advance probabilities, "
                f"got {len(s)} and {len(a)}"
            )
        for k, fk in enumerate(f, start=1):
            if not np.isfinite(fk) or fk < 0:
                raise ValidationError(f"stage {k}: fecundity must be finite and >= 0, got {fk}")
        for k in range(m):
            out = a[k] if k < m - 1 else 0.0
            if not (0.0 <= s[k] <= 1.0 and 0.0 <= out <= 1.0):
                raise ValidationError(
                    f"stage {k + 1}: survival probabilities must lie in [0, 1]",
                    condition="survival-bound",
                )
            if not s[k] + out < 1.0:
                raise ValidationError(
                    f"stage {k + 1}: stay + advance = {s[k] + out!r} must be < 1 "
                    "(survival bound: not every individual may survive a step)",
                    condition="survival-bound",
                )

    @property
    def m(self) -> int:
        return len(self.fecundity)


@dataclass(frozen=True)
class LocalDemography:
    F: np.ndarray
    S: np.ndarray

    @property
    def A(self) -> np.ndarray:
        return self.F + self.S

    @property
    def m(self) -> int:
        return self.F.shape[0]


def build_usher(v: StageVitals) -> LocalDemography:
    m = v.m
    F = np.zeros((m, m))
    F[0, :] = v.fecundity
    S = np.diag(v.stay)
    S[np.arange(1, m), np.arange(m - 1)] = v.advance
    return LocalDemography(F, S)


def is_leslie(d: LocalDemography) -> bool:
    """A Usher matrix is Leslie when nobody can remain in a stage."""
    return bool(np.all(np.diag(d.S) == 0.0))


def local_r0(v: StageVitals) -> float:
    """Lifetime offspring of one newborn in an isolated patch.

    Sum over stages of the stage fecundity times the expected time spent in
    that stage, where reaching stage k requires passing through every earlier
    stage.
    """
    total = 0.0
    reach = 1.0
    for k in range(v.m):
        total += v.fecundity[k] / (1.0 - v.stay[k]) * reach
        if k < v.m - 1:
            reach *= v.advance[k] / (1.0 - v.stay[k])
    return total


def local_growth_rate(d: LocalDemography) -> float:
    return spectral_radius(d.A).value
