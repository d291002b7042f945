import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import random_vitals
from metapop.demography import (
    StageVitals,
    build_usher,
    is_leslie,
    local_growth_rate,
    local_r0,
)
from metapop.errors import ValidationError
from metapop.linalg import is_irreducible, spectral_radius


def test_build_usher_three_stage_layout():
    v = StageVitals((0, 0, 7), (0.1, 0.2, 0.3), (0.4, 0.5))
    d = build_usher(v)
    F = np.zeros((3, 3))
    F[0, 2] = 7
    S = np.array([[0.1, 0, 0], [0.4, 0.2, 0], [0, 0.5, 0.3]])
    assert np.array_equal(d.F, F)
    assert np.array_equal(d.S, S)
    assert np.array_equal(d.A, F + S)
    assert not is_leslie(d)


def test_two_stage_leslie_patch():
    R, s = 0.25, 0.05
    d = build_usher(StageVitals((0, R / s), (0, 0), (s,)))
    assert np.allclose(d.A, [[0, R / s], [s, 0]])
    assert is_leslie(d)
    assert abs(local_growth_rate(d) - np.sqrt(R)) < 1e-12


def test_all_zero_vitals_are_valid():
    d = build_usher(StageVitals((0, 0), (0, 0), (0,)))
    assert not d.A.any()
    assert is_leslie(d)
    assert local_growth_rate(d) == 0.0


@pytest.mark.parametrize("stay, advance, stage", [
    ((0.5, 0.2), (0.5,), 1),
    ((0.2, 1.0), (0.3,), 2),
    ((0.2, 0.1, 0.0), (0.3, 0.95), 2),
])
def test_survival_bound_violation_names_stage(stay, advance, stage):
    m = len(stay)
    with pytest.raises(ValidationError) as exc:
        StageVitals((0,) * m, stay, advance)
    assert exc.value.condition == "survival-bound"
    assert f"stage {stage}" in str(exc.value)


def test_other_invalid_vitals():
    with pytest.raises(ValidationError):
        StageVitals((1,), (0,), ())
    with pytest.raises(ValidationError):
        StageVitals((1, 1), (0, 0), ())
    with pytest.raises(ValidationError):
        StageVitals((-1, 1), (0, 0), (0.5,))
    with pytest.raises(ValidationError):
        StageVitals((np.inf, 1), (0, 0), (0.5,))
    with pytest.raises(ValidationError):
        StageVitals((0, 1), (-0.1, 0), (0.5,))


def test_local_r0_closed_form_cases():
    assert local_r0(StageVitals((1, 0, 0), (0, 0, 0), (0.3, 0.3))) == 1.0
    f3, s11, s22, s33, s21, s32 = 6, 0.2, 0.25, 0.5, 0.5, 1 / 3
    v = StageVitals((0, 0, f3), (s11, s22, s33), (s21, s32))
    assert abs(local_r0(v) - f3 * s32 * s21 / ((1 - s11) * (1 - s22) * (1 - s33))) < 1e-12


def test_local_r0_matches_next_generation_entry():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        v = random_vitals(rng, int(rng.integers(2, 7)))
        d = build_usher(v)
        N = d.F @ np.linalg.inv(np.eye(v.m) - d.S)
        assert abs(local_r0(v) - N[0, 0]) <= 1e-10 * max(1.0, N[0, 0])
        # N has a single nonzero row, so its radius is that diagonal entry
        assert abs(spectral_radius(N).value - N[0, 0]) <= 1e-10 * max(1.0, N[0, 0])


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 5))
def test_same_side_of_one(seed, m):
    # holds with or without irreducibility
    rng = np.random.default_rng(seed)
    v = random_vitals(rng, m)
    d = build_usher(v)
    R0, r = local_r0(v), local_growth_rate(d)
    assert (R0 - 1) * (r - 1) >= -1e-9
    if R0 < 1 - 1e-9:
        assert R0 <= r + 1e-9
    elif R0 > 1 + 1e-9:
        assert r <= R0 + 1e-9


def test_cushing_zhou_z_transform():
    rng = np.random.default_rng(11)
    checked = 0
    for _ in range(300):
        v = random_vitals(rng, int(rng.integers(2, 5)), last_stage_only=True)
        d = build_usher(v)
        if not is_irreducible(d.A):
            continue
        R0 = local_r0(v)
        assert abs(spectral_radius(d.F / R0 + d.S).value - 1.0) < 1e-8
        checked += 1
    assert checked > 200
