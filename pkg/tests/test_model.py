import numpy as np
import pytest

from helpers import random_model, random_section32_model, random_vitals
from metapop.closed_forms import build_example33_model, build_goby_model, GobyTwoPatchParams, GOBY_PAPER_PARAMS
from metapop.demography import StageVitals, build_usher, local_r0
from metapop.dispersion import DispersionSpec
from metapop.errors import ValidationError
from metapop.linalg import is_irreducible, is_primitive, l1_norm_matrix, spectral_radius
from metapop.model import (
    AuxiliaryMaps,
    analyze,
    assemble,
    growth_rate,
    net_reproductive_number,
    newborn_indices,
    newborn_submatrix,
    next_generation,
    partial_next_generation,
    r0_upper_bound,
    reproductive_output,
    sensitivity,
    simulate,
)

R, S_, P_ = 0.25, 0.05, 16.0


def amp(d=1.0):
    return build_example33_model(R, S_, P_, d)


def test_single_patch_ignores_dispersion():
    rng = np.random.default_rng(0)
    loc = build_usher(random_vitals(rng, 3))
    model = assemble([loc], DispersionSpec.identity(3, 1))
    assert np.array_equal(model.P, loc.A)


def test_assemble_mismatch():
    loc = build_usher(StageVitals((0, 1), (0, 0), (0.5,)))
    with pytest.raises(ValidationError):
        assemble([loc], DispersionSpec.identity(2, 2))
    with pytest.raises(ValidationError):
        assemble([], DispersionSpec.identity(2, 1))
    loc3 = build_usher(StageVitals((0, 0, 1), (0, 0, 0), (0.5, 0.5)))
    with pytest.raises(ValidationError):
        assemble([loc, loc3], DispersionSpec.identity(2, 2))


def test_amplification_example_matrices():
    for d in (0.0, 0.3, 1.0):
        model = amp(d)
        N_bar = newborn_submatrix(next_generation(model), 2, 2)
        W_bar = newborn_submatrix(partial_next_generation(model), 2, 2)
        p = P_
        assert np.allclose(N_bar, [[(1 - d) * R, p * d * (1 - d) * R], [d * R, (p * d * d + 1 - d) * R]], atol=1e-14)
        assert np.allclose(W_bar, [[R, p * d * R], [0, (1 - d) * R]], atol=1e-14)
        assert np.allclose(newborn_submatrix(model.D, 2, 2), [[1 - d, 0], [d, 1]])


def test_no_dispersion_growth_and_r0():
    rng = np.random.default_rng(2)
    vit = [random_vitals(rng, 3) for _ in range(3)]
    model = assemble([build_usher(v) for v in vit], DispersionSpec.identity(3, 3))
    assert np.array_equal(model.P, model.A)
    assert abs(growth_rate(model) - max(spectral_radius(build_usher(v).A).value for v in vit)) < 1e-10
    rep = analyze(model)
    assert abs(rep.R0 - max(local_r0(v) for v in vit)) < 1e-10
    assert np.allclose(rep.local_R0, [local_r0(v) for v in vit], atol=1e-12)


def test_zero_model():
    model = assemble([build_usher(StageVitals((0, 0), (0, 0), (0,)))] * 2, DispersionSpec.identity(2, 2))
    assert growth_rate(model) == 0.0
    assert r0_upper_bound(model) == 0.0
    assert analyze(model).R0 == 0.0


def test_simulate():
    model = amp()
    x0 = np.zeros(4)
    assert not simulate(model, x0, 5).any()
    x0[2] = 1.0
    traj = simulate(model, x0, 40)
    assert traj.shape == (41, 4) and (traj >= 0).all()
    totals = traj.sum(axis=1)
    assert abs(totals[40] / totals[38] - 4.0) < 1e-9
    with pytest.raises(ValidationError):
        simulate(model, -x0, 2)
    with pytest.raises(ValidationError):
        simulate(model, np.ones(3), 2)


def test_goby_trajectories_decay_and_grow():
    for d, grows in ((0.5, False), (0.75, True)):
        model = build_goby_model(GobyTwoPatchParams(d=d, **GOBY_PAPER_PARAMS))
        x0 = np.zeros(6)
        x0[3] = 1.0
        totals = simulate(model, x0, 400).sum(axis=1)
        assert (totals[-1] > totals[-2]) == grows


def test_neumann_series_oracle():
    rng = np.random.default_rng(4)
    for _ in range(50):
        model = random_model(rng)
        DS, DF = model.D @ model.S, model.D @ model.F
        total, term = np.zeros_like(DF), np.eye(DS.shape[0])
        while l1_norm_matrix(term) > 1e-15:
            total += DF @ term
            term = term @ DS
        N = next_generation(model)
        assert np.allclose(N, total, atol=1e-9 * max(1, l1_norm_matrix(N)))
        assert np.allclose(model.D @ partial_next_generation(model), N, atol=1e-10)


def test_auxiliary_maps():
    aux = AuxiliaryMaps.build(3, 2)
    assert list(newborn_indices(3, 2)) == [0, 3]
    assert np.array_equal(np.diag(aux.L), [1, 0, 0, 1, 0, 0])
    assert np.array_equal(aux.G @ aux.H, np.eye(2))
    assert np.array_equal(aux.H @ aux.G, aux.L)
    assert np.array_equal(aux.G @ aux.L, aux.G)
    assert np.array_equal(aux.L @ aux.H, aux.H)
    X = np.arange(36.0).reshape(6, 6)
    assert np.array_equal(aux.phi(X), newborn_submatrix(X, 3, 2))
    assert np.array_equal(newborn_submatrix(np.eye(6), 3, 2), np.eye(2))
    with pytest.raises(ValueError):
        newborn_submatrix(np.eye(5), 3, 2)


def test_selector_fixes_n_and_w():
    rng = np.random.default_rng(8)
    for _ in range(50):
        model = random_model(rng)
        L = AuxiliaryMaps.build(model.m, model.n).L
        N, W = next_generation(model), partial_next_generation(model)
        assert np.array_equal(L @ N, N)
        assert np.array_equal(L @ W, W)


def test_phi_preserves_radius_for_fecundity_structured():
    rng = np.random.default_rng(9)
    for _ in range(200):
        m, n = int(rng.integers(2, 4)), int(rng.integers(1, 4))
        X = np.zeros((m * n, m * n))
        K = newborn_indices(m, n)
        X[K] = rng.uniform(size=(n, m * n)) * (rng.uniform(size=(n, m * n)) < 0.6)
        assert abs(spectral_radius(X).value - spectral_radius(newborn_submatrix(X, m, n)).value) < 1e-8


def test_stay_home_newborns_give_w_bar_radius():
    rng = np.random.default_rng(12)
    for _ in range(50):
        m, n = 3, int(rng.integers(2, 4))
        d = np.broadcast_to(np.eye(n), (m, n, n)).copy()
        for k in range(1, m):
            X = rng.uniform(size=(n, n))
            d[k] = X / X.sum(axis=0)
        model = assemble([build_usher(random_vitals(rng, m)) for _ in range(n)], DispersionSpec(d))
        W_bar = newborn_submatrix(partial_next_generation(model), m, n)
        assert abs(analyze(model).R0 - spectral_radius(W_bar).value) < 1e-9


def test_newborn_only_dispersal_structure():
    rng = np.random.default_rng(13)
    for _ in range(50):
        n = int(rng.integers(2, 5))
        model, vit = random_section32_model(rng, n)
        assert np.allclose(model.D @ model.S, model.S)
        W = partial_next_generation(model)
        local = [local_r0(v) for v in vit]
        assert np.allclose(newborn_submatrix(W, 3, n), np.diag(local), atol=1e-10)
        rep = analyze(model)
        assert abs(rep.R0_hat - max(local)) < 1e-10
        d1 = newborn_submatrix(model.D, 3, n)
        N_bar = newborn_submatrix(next_generation(model), 3, n)
        assert np.allclose(N_bar, d1 * np.array(local)[None, :], atol=1e-10)
        assert min(local) - 1e-9 <= rep.R0 <= max(local) + 1e-9


def test_analysis_report_invariants():
    rng = np.random.default_rng(14)
    for _ in range(100):
        rep = analyze(random_model(rng))
        assert rep.alpha - 1e-9 <= rep.R0 <= rep.beta + 1e-9
        assert rep.R0 <= rep.R0_hat + 1e-9
        assert abs(rep.R0_hat - max(rep.local_R0_hat)) < 1e-12
        assert rep.R0 <= rep.upper_bound + 1e-9


def test_amplification_report():
    rep = analyze(amp())
    assert rep.amplified
    assert rep.upper_bound == pytest.approx(25.0)
    assert rep.newborn_distribution is None  # N_bar is reducible at d = 1
    rep = analyze(amp(0.5))
    assert rep.N_bar_irreducible
    zeta = np.array(rep.newborn_distribution)
    assert abs(reproductive_output(amp(0.5), zeta) - rep.R0) < 1e-9
    assert not analyze(amp(0.0)).amplified


def test_reproductive_output():
    model = amp()
    assert abs(reproductive_output(model, [0, 1]) - 4.0) < 1e-12
    N_bar = newborn_submatrix(next_generation(model), 2, 2)
    assert abs(reproductive_output(model, [1, 0]) - N_bar[:, 0].sum()) < 1e-12
    with pytest.raises(ValidationError):
        reproductive_output(model, [0.5, 0.6])
    with pytest.raises(ValidationError):
        reproductive_output(model, [1.5, -0.5])
    with pytest.raises(ValidationError):
        reproductive_output(model, [1.0])


def test_sensitivity_matches_finite_differences():
    rng = np.random.default_rng(15)
    checked = 0
    for _ in range(40):
        model = random_model(rng, m=2, n=2)
        P = model.P
        sens = sensitivity(model)
        if not is_irreducible(P):
            assert sens is None
            continue
        h = 1e-6
        for k, l in zip(*np.nonzero(P)):
            E = np.zeros_like(P)
            E[k, l] = h
            fd = (spectral_radius(P + E).value - spectral_radius(P - E).value) / (2 * h)
            assert abs(fd - sens[k, l]) <= 1e-4 * max(1.0, abs(fd))
        checked += 1
    assert checked > 10


def test_sensitivity_trivial_and_reducible():
    model = assemble([build_usher(StageVitals((0.5, 1.0), (0.2, 0.3), (0.5,)))], DispersionSpec.identity(2, 1))
    sens = sensitivity(model)
    assert sens is not None and abs(np.sum(sens * np.eye(2)) - 1) < 1e-9  # trace(u v^T) = u.v = 1
    assert sensitivity(amp()) is None


def test_stable_stage_distribution():
    rng = np.random.default_rng(16)
    done = 0
    while done < 10:
        model = random_model(rng, m=3, n=2, last_stage_only=True)
        if not is_primitive(model.P):
            continue
        v = spectral_radius(model.P).right
        x = np.ones(model.m * model.n)
        P = model.P / growth_rate(model)
        for _ in range(3000):
            x = P @ x
            x /= x.sum()
        assert np.abs(x - v).sum() < 1e-6
        done += 1


def test_net_reproductive_number_matches_analyze():
    rng = np.random.default_rng(17)
    for _ in range(30):
        model = random_model(rng)
        assert net_reproductive_number(model) == analyze(model).R0
