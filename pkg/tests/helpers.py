"""Random model generators shared by the test modules."""
import numpy as np

from metapop.closed_forms import build_newborn_dispersal_model, vitals_with_r0
from metapop.demography import StageVitals, build_usher
from metapop.dispersion import DispersionSpec
from metapop.model import assemble


def random_vitals(rng, m, leslie=False, last_stage_only=False, max_survival=0.95):
    """Valid vitals; stage totals stay + advance drawn below ``max_survival``."""
    total = rng.uniform(0.05, max_survival, size=m)
    split = rng.uniform(size=m)
    stay = np.zeros(m) if leslie else total * split
    advance = (total * (1 - split))[:-1] if not leslie else total[:-1]
    if not leslie:
        stay[-1] = total[-1]
    fec = rng.uniform(0, 3, size=m) * (rng.uniform(size=m) < 0.6)
    if last_stage_only:
        fec = np.zeros(m)
        fec[-1] = rng.uniform(0.5, 10)
    elif not fec.any():
        fec[-1] = rng.uniform(0.5, 3)
    return StageVitals(tuple(fec), tuple(stay), tuple(advance))


def random_stochastic(rng, n, density=0.7):
    """Column-stochastic n x n matrix with random zeros (diagonal kept positive)."""
    X = rng.uniform(size=(n, n)) * (rng.uniform(size=(n, n)) < density)
    X[np.diag_indices(n)] += rng.uniform(0.05, 1, size=n)
    return X / X.sum(axis=0)


def random_dispersion(rng, m, n, stages=None, density=0.7):
    d = np.broadcast_to(np.eye(n), (m, n, n)).copy()
    for k in range(m) if stages is None else stages:
        d[k] = random_stochastic(rng, n, density)
    return DispersionSpec(d)


def random_model(rng, m=None, n=None, **kw):
    m = m or int(rng.integers(2, 5))
    n = n or int(rng.integers(1, 5))
    locals_ = [build_usher(random_vitals(rng, m, **kw)) for _ in range(n)]
    return assemble(locals_, random_dispersion(rng, m, n))


def random_section32_model(rng, n, newborn=None):
    """Three-stage patches, no larval stasis, only newborns disperse."""
    vit = [vitals_with_r0(rng.uniform(0.2, 3), rng.uniform(0.05, 0.5), rng.uniform(0, 0.4),
                          rng.uniform(0.05, 0.5), rng.uniform(0, 0.4)) for _ in range(n)]
    if newborn is None:
        newborn = random_stochastic(rng, n, density=1.0)
    return build_newborn_dispersal_model(vit, newborn), vit
