import numpy as np
import pytest

from qfabayes.growth import GrowthCurve, LogisticParams
from qfabayes.sde import ErrorKind, SdeKind, SdeParams, euler_maruyama, observe

#: truth values of the standard synthetic recovery regime (27 points on [0,6])
ROW_A = dict(K=0.15, r=3.0, P=1e-4, sigma=0.01, nu=0.005)


def row_a_curve(error_kind: ErrorKind, sim_seed: int = 119, obs_seed: int = 219,
                substeps: int = 2000) -> GrowthCurve:
    """SLGM data with the standard truth values; the default seeds give a
    strictly positive realisation usable under both error models."""
    params = SdeParams(
        growth=LogisticParams(K=ROW_A["K"], r=ROW_A["r"], P=ROW_A["P"]),
        sigma=ROW_A["sigma"],
    )
    grid = np.linspace(6.0 / 27, 6.0, 27)
    traj = euler_maruyama(params, SdeKind.SLGM, grid, substeps=substeps,
                          seed=sim_seed)
    return observe(traj, error_kind, nu=ROW_A["nu"], seed=obs_seed)


@pytest.fixture(scope="session")
def row_a_normal() -> GrowthCurve:
    curve = row_a_curve(ErrorKind.NORMAL)
    assert curve.values.min() > 0, "expected an all-positive realisation"
    return curve


@pytest.fixture(scope="session")
def row_a_lognormal() -> GrowthCurve:
    return row_a_curve(ErrorKind.LOGNORMAL)
