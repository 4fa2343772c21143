import math

import numpy as np
import pytest

from qfabayes.growth import GrowthCurve, LogisticParams
from qfabayes.kalman import (
    ObservationDomainError,
    StateSpaceSpec,
    filter_states,
    marginal_loglik,
)
from qfabayes.lna import ModelKind, det_skeleton, transition, transition_arrays
from qfabayes.sde import ErrorKind, SdeKind, SdeParams, euler_maruyama

PAIRS = (
    (ModelKind.RRTR, ErrorKind.LOGNORMAL),
    (ModelKind.LNAM, ErrorKind.LOGNORMAL),
    (ModelKind.LNAA, ErrorKind.NORMAL),
)


def joint_gaussian_loglik(spec, curve):
    """Brute-force oracle: explicit joint Gaussian of the observations."""
    times = np.concatenate([[0.0], curve.times])
    A, B, Xi = transition_arrays(spec.kind, spec.params, times)
    N = len(curve)
    P = spec.params.growth.P
    m = math.log(P) if spec.error_kind is ErrorKind.LOGNORMAL else P
    mu = np.empty(N)
    for i in range(N):
        m = A[i] + B[i] * m
        mu[i] = m
    var = np.empty(N)
    v = 0.0
    for i in range(N):
        v = B[i] ** 2 * v + Xi[i]
        var[i] = v
    cov = np.empty((N, N))
    for i in range(N):
        for j in range(i, N):
            prod = float(np.prod(B[i + 1 : j + 1])) if j > i else 1.0
            cov[i, j] = cov[j, i] = var[i] * prod
    cov += np.eye(N) * spec.params.nu**2
    z = (np.log(curve.values) if spec.error_kind is ErrorKind.LOGNORMAL
         else curve.values)
    resid = z - mu
    _, logdet = np.linalg.slogdet(cov)
    return -0.5 * (N * math.log(2 * math.pi) + logdet
                   + resid @ np.linalg.solve(cov, resid))


def _random_spec(rng, kind, error_kind):
    K = rng.uniform(0.05, 0.5)
    r = rng.uniform(0.5, 6.0)
    P = 10 ** rng.uniform(-5, -2)
    sigma = rng.uniform(0.005, min(0.3, math.sqrt(1.5 * r)))
    nu = rng.uniform(0.001, 0.05)
    return StateSpaceSpec(
        kind=kind, error_kind=error_kind,
        params=SdeParams(growth=LogisticParams(K=K, r=r, P=P), sigma=sigma, nu=nu),
    )


class TestSpecValidation:
    def test_error_structure_must_match(self):
        p = SdeParams(growth=LogisticParams(K=0.15, r=3.0, P=1e-4), sigma=0.01)
        with pytest.raises(ValueError):
            StateSpaceSpec(ModelKind.RRTR, ErrorKind.NORMAL, p)
        with pytest.raises(ValueError):
            StateSpaceSpec(ModelKind.LNAA, ErrorKind.LOGNORMAL, p)

    def test_lognormal_requires_positive_observations(self):
        p = SdeParams(growth=LogisticParams(K=0.15, r=3.0, P=1e-4),
                      sigma=0.01, nu=0.005)
        spec = StateSpaceSpec(ModelKind.LNAM, ErrorKind.LOGNORMAL, p)
        curve = GrowthCurve(times=np.array([1.0, 2.0]),
                            values=np.array([0.01, -0.01]))
        with pytest.raises(ObservationDomainError) as exc:
            marginal_loglik(spec, curve)
        assert exc.value.index == 1


class TestMarginalLoglik:
    def test_single_observation_unrolls(self):
        p = SdeParams(growth=LogisticParams(K=0.15, r=3.0, P=1e-4),
                      sigma=0.02, nu=0.005)
        spec = StateSpaceSpec(ModelKind.LNAA, ErrorKind.NORMAL, p)
        t1, y1 = 1.3, 0.04
        curve = GrowthCurve(times=np.array([t1]), values=np.array([y1]))
        tm = transition(ModelKind.LNAA, p, p.growth.P, 0.0, t1)
        mean = det_skeleton(ModelKind.LNAA, p, t1)
        assert tm.mean == pytest.approx(mean, rel=1e-12)
        var = tm.variance + p.nu**2
        expected = -0.5 * (math.log(2 * math.pi * var) + (y1 - mean) ** 2 / var)
        assert marginal_loglik(spec, curve) == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("kind,error_kind", PAIRS)
    def test_joint_gaussian_oracle(self, kind, error_kind):
        rng = np.random.default_rng(101)
        for _ in range(20):
            spec = _random_spec(rng, kind, error_kind)
            for N in (2, 5, 10):
                times = np.sort(rng.uniform(0.05, 6.0, N))
                while np.any(np.diff(times) <= 1e-3):
                    times = np.sort(rng.uniform(0.05, 6.0, N))
                values = np.abs(rng.normal(spec.params.growth.K / 2,
                                           spec.params.growth.K / 4, N)) + 1e-6
                curve = GrowthCurve(times=times, values=values)
                a = marginal_loglik(spec, curve)
                b = joint_gaussian_loglik(spec, curve)
                assert a == pytest.approx(b, rel=1e-8)

    def test_large_nu_slope(self):
        p = LogisticParams(K=0.15, r=3.0, P=1e-4)
        times = np.linspace(0.25, 6.0, 27)
        from qfabayes.growth import logistic_solution

        curve = GrowthCurve(times=times, values=logistic_solution(p, times) + 0.001)
        lls = []
        for nu in (1e5, 1e6):
            spec = StateSpaceSpec(
                ModelKind.LNAA, ErrorKind.NORMAL,
                SdeParams(growth=p, sigma=0.01, nu=nu),
            )
            lls.append(marginal_loglik(spec, curve))
        slope = (lls[1] - lls[0]) / (math.log(1e6) - math.log(1e5))
        assert slope == pytest.approx(-len(curve), rel=0.01)

    def test_additive_over_split(self):
        from qfabayes.growth import logistic_solution

        rng = np.random.default_rng(5)
        growth = LogisticParams(K=0.15, r=3.0, P=1e-4)
        spec = StateSpaceSpec(
            ModelKind.LNAA, ErrorKind.NORMAL,
            SdeParams(growth=growth, sigma=0.01, nu=0.005),
        )
        times = np.linspace(0.2, 6.0, 20)
        values = logistic_solution(growth, times) + rng.normal(0, 0.005, 20)
        curve = GrowthCurve(times=times, values=values)
        full = marginal_loglik(spec, curve)
        first = GrowthCurve(times=times[:9], values=values[:9])
        second = GrowthCurve(times=times[9:], values=values[9:])
        _, _, state = filter_states(spec, first)
        split = marginal_loglik(spec, first) + marginal_loglik(spec, second,
                                                               init=state)
        assert split == pytest.approx(full, abs=1e-12)
        # the carried state accumulates the same quantity
        assert state.loglik_accum == pytest.approx(marginal_loglik(spec, first),
                                                   abs=1e-12)
        _, _, final = filter_states(spec, second, init=state)
        assert final.loglik_accum == pytest.approx(full, abs=1e-12)

    def test_smoke_finite_over_random_inputs(self):
        rng = np.random.default_rng(11)
        for i in range(1000):
            kind, error_kind = PAIRS[i % 3]
            spec = _random_spec(rng, kind, error_kind)
            N = int(rng.integers(1, 15))
            times = np.sort(rng.uniform(0.05, 6.0, N))
            times += np.arange(N) * 1e-4  # ensure strict ordering
            values = np.abs(rng.normal(0.05, 0.05, N)) + 1e-6
            ll = marginal_loglik(spec, GrowthCurve(times=times, values=values))
            assert math.isfinite(ll)


class TestFilterStates:
    def test_exact_observation_when_nu_zero(self):
        p = SdeParams(growth=LogisticParams(K=0.15, r=3.0, P=1e-4),
                      sigma=0.05, nu=0.0)
        spec = StateSpaceSpec(ModelKind.LNAA, ErrorKind.NORMAL, p)
        times = np.linspace(0.5, 5.0, 8)
        values = np.abs(np.sin(times)) * 0.05 + 0.01
        m, C, _ = filter_states(spec, GrowthCurve(times=times, values=values))
        assert np.allclose(m, values, atol=1e-14)
        assert np.allclose(C, 0.0, atol=1e-20)

    def test_deterministic_state_variance_decreases(self):
        p = SdeParams(growth=LogisticParams(K=0.15, r=3.0, P=1e-4),
                      sigma=0.0, nu=0.01)
        spec = StateSpaceSpec(ModelKind.LNAA, ErrorKind.NORMAL, p)
        rng = np.random.default_rng(3)
        times = np.linspace(0.5, 5.0, 10)
        from qfabayes.growth import logistic_solution

        values = logistic_solution(p.growth, times) + rng.normal(0, 0.01, 10)
        m, C, _ = filter_states(spec, GrowthCurve(times=times, values=values))
        assert np.all(np.diff(C) <= 1e-18)
        # independent scalar recursion
        A, B, Xi = transition_arrays(
            ModelKind.LNAA, p, np.concatenate([[0.0], times])
        )
        mm, cc = p.growth.P, 0.0
        for i in range(10):
            pm = A[i] + B[i] * mm
            R = B[i] ** 2 * cc + Xi[i]
            gain = R / (R + p.nu**2)
            mm = pm + gain * (values[i] - pm)
            cc = R - gain * R
            assert m[i] == pytest.approx(mm, rel=1e-12, abs=1e-300)
            assert C[i] == pytest.approx(cc, rel=1e-12, abs=1e-300)

    def test_tracks_latent_path(self):
        truth = dict(K=0.15, r=3.0, P=1e-4, sigma=0.01, nu=0.005)
        params = SdeParams(
            growth=LogisticParams(K=truth["K"], r=truth["r"], P=truth["P"]),
            sigma=truth["sigma"], nu=truth["nu"],
        )
        grid = np.linspace(6.0 / 27, 6.0, 27)
        traj = euler_maruyama(params, SdeKind.SLGM, grid, substeps=500, seed=21)
        rng = np.random.default_rng(22)
        values = traj.values + truth["nu"] * rng.standard_normal(27)
        spec = StateSpaceSpec(ModelKind.LNAA, ErrorKind.NORMAL, params)
        m, _, _ = filter_states(spec, GrowthCurve(times=grid, values=values))
        rmse = float(np.sqrt(np.mean((m - traj.values) ** 2)))
        assert rmse < 2 * truth["nu"]
