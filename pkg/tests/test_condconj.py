"""Global-local machinery: gradient identities, schedules, stochastic fits."""

import math

import numpy as np
import pytest

from meanfield.condconj import (
    GlobalLocalState,
    GlobalParam,
    StepSchedule,
    cond_conj_elbo,
    coordinate_ascent,
    global_step,
    local_step,
    natural_gradient,
    noisy_natural_gradient,
    prior_param,
    step_size,
    svi_fit,
)
from meanfield.engine import FitConfig, init_state
from meanfield.errors import ConfigError, DomainError
from meanfield.gmm import (
    UniGmmConfig,
    UnitVarianceGmm,
    conjugate_elbo_offset,
    conjugate_spec,
    global_param_from_state,
    gmm_elbo,
    simulate,
    update_assignments,
    update_components,
)


def _random_lambda(spec, rng, k):
    """A valid random global parameter for the mixture spec."""
    kd = spec.prior_stat.size - k
    stat = np.concatenate(
        [rng.normal(size=kd), rng.uniform(0.5, 3.0, size=k)]
    )
    return GlobalParam(stat, float(rng.integers(0, 10)))


class TestStepSchedule:
    def test_first_step_is_one_without_delay(self):
        sched = StepSchedule(kappa=1.0)
        assert step_size(sched, 1) == 1.0

    def test_delay_shrinks_early_steps(self):
        a = StepSchedule(kappa=0.7)
        b = StepSchedule(kappa=0.7, delay=10.0)
        assert step_size(b, 1) < step_size(a, 1)

    def test_decreasing_in_t(self):
        sched = StepSchedule(kappa=0.6, delay=1.0, scale=0.5)
        sizes = [step_size(sched, t) for t in range(1, 50)]
        assert all(b < a for a, b in zip(sizes, sizes[1:]))

    def test_frozen_value(self):
        sched = StepSchedule(kappa=0.7, delay=1.0)
        assert step_size(sched, 3) == pytest.approx(4.0**-0.7, abs=1e-15)

    @pytest.mark.parametrize("kappa", [0.5, 0.49, 1.01, 0.0])
    def test_kappa_bounds(self, kappa):
        with pytest.raises(ConfigError):
            StepSchedule(kappa=kappa)

    def test_other_bounds(self):
        with pytest.raises(ConfigError):
            StepSchedule(kappa=0.7, delay=-1.0)
        with pytest.raises(ConfigError):
            StepSchedule(kappa=0.7, scale=0.0)

    def test_iteration_index_positive(self):
        with pytest.raises(DomainError):
            step_size(StepSchedule(kappa=0.7), 0)


class TestLocalGlobalSteps:
    def test_local_step_matches_assignment_update(self):
        spec = conjugate_spec(k=2, sigma2=1.0)
        lam = GlobalParam(np.array([0.0, 1.0, 1.0, 1.0]), 0.0)  # m=(0,1), s2=1
        phi = local_step(spec, lam, 1.0)
        want = 1.0 / (1.0 + math.exp(-0.5))
        assert phi.params[1] == pytest.approx(want, abs=1e-12)

    def test_global_step_counts_observations(self):
        spec = conjugate_spec(k=1, sigma2=1.0)
        phis = tuple(
            local_step(spec, prior_param(spec), x) for x in [0.0]
        )
        lam = global_step(spec, phis, [0.0])
        assert lam.count == spec.prior_count + 1
        # x = 0 adds nothing to the mean block, one unit to the quadratic
        assert np.allclose(lam.stat, [0.0, 2.0])

    def test_global_step_requires_matching_lengths(self):
        spec = conjugate_spec(k=2, sigma2=1.0)
        with pytest.raises(DomainError):
            global_step(spec, (), [1.0])

    def test_equivalence_with_dedicated_updates(self):
        # alternating local/global steps reproduces the dedicated
        # assignment/component iterates exactly
        data, _, _ = simulate(k=3, n=40, seed=2, dim=1)
        data = data[:, 0]
        model = UnitVarianceGmm(UniGmmConfig(k=3, sigma2=2.0))
        state = init_state(model, data, "data_calibrated", seed=0)
        spec = conjugate_spec(k=3, sigma2=2.0)
        lam = global_param_from_state(state)

        for _ in range(5):
            phi = update_assignments(state, data)
            phis = tuple(local_step(spec, lam, x) for x in data)
            for i in range(len(data)):
                assert np.allclose(phis[i].params, phi[i], atol=1e-12)
            mid = type(state)(state.m, state.s2, phi)
            m, s2 = update_components(mid, data, 2.0)
            lam = global_step(spec, phis, data)
            b = lam.stat[3:]
            assert np.allclose(lam.stat[:3] / b, m[:, 0], atol=1e-12)
            assert np.allclose(1.0 / b, s2[:, 0], atol=1e-12)
            state = type(state)(m, s2, phi)


class TestNaturalGradient:
    def test_zero_at_coordinate_update(self):
        lam = GlobalParam(np.array([1.0, 2.0]), 3.0)
        assert np.array_equal(natural_gradient(lam, lam), np.zeros(3))

    def test_difference_form(self):
        lam = GlobalParam(np.array([0.0, 1.0]), 2.0)
        upd = GlobalParam(np.array([1.0, -1.0]), 5.0)
        assert np.array_equal(natural_gradient(lam, upd), [1.0, -2.0, 3.0])

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(DomainError):
            natural_gradient(
                GlobalParam(np.array([1.0]), 0.0),
                GlobalParam(np.array([1.0, 2.0]), 0.0),
            )

    def test_single_observation_noisy_equals_full(self):
        spec = conjugate_spec(k=2, sigma2=1.0)
        rng = np.random.default_rng(0)
        lam = _random_lambda(spec, rng, 2)
        data = np.array([0.7])
        noisy = noisy_natural_gradient(spec, lam, data, 0)
        phis = tuple(local_step(spec, lam, x) for x in data)
        full = natural_gradient(lam, global_step(spec, phis, data))
        assert np.allclose(noisy, full, atol=1e-14)

    def test_unbiased_over_uniform_index(self):
        spec = conjugate_spec(k=3, sigma2=1.5)
        rng = np.random.default_rng(1)
        for _ in range(5):
            data = rng.normal(0.0, 2.0, size=int(rng.integers(2, 30)))
            lam = _random_lambda(spec, rng, 3)
            grads = np.array(
                [noisy_natural_gradient(spec, lam, data, i) for i in range(len(data))]
            )
            avg = grads.mean(axis=0)
            phis = tuple(local_step(spec, lam, x) for x in data)
            full = natural_gradient(lam, global_step(spec, phis, data))
            assert np.all(np.abs(avg - full) <= 1e-12 * (1.0 + np.abs(full)))

    def test_index_out_of_range(self):
        spec = conjugate_spec(k=2, sigma2=1.0)
        with pytest.raises(DomainError):
            noisy_natural_gradient(spec, prior_param(spec), [1.0], 1)


class TestElbo:
    def test_zero_at_prior_with_no_data(self):
        spec = conjugate_spec(k=2, sigma2=1.0)
        state = GlobalLocalState(prior_param(spec), ())
        assert cond_conj_elbo(spec, state, []) == pytest.approx(0.0, abs=1e-12)

    def test_negative_kl_away_from_prior_with_no_data(self):
        spec = conjugate_spec(k=1, sigma2=1.0)
        lam = GlobalParam(np.array([1.0, 2.0]), 0.0)  # m=0.5, s2=0.5
        state = GlobalLocalState(lam, ())
        from meanfield.expfam import gaussian_kl

        want = -gaussian_kl(0.5, 0.5, 0.0, 1.0)
        assert cond_conj_elbo(spec, state, []) == pytest.approx(want, abs=1e-12)

    def test_matches_dedicated_elbo_up_to_documented_constant(self):
        data, _, _ = simulate(k=2, n=25, seed=8, dim=1)
        data = data[:, 0]
        spec = conjugate_spec(k=2, sigma2=1.0)
        lam = prior_param(spec)
        for _ in range(4):
            phis = tuple(local_step(spec, lam, x) for x in data)
            lam = global_step(spec, phis, data)
            state = GlobalLocalState(lam, phis)
            phi = np.array([p.params for p in phis])
            b = lam.stat[2:]
            gstate = type(
                init_state(UnitVarianceGmm(UniGmmConfig(k=2)), data, "prior", 0)
            )((lam.stat[:2] / b)[:, None], (1.0 / b)[:, None], phi)
            offset = conjugate_elbo_offset(data, 2)
            assert gmm_elbo(gstate, data, 1.0) == pytest.approx(
                cond_conj_elbo(spec, state, data) + offset, abs=1e-9
            )


class TestCoordinateAscent:
    def test_monotone_and_converges(self):
        data, _, _ = simulate(k=2, n=50, seed=3, dim=1)
        spec = conjugate_spec(k=2, sigma2=1.0)
        state, elbos = coordinate_ascent(spec, data[:, 0], prior_param(spec))
        assert all(b >= a - 1e-8 * (1 + abs(b)) for a, b in zip(elbos, elbos[1:]))


class TestSviFit:
    def test_full_batch_unit_step_equals_global_step(self):
        data, _, _ = simulate(k=2, n=12, seed=5, dim=1)
        data = data[:, 0]
        spec = conjugate_spec(k=2, sigma2=1.0)
        lam0 = prior_param(spec)
        report = svi_fit(
            spec,
            data,
            StepSchedule(kappa=1.0),  # step size 1 at t = 1
            FitConfig(max_iters=1, seed=0),
            init=lam0,
            batch_size=len(data),
        )
        phis = tuple(local_step(spec, lam0, x) for x in data)
        want = global_step(spec, phis, data)
        got = report.model_state.lam
        assert np.array_equal(got.stat, want.stat)
        assert got.count == want.count

    def test_blend_matches_manual_trajectory(self):
        data, _, _ = simulate(k=2, n=10, seed=6, dim=1)
        data = data[:, 0]
        spec = conjugate_spec(k=2, sigma2=1.0)
        sched = StepSchedule(kappa=0.8, delay=1.0)
        report = svi_fit(
            spec,
            data,
            sched,
            FitConfig(max_iters=3, seed=42, elbo_every=10),
            batch_size=1,
        )
        # replay with the same stream
        rng = np.random.default_rng(42)
        lam = prior_param(spec)
        n = len(data)
        for t in range(1, 4):
            i = int(np.sort(rng.choice(n, size=1, replace=False))[0])
            phi = local_step(spec, lam, data[i])
            stat = spec.expected_stat(np.array(phi.params), data[i])
            target = GlobalParam(
                spec.prior_stat + n * stat, spec.prior_count + n
            )
            eps = step_size(sched, t)
            nat = (1.0 - eps) * lam.natural() + eps * target.natural()
            lam = GlobalParam(nat[:-1], nat[-1])
        assert np.array_equal(report.model_state.lam.stat, lam.stat)
        assert report.model_state.lam.count == lam.count

    def test_deterministic_per_seed(self):
        data, _, _ = simulate(k=2, n=30, seed=0, dim=1)
        data = data[:, 0]
        spec = conjugate_spec(k=2, sigma2=1.0)
        sched = StepSchedule(kappa=0.7, delay=1.0)
        cfg = FitConfig(max_iters=50, seed=7, elbo_every=10)
        r1 = svi_fit(spec, data, sched, cfg)
        r2 = svi_fit(spec, data, sched, cfg)
        assert np.array_equal(r1.model_state.lam.stat, r2.model_state.lam.stat)
        assert [p.elbo for p in r1.elbo_trace] == [p.elbo for p in r2.elbo_trace]

    def test_reaches_coordinate_ascent_optimum(self):
        data, _, _ = simulate(k=2, n=100, seed=1, dim=1, min_separation=3.0)
        data = data[:, 0]
        spec = conjugate_spec(k=2, sigma2=1.0)
        _, elbos = coordinate_ascent(spec, data, prior_param(spec))
        best = elbos[-1]
        report = svi_fit(
            spec,
            data,
            StepSchedule(kappa=0.7, delay=1.0),
            FitConfig(max_iters=3000, seed=0, elbo_every=100, tol=1e-9),
        )
        final = report.elbo_trace[-1].elbo
        assert final >= best - 1e-2 * abs(best)

    def test_batch_size_validated(self):
        spec = conjugate_spec(k=2, sigma2=1.0)
        with pytest.raises(ConfigError):
            svi_fit(
                spec,
                [1.0],
                StepSchedule(kappa=0.7),
                FitConfig(max_iters=1),
                batch_size=2,
            )

    def test_empty_data_rejected(self):
        spec = conjugate_spec(k=2, sigma2=1.0)
        with pytest.raises(DomainError):
            svi_fit(spec, [], StepSchedule(kappa=0.7), FitConfig(max_iters=1))


class TestGlobalParam:
    def test_natural_concatenates_count(self):
        lam = GlobalParam(np.array([1.0, 2.0]), 3.0)
        assert np.array_equal(lam.natural(), [1.0, 2.0, 3.0])

    def test_stat_is_read_only(self):
        lam = GlobalParam(np.array([1.0]), 0.0)
        with pytest.raises(ValueError):
            lam.stat[0] = 2.0
