"""Coordinate ascent and stochastic ascent for conditionally conjugate models.

A conditionally conjugate model has one global parameter block with a
conjugate prior and one local latent variable per observation.  Writing the
prior's natural parameter as ``(alpha1, alpha2)``, where ``alpha1`` pairs
with the global sufficient statistics ``s(beta)`` and the scalar ``alpha2``
counts observations, the complete conditional of the global block after
seeing all the data has natural parameter

    (alpha1 + sum_i E[t(z_i, x_i)],  alpha2 + n).

Coordinate ascent alternates exact local updates with that global update.
Stochastic ascent replaces the sum with ``n`` times a uniformly sampled
term, which makes

    alpha + n * [E[t(z_t, x_t)], 1] - lambda

an unbiased estimate of the natural gradient of the ELBO at ``lambda``; no
Fisher matrix is ever formed because the natural gradient in this family is
exactly "conditional update minus current value".  Updates blend in natural
coordinates with a Robbins-Monro step size.

The local family here is categorical (mixture assignments); models with
richer local structure implement their own local loop on top of the same
global blending (see the topic model module).
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .engine import FitReport, MeanFieldState, TracePoint
from .errors import ConfigError, DomainError, NumericError
from .expfam import ExpFamParam, log_sum_exp

__all__ = [
    "GlobalParam",
    "GlobalStats",
    "CondConjSpec",
    "GlobalLocalState",
    "StepSchedule",
    "prior_param",
    "local_step",
    "global_step",
    "natural_gradient",
    "noisy_natural_gradient",
    "step_size",
    "cond_conj_elbo",
    "coordinate_ascent",
    "svi_fit",
]


@dataclass(frozen=True)
class GlobalParam:
    """Natural parameter of the global factor: ``stat`` plus a count.

    ``stat`` pairs coordinatewise with the global sufficient statistics and
    ``count`` with the per-observation log normalizer.  Stored in natural
    coordinates because both the gradient identity and the stochastic
    update blend live there.
    """

    stat: np.ndarray
    count: float

    def __post_init__(self):
        s = np.array(self.stat, dtype=float)
        s.setflags(write=False)
        object.__setattr__(self, "stat", s)
        object.__setattr__(self, "count", float(self.count))

    def natural(self):
        return np.append(self.stat, self.count)


@dataclass(frozen=True)
class GlobalStats:
    """Expectations of the global factor needed by local steps and the ELBO.

    ``stats`` is ``E[s(beta)]``, ``log_norm`` is ``E[a(beta)]`` for the
    per-observation log normalizer ``a``, and ``entropy`` is ``H[q(beta)]``.
    """

    stats: np.ndarray
    log_norm: float
    entropy: float


@dataclass(frozen=True)
class CondConjSpec:
    """One conditionally conjugate model, as the generic machinery sees it.

    Fields
    ------
    prior_stat, prior_count
        Natural parameter ``(alpha1, alpha2)`` of the conjugate prior.
    prior_log_norm
        Log normalizer of the prior density; including it makes the ELBO
        equal ``-KL(q(beta) || prior)`` exactly when there is no data.
    num_local_values
        Support size of the categorical local latent.
    suff_stat(k, x)
        ``t(z = k, x)`` as a vector matching ``prior_stat``.
    local_natural_param(stats, x)
        Expected log complete-conditional weights of the local latent
        (unnormalized), given :class:`GlobalStats`.
    expected_global_stats(lam)
        Moments of the global factor at natural parameter ``lam``.
    to_factors(lam)
        Canonical per-block factors of the global parameter, as
        ``(label, ExpFamParam)`` pairs, for reporting.
    expected_suff_stat(probs, x), optional
        ``E_phi[t(z, x)]``.  Defaults to enumeration over the local support.
    """

    prior_stat: np.ndarray
    prior_count: float
    prior_log_norm: float
    num_local_values: int
    suff_stat: Callable
    local_natural_param: Callable
    expected_global_stats: Callable
    to_factors: Callable
    expected_suff_stat: Optional[Callable] = None

    def expected_stat(self, probs, x):
        if self.expected_suff_stat is not None:
            return self.expected_suff_stat(probs, x)
        total = np.zeros_like(np.asarray(self.prior_stat, dtype=float))
        for k in range(self.num_local_values):
            total += probs[k] * self.suff_stat(k, x)
        return total


@dataclass(frozen=True)
class GlobalLocalState:
    """Global natural parameter plus one categorical factor per observation."""

    lam: GlobalParam
    phis: tuple


@dataclass(frozen=True)
class StepSchedule:
    """Robbins-Monro step sizes ``scale * (t + delay) ** -kappa``.

    ``kappa`` must lie in (0.5, 1] so the steps are square-summable but not
    summable; ``delay >= 0`` down-weights early iterations.
    """

    kappa: float
    delay: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if not (0.5 < self.kappa <= 1.0):
            raise ConfigError("kappa", "must lie in (0.5, 1]")
        if self.delay < 0.0:
            raise ConfigError("delay", "must be >= 0")
        if not (self.scale > 0.0):
            raise ConfigError("scale", "must be > 0")


def step_size(schedule, t):
    """Step size at iteration ``t`` (1-based)."""
    if t < 1:
        raise DomainError("iteration index must be >= 1")
    return schedule.scale * (t + schedule.delay) ** (-schedule.kappa)


def prior_param(spec):
    """The prior as a :class:`GlobalParam` (the fit's natural starting point)."""
    return GlobalParam(spec.prior_stat, spec.prior_count)


def local_step(spec, lam, x):
    """Optimal categorical local factor at the current global factor.

    The update sets the local factor proportional to the exponentiated
    expected log complete-conditional; weights are normalized in log space.
    """
    stats = spec.expected_global_stats(lam)
    logw = np.asarray(spec.local_natural_param(stats, x), dtype=float)
    probs = np.exp(logw - log_sum_exp(logw))
    probs /= probs.sum()
    return ExpFamParam.categorical(probs)


def global_step(spec, phis, data):
    """Exact coordinate update of the global factor given all local factors."""
    n = len(data)
    if len(phis) != n:
        raise DomainError("need one local factor per observation")
    total = np.zeros_like(np.asarray(spec.prior_stat, dtype=float))
    for phi, x in zip(phis, data):
        total += spec.expected_stat(np.array(phi.params), x)
    return GlobalParam(spec.prior_stat + total, spec.prior_count + n)


def natural_gradient(lam, coordinate_update):
    """Natural gradient of the ELBO at ``lam``: update minus current value."""
    a = lam.natural()
    b = coordinate_update.natural()
    if a.shape != b.shape:
        raise DomainError("natural parameters have mismatched dimension")
    return b - a


def noisy_natural_gradient(spec, lam, data, index):
    """Unbiased one-sample estimate of the natural gradient at ``lam``.

    Uses observation ``data[index]`` scaled up by ``n``; averaging over all
    indices reproduces :func:`natural_gradient` of the full coordinate
    update exactly.
    """
    n = len(data)
    if not (0 <= index < n):
        raise DomainError(f"index {index} outside [0, {n})")
    phi = local_step(spec, lam, data[index])
    stat = spec.expected_stat(np.array(phi.params), data[index])
    target = GlobalParam(spec.prior_stat + n * stat, spec.prior_count + n)
    return natural_gradient(lam, target)


def cond_conj_elbo(spec, state, data):
    """ELBO of a global-local state, up to a fixed data constant.

    Includes every term that depends on the variational parameters plus the
    prior's log normalizer; the only omission is the per-observation base
    measure ``log h(z_i, x_i)``, which is constant in both the variational
    parameters and the model parameters.  With no data the value is exactly
    ``-KL(q(beta) || prior)``.
    """
    n = len(data)
    if len(state.phis) != n:
        raise DomainError("need one local factor per observation")
    stats = spec.expected_global_stats(state.lam)
    total = np.array(spec.prior_stat, dtype=float)
    local_entropy = 0.0
    for phi, x in zip(state.phis, data):
        probs = np.array(phi.params)
        total += spec.expected_stat(probs, x)
        local_entropy += phi.entropy()
    value = (
        float(np.dot(total, stats.stats))
        - (spec.prior_count + n) * stats.log_norm
        - spec.prior_log_norm
        + stats.entropy
        + local_entropy
    )
    return value


def coordinate_ascent(spec, data, lam, max_sweeps=200, tol=1e-10):
    """Full-batch coordinate ascent; returns the state and its ELBO path."""
    elbos = []
    state = None
    for _ in range(max_sweeps):
        phis = tuple(local_step(spec, lam, x) for x in data)
        lam = global_step(spec, phis, data)
        state = GlobalLocalState(lam, phis)
        elbos.append(cond_conj_elbo(spec, state, data))
        if len(elbos) > 1:
            if abs(elbos[-1] - elbos[-2]) / (1.0 + abs(elbos[-1])) < tol:
                break
    return state, elbos


def _export_state(spec, state):
    pairs = list(spec.to_factors(state.lam))
    factors = [f for _, f in pairs]
    labels = [lbl for lbl, _ in pairs]
    for i, phi in enumerate(state.phis):
        factors.append(phi)
        labels.append(f"z[{i}]")
    return MeanFieldState(tuple(factors), tuple(labels))


def svi_fit(spec, data, schedule, config, init=None, batch_size=1):
    """Stochastic natural-gradient ascent on the global factor.

    Each iteration samples a minibatch uniformly without replacement,
    computes optimal local factors for its members, rescales their expected
    statistics by ``n / batch_size``, and blends the resulting global
    update into the current one in natural coordinates:

        lambda_t = (1 - eps_t) * lambda_{t-1} + eps_t * lambda_hat_t.

    The ELBO is evaluated every ``config.elbo_every`` iterations by a full
    local sweep at the current global factor; the trace is noisy rather
    than monotone, and the convergence flag uses the same relative-change
    rule as coordinate ascent on those recorded values.

    Returns a :class:`FitReport`; deterministic given ``config.seed``.
    """
    n = len(data)
    if n == 0:
        raise DomainError("stochastic fit requires at least one observation")
    if not (1 <= batch_size <= n):
        raise ConfigError("batch_size", "must lie in [1, n]")
    rng = np.random.default_rng(config.seed)
    lam = init if init is not None else prior_param(spec)

    elbo_trace = []
    prev = None
    converged = False
    iterations = 0
    scale = n / batch_size
    start = time.perf_counter()

    for t in range(1, config.max_iters + 1):
        # sorted for a fixed reduction order; sampling stays uniform
        batch = np.sort(rng.choice(n, size=batch_size, replace=False))
        total = np.zeros_like(np.asarray(spec.prior_stat, dtype=float))
        for i in batch:
            phi = local_step(spec, lam, data[i])
            total += spec.expected_stat(np.array(phi.params), data[i])
        target = GlobalParam(
            spec.prior_stat + scale * total, spec.prior_count + n
        )
        eps = step_size(schedule, t)
        mixed = (1.0 - eps) * lam.natural() + eps * target.natural()
        if not np.all(np.isfinite(mixed)):
            raise NumericError("global parameter is not finite", iteration=t)
        lam = GlobalParam(mixed[:-1], mixed[-1])
        iterations = t
        if t % config.elbo_every != 0 and t != config.max_iters:
            continue
        phis = tuple(local_step(spec, lam, x) for x in data)
        elbo = cond_conj_elbo(spec, GlobalLocalState(lam, phis), data)
        if not np.isfinite(elbo):
            raise NumericError("ELBO is not finite", iteration=t)
        elapsed_ms = (time.perf_counter() - start) * 1000.0
        elbo_trace.append(TracePoint(t, float(elbo), elapsed_ms))
        if prev is not None and abs(elbo - prev) / (1.0 + abs(elbo)) < config.tol:
            converged = True
            break
        prev = elbo

    phis = tuple(local_step(spec, lam, x) for x in data)
    state = GlobalLocalState(lam, phis)
    return FitReport(
        final_state=_export_state(spec, state),
        model_state=state,
        elbo_trace=elbo_trace,
        heldout_trace=[],
        converged=converged,
        iterations_run=iterations,
        metadata={
            "algorithm": "svi",
            "seed": config.seed,
            "batch_size": batch_size,
            "kappa": schedule.kappa,
            "delay": schedule.delay,
            "scale": schedule.scale,
        },
    )
