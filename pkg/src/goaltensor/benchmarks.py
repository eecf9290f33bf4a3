"""Comparison sampling policies and their exact long-run evaluation.

Every baseline pairs a sampling rule with a fixed decision policy (the greedy
one unless overridden), mirroring the separate-design approach where the
sampler optimizes its own metric and the actuator is tuned independently.

State-feedback rules (mismatch-triggered, squared-error-optimal) are plain
sampling policies on the global state.  Time- and history-dependent rules
(periodic, change-triggered, age-threshold) are evaluated exactly on small
augmented chains carrying the extra coordinate: the slot phase, the previous
source state, or the truncated age counter.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .model import DecPomdpModel, dense_kernels, success_kernels
from .solvers import (cesaro_limit, closed_classes, _rvi_batch,
                      sampling_from_flat, stationary_distribution)
from .tensor import DecisionPolicy, SamplingPolicy

DEFAULT_AGE_CAP = 50


@dataclass(frozen=True)
class BenchmarkSpec:
    kind: str                   # uniform | age | change | mse | aoii
    decision_policy: DecisionPolicy
    period: int = 1             # uniform
    threshold: int = 0          # age
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("uniform", "age", "change", "mse", "aoii"):
            raise ParameterError(f"unknown benchmark kind {self.kind!r}")
        if self.kind == "uniform" and (self.period < 1 or int(self.period) != self.period):
            raise ParameterError(f"uniform period must be a positive integer, got {self.period}")
        if self.kind == "age" and (self.threshold < 0 or int(self.threshold) != self.threshold):
            raise ParameterError(f"age threshold must be a nonnegative integer, got {self.threshold}")


@dataclass(frozen=True)
class CostSummary:
    """Exact long-run cost of a policy pair, with its component split.

    ``inherent`` is the post-actuation residual (the ramp term), ``actuation``
    the weighted expenditure, ``sampling`` the transmission charge; the three
    sum to ``average_cost``.
    """

    average_cost: float
    sampling_rate: float
    inherent: float
    actuation: float
    sampling: float

    @property
    def decomposition(self):
        return {"sampling": self.sampling, "actuation": self.actuation,
                "inherent": self.inherent}


# ---------------------------------------------------------------------------
# simulation-facing rules


class UniformRule:
    """Transmit every ``period`` slots, starting at slot 0."""

    def __init__(self, period):
        if period < 1 or int(period) != period:
            raise ParameterError(f"period must be a positive integer, got {period}")
        self.period = int(period)

    label = property(lambda self: f"uniform({self.period})")

    def reset(self, x, xhat, phi):
        pass

    def decide(self, t, x, xhat, phi):
        return 1 if t % self.period == 0 else 0

    def notify(self, x, xhat, phi, sampled, delivered):
        pass


class AgeThresholdRule:
    """Transmit whenever the age of the freshest delivered update exceeds the threshold.

    Age starts at 1 and resets to 1 on the slot after a delivery.
    """

    def __init__(self, threshold):
        if threshold < 0 or int(threshold) != threshold:
            raise ParameterError(f"threshold must be a nonnegative integer, got {threshold}")
        self.threshold = int(threshold)
        self.age = 1

    label = property(lambda self: f"age({self.threshold})")

    def reset(self, x, xhat, phi):
        self.age = 1

    def decide(self, t, x, xhat, phi):
        return 1 if self.age > self.threshold else 0

    def notify(self, x, xhat, phi, sampled, delivered):
        self.age = 1 if delivered else self.age + 1


class ChangeAwareRule:
    """Transmit whenever the source differs from its previous-slot value.

    The first slot has no history and stays idle.
    """

    label = "change-aware"

    def __init__(self):
        self.prev = None

    def reset(self, x, xhat, phi):
        self.prev = None

    def decide(self, t, x, xhat, phi):
        return 0 if self.prev is None else int(x != self.prev)

    def notify(self, x, xhat, phi, sampled, delivered):
        self.prev = x


class StatePolicyRule:
    """Adapter running a global-state sampling policy inside the simulator."""

    def __init__(self, policy: SamplingPolicy, label="state-policy"):
        self.policy = policy
        self.label = label

    def reset(self, x, xhat, phi):
        pass

    def decide(self, t, x, xhat, phi):
        return int(self.policy.decisions[x, xhat, phi])

    def notify(self, x, xhat, phi, sampled, delivered):
        pass


def uniform_policy(period) -> UniformRule:
    return UniformRule(period)


def age_threshold_policy(threshold) -> AgeThresholdRule:
    return AgeThresholdRule(threshold)


def change_aware_policy() -> ChangeAwareRule:
    return ChangeAwareRule()


def aoii_optimal_policy(model: DecPomdpModel) -> SamplingPolicy:
    """Transmit exactly when source and estimate disagree.

    This is simultaneously the mismatch-age-optimal and changed-content-age-
    optimal rule: the estimate equals the last delivered state, so "source
    differs from last delivery" and "source differs from estimate" coincide.
    """
    return SamplingPolicy.on_mismatch(model.alphabets)


def mse_optimal_policy(model: DecPomdpModel, decision: DecisionPolicy = None,
                       state_values=None, epsilon=1e-6, max_sweeps=10_000) -> SamplingPolicy:
    """Sampling policy minimizing long-run squared estimation error plus sampling cost.

    Solved by relative value iteration on the sampler MDP induced by the
    (greedy by default) decision policy, with the squared-error reward in place
    of the goal cost.  Value iteration that plateaus (near-tied frozen-estimate
    slices) is truncated and its greedy policy returned.
    """
    from .model import induced_mdp
    from .solvers import greedy_decision_policy
    if decision is None:
        decision = greedy_decision_policy(model)
    if state_values is None:
        state_values = np.arange(model.alphabets.n_states, dtype=float)
    else:
        state_values = np.asarray(state_values, dtype=float)
    mdp = induced_mdp(model, decision)
    xs, xhats, _ = model.state_components()
    sq_err = (state_values[xs] - state_values[xhats]) ** 2
    rewards = -np.stack([sq_err, sq_err + model.cost.sampling_cost], axis=1)
    pol, _, _, _, _, _ = _rvi_batch(mdp.transitions[None], rewards[None], epsilon, 0,
                                    max_sweeps, on_stall="estimate")
    return sampling_from_flat(pol[0], model)


# ---------------------------------------------------------------------------
# exact evaluation


def _occupation(P, start_index):
    """Stationary law when unique, otherwise the Cesaro row of the start state."""
    if len(closed_classes(P)) == 1:
        return stationary_distribution(P)
    return cesaro_limit(P)[start_index]


def _cost_pieces(model: DecPomdpModel, decision: DecisionPolicy):
    """Per-global-state ramp and expenditure terms under a decision policy."""
    xs, xhats, phis = model.state_components()
    acts = decision.actions[xhats]
    inherent = model.cost.inherent.T[xs, phis]
    net = inherent - model.cost.gain_weight * model.cost.gain[acts]
    ramp = np.maximum(net, 0.0)
    spend = model.cost.expenditure_weight * model.cost.expenditure[acts]
    return ramp, spend


def _summarize(model, mu_states, rate, ramp, spend):
    inherent = float(mu_states @ ramp)
    actuation = float(mu_states @ spend)
    sampling = float(model.cost.sampling_cost * rate)
    return CostSummary(average_cost=inherent + actuation + sampling,
                       sampling_rate=float(rate), inherent=inherent,
                       actuation=actuation, sampling=sampling)


def evaluate_state_policy(model: DecPomdpModel, sampling: SamplingPolicy,
                          decision: DecisionPolicy, start_state=0) -> CostSummary:
    """Exact long-run cost of a (sampling policy, decision policy) pair."""
    from .solvers import flatten_sampling, policy_chain
    P, _ = policy_chain(model, sampling, decision)
    mu = _occupation(P, start_state)
    bits = flatten_sampling(sampling)
    ramp, spend = _cost_pieces(model, decision)
    return _summarize(model, mu, float(mu @ bits), ramp, spend)


def _gathered_kernels(model, decision):
    """Idle and delivered kernels with the actuation fixed by the decision policy."""
    _, xhats, _ = model.state_components()
    acts = decision.actions[xhats]
    rows = np.arange(model.n_global_states)
    idle = dense_kernels(model)[0, acts, rows, :]
    success = success_kernels(model)[acts, rows, :]
    return idle, success


def evaluate_uniform(model: DecPomdpModel, period, decision: DecisionPolicy,
                     start_state=0) -> CostSummary:
    """Exact long-run cost of periodic transmission via the phase-augmented chain."""
    if period < 1 or int(period) != period:
        raise ParameterError(f"period must be a positive integer, got {period}")
    period = int(period)
    N = model.n_global_states
    idle, success = _gathered_kernels(model, decision)
    p = model.channel.success_prob
    transmit = p * success + (1.0 - p) * idle
    big = np.zeros((N * period, N * period))
    for phase in range(period):
        step = transmit if phase == 0 else idle
        nxt = (phase + 1) % period
        big[phase * N:(phase + 1) * N, nxt * N:(nxt + 1) * N] = step
    mu = _occupation(big, start_state)          # start at phase 0
    mu_states = mu.reshape(period, N).sum(axis=0)
    rate = float(mu[:N].sum())
    ramp, spend = _cost_pieces(model, decision)
    return _summarize(model, mu_states, rate, ramp, spend)


def evaluate_change_aware(model: DecPomdpModel, decision: DecisionPolicy,
                          start_state=0) -> CostSummary:
    """Exact long-run cost of change-triggered transmission.

    The chain is augmented with the previous source state; the rule transmits
    whenever the current source differs from it.
    """
    N = model.n_global_states
    n = model.alphabets.n_states
    xs, _, _ = model.state_components()
    idle, success = _gathered_kernels(model, decision)
    p = model.channel.success_prob
    transmit = p * success + (1.0 - p) * idle
    big = np.zeros((N * n, N * n))
    for prev in range(n):
        rows_block = np.where((xs != prev)[:, None], transmit, idle)
        block = np.zeros((N, N * n))
        for w in range(N):
            # the history coordinate becomes the current source state
            block[w, xs[w] * N:(xs[w] + 1) * N] = rows_block[w]
        big[prev * N:(prev + 1) * N, :] = block
    # seeding the history with the initial source makes the first slot idle
    start_index = int(xs[start_state]) * N + start_state
    mu = _occupation(big, start_index)
    mu_mat = mu.reshape(n, N)
    mu_states = mu_mat.sum(axis=0)
    moved_mass = sum(float(mu_mat[prev][xs != prev].sum()) for prev in range(n))
    ramp, spend = _cost_pieces(model, decision)
    return _summarize(model, mu_states, moved_mass, ramp, spend)


def evaluate_age_threshold(model: DecPomdpModel, threshold, decision: DecisionPolicy,
                           start_state=0) -> CostSummary:
    """Exact long-run cost of age-triggered transmission.

    The chain is augmented with the age of the freshest delivered update,
    truncated just past the threshold (all older ages behave identically, so
    the truncation is exact).  Age starts at 1 and resets to 1 on delivery.
    """
    if threshold < 0 or int(threshold) != threshold:
        raise ParameterError(f"threshold must be a nonnegative integer, got {threshold}")
    threshold = int(threshold)
    cap = threshold + 2                      # ages 1..cap, top level absorbs
    N = model.n_global_states
    idle, success = _gathered_kernels(model, decision)
    p = model.channel.success_prob
    big = np.zeros((N * cap, N * cap))
    for level in range(cap):                 # age = level + 1
        age = level + 1
        up = min(level + 1, cap - 1)
        if age > threshold:
            big[level * N:(level + 1) * N, 0:N] += p * success
            big[level * N:(level + 1) * N, up * N:(up + 1) * N] += (1.0 - p) * idle
        else:
            big[level * N:(level + 1) * N, up * N:(up + 1) * N] += idle
    mu = _occupation(big, start_state)       # start at age 1
    mu_mat = mu.reshape(cap, N)
    mu_states = mu_mat.sum(axis=0)
    rate = float(mu_mat[threshold:].sum())   # levels with age > threshold
    ramp, spend = _cost_pieces(model, decision)
    return _summarize(model, mu_states, rate, ramp, spend)


def tune_age_threshold(model: DecPomdpModel, decision: DecisionPolicy,
                       max_threshold=DEFAULT_AGE_CAP, start_state=0):
    """Sweep integer thresholds and return (best threshold, per-threshold summaries).

    Ties prefer the smaller threshold.  If the minimum sits on the sweep
    boundary a warning is emitted and the boundary returned.
    """
    curve = []
    for delta in range(max_threshold + 1):
        curve.append((delta, evaluate_age_threshold(model, delta, decision, start_state)))
    costs = [summary.average_cost for _, summary in curve]
    best = int(np.argmin(costs))
    if best == max_threshold:
        warnings.warn(f"age-threshold sweep hit its boundary {max_threshold} without an "
                      f"interior minimum", stacklevel=2)
    return curve[best][0], curve


def evaluate_benchmark(model: DecPomdpModel, spec: BenchmarkSpec,
                       state_values=None, start_state=0) -> CostSummary:
    """Exact cost of one benchmark configuration."""
    if spec.kind == "uniform":
        return evaluate_uniform(model, spec.period, spec.decision_policy, start_state)
    if spec.kind == "age":
        return evaluate_age_threshold(model, spec.threshold, spec.decision_policy,
                                      start_state)
    if spec.kind == "change":
        return evaluate_change_aware(model, spec.decision_policy, start_state)
    if spec.kind == "aoii":
        return evaluate_state_policy(model, aoii_optimal_policy(model),
                                     spec.decision_policy, start_state)
    if spec.kind == "mse":
        policy = mse_optimal_policy(model, spec.decision_policy, state_values)
        return evaluate_state_policy(model, policy, spec.decision_policy, start_state)
    raise ParameterError(f"unknown benchmark kind {spec.kind!r}")
