"""Average-reward solvers for the sampler/actuator pair.

Two exact routes and one fast route:

* relative value iteration on the sampler MDP induced by a fixed decision
  policy, anchored at a reference state;
* brute-force enumeration of all deterministic decision policies, each scored
  by the RVI route (optimal under the unichain hypothesis);
* alternating best-response search between the two agents, seeded from a
  perfect-estimate heuristic, which converges to a Nash pair.

Everything here speaks rewards (negated costs).  Reported ``average_reward``
is always the negation of the long-term average cost.

Chains induced by a fixed sampling policy can fail to be unichain (a sampling
policy that never transmits out of some estimate freezes that estimate
forever).  The stationary machinery raises ``ErgodicityError`` in that case;
the equilibrium search can instead fall back to long-run averages taken from
the initial state, computed through the Cesaro limit of the chain.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import (EnumerationBudgetError, ErgodicityError, GoalTensorError,
                     NonConvergenceError, ParameterError,
                     UnreachableObservationError)
from .model import (DecPomdpModel, TabularMdp, dense_kernels, heuristic_mdp,
                    induced_mdp, induced_pomdp)
from .tensor import DecisionPolicy, SamplingPolicy

POISSON_TOL = 1e-8
ZERO_MARGINAL = 1e-12
ACCEPT_TOL = 1e-10          # tolerated average-reward loss when accepting a soft-policy step
IMPROVE_TOL = 1e-9          # minimum gain for a local-search move

DEFAULT_EPSILON = 1e-6
MAX_RVI_SWEEPS = 10_000
MAX_PI_ROUNDS = 500
MAX_JESP_ROUNDS = 100


# ---------------------------------------------------------------------------
# chain analysis


def closed_classes(P):
    """Recurrent (closed) communicating classes of a stochastic matrix.

    Edges are taken wherever the one-step probability is positive; a strongly
    connected component is closed when no edge leaves it.
    """
    edges = np.asarray(P) > 0.0
    n_comp, labels = connected_components(csr_matrix(edges), directed=True,
                                          connection="strong")
    closed = []
    for comp in range(n_comp):
        members = labels == comp
        if not edges[members][:, ~members].any():
            closed.append(np.flatnonzero(members))
    return closed


def stationary_distribution(P) -> np.ndarray:
    """Unique stationary row of a unichain transition matrix.

    Solves the balance equations directly, replacing one (redundant) balance
    row with the normalization constraint.  Raises ``ErgodicityError`` when the
    chain has several closed classes and hence no unique stationary law.
    """
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    classes = closed_classes(P)
    if len(classes) != 1:
        inside = classes[0] if classes else np.array([], dtype=int)
        outside = sorted(set(range(n)) - set(int(i) for i in inside))
        raise ErgodicityError(
            f"chain has {len(classes)} closed classes; states {outside} are not "
            f"reachable from the first class", closed_classes=classes, unreachable=outside)
    system = P.T - np.eye(n)
    system[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    try:
        mu = np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError as exc:
        raise ErgodicityError(f"balance system is singular: {exc}") from exc
    if mu.min() < -1e-10:
        raise ErgodicityError(f"balance solution has negative mass {mu.min():.3e}")
    mu = np.clip(mu, 0.0, None)
    return mu / mu.sum()


def average_reward(mu, rbar) -> float:
    """Stationary expectation of the per-state expected reward."""
    return float(np.dot(mu, rbar))


def relative_reward(P, rbar, mu, eta) -> np.ndarray:
    """Differential reward solving eta + g = rbar + P g, normalized so mu @ g = 0."""
    n = P.shape[0]
    system = np.eye(n) - P + np.outer(np.ones(n), mu)
    try:
        g = np.linalg.solve(system, rbar) - eta
    except np.linalg.LinAlgError as exc:
        raise ErgodicityError(f"fundamental-matrix system is singular: {exc}") from exc
    return g


@dataclass(frozen=True)
class StationaryAnalysis:
    distribution: np.ndarray
    expected_reward: np.ndarray
    average_reward: float
    relative_reward: np.ndarray


def analyze_chain(P, rbar) -> StationaryAnalysis:
    """Stationary distribution, gain, and differential rewards, residual-checked."""
    mu = stationary_distribution(P)
    eta = average_reward(mu, rbar)
    g = relative_reward(P, rbar, mu, eta)
    residual = np.abs(eta + g - rbar - P @ g).max()
    if residual > POISSON_TOL:
        raise NonConvergenceError(
            f"differential-reward residual {residual:.3e} exceeds {POISSON_TOL:g}",
            residual=residual)
    return StationaryAnalysis(distribution=mu, expected_reward=rbar,
                              average_reward=eta, relative_reward=g)


def cesaro_limit(P) -> np.ndarray:
    """Long-run occupation matrix: row w is the limiting time-average law from w.

    Works for any finite chain: recurrent rows carry their class's stationary
    law, transient rows mix the class laws by absorption probability.
    """
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    star = np.zeros((n, n))
    recurrent = np.zeros(n, dtype=bool)
    laws = []
    for members in closed_classes(P):
        law = stationary_distribution(P[np.ix_(members, members)])
        laws.append((members, law))
        star[np.ix_(members, members)] = law[None, :]
        recurrent[members] = True
    transient = np.flatnonzero(~recurrent)
    if transient.size:
        inner = P[np.ix_(transient, transient)]
        lhs = np.eye(transient.size) - inner
        for members, law in laws:
            hit = np.linalg.solve(lhs, P[np.ix_(transient, members)].sum(axis=1))
            star[np.ix_(transient, members)] += np.outer(hit, law)
    return star


@dataclass(frozen=True)
class _ChainEval:
    """Internal chain evaluation valid for unichain and multichain cases alike."""

    mu: np.ndarray          # law used for posteriors (stationary, or Cesaro row of start)
    eta: float              # scalar gain (at the start state when multichain)
    eta_vec: np.ndarray     # per-state gain; constant when unichain
    g: np.ndarray           # differential rewards


def _general_analysis(P, rbar, start):
    """Cesaro-limit gain vector and differential rewards (multichain Poisson)."""
    star = cesaro_limit(P)
    eta_vec = star @ rbar
    n = len(rbar)
    try:
        g = np.linalg.solve(np.eye(n) - P + star, rbar - eta_vec)
    except np.linalg.LinAlgError as exc:
        raise ErgodicityError(f"multichain fundamental system singular: {exc}") from exc
    residual = np.abs(eta_vec + g - rbar - P @ g).max()
    if residual > POISSON_TOL:
        raise NonConvergenceError(
            f"multichain differential-reward residual {residual:.3e} exceeds {POISSON_TOL:g}",
            residual=residual)
    return _ChainEval(mu=star[start], eta=float(eta_vec[start]), eta_vec=eta_vec, g=g)


def initial_gain(P, rbar, start) -> float:
    """Long-run average reward from a start state, defined for any finite chain."""
    try:
        mu = stationary_distribution(P)
        return average_reward(mu, rbar)
    except ErgodicityError:
        return float((cesaro_limit(P) @ rbar)[start])


# ---------------------------------------------------------------------------
# joint-policy chain and observation-side q-values


def _decision_table(decision, n_states, n_actions):
    """Normalize a decision policy to a stochastic (estimate x action) table."""
    if isinstance(decision, DecisionPolicy):
        table = np.zeros((n_states, n_actions))
        table[np.arange(n_states), decision.actions] = 1.0
        return table
    table = np.asarray(decision, dtype=float)
    if table.shape != (n_states, n_actions):
        raise ParameterError(
            f"stochastic decision table has shape {table.shape}, expected {(n_states, n_actions)}")
    if np.any(table < 0) or np.any(np.abs(table.sum(axis=1) - 1.0) > 1e-9):
        raise ParameterError("stochastic decision rows must be nonnegative and sum to 1")
    return table


class _FixedSamplingProblem:
    """Actuator-side tables for one (model, sampling policy) pair, built once."""

    def __init__(self, model: DecPomdpModel, sampling: SamplingPolicy):
        self.model = model
        self.sampling = sampling
        pomdp = induced_pomdp(model, sampling)
        self.transitions = pomdp.transitions          # (A, N, N)
        self.rewards = pomdp.rewards                  # (N, A)
        _, self.xhats, _ = model.state_components()

    def chain(self, table):
        """Global chain and per-state expected reward under a stochastic decision table."""
        probs = table[self.xhats]                     # (N, A)
        P = np.einsum("na,ans->ns", probs, self.transitions)
        rbar = np.einsum("na,na->n", probs, self.rewards)
        return P, rbar

    def eval_chain(self, table, start=0, allow_multichain=False) -> _ChainEval:
        P, rbar = self.chain(table)
        try:
            analysis = analyze_chain(P, rbar)
        except ErgodicityError:
            if not allow_multichain:
                raise
            return _general_analysis(P, rbar, start)
        return _ChainEval(mu=analysis.distribution, eta=analysis.average_reward,
                          eta_vec=np.full(len(rbar), analysis.average_reward),
                          g=analysis.relative_reward)

    def eta_of(self, table, start=0, allow_multichain=False) -> float:
        P, rbar = self.chain(table)
        try:
            return average_reward(stationary_distribution(P), rbar)
        except ErgodicityError:
            if not allow_multichain:
                raise
            return float((cesaro_limit(P) @ rbar)[start])

    def q_values(self, evaluation: _ChainEval):
        """State- and observation-level q-values plus posterior and reachability."""
        q_global = self.rewards - evaluation.eta_vec[:, None] + (self.transitions @ evaluation.g).T
        n_obs = self.model.alphabets.n_states
        mu = evaluation.mu
        posterior = np.zeros((n_obs, len(mu)))
        marginal = np.zeros(n_obs)
        for obs in range(n_obs):
            mask = self.xhats == obs
            marginal[obs] = mu[mask].sum()
            if marginal[obs] > ZERO_MARGINAL:
                posterior[obs, mask] = mu[mask] / marginal[obs]
            else:
                posterior[obs, :] = np.nan
        reachable = marginal > ZERO_MARGINAL
        q_obs = np.where(reachable[:, None], np.where(np.isnan(posterior), 0.0, posterior) @ q_global,
                         np.nan)
        return q_global, q_obs, posterior, reachable


def policy_chain(model: DecPomdpModel, sampling: SamplingPolicy, decision):
    """Transition matrix and expected reward under both policies.

    ``decision`` may be a deterministic ``DecisionPolicy`` or a stochastic
    (estimate x action) probability table.
    """
    table = _decision_table(decision, model.alphabets.n_states, model.alphabets.n_actions)
    return _FixedSamplingProblem(model, sampling).chain(table)


@dataclass(frozen=True)
class QTables:
    q_global: np.ndarray        # (N, n_actions)
    q_obs: np.ndarray           # (n_estimates, n_actions); NaN rows are unreachable
    posterior: np.ndarray       # (n_estimates, N); rows sum to 1 where reachable
    reachable: np.ndarray       # (n_estimates,) bool


def q_tables(model: DecPomdpModel, sampling: SamplingPolicy, decision,
             analysis: StationaryAnalysis, on_unreachable="raise") -> QTables:
    """Q-values of (state, actuation) and (observation, actuation) pairs.

    The observation-level values average the state-level ones under the
    Bayesian posterior of the state given the observed estimate.  Observations
    with zero stationary mass have no posterior; by default that raises, with
    ``on_unreachable="keep"`` their rows are left NaN for the caller to skip.
    """
    _decision_table(decision, model.alphabets.n_states, model.alphabets.n_actions)
    problem = _FixedSamplingProblem(model, sampling)
    evaluation = _ChainEval(mu=analysis.distribution, eta=analysis.average_reward,
                            eta_vec=np.full(len(analysis.distribution),
                                            analysis.average_reward),
                            g=analysis.relative_reward)
    q_global, q_obs, posterior, reachable = problem.q_values(evaluation)
    if on_unreachable == "raise" and not reachable.all():
        missing = np.flatnonzero(~reachable).tolist()
        raise UnreachableObservationError(
            f"estimate observations {missing} have zero stationary probability")
    return QTables(q_global=q_global, q_obs=q_obs, posterior=posterior, reachable=reachable)


# ---------------------------------------------------------------------------
# relative value iteration


@dataclass(frozen=True)
class ValueTable:
    values: np.ndarray
    reference_state: int


@dataclass(frozen=True)
class RviSolution:
    policy: np.ndarray          # best action per state
    gain: float                 # optimal average reward
    values: ValueTable
    iterations: int
    residual: float


def rvi_solve(mdp: TabularMdp, epsilon=DEFAULT_EPSILON, reference_state=0,
              max_sweeps=MAX_RVI_SWEEPS) -> RviSolution:
    """Relative value iteration for the average-reward optimality equation.

    Values are re-anchored at the reference state every sweep; on return the
    gain and values satisfy the optimality equation with residual below
    ``epsilon`` at every state (raised as an error otherwise).  Ties in the
    greedy policy break toward the lowest action index.
    """
    T, R = mdp.transitions, mdp.rewards
    n = mdp.n_states
    if not 0 <= reference_state < n:
        raise ParameterError(f"reference state {reference_state} outside 0..{n - 1}")
    V = np.zeros(n)
    V_older = None
    diff = cycle = np.inf
    # the einsum form keeps the reduction order identical to the batched solver
    for sweep in range(1, max_sweeps + 1):
        TV = (R + np.einsum("ans,s->na", T, V)).max(axis=1)
        V_new = TV - TV[reference_state]
        diff = np.abs(V_new - V).max()
        cycle = np.abs(V_new - V_older).max() if V_older is not None else np.inf
        V_older, V = V, V_new
        if diff < 0.5 * epsilon:
            break
    else:
        if cycle < 0.5 * epsilon <= diff:
            raise NonConvergenceError(
                f"period-2 value oscillation after {max_sweeps} sweeps; consider an "
                f"aperiodicity transform of the kernel",
                residual=diff, iterations=max_sweeps)
        raise NonConvergenceError(
            f"no convergence after {max_sweeps} sweeps; last value change {diff:.3e}",
            residual=diff, iterations=max_sweeps)
    Q = R + np.einsum("ans,s->na", T, V)
    TV = Q.max(axis=1)
    gain = float(TV[reference_state])
    residual = float(np.abs(gain + V - TV).max())
    if residual >= epsilon:
        raise NonConvergenceError(
            f"optimality-equation residual {residual:.3e} not below {epsilon:g}",
            residual=residual, iterations=sweep)
    policy = Q.argmax(axis=1)
    return RviSolution(policy=policy, gain=gain,
                       values=ValueTable(values=V, reference_state=reference_state),
                       iterations=sweep, residual=residual)


def _rvi_batch(T, R, epsilon, reference_state, max_sweeps, on_stall="error"):
    """Relative value iteration over a batch of MDPs sharing a state space.

    Matches ``rvi_solve`` exactly per batch member: the same sweeps, the same
    stopping rule (members freeze as soon as they converge), the same greedy
    tie-breaking.  Returns (policies, gains, values, iterations, residuals,
    stalled).

    A member stalls when value differences plateau (in this problem family:
    estimate slices the greedy policy never couples, with gain differences too
    small for the finite sweep budget to surface an escape).  With
    ``on_stall="estimate"`` such members are frozen at the cap and reported
    with ``stalled`` set; their gain is then the reference slice's own gain,
    which the member can actually achieve, so it never overstates the optimum.
    """
    n_batch, _, n, _ = T.shape
    V = np.zeros((n_batch, n))
    iterations = np.zeros(n_batch, dtype=int)
    active = np.ones(n_batch, dtype=bool)
    for sweep in range(1, max_sweeps + 1):
        idx = np.flatnonzero(active)
        TV = (R[idx] + np.einsum("kans,ks->kna", T[idx], V[idx])).max(axis=2)
        V_new = TV - TV[:, reference_state][:, None]
        diff = np.abs(V_new - V[idx]).max(axis=1)
        V[idx] = V_new
        done = diff < 0.5 * epsilon
        iterations[idx[done]] = sweep
        active[idx[done]] = False
        if not active.any():
            break
    stalled = active.copy()
    iterations[stalled] = max_sweeps
    if stalled.any() and on_stall != "estimate":
        raise NonConvergenceError(
            f"{int(stalled.sum())} of {n_batch} candidates unconverged after {max_sweeps} sweeps",
            iterations=max_sweeps)
    Q = R + np.einsum("kans,ks->kna", T, V)
    TV = Q.max(axis=2)
    gains = TV[:, reference_state]
    residuals = np.abs(gains[:, None] + V - TV).max(axis=1)
    bad = (residuals >= epsilon) & ~stalled
    if np.any(bad):
        worst = int(np.flatnonzero(bad)[residuals[bad].argmax()])
        raise NonConvergenceError(
            f"candidate {worst} optimality-equation residual {residuals[worst]:.3e} "
            f"not below {epsilon:g}", residual=float(residuals[worst]))
    return Q.argmax(axis=2), gains, V, iterations, residuals, stalled


# ---------------------------------------------------------------------------
# policy containers and helpers


def sampling_from_flat(flat, model: DecPomdpModel) -> SamplingPolicy:
    n, v = model.alphabets.n_states, model.alphabets.n_contexts
    return SamplingPolicy(np.asarray(flat, dtype=int).reshape(v, n, n).transpose(2, 1, 0))


def flatten_sampling(policy: SamplingPolicy) -> np.ndarray:
    return policy.decisions.transpose(2, 1, 0).reshape(-1)


@dataclass(frozen=True)
class SolveReport:
    sampling_policy: SamplingPolicy
    decision_policy: DecisionPolicy
    average_reward: float
    iterations: int
    residual: float
    converged: bool
    diagnostics: dict = field(default_factory=dict, repr=False)

    @property
    def average_cost(self):
        return -self.average_reward


def _solve_sampler(model: DecPomdpModel, decision: DecisionPolicy, epsilon,
                   max_sweeps, on_stall="error"):
    mdp = induced_mdp(model, decision)
    pol, gains, V, iters, residuals, stall = _rvi_batch(
        mdp.transitions[None], mdp.rewards[None], epsilon, 0, max_sweeps, on_stall)
    return pol[0], float(gains[0]), V[0], int(iters[0]), bool(stall[0])


def solve_sampler_for_decision(model: DecPomdpModel, decision: DecisionPolicy,
                               epsilon=DEFAULT_EPSILON,
                               max_sweeps=MAX_RVI_SWEEPS) -> tuple[SamplingPolicy, float, ValueTable]:
    """Best-response sampling policy for a fixed decision policy (the RVI route)."""
    flat, gain, V, _, _ = _solve_sampler(model, decision, epsilon, max_sweeps)
    return sampling_from_flat(flat, model), gain, ValueTable(values=V, reference_state=0)


# ---------------------------------------------------------------------------
# greedy decision policy (separate-design baseline)


def greedy_decision_policy(model: DecPomdpModel, context_weights=None,
                           tie_break="high") -> DecisionPolicy:
    """Myopic per-estimate actuation assuming the estimate is perfect.

    The inherent cost is averaged over the context under ``context_weights``
    (stationary context law by default).  Exact cost ties break toward the
    larger actuation index by default; pass ``tie_break="low"`` to flip.
    """
    weights = (model.context.stationary() if context_weights is None
               else np.asarray(context_weights, dtype=float))
    if weights.shape != (model.alphabets.n_contexts,):
        raise ParameterError("context weights must assign one weight per context")
    weights = weights / weights.sum()
    expected = np.einsum("p,xpa->xa", weights, model.action_cost)
    if tie_break == "high":
        flipped = expected[:, ::-1].argmin(axis=1)
        actions = model.alphabets.n_actions - 1 - flipped
    elif tie_break == "low":
        actions = expected.argmin(axis=1)
    else:
        raise ParameterError(f"unknown tie_break {tie_break!r}")
    return DecisionPolicy(actions)


# ---------------------------------------------------------------------------
# policy iteration with step size (actuator side, fixed sampling)


def _as_schedule(step_schedule):
    if step_schedule is None or step_schedule == "harmonic":
        return lambda k: 1.0 / (k + 1)
    if isinstance(step_schedule, (int, float)):
        size = float(step_schedule)
        if not 0.0 < size <= 1.0:
            raise ParameterError(f"constant step size {size} outside (0, 1]")
        return lambda k: size
    if callable(step_schedule):
        return step_schedule
    raise ParameterError(f"cannot interpret step schedule {step_schedule!r}")


@dataclass(frozen=True)
class PiResult:
    decision_policy: DecisionPolicy
    average_reward: float
    iterations: int
    eta_trace: list
    converged: bool


def _one_hot(actions, n_actions):
    table = np.zeros((len(actions), n_actions))
    table[np.arange(len(actions)), actions] = 1.0
    return table


def _local_search(problem: _FixedSamplingProblem, actions, eta, start, allow_multichain):
    """Steepest-ascent single-observation deviations until none improves."""
    n_actions = problem.model.alphabets.n_actions
    actions = np.array(actions, dtype=int)
    improved = True
    while improved:
        improved = False
        best_eta, best_move = eta, None
        for obs in range(len(actions)):
            for a in range(n_actions):
                if a == actions[obs]:
                    continue
                trial = actions.copy()
                trial[obs] = a
                try:
                    trial_eta = problem.eta_of(_one_hot(trial, n_actions), start,
                                               allow_multichain)
                except ErgodicityError:
                    continue
                if trial_eta > best_eta + IMPROVE_TOL:
                    best_eta, best_move = trial_eta, (obs, a)
        if best_move is not None:
            actions[best_move[0]] = best_move[1]
            eta = best_eta
            improved = True
    return actions, eta


def pi_step_size(model: DecPomdpModel, sampling: SamplingPolicy,
                 initial_decision: DecisionPolicy, epsilon=DEFAULT_EPSILON,
                 step_schedule=None, max_rounds=MAX_PI_ROUNDS,
                 on_multichain="error", start_state=0) -> PiResult:
    """Soft policy iteration for the actuator given a fixed sampling policy.

    Each round evaluates the current soft decision table (stationary law, gain,
    differential rewards, observation q-values) and blends the table toward the
    per-observation greedy action by the scheduled step size.  Steps that lower
    the gain are rolled back.  Observations with zero stationary mass keep
    their incumbent action.  The final deterministic policy is the
    per-observation argmax, then improved by single-observation local search so
    that no single deviation can gain more than the tolerance; the reported
    average reward is evaluated for that deterministic policy.

    When the sampling policy freezes some estimates forever the induced chain
    is not unichain; ``on_multichain="error"`` raises (default), while
    ``on_multichain="initial-state"`` evaluates gains from ``start_state``
    through the Cesaro limit of the chain.
    """
    if on_multichain not in ("error", "initial-state"):
        raise ParameterError(f"unknown on_multichain mode {on_multichain!r}")
    allow = on_multichain == "initial-state"
    schedule = _as_schedule(step_schedule)
    n_actions = model.alphabets.n_actions
    problem = _FixedSamplingProblem(model, sampling)

    soft = _one_hot(initial_decision.actions, n_actions)
    try:
        evaluation = problem.eval_chain(soft, start_state, allow)
    except ErgodicityError as exc:
        raise ErgodicityError(
            f"chain under the fixed sampling policy and the initial decision policy "
            f"{initial_decision.actions.tolist()} is not unichain: {exc}") from exc
    etas = [evaluation.eta]
    converged = False
    prev_target = None
    rounds = 0
    for k in range(1, max_rounds + 1):
        rounds = k
        _, q_obs, _, reachable = problem.q_values(evaluation)
        current = soft.argmax(axis=1)
        target = np.where(reachable, np.nan_to_num(q_obs, nan=-np.inf).argmax(axis=1), current)
        if prev_target is not None and np.array_equal(target, prev_target) \
                and np.array_equal(target, current):
            converged = True
            break
        prev_target = target
        candidate = (1.0 - schedule(k)) * soft + schedule(k) * _one_hot(target, n_actions)
        candidate = np.clip(candidate, 0.0, None)
        candidate /= candidate.sum(axis=1, keepdims=True)
        try:
            candidate_eval = problem.eval_chain(candidate, start_state, allow)
        except ErgodicityError as exc:
            raise ErgodicityError(
                f"soft decision step lost ergodicity at round {k}: {exc}") from exc
        if candidate_eval.eta >= evaluation.eta - ACCEPT_TOL:
            soft, evaluation = candidate, candidate_eval
            etas.append(evaluation.eta)
            if abs(etas[-1] - etas[-2]) < epsilon:
                converged = True
                break

    actions = soft.argmax(axis=1)
    eta_det = problem.eta_of(_one_hot(actions, n_actions), start_state, allow)
    eta_init = problem.eta_of(_one_hot(initial_decision.actions, n_actions),
                              start_state, allow)
    if eta_init > eta_det:
        actions, eta_det = initial_decision.actions.copy(), eta_init
    actions, eta_det = _local_search(problem, actions, eta_det, start_state, allow)
    return PiResult(decision_policy=DecisionPolicy(actions), average_reward=float(eta_det),
                    iterations=rounds, eta_trace=etas, converged=converged)


# ---------------------------------------------------------------------------
# brute force over decision policies


def brute_force_joint(model: DecPomdpModel, epsilon=DEFAULT_EPSILON,
                      budget=200_000, max_sweeps=MAX_RVI_SWEEPS,
                      chunk=512) -> SolveReport:
    """Exact joint solve: enumerate every deterministic decision policy.

    Decision policies are visited in lexicographic order; each induces a
    sampler MDP solved by RVI (in vectorized batches, member-for-member
    identical to ``rvi_solve``), and the best gain wins with
    earlier-enumerated policies preferred on exact ties.  Policies whose
    best-response chain has several closed classes are flagged in the
    diagnostics (their gain may be start-dependent), and a single unichain
    warning is emitted up front if the reference chain already shows that
    structure.
    """
    n_states = model.alphabets.n_states
    n_actions = model.alphabets.n_actions
    n_candidates = n_actions ** n_states
    if n_candidates > budget:
        raise EnumerationBudgetError(
            f"{n_actions}^{n_states} = {n_candidates} decision policies exceed the "
            f"enumeration budget {budget}")
    dense = dense_kernels(model)
    xs, xhats, phis = model.state_components()
    N = model.n_global_states
    rows = np.arange(N)
    per_state_cost = model.action_cost[xs, phis, :]               # (N, A)

    reference_chain = dense[1, np.zeros(N, dtype=int), rows, :]
    if len(closed_classes(reference_chain)) != 1:
        warnings.warn("reference chain (always sample, lowest actuation) is not unichain; "
                      "gains of enumerated policies may be start-dependent", stacklevel=2)

    best_gain = -np.inf
    best_actions = None
    best_sampling = None
    best_residual = np.nan
    best_stalled = False
    total_sweeps = 0
    flagged = []
    stalled = []
    enumerated = itertools.product(range(n_actions), repeat=n_states)
    while True:
        block = list(itertools.islice(enumerated, chunk))
        if not block:
            break
        policies = np.array(block, dtype=int)                     # (K, S) lexicographic
        acts = policies[:, xhats]                                 # (K, N)
        T = np.ascontiguousarray(
            dense[:, acts, rows[None, :], :].transpose(1, 0, 2, 3))  # (K, 2, N, N)
        base = np.take_along_axis(per_state_cost[None, :, :], acts[:, :, None],
                                  axis=2)[:, :, 0]                # (K, N)
        R = -np.stack([base, base + model.cost.sampling_cost], axis=2)
        pol_b, gains, _, iters, residuals, stall_b = _rvi_batch(
            T, R, epsilon, 0, max_sweeps, on_stall="estimate")
        total_sweeps += int(iters.sum())
        for j in range(len(block)):
            chain = T[j, pol_b[j], rows, :]
            if len(closed_classes(chain)) != 1:
                flagged.append(tuple(int(x) for x in policies[j]))
            if stall_b[j]:
                stalled.append(tuple(int(x) for x in policies[j]))
            if gains[j] > best_gain:
                best_gain = float(gains[j])
                best_actions = policies[j].copy()
                best_sampling = pol_b[j].copy()
                best_residual = float(residuals[j])
                best_stalled = bool(stall_b[j])
    return SolveReport(
        sampling_policy=sampling_from_flat(best_sampling, model),
        decision_policy=DecisionPolicy(best_actions),
        average_reward=float(best_gain),
        iterations=total_sweeps,
        residual=float(best_residual),
        converged=not best_stalled,
        diagnostics={"candidates_evaluated": n_candidates,
                     "multichain_candidates": flagged,
                     "stalled_candidates": stalled},
    )


# ---------------------------------------------------------------------------
# alternating best-response search


def heuristic_initial_decision(model: DecPomdpModel, epsilon=DEFAULT_EPSILON) -> DecisionPolicy:
    """Seed decision policy from the perfect-estimate actuation MDP.

    Solves the (state, context) MDP by RVI, forms its q-values, averages them
    over the stationary context law, and picks the cost-minimizing actuation
    per state, read as a per-estimate rule.
    """
    mdp = heuristic_mdp(model)
    sol = rvi_solve(mdp, epsilon=epsilon)
    V = sol.values.values
    q = mdp.rewards - sol.gain + (mdp.transitions @ V).T          # (S*V, A)
    weights = model.context.stationary()
    n, v = model.alphabets.n_states, model.alphabets.n_contexts
    q_by_state = np.einsum("p,xpa->xa", weights, q.reshape(v, n, -1).transpose(1, 0, 2))
    return DecisionPolicy(q_by_state.argmax(axis=1))


def _jesp_once(model, initial_decision, epsilon, step_schedule, max_rounds,
               pi_rounds, rvi_sweeps, on_multichain, start_state):
    decision = initial_decision
    theta_prev = None
    theta = None
    theta_trace = []
    stall_rounds = []
    converged = False
    rounds = 0
    best = None
    for k in range(1, max_rounds + 1):
        rounds = k
        flat, _, _, _, stall = _solve_sampler(model, decision, epsilon, rvi_sweeps,
                                              on_stall="estimate")
        if stall:
            stall_rounds.append(k)
        sampling = sampling_from_flat(flat, model)
        pi_res = pi_step_size(model, sampling, decision, epsilon=epsilon,
                              step_schedule=step_schedule, max_rounds=pi_rounds,
                              on_multichain=on_multichain, start_state=start_state)
        decision = pi_res.decision_policy
        theta = pi_res.average_reward
        theta_trace.append(theta)
        if best is None or theta > best[2]:
            best = (sampling, decision, theta)
        if theta_prev is not None and abs(theta - theta_prev) < epsilon:
            converged = True
            break
        theta_prev = theta
    residual = abs(theta - theta_prev) if theta_prev is not None else np.inf
    sampling, decision, theta = best
    return SolveReport(sampling_policy=sampling, decision_policy=decision,
                       average_reward=float(theta), iterations=rounds,
                       residual=float(residual), converged=converged,
                       diagnostics={"theta_trace": theta_trace,
                                    "rvi_stall_rounds": stall_rounds})


def jesp(model: DecPomdpModel, epsilon=DEFAULT_EPSILON, step_schedule=None,
         restarts=0, seed=0, max_rounds=MAX_JESP_ROUNDS,
         pi_rounds=MAX_PI_ROUNDS, rvi_sweeps=MAX_RVI_SWEEPS,
         on_multichain="initial-state", start_state=0) -> SolveReport:
    """Alternating best-response search for a Nash policy pair.

    The decision policy is seeded from the perfect-estimate heuristic, then the
    sampler (RVI best response) and the actuator (soft policy iteration)
    alternate until the average reward stabilizes.  Optional restarts rerun the
    loop from uniformly random decision policies and keep the best outcome;
    per-restart results land in the diagnostics.

    Sampling best responses occasionally stop transmitting out of some
    estimates, leaving a multichain; gains are then taken from ``start_state``
    (see ``pi_step_size``), which matches what a closed-loop run from that
    state measures.
    """
    rng = np.random.default_rng(seed)
    n_states, n_actions = model.alphabets.n_states, model.alphabets.n_actions
    outcomes = []
    best = None
    for attempt in range(restarts + 1):
        if attempt == 0:
            start = heuristic_initial_decision(model, epsilon=epsilon)
        else:
            start = DecisionPolicy(rng.integers(0, n_actions, size=n_states))
        try:
            report = _jesp_once(model, start, epsilon, step_schedule, max_rounds,
                                pi_rounds, rvi_sweeps, on_multichain, start_state)
        except GoalTensorError as exc:
            outcomes.append({"start": start.actions.tolist(), "error": str(exc)})
            continue
        outcomes.append({"start": start.actions.tolist(),
                         "average_reward": report.average_reward,
                         "converged": report.converged})
        if best is None or report.average_reward > best.average_reward:
            best = report
    if best is None:
        raise NonConvergenceError(
            f"all {restarts + 1} equilibrium searches failed: {outcomes}")
    best.diagnostics["restart_outcomes"] = outcomes
    return best
