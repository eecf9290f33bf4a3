"""Command-line front end: scenario ingestion, solving, simulation, sweeps.

Every run that writes files also writes ``manifest.json`` beside them with the
scenario digest, tool version, command line, seed, and timestamps.  All CSV
and report files are byte-reproducible for a fixed (scenario, command, seed);
the manifest is the one file carrying wall-clock timestamps.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .benchmarks import (AgeThresholdRule, ChangeAwareRule, StatePolicyRule,
                         UniformRule, aoii_optimal_policy, mse_optimal_policy)
from .errors import GoalTensorError, ParameterError, ScenarioError
from .harness import (compare_policies, decomposition_grid, optimality_gap,
                      simulate_closed_loop, sweep_rate_vs_cost, write_compare_csv,
                      write_decomp_csv, write_gap_csv, write_sweep_csv,
                      write_trace_csv)
from .scenario import (GridConfig, Scenario, SolverConfig, load_scenario,
                       scenario_digest)
from .solvers import (SolveReport, brute_force_joint, flatten_sampling,
                      greedy_decision_policy, jesp, solve_sampler_for_decision)
from .tensor import DecisionPolicy, SamplingPolicy


def _parse_grid(text) -> GridConfig:
    """Parse ``ps=0.2,0.4;cs=0,2,4`` into a grid configuration."""
    parts = {}
    for chunk in text.split(";"):
        key, _, values = chunk.partition("=")
        key = key.strip().lower()
        if key not in ("ps", "cs") or not values:
            raise ParameterError(f"grid spec must look like 'ps=...;cs=...', got {text!r}")
        parts[key] = tuple(float(v) for v in values.split(","))
    return GridConfig(success_probs=parts.get("ps", GridConfig().success_probs),
                      sampling_costs=parts.get("cs", GridConfig().sampling_costs))


def _apply_overrides(scenario: Scenario, args) -> Scenario:
    grid = _parse_grid(args.grid) if getattr(args, "grid", None) else scenario.grid
    solver = scenario.solver
    if getattr(args, "epsilon", None) is not None:
        solver = SolverConfig(algorithm=solver.algorithm, epsilon=args.epsilon,
                              max_rvi_sweeps=solver.max_rvi_sweeps,
                              max_pi_rounds=solver.max_pi_rounds,
                              max_jesp_rounds=solver.max_jesp_rounds,
                              step_schedule=solver.step_schedule,
                              restarts=solver.restarts, seed=solver.seed,
                              budget=solver.budget)
    if grid is not scenario.grid or solver is not scenario.solver:
        scenario = Scenario(name=scenario.name, model=scenario.model,
                            state_values=scenario.state_values, solver=solver,
                            simulation=scenario.simulation, sweep=scenario.sweep,
                            grid=grid, document=scenario.document)
    return scenario


def _start_index(scenario: Scenario) -> int:
    sim = scenario.simulation
    return scenario.model.state_index(sim.initial_state, sim.initial_estimate,
                                      sim.initial_context)


def _write_manifest(out_dir: Path, args, scenario_path, seed, outputs, started):
    manifest = {
        "tool": "goaltensor",
        "version": __version__,
        "command": " ".join([Path(sys.argv[0]).name] + sys.argv[1:])
        if sys.argv else "goaltensor",
        "arguments": {k: v for k, v in vars(args).items() if k != "func"},
        "scenario": str(scenario_path),
        "scenario_sha256": scenario_digest(scenario_path),
        "seed": seed,
        "started_at": started,
        "finished_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "outputs": sorted(str(p.name) for p in outputs),
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, default=str) + "\n")
    return path


def _policy_document(report: SolveReport, scenario: Scenario) -> dict:
    return {
        "scenario": scenario.name,
        "average_reward": report.average_reward,
        "average_cost": report.average_cost,
        "decision": report.decision_policy.actions.tolist(),
        "sampling": {
            "order": "flat index = x + n_states * xhat + n_states^2 * phi",
            "decisions": flatten_sampling(report.sampling_policy).tolist(),
        },
    }


def _load_policy_file(path, scenario: Scenario):
    doc = json.loads(Path(path).read_text())
    n, v = scenario.model.alphabets.n_states, scenario.model.alphabets.n_contexts
    decision = DecisionPolicy(np.asarray(doc["decision"], dtype=int))
    flat = np.asarray(doc["sampling"]["decisions"], dtype=int)
    sampling = SamplingPolicy(flat.reshape(v, n, n).transpose(2, 1, 0))
    return sampling, decision


def _report_text(report: SolveReport, scenario: Scenario, algorithm) -> str:
    lines = [
        f"scenario: {scenario.name}",
        f"algorithm: {algorithm}",
        f"average_reward: {report.average_reward!r}",
        f"average_cost: {report.average_cost!r}",
        f"iterations: {report.iterations}",
        f"residual: {report.residual!r}",
        f"converged: {str(report.converged).lower()}",
        "decision_policy:",
    ]
    for xhat, action in enumerate(report.decision_policy.actions):
        lines.append(f"  estimate {xhat} -> action {int(action)}")
    lines.append("sampling_policy:")
    decisions = report.sampling_policy.decisions
    n, _, v = decisions.shape
    for phi in range(v):
        for xhat in range(n):
            for x in range(n):
                lines.append(f"  x={x} xhat={xhat} phi={phi} -> {int(decisions[x, xhat, phi])}")
    counts = {key: len(val) if isinstance(val, (list, tuple)) else val
              for key, val in report.diagnostics.items()
              if key in ("candidates_evaluated", "multichain_candidates",
                         "stalled_candidates", "theta_trace", "rvi_stall_rounds")}
    if counts:
        lines.append("diagnostics: " + " ".join(f"{k}={v}" for k, v in sorted(counts.items())))
    return "\n".join(lines) + "\n"


def cmd_validate(args):
    scenario = load_scenario(args.scenario)
    n = scenario.model.alphabets
    print(f"ok: {scenario.name}: {n.n_states} states x {n.n_states} estimates x "
          f"{n.n_contexts} contexts = {scenario.model.n_global_states} global states, "
          f"{n.n_actions} actuations")
    return 0


def cmd_solve(args):
    scenario = load_scenario(args.scenario)
    epsilon = args.epsilon if args.epsilon is not None else scenario.solver.epsilon
    seed = args.seed if args.seed is not None else scenario.solver.seed
    algorithm = args.algorithm or scenario.solver.algorithm
    start = _start_index(scenario)
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    if algorithm == "brute":
        report = brute_force_joint(scenario.model, epsilon=epsilon,
                                   budget=scenario.solver.budget)
    elif algorithm == "jesp":
        report = jesp(scenario.model, epsilon=epsilon,
                      step_schedule=scenario.solver.step_schedule,
                      restarts=scenario.solver.restarts, seed=seed,
                      max_rounds=scenario.solver.max_jesp_rounds,
                      pi_rounds=scenario.solver.max_pi_rounds,
                      rvi_sweeps=scenario.solver.max_rvi_sweeps, start_state=start)
    elif algorithm == "rvi-fixed-decision":
        decision = greedy_decision_policy(scenario.model)
        sampling, gain, _ = solve_sampler_for_decision(
            scenario.model, decision, epsilon=epsilon,
            max_sweeps=scenario.solver.max_rvi_sweeps)
        report = SolveReport(sampling_policy=sampling, decision_policy=decision,
                             average_reward=gain, iterations=0, residual=0.0,
                             converged=True, diagnostics={})
    else:
        raise ParameterError(f"unknown algorithm {algorithm!r}")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / "report.txt"
    report_path.write_text(_report_text(report, scenario, algorithm))
    policy_path = out_dir / "policy.json"
    policy_path.write_text(json.dumps(_policy_document(report, scenario), indent=2) + "\n")
    _write_manifest(out_dir, args, args.scenario, seed, [report_path, policy_path],
                    started)
    print(f"{algorithm}: average cost {report.average_cost!r} "
          f"({'converged' if report.converged else 'NOT converged'})")
    return 0 if report.converged else 1


def _simulation_rule(args, scenario: Scenario):
    model = scenario.model
    greedy = greedy_decision_policy(model)
    name = args.policy
    if args.policy_file:
        sampling, decision = _load_policy_file(args.policy_file, scenario)
        return StatePolicyRule(sampling, label="policy-file"), decision
    if name == "codesign":
        report = jesp(model, epsilon=scenario.solver.epsilon,
                      step_schedule=scenario.solver.step_schedule,
                      restarts=scenario.solver.restarts, seed=scenario.solver.seed,
                      start_state=_start_index(scenario))
        return (StatePolicyRule(report.sampling_policy, label="got-codesign"),
                report.decision_policy)
    if name == "aoii":
        return StatePolicyRule(aoii_optimal_policy(model), label="aoii-optimal"), greedy
    if name == "mse":
        return (StatePolicyRule(mse_optimal_policy(model, greedy, scenario.state_values),
                                label="mse-optimal"), greedy)
    if name == "change":
        return ChangeAwareRule(), greedy
    if name == "uniform":
        return UniformRule(int(args.param or 1)), greedy
    if name == "age":
        return AgeThresholdRule(int(args.param or 0)), greedy
    raise ParameterError(f"unknown policy {name!r}")


def cmd_simulate(args):
    scenario = load_scenario(args.scenario)
    seed = args.seed if args.seed is not None else scenario.simulation.seed
    horizon = args.horizon if args.horizon is not None else scenario.simulation.horizon
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    rule, decision = _simulation_rule(args, scenario)
    initial = (scenario.simulation.initial_state, scenario.simulation.initial_estimate,
               scenario.simulation.initial_context)
    records, summary = simulate_closed_loop(
        scenario.model, rule, decision, horizon, seed,
        record_trace=True, initial=initial, state_values=scenario.state_values)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = [write_trace_csv(out_dir / "trace.csv", records)]
    _write_manifest(out_dir, args, args.scenario, seed, outputs, started)
    print(f"{rule.label}: horizon={horizon} average cost {summary.average_cost!r} "
          f"sampling rate {summary.sampling_rate!r}")
    return 0


def cmd_sweep(args):
    scenario = load_scenario(args.scenario)
    seed = args.seed if args.seed is not None else scenario.simulation.seed
    horizon = args.horizon if args.horizon is not None else scenario.simulation.horizon
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    seeds = [seed + k for k in range(len(scenario.sweep.seeds))] \
        if args.seed is not None else list(scenario.sweep.seeds)
    decision = greedy_decision_policy(scenario.model)
    initial = (scenario.simulation.initial_state, scenario.simulation.initial_estimate,
               scenario.simulation.initial_context)
    results = []
    families = [f.strip() for f in args.families.split(",") if f.strip()]
    for family in families:
        if family == "uniform":
            grid = list(scenario.sweep.uniform_periods)
        elif family == "age":
            grid = list(range(scenario.sweep.age_threshold_max + 1))
        elif family in ("change", "aoii"):
            grid = [None]
        else:
            raise ParameterError(f"unknown sweep family {family!r}")
        results.extend(sweep_rate_vs_cost(scenario.model, family, grid, decision,
                                          horizon, seeds,
                                          state_values=scenario.state_values,
                                          initial=initial))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = [write_sweep_csv(out_dir / "sweep.csv", results)]
    _write_manifest(out_dir, args, args.scenario, seed, outputs, started)
    print(f"swept {len(results)} points over families {', '.join(families)}")
    return 0


def cmd_compare(args):
    scenario = _apply_overrides(load_scenario(args.scenario), args)
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    algorithm = args.algorithm or scenario.solver.algorithm
    rows = compare_policies(scenario, algorithm=algorithm,
                            include_classic=args.include_classic)
    failures = [r for r in rows if "error" in r]
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = [write_compare_csv(out_dir / "compare.csv",
                                 [r for r in rows if "error" not in r])]
    decomp_rows = decomposition_grid(scenario, algorithm=algorithm)
    outputs.append(write_decomp_csv(out_dir / "decomp.csv", decomp_rows))
    _write_manifest(out_dir, args, args.scenario, scenario.solver.seed, outputs, started)
    for failure in failures:
        print(f"cell pS={failure['pS']} CS={failure['CS']} failed: {failure['error']}",
              file=sys.stderr)
    print(f"compared {len(rows)} rows over {len(scenario.grid.success_probs)}x"
          f"{len(scenario.grid.sampling_costs)} grid")
    return 1 if failures else 0


def cmd_gap(args):
    scenario = _apply_overrides(load_scenario(args.scenario), args)
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    rows = optimality_gap(scenario)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = [write_gap_csv(out_dir / "gap.csv", rows)]
    _write_manifest(out_dir, args, args.scenario, scenario.solver.seed, outputs, started)
    worst = max(rows, key=lambda r: r["gap"])
    print(f"max gap {worst['gap']!r} at pS={worst['pS']} CS={worst['CS']}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="goaltensor",
        description="Goal-cost tensor solvers and closed-loop sampling benchmarks")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("--scenario", required=True, help="scenario JSON path")
        if out:
            p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--epsilon", type=float, default=None)

    p = sub.add_parser("validate", help="schema-check a scenario file")
    p.add_argument("--scenario", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("solve", help="solve the joint sampling/actuation problem")
    common(p)
    p.add_argument("--algorithm", choices=["brute", "jesp", "rvi-fixed-decision"],
                   default=None)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", help="run the closed loop and write trace.csv")
    common(p)
    p.add_argument("--policy", default="codesign",
                   choices=["codesign", "aoii", "mse", "change", "uniform", "age"])
    p.add_argument("--param", type=float, default=None,
                   help="period for uniform, threshold for age")
    p.add_argument("--policy-file", default=None,
                   help="policy.json written by the solve command")
    p.add_argument("--horizon", type=int, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="simulate cost-versus-rate curves, write sweep.csv")
    common(p)
    p.add_argument("--families", default="uniform,age")
    p.add_argument("--horizon", type=int, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="co-design versus baselines per grid cell")
    common(p)
    p.add_argument("--algorithm", choices=["brute", "jesp"], default=None)
    p.add_argument("--grid", default=None, help="override, e.g. 'ps=0.2,0.6;cs=0,4'")
    p.add_argument("--include-classic", action="store_true",
                   help="also evaluate uniform-best and change-aware")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("gap", help="exact-versus-equilibrium gap per grid cell")
    common(p)
    p.add_argument("--grid", default=None)
    p.set_defaults(func=cmd_gap)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return 1
    except GoalTensorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
