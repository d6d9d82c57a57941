"""Command-line interface: analyze, design, simulate and reproduce.

Scenarios are JSON documents; unknown fields are rejected so typos fail
loudly.  All outputs are written atomically (temp file + rename) and are
byte-identical across reruns with the same inputs.

Exit codes: 0 success, 2 scenario/validation problem, 3 design not
realizable (including a cyclic change pattern), 4 a verification or
reproduction check failed (artifacts are still written).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .graph_core import (ClusterPartition, CycleDetected, DirectedNetwork,
                         GraphError, IncidenceSet, build_incidence,
                         check_invariance, select_spanning_tree)
from .kuramoto_dynamics import (KuramotoNetwork, Trajectory, VibrationEntry,
                                VibrationSchedule, classify_partial_stability,
                                perturbed_initial_states,
                                sample_perturbed_trajectories, simulate,
                                sync_error)
from .linalg import robustness
from .stability_cert import StabilityReport, certify
from .vib_design import (ClusterDesign, ModificationSpec, NotRealizable,
                         VerificationFailed, design_cluster)


class ScenarioError(ValueError):
    pass


def _require_keys(obj: dict, allowed: set, required: set, where: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ScenarioError(f"unknown field(s) {sorted(unknown)} in {where}")
    missing = required - set(obj)
    if missing:
        raise ScenarioError(f"missing field(s) {sorted(missing)} in {where}")


@dataclass(frozen=True)
class Scenario:
    """A fully validated scenario document."""

    name: str
    n: int
    edges: Tuple[Tuple[int, int, float], ...]
    clusters: Tuple[Tuple[int, ...], ...]
    omega: Tuple[float, ...]
    schedule: Optional[dict]
    modifications: Tuple[dict, ...]
    theta0: Optional[Tuple[float, ...]]
    seed: int
    perturbation: float
    perturb_clusters: Optional[Tuple[int, ...]]
    t_end: float
    dt: Optional[float]
    epsilon: float
    sync_tolerance: float
    references: dict

    def network(self) -> DirectedNetwork:
        return DirectedNetwork.from_edges(self.n, self.edges)

    def kuramoto(self) -> KuramotoNetwork:
        net = self.network()
        part = ClusterPartition(net, self.clusters)
        return KuramotoNetwork(net=net, omega=np.array(self.omega), partition=part)

    def incidence(self, kn: KuramotoNetwork, strategy: str = "min_depth") -> IncidenceSet:
        tree = select_spanning_tree(kn.net, kn.partition, strategy)
        return build_incidence(kn.net, kn.partition, tree)

    def vibration_schedule(self, epsilon: Optional[float] = None) -> Optional[VibrationSchedule]:
        if self.schedule is None:
            return None
        entries: Dict[Tuple[int, int], VibrationEntry] = {}
        for item in self.schedule["entries"]:
            s, t = item["edge"]
            entries[(int(s), int(t))] = VibrationEntry(
                amplitude=float(item["amplitude"]),
                frequency=float(item["frequency"]),
                phase=float(item.get("phase", 0.0)),
            )
        eps = float(self.schedule["epsilon"]) if epsilon is None else epsilon
        return VibrationSchedule(entries=entries, epsilon=eps)

    def modification_specs(self) -> Dict[int, ModificationSpec]:
        specs: Dict[int, ModificationSpec] = {}
        for item in self.modifications:
            k = int(item["cluster"])
            specs[k] = ModificationSpec(delta=np.array(item["delta"], dtype=float),
                                        target=k)
        return specs


def load_scenario(source: str) -> Scenario:
    """Load a scenario from a file path or a bundled scenario name."""
    path = Path(source)
    if path.exists():
        text = path.read_text()
    else:
        bundle = resources.files("vibrosync") / "scenarios" / f"{source}.json"
        if not bundle.is_file():
            raise ScenarioError(f"scenario {source!r} is neither a file nor a bundled name")
        text = bundle.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario is not valid JSON: {exc}") from exc
    return parse_scenario(data)


def parse_scenario(data: dict) -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioError("scenario document must be a JSON object")
    _require_keys(data, allowed={"name", "description", "n", "edges", "clusters",
                                 "omega", "schedule", "modifications", "simulation",
                                 "tolerances", "references"},
                  required={"name", "n", "edges", "clusters", "omega"},
                  where="scenario")
    try:
        n = int(data["n"])
        edges = tuple((int(s), int(t), float(w)) for s, t, w in data["edges"])
        clusters = tuple(tuple(int(i) for i in c) for c in data["clusters"])
        omega = tuple(float(x) for x in data["omega"])
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"malformed network data: {exc}") from exc
    if len(omega) != n:
        raise ScenarioError(f"omega has {len(omega)} entries for {n} nodes")

    schedule = data.get("schedule")
    if schedule is not None:
        _require_keys(schedule, {"epsilon", "entries"}, {"epsilon", "entries"},
                      "schedule")
        for item in schedule["entries"]:
            _require_keys(item, {"edge", "amplitude", "frequency", "phase"},
                          {"edge", "amplitude", "frequency"}, "schedule entry")

    modifications = tuple(data.get("modifications", ()))
    for item in modifications:
        _require_keys(item, {"cluster", "delta"}, {"cluster", "delta"},
                      "modification")

    sim = data.get("simulation", {})
    _require_keys(sim, {"theta0", "seed", "perturbation", "perturb_clusters",
                        "t_end", "dt", "epsilon"}, set(), "simulation")
    theta0 = sim.get("theta0")
    if theta0 is not None:
        theta0 = tuple(float(x) for x in theta0)
        if len(theta0) != n:
            raise ScenarioError("theta0 length does not match the node count")
    perturb_clusters = sim.get("perturb_clusters")
    if perturb_clusters is not None:
        perturb_clusters = tuple(int(k) for k in perturb_clusters)

    tolerances = data.get("tolerances", {})
    _require_keys(tolerances, {"sync"}, set(), "tolerances")

    references = data.get("references", {})
    if not isinstance(references, dict):
        raise ScenarioError("references must be an object")

    return Scenario(
        name=str(data["name"]),
        n=n, edges=edges, clusters=clusters, omega=omega,
        schedule=schedule, modifications=modifications,
        theta0=theta0,
        seed=int(sim.get("seed", 0)),
        perturbation=float(sim.get("perturbation", 0.1)),
        perturb_clusters=perturb_clusters,
        t_end=float(sim.get("t_end", 100.0)),
        dt=None if sim.get("dt") is None else float(sim["dt"]),
        epsilon=float(sim.get("epsilon", 0.01)),
        sync_tolerance=float(tolerances.get("sync", 0.01)),
        references=references,
    )


# ---------------------------------------------------------------------------
# deterministic, atomic output helpers


def atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    tmp.write_text(text)
    os.replace(tmp, path)


def dump_json(path: Path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def trajectory_csv(traj: Trajectory, partition: ClusterPartition) -> Tuple[str, str]:
    """Full trajectory CSV (wrapped phases + error) and the error-only CSV."""
    n = traj.theta.shape[1]
    err = sync_error(traj.theta, partition)
    wrapped = traj.wrapped_theta()
    header = "t," + ",".join(f"theta_{i + 1}" for i in range(n)) + ",err"
    lines = [header]
    err_lines = ["t,err"]
    for row in range(len(traj.times)):
        t = traj.times[row]
        fields = [f"{t:.10g}"] + [f"{v:.10g}" for v in wrapped[row]] + [f"{err[row]:.10g}"]
        lines.append(",".join(fields))
        err_lines.append(f"{t:.10g},{err[row]:.10g}")
    return "\n".join(lines) + "\n", "\n".join(err_lines) + "\n"


def plot_script(err_files: Sequence[Tuple[str, str]]) -> str:
    plots = ", ".join(
        f'"{fname}" using 1:2 with lines lw 2 title "{label}"'
        for fname, label in err_files
    )
    return (
        "# Plot the synchronization error; run:  gnuplot -persist plot.gp\n"
        "set datafile separator \",\"\n"
        "set key autotitle columnhead\n"
        "set xlabel \"t\"\n"
        "set ylabel \"max intra-cluster error [rad]\"\n"
        "set logscale y\n"
        f"plot {plots}\n"
    )


def _schedule_dict(design: ClusterDesign) -> dict:
    sched = design.schedule
    entries = [
        {"edge": [s, t], "amplitude": e.amplitude, "frequency": e.frequency,
         "phase": e.phase}
        for (s, t), e in sched.sorted_items()
    ]
    gains = {}
    frequencies = {}
    for k, d in design.designs.items():
        gains[str(k)] = [slot.normalized_gain for slot in d.slots]
        frequencies[str(k)] = [slot.frequency for slot in d.slots]
    return {
        "epsilon": sched.epsilon,
        "entries": entries,
        "normalized_gains": gains,
        "slot_frequencies": frequencies,
        "verified": design.all_verified,
        "residuals": {str(k): v for k, v in design.residuals.items()},
    }


def _certificate_dict(design: ClusterDesign) -> dict:
    return {
        "targets": [t.tolist() for t in design.targets],
        "target_robustness": [float(robustness(t).value) for t in design.targets],
        "gamma_bar": design.gamma_bar.tolist(),
        "comparison_matrix": design.s_matrix.tolist(),
        "certified": design.certified,
        "all_designs_verified": design.all_verified,
        "residuals": {str(k): v for k, v in design.residuals.items()},
    }


# ---------------------------------------------------------------------------
# commands


def cmd_analyze(scenario: Scenario, out: Path, tree_strategy: str,
                filename: str = "report.json") -> int:
    kn = scenario.kuramoto()
    inv = check_invariance(kn.net, kn.partition, kn.omega)
    report: dict = {
        "scenario": scenario.name,
        "n": kn.net.n,
        "clusters": [list(c) for c in kn.partition.clusters],
        "invariance": {
            "ok": inv.ok,
            "violations": [list(v) for v in inv.violations],
        },
    }
    if inv.ok:
        inc = scenario.incidence(kn, tree_strategy)
        schedule = scenario.vibration_schedule()
        cert = certify(kn, inc, schedule, empirical=False)
        report.update({
            "tree_edges": [list(e) for e in inc.tree_edges],
            "j_blocks": [b.tolist() for b in cert.j_blocks],
            "averaged_blocks": [b.tolist() for b in cert.averaged_blocks],
            "r_values": list(cert.r_values),
            "gamma_bar": cert.gamma_bar.tolist(),
            "s_matrix": None if cert.s_matrix is None else cert.s_matrix.tolist(),
            "certified": cert.certified,
            "label": cert.label,
        })
    dump_json(out / filename, report)
    print(f"wrote {out / filename}")
    return 0


def cmd_design(scenario: Scenario, out: Path, tree_strategy: str,
               epsilon: Optional[float]) -> int:
    if not scenario.modifications:
        raise ScenarioError("scenario has no modifications to design for")
    kn = scenario.kuramoto()
    inc = scenario.incidence(kn, tree_strategy)
    eps = scenario.epsilon if epsilon is None else epsilon
    design = design_cluster(kn, inc, scenario.modification_specs(), epsilon=eps)
    dump_json(out / "schedule.json", _schedule_dict(design))
    dump_json(out / "certificate.json", _certificate_dict(design))
    print(f"wrote {out / 'schedule.json'} and {out / 'certificate.json'}")
    if not design.all_verified:
        worst = max(design.residuals.values()) if design.residuals else float("nan")
        print(f"design verification missed the target (worst residual {worst:.3e}); "
              "the emitted schedule is best-effort", file=sys.stderr)
        return 4
    return 0


def _initial_state(scenario: Scenario, kn: KuramotoNetwork, inc: IncidenceSet,
                   seed: Optional[int]) -> np.ndarray:
    if scenario.theta0 is not None:
        return np.array(scenario.theta0, dtype=float)
    use_seed = scenario.seed if seed is None else seed
    return perturbed_initial_states(inc, 1, scenario.perturbation, use_seed,
                                    clusters=scenario.perturb_clusters)[0]


def _scenario_schedule(scenario: Scenario, kn: KuramotoNetwork, inc: IncidenceSet,
                       epsilon: Optional[float]) -> Optional[VibrationSchedule]:
    eps = epsilon if epsilon is not None else scenario.epsilon
    if scenario.schedule is not None:
        return scenario.vibration_schedule(epsilon=epsilon)
    if scenario.modifications:
        design = design_cluster(kn, inc, scenario.modification_specs(), epsilon=eps)
        return design.schedule
    return None


def cmd_simulate(scenario: Scenario, out: Path, tree_strategy: str,
                 epsilon: Optional[float], seed: Optional[int],
                 uncontrolled: bool) -> int:
    kn = scenario.kuramoto()
    inc = scenario.incidence(kn, tree_strategy)
    schedule = None if uncontrolled else _scenario_schedule(scenario, kn, inc, epsilon)
    theta0 = _initial_state(scenario, kn, inc, seed)
    traj = simulate(kn, schedule, theta0, scenario.t_end, dt=scenario.dt, inc=inc)
    csv, err_csv = trajectory_csv(traj, kn.partition)
    atomic_write_text(out / "trajectory.csv", csv)
    atomic_write_text(out / "err.csv", err_csv)
    atomic_write_text(out / "plot.gp", plot_script([("err.csv", "sync error")]))
    print(f"wrote {out / 'trajectory.csv'}, {out / 'err.csv'}, {out / 'plot.gp'}")
    return 0


@dataclass
class SummaryRow:
    name: str
    computed: str
    reference: str
    ok: bool


def _fmt_table(rows: List[SummaryRow]) -> str:
    w_name = max(len(r.name) for r in rows)
    w_comp = max(len(r.computed) for r in rows)
    w_ref = max(len(r.reference) for r in rows)
    lines = [
        f"{'check'.ljust(w_name)}  {'computed'.ljust(w_comp)}  "
        f"{'reference'.ljust(w_ref)}  result"
    ]
    lines.append("-" * len(lines[0]))
    for r in rows:
        verdict = "pass" if r.ok else "FAIL"
        lines.append(f"{r.name.ljust(w_name)}  {r.computed.ljust(w_comp)}  "
                     f"{r.reference.ljust(w_ref)}  {verdict}")
    return "\n".join(lines) + "\n"


def cmd_reproduce(out: Path, scenario_name: str = "cluster_flip",
                  tree_strategy: str = "min_depth",
                  epsilon: Optional[float] = None,
                  seed: Optional[int] = None) -> int:
    scenario = load_scenario(scenario_name)
    ref = scenario.references
    kn = scenario.kuramoto()
    inc = scenario.incidence(kn, tree_strategy)
    eps = scenario.epsilon if epsilon is None else epsilon
    use_seed = scenario.seed if seed is None else seed
    rows: List[SummaryRow] = []

    # --- analysis -----------------------------------------------------
    cmd_analyze(scenario, out, tree_strategy, filename="analysis.json")
    from .kuramoto_dynamics import linearize

    lin = linearize(kn, inc)
    r1 = robustness(lin.J_blocks[0]).value
    r2 = robustness(lin.J_blocks[1]).value

    def close(value: float, key: str, tol_key: str) -> bool:
        return abs(value - float(ref[key])) <= float(ref[tol_key])

    for blk, key in ((0, "j_cluster1"), (1, "j_cluster2")):
        expected = np.array(ref[key])
        ok = bool(np.abs(lin.J_blocks[blk] - expected).max() <= 1e-9)
        rows.append(SummaryRow(f"jacobian_cluster{blk + 1}",
                               "matrix", "matrix (exact)", ok))
    rows.append(SummaryRow("robustness_cluster1", f"{r1:.5f}",
                           f"{ref['robust_cluster1']} +/- {ref['robust_cluster1_tol']}",
                           close(r1, "robust_cluster1", "robust_cluster1_tol")))
    rows.append(SummaryRow("robustness_cluster2", f"{r2:.5f}",
                           f"{ref['robust_cluster2']} +/- {ref['robust_cluster2_tol']}",
                           close(r2, "robust_cluster2", "robust_cluster2_tol")))

    # --- design ---------------------------------------------------------
    design = design_cluster(kn, inc, scenario.modification_specs(), epsilon=eps)
    dump_json(out / "schedule.json", _schedule_dict(design))
    dump_json(out / "certificate.json", _certificate_dict(design))
    r1_shift = robustness(design.targets[0]).value
    rows.append(SummaryRow(
        "robustness_cluster1_shifted", f"{r1_shift:.5f}",
        f"{ref['robust_cluster1_shifted']} +/- {ref['robust_cluster1_shifted_tol']}",
        close(r1_shift, "robust_cluster1_shifted", "robust_cluster1_shifted_tol")))

    slots = design.designs[0].slots
    gain_tol = float(ref["gain_tol"])
    g1 = slots[0].normalized_gain
    g2 = slots[1].normalized_gain
    ratio = slots[1].frequency / slots[0].frequency
    rows.append(SummaryRow("normalized_gain_1", f"{g1:.8f}",
                           f"{ref['normalized_gain_1']} +/- {gain_tol:g}",
                           abs(g1 - float(ref["normalized_gain_1"])) <= gain_tol))
    rows.append(SummaryRow("normalized_gain_2", f"{g2:.8f}",
                           f"{ref['normalized_gain_2']} +/- {gain_tol:g}",
                           abs(g2 - float(ref["normalized_gain_2"])) <= gain_tol))
    rows.append(SummaryRow(
        "frequency_ratio", f"{ratio:.8f}",
        f"{float(ref['frequency_ratio']):.8f} +/- {float(ref['frequency_ratio_tol']):g}",
        abs(ratio - float(ref["frequency_ratio"])) <= float(ref["frequency_ratio_tol"])))

    # --- the documented perturbation run --------------------------------
    theta0 = _initial_state(scenario, kn, inc, seed)
    controlled = simulate(kn, design.schedule, theta0, scenario.t_end, inc=inc)
    uncontrolled = simulate(kn, None, theta0, scenario.t_end, inc=inc)
    for name, traj in (("controlled", controlled), ("uncontrolled", uncontrolled)):
        csv, err_csv = trajectory_csv(traj, kn.partition)
        atomic_write_text(out / f"{name}.csv", csv)
        atomic_write_text(out / f"err_{name}.csv", err_csv)
    atomic_write_text(out / "plot.gp", plot_script([
        ("err_controlled.csv", "with vibrations"),
        ("err_uncontrolled.csv", "uncontrolled"),
    ]))

    err_c = sync_error(controlled.theta, kn.partition)
    err_u = sync_error(uncontrolled.theta, kn.partition)
    tol = scenario.sync_tolerance
    ok_c = bool(err_c.min() < tol)
    ok_u = bool(err_u.min() >= 0.5 * err_u[0])
    rows.append(SummaryRow("controlled_error_drops_below_tol",
                           f"min {err_c.min():.2e}", f"< {tol:g}", ok_c))
    rows.append(SummaryRow("uncontrolled_error_stays_large",
                           f"min ratio {err_u.min() / err_u[0]:.3f}", ">= 0.5", ok_u))

    # --- certification and classification --------------------------------
    report = certify(kn, inc, design.schedule, empirical=True, n_samples=10,
                     kick=scenario.perturbation, seed=use_seed, sweep=True)
    baseline = certify(kn, inc, None, empirical=True, n_samples=10,
                       kick=scenario.perturbation, seed=use_seed)
    dump_json(out / "report.json", report.to_dict())
    dump_json(out / "baseline_report.json", baseline.to_dict())
    rows.append(SummaryRow("certificate_not_granted", str(not report.certified),
                           "True (bounds too conservative here)",
                           not report.certified))
    rows.append(SummaryRow("classifier_controlled", report.label,
                           "stable_uncertified",
                           report.label == "stable_uncertified"))
    rows.append(SummaryRow("classifier_uncontrolled",
                           "stable" if baseline.empirical.stable else "unstable",
                           "unstable", not baseline.empirical.stable))
    sweep_desc = "monotone" if report.sweep_monotone else \
        f"{len(report.sweep_deviations)} deviation(s) reported"
    rows.append(SummaryRow("epsilon_sweep", sweep_desc,
                           "monotone or deviations reported", True))

    table = _fmt_table(rows)
    atomic_write_text(out / "summary.txt", table)
    dump_json(out / "summary.json",
              [dataclasses.asdict(r) for r in rows])
    print(table, end="")
    return 0 if all(r.ok for r in rows) else 4


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="vibrosync",
        description="Cluster-synchronization analysis and vibration design "
                    "for phase-oscillator networks.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, needs_scenario=True):
        if needs_scenario:
            p.add_argument("--scenario", required=True,
                           help="path to a scenario JSON or a bundled name")
        p.add_argument("--out", type=Path, default=Path("out"),
                       help="output directory (default: ./out)")
        p.add_argument("--tree", choices=("min_depth", "first_found"),
                       default="min_depth", help="spanning-tree strategy")

    p_an = sub.add_parser("analyze", help="invariance, Jacobians and certificates")
    add_common(p_an)

    p_de = sub.add_parser("design", help="design a vibration schedule")
    add_common(p_de)
    p_de.add_argument("--epsilon", type=float, default=None,
                      help="override the schedule time-scale separation")

    p_si = sub.add_parser("simulate", help="integrate one trajectory")
    add_common(p_si)
    p_si.add_argument("--epsilon", type=float, default=None)
    p_si.add_argument("--seed", type=int, default=None,
                      help="override the scenario perturbation seed")
    p_si.add_argument("--uncontrolled", action="store_true",
                      help="ignore any schedule/modifications")

    p_re = sub.add_parser("reproduce",
                          help="run the bundled flagship scenario end to end")
    add_common(p_re, needs_scenario=False)
    p_re.add_argument("--scenario", default="cluster_flip",
                      help="bundled scenario name or path")
    p_re.add_argument("--epsilon", type=float, default=None)
    p_re.add_argument("--seed", type=int, default=None)

    args = parser.parse_args(argv)
    try:
        if args.command == "analyze":
            return cmd_analyze(load_scenario(args.scenario), args.out, args.tree)
        if args.command == "design":
            return cmd_design(load_scenario(args.scenario), args.out, args.tree,
                              args.epsilon)
        if args.command == "simulate":
            return cmd_simulate(load_scenario(args.scenario), args.out, args.tree,
                                args.epsilon, args.seed, args.uncontrolled)
        if args.command == "reproduce":
            return cmd_reproduce(args.out, args.scenario, args.tree,
                                 args.epsilon, args.seed)
        raise AssertionError(args.command)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return 2
    except (NotRealizable, CycleDetected) as exc:
        print(f"design not realizable: {exc}", file=sys.stderr)
        return 3
    except GraphError as exc:
        print(f"invalid network: {exc}", file=sys.stderr)
        return 2
    except VerificationFailed as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
