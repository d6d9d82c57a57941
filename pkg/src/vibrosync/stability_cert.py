"""Stability certificates for cluster synchronization under vibration.

Combines averaged per-cluster Jacobians, Lyapunov robustness margins and
inter-cluster perturbation bounds into a comparison matrix whose M-matrix
property certifies partial synchronization; an empirical classifier and an
epsilon sweep accompany the certificate so uncertified-but-stable regimes
are reported as such rather than lost.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .graph_core import IncidenceSet
from .kuramoto_dynamics import (Classification, KuramotoNetwork,
                                VibrationSchedule, classification_horizon,
                                classify_partial_stability,
                                cluster_vibration_matrix, linearize,
                                perturbation_bounds,
                                sample_perturbed_trajectories,
                                schedule_slot_matrices, _default_incidence)
from .linalg import NotHurwitz, conjugated_average, is_hurwitz, is_m_matrix, robustness

default_sweep_epsilons = (0.1, 0.01, 0.001)
sweep_samples = 3
sweep_horizon = 60.0
sweep_slack = 0.1
averaging_oversampling = 48


def averaged_jacobians(j_blocks: Sequence[np.ndarray],
                       schedule: Optional[VibrationSchedule],
                       inc: IncidenceSet) -> Tuple[np.ndarray, ...]:
    """Per-cluster averaged Jacobians under a vibration schedule.

    Clusters without vibrated edges keep their Jacobian; the others are
    conjugate-averaged along the flow of their reduced vibration matrix.
    """
    if schedule is None or not schedule.entries:
        return tuple(np.array(b, dtype=float, copy=True) for b in j_blocks)
    terms = schedule_slot_matrices(inc, schedule)
    out: List[np.ndarray] = []
    for k, blk in enumerate(j_blocks):
        p = cluster_vibration_matrix(terms[k])
        if p is None:
            out.append(np.array(blk, dtype=float, copy=True))
            continue
        freqs = [f for _, f, _, _ in terms[k]]
        out.append(conjugated_average(
            blk, p,
            base_period=2.0 * math.pi / min(freqs),
            dt=2.0 * math.pi / max(freqs) / averaging_oversampling,
        ))
    return tuple(out)


def build_S(r_values: Sequence[float], gamma_bar: np.ndarray) -> np.ndarray:
    """Comparison matrix: robustness margins on the diagonal against the
    inter-cluster gains; its M-matrix property is the certificate."""
    gamma = np.asarray(gamma_bar, dtype=float)
    r = len(r_values)
    if gamma.shape != (r, r):
        raise ValueError("gamma_bar shape does not match the number of clusters")
    s = -gamma.copy()
    for k in range(r):
        s[k, k] = r_values[k] - gamma[k, k]
    return s


@dataclass(frozen=True)
class SweepPoint:
    epsilon: float
    stable: bool
    worst_slope: float
    worst_final_ratio: float


@dataclass(frozen=True)
class StabilityReport:
    """Everything the certification pipeline produced for one scenario."""

    n: int
    clusters: Tuple[Tuple[int, ...], ...]
    tree_edges: Tuple[Tuple[int, int], ...]
    epsilon: Optional[float]
    j_blocks: Tuple[np.ndarray, ...]
    averaged_blocks: Tuple[np.ndarray, ...]
    hurwitz_flags: Tuple[bool, ...]
    r_values: Tuple[Optional[float], ...]
    gamma_bar: np.ndarray
    s_matrix: Optional[np.ndarray]
    s_is_m_matrix: bool
    certified: bool
    label: str
    empirical: Optional[Classification] = None
    sweep: Optional[Tuple[SweepPoint, ...]] = None
    sweep_monotone: Optional[bool] = None
    sweep_deviations: Tuple[str, ...] = ()

    def to_dict(self) -> dict:
        def arr(a):
            return None if a is None else np.asarray(a).tolist()

        emp = None
        if self.empirical is not None:
            emp = {
                "stable": self.empirical.stable,
                "slopes": list(self.empirical.slopes),
                "initial_norms": list(self.empirical.initial_norms),
                "final_norms": list(self.empirical.final_norms),
            }
        sweep = None
        if self.sweep is not None:
            sweep = [dataclasses.asdict(pt) for pt in self.sweep]
        return {
            "n": self.n,
            "clusters": [list(c) for c in self.clusters],
            "tree_edges": [list(e) for e in self.tree_edges],
            "epsilon": self.epsilon,
            "j_blocks": [arr(b) for b in self.j_blocks],
            "averaged_blocks": [arr(b) for b in self.averaged_blocks],
            "hurwitz_flags": list(self.hurwitz_flags),
            "r_values": list(self.r_values),
            "gamma_bar": arr(self.gamma_bar),
            "s_matrix": arr(self.s_matrix),
            "s_is_m_matrix": self.s_is_m_matrix,
            "certified": self.certified,
            "label": self.label,
            "empirical": emp,
            "sweep": sweep,
            "sweep_monotone": self.sweep_monotone,
            "sweep_deviations": list(self.sweep_deviations),
        }

    @staticmethod
    def from_dict(data: dict) -> "StabilityReport":
        emp = None
        if data.get("empirical") is not None:
            e = data["empirical"]
            emp = Classification(stable=e["stable"], slopes=tuple(e["slopes"]),
                                 initial_norms=tuple(e["initial_norms"]),
                                 final_norms=tuple(e["final_norms"]))
        sweep = None
        if data.get("sweep") is not None:
            sweep = tuple(SweepPoint(**pt) for pt in data["sweep"])
        return StabilityReport(
            n=data["n"],
            clusters=tuple(tuple(c) for c in data["clusters"]),
            tree_edges=tuple(tuple(e) for e in data["tree_edges"]),
            epsilon=data["epsilon"],
            j_blocks=tuple(np.array(b) for b in data["j_blocks"]),
            averaged_blocks=tuple(np.array(b) for b in data["averaged_blocks"]),
            hurwitz_flags=tuple(bool(f) for f in data["hurwitz_flags"]),
            r_values=tuple(data["r_values"]),
            gamma_bar=np.array(data["gamma_bar"]),
            s_matrix=None if data["s_matrix"] is None else np.array(data["s_matrix"]),
            s_is_m_matrix=data["s_is_m_matrix"],
            certified=data["certified"],
            label=data["label"],
            empirical=emp,
            sweep=sweep,
            sweep_monotone=data.get("sweep_monotone"),
            sweep_deviations=tuple(data.get("sweep_deviations", ())),
        )


def _sweep(kn: KuramotoNetwork, inc: IncidenceSet, schedule: VibrationSchedule,
           seed: int, kick: float) -> Tuple[Tuple[SweepPoint, ...], bool, Tuple[str, ...]]:
    points: List[SweepPoint] = []
    for eps in default_sweep_epsilons:
        sched_eps = VibrationSchedule(entries=dict(schedule.entries), epsilon=eps,
                                      intra_only=schedule.intra_only)
        trajs = sample_perturbed_trajectories(kn, inc, sched_eps,
                                              n_samples=sweep_samples, kick=kick,
                                              seed=seed, t_end=sweep_horizon)
        cls = classify_partial_stability(trajs)
        ratios = [f / max(i, 1e-300) for i, f in
                  zip(cls.initial_norms, cls.final_norms)]
        points.append(SweepPoint(epsilon=eps, stable=cls.stable,
                                 worst_slope=float(max(cls.slopes)),
                                 worst_final_ratio=float(max(ratios))))
    deviations: List[str] = []
    for prev, cur in zip(points, points[1:]):
        if cur.worst_final_ratio > prev.worst_final_ratio * (1.0 + sweep_slack):
            deviations.append(
                f"final error ratio grew from {prev.worst_final_ratio:.3e} at "
                f"eps={prev.epsilon:g} to {cur.worst_final_ratio:.3e} at eps={cur.epsilon:g}"
            )
        if prev.stable and not cur.stable:
            deviations.append(
                f"stability lost when refining eps={prev.epsilon:g} -> {cur.epsilon:g}"
            )
    return tuple(points), not deviations, tuple(deviations)


def certify(kn: KuramotoNetwork, inc: Optional[IncidenceSet] = None,
            schedule: Optional[VibrationSchedule] = None, *,
            empirical: bool = True, n_samples: int = 10, kick: float = 0.1,
            seed: int = 0, t_end: Optional[float] = None,
            sweep: bool = False) -> StabilityReport:
    """Run the full certification pipeline on a (possibly vibrated) network.

    The certificate (M-matrix test on the comparison matrix) and the
    empirical classification are reported independently: a schedule can be
    empirically stabilizing while remaining uncertified.
    """
    if inc is None:
        inc = _default_incidence(kn)
    lin = linearize(kn, inc)
    averaged = averaged_jacobians(lin.J_blocks, schedule, inc)
    hurwitz_flags = tuple(bool(is_hurwitz(b)) for b in averaged)
    r_values: List[Optional[float]] = []
    for blk, ok in zip(averaged, hurwitz_flags):
        if not ok:
            r_values.append(None)
            continue
        try:
            r_values.append(float(robustness(blk).value))
        except NotHurwitz:
            r_values.append(None)
    gamma = perturbation_bounds(kn, inc, schedule)
    if all(v is not None for v in r_values):
        s_matrix = build_S([float(v) for v in r_values], gamma)
        s_is_m = bool(is_m_matrix(s_matrix))
    else:
        s_matrix = None
        s_is_m = False
    certified = s_is_m

    classification: Optional[Classification] = None
    if empirical:
        horizon = t_end if t_end is not None else classification_horizon(averaged)
        trajs = sample_perturbed_trajectories(kn, inc, schedule,
                                              n_samples=n_samples, kick=kick,
                                              seed=seed, t_end=horizon)
        classification = classify_partial_stability(trajs)

    if certified:
        label = "certified"
    elif classification is not None and classification.stable:
        label = "stable_uncertified"
    elif classification is not None:
        label = "not_stabilized"
    else:
        label = "uncertified"

    sweep_points = None
    sweep_monotone = None
    sweep_dev: Tuple[str, ...] = ()
    if sweep and schedule is not None and schedule.entries:
        sweep_points, sweep_monotone, sweep_dev = _sweep(kn, inc, schedule, seed, kick)

    return StabilityReport(
        n=kn.net.n,
        clusters=kn.partition.clusters,
        tree_edges=tuple(inc.tree_edges),
        epsilon=None if schedule is None else schedule.epsilon,
        j_blocks=lin.J_blocks,
        averaged_blocks=averaged,
        hurwitz_flags=hurwitz_flags,
        r_values=tuple(r_values),
        gamma_bar=gamma,
        s_matrix=s_matrix,
        s_is_m_matrix=s_is_m,
        certified=certified,
        label=label,
        empirical=classification,
        sweep=sweep_points,
        sweep_monotone=sweep_monotone,
        sweep_deviations=sweep_dev,
    )
