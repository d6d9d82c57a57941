"""Phase-oscillator networks: simulation, synchronization errors,
linearization around cluster-synchronized motion and perturbation bounds."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .graph_core import (ClusterPartition, DirectedNetwork, GraphError,
                         IncidenceSet, build_incidence, check_invariance,
                         select_spanning_tree, Edge)
from .linalg import StepTooCoarse

steps_per_period = 40
default_oversampling = 50
max_recorded_samples = 100_000
rational_ratio_tolerance = 1e-9
max_rational_denominator = 32
invariance_tolerance = 1e-9
classification_slope_threshold = -1e-3
classification_decay_factor = 10.0
classification_converged_floor = 1e-9
classification_horizon_cap = 500.0
classification_horizon_rates = 200.0
envelope_safety = 1.05


class NonFiniteState(RuntimeError):
    pass


class InvarianceViolated(ValueError):
    def __init__(self, message: str, violations):
        super().__init__(message)
        self.violations = violations


@dataclass(frozen=True)
class KuramotoNetwork:
    """A coupled phase-oscillator network with a cluster partition."""

    net: DirectedNetwork
    omega: np.ndarray
    partition: ClusterPartition

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=float)
        if omega.shape != (self.net.n,):
            raise GraphError("omega must have one entry per node")
        object.__setattr__(self, "omega", omega)
        if self.partition.net != self.net:
            raise GraphError("partition belongs to a different network")


@dataclass(frozen=True)
class VibrationEntry:
    amplitude: float
    frequency: float
    phase: float = 0.0


@dataclass(frozen=True)
class VibrationSchedule:
    """Open-loop sinusoidal weight modulations on existing edges.

    Edge ``(s, t)`` receives the additive weight
    ``amplitude / epsilon * sin(frequency * t / epsilon + phase)``.
    Distinct frequencies must not be in an (approximately) rational ratio;
    several edges may share one frequency, which is how a single carrier
    wave is split across an edge pair.
    """

    entries: Dict[Edge, VibrationEntry] = field(compare=False)
    epsilon: float = 0.01
    intra_only: bool = True

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        freqs: List[float] = []
        for e, entry in self.entries.items():
            if entry.frequency <= 0:
                raise ValueError(f"vibration frequency on edge {e} must be positive")
            if entry.amplitude == 0.0:
                raise ValueError(f"vibration amplitude on edge {e} must be nonzero")
            freqs.append(entry.frequency)
        distinct: List[float] = []
        for f in freqs:
            if not any(abs(f - g) <= 1e-12 * max(f, g) for g in distinct):
                distinct.append(f)
        for i in range(len(distinct)):
            for jj in range(i + 1, len(distinct)):
                ratio = distinct[i] / distinct[jj]
                for q in range(1, max_rational_denominator + 1):
                    p = round(ratio * q)
                    if p > 0 and abs(ratio - p / q) < rational_ratio_tolerance:
                        raise ValueError(
                            f"frequencies {distinct[i]:g} and {distinct[jj]:g} are in a "
                            f"rational ratio {p}/{q}; they must be incommensurable"
                        )

    @property
    def max_frequency(self) -> float:
        return max((e.frequency for e in self.entries.values()), default=0.0)

    @property
    def min_frequency(self) -> float:
        return min((e.frequency for e in self.entries.values()), default=0.0)

    def check_edges(self, net: DirectedNetwork, partition: Optional[ClusterPartition]) -> None:
        label = partition.node_to_cluster() if partition is not None else None
        for (s, t) in self.entries:
            if not net.has_edge(s, t):
                raise GraphError(f"vibrated edge ({s},{t}) does not exist in the network")
            if self.intra_only and label is not None and label[s] != label[t]:
                raise GraphError(f"vibrated edge ({s},{t}) crosses clusters")

    def sorted_items(self) -> List[Tuple[Edge, VibrationEntry]]:
        return sorted(self.entries.items(), key=lambda kv: kv[0])


@dataclass(frozen=True)
class Trajectory:
    """Recorded phases and tree coordinates of one simulation run.

    ``theta`` is unwrapped (continuous); use :meth:`wrapped_theta` for
    phases folded into [0, 2pi).  ``x`` and ``y`` are the intra- and
    inter-cluster tree coordinates of the unwrapped phases.
    """

    times: np.ndarray
    theta: np.ndarray
    x: np.ndarray
    y: np.ndarray
    dt: float

    def wrapped_theta(self) -> np.ndarray:
        return np.mod(self.theta, 2.0 * np.pi)


def geodesic_distance(a, b):
    """Shortest angular distance on the circle, elementwise."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return np.abs(np.mod(d + np.pi, 2.0 * np.pi) - np.pi)


def sync_error(theta, partition: ClusterPartition):
    """Largest intra-cluster pairwise geodesic distance.

    Works on a single phase vector or on an array of them (time along the
    leading axes).
    """
    theta = np.asarray(theta, dtype=float)
    worst = np.zeros(theta.shape[:-1])
    for cluster in partition.clusters:
        idx = list(cluster)
        for a in range(len(idx)):
            for b in range(a + 1, len(idx)):
                d = geodesic_distance(theta[..., idx[a]], theta[..., idx[b]])
                worst = np.maximum(worst, d)
    return worst if worst.shape else float(worst)


# ---------------------------------------------------------------------------
# simulation


def _characteristic_period(kn: KuramotoNetwork) -> float:
    w = kn.net.weight_matrix()
    rate = float(np.max(np.abs(kn.omega) + np.abs(w).sum(axis=1)))
    return 2.0 * np.pi / max(rate, 1.0)


def _default_step(kn: KuramotoNetwork, schedule: Optional[VibrationSchedule]) -> Tuple[float, float]:
    """Return (dt, min_period) honoring the fastest time scale present."""
    period = _characteristic_period(kn)
    if schedule is not None and schedule.entries:
        vib_period = schedule.epsilon * 2.0 * np.pi / schedule.max_frequency
        period = min(period, vib_period)
    return period / default_oversampling, period


def _schedule_arrays(schedule: Optional[VibrationSchedule]):
    if schedule is None or not schedule.entries:
        return None
    rows, cols, amps, freqs, phases = [], [], [], [], []
    for (s, t), entry in schedule.sorted_items():
        rows.append(t)
        cols.append(s)
        amps.append(entry.amplitude / schedule.epsilon)
        freqs.append(entry.frequency / schedule.epsilon)
        phases.append(entry.phase)
    return (np.array(rows), np.array(cols), np.array(amps),
            np.array(freqs), np.array(phases))


def _integrate_batch(w: np.ndarray, omega: np.ndarray, sched, th0: np.ndarray,
                     t_end: float, dt: float) -> Tuple[np.ndarray, np.ndarray, int]:
    """Fixed-step RK4 for a batch of phase vectors; returns decimated records."""
    ns, n = th0.shape
    steps = max(1, int(np.ceil(t_end / dt - 1e-12))) if t_end > 0 else 0
    h = t_end / steps if steps else 0.0
    stride = max(1, int(np.ceil((steps + 1) / max_recorded_samples)))
    n_rec = steps // stride + 1
    times = np.empty(n_rec)
    recs = np.empty((ns, n_rec, n))
    times[0] = 0.0
    recs[:, 0, :] = th0

    if sched is None:
        w_static = w

        def field(t: float, th: np.ndarray) -> np.ndarray:
            diff = th[:, None, :] - th[:, :, None]  # (ns, i, j) -> th_j - th_i
            return omega + np.einsum("ij,sij->si", w_static, np.sin(diff))
    else:
        rows, cols, amps, freqs, phases = sched

        def field(t: float, th: np.ndarray) -> np.ndarray:
            wt = w.copy()
            wt[rows, cols] += amps * np.sin(freqs * t + phases)
            diff = th[:, None, :] - th[:, :, None]
            return omega + np.einsum("ij,sij->si", wt, np.sin(diff))

    th = th0.copy()
    t = 0.0
    rec_i = 1
    for step in range(1, steps + 1):
        k1 = field(t, th)
        k2 = field(t + 0.5 * h, th + 0.5 * h * k1)
        k3 = field(t + 0.5 * h, th + 0.5 * h * k2)
        k4 = field(t + h, th + h * k3)
        th = th + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += h
        if step % stride == 0:
            if not np.all(np.isfinite(th)):
                raise NonFiniteState(f"state became non-finite near t={t:g}")
            times[rec_i] = t
            recs[:, rec_i, :] = th
            rec_i += 1
    if not np.all(np.isfinite(th)):
        raise NonFiniteState("state became non-finite")
    return times[:rec_i], recs[:, :rec_i, :], stride


def _default_incidence(kn: KuramotoNetwork) -> IncidenceSet:
    tree = select_spanning_tree(kn.net, kn.partition, "min_depth")
    return build_incidence(kn.net, kn.partition, tree)


def simulate(kn: KuramotoNetwork, schedule: Optional[VibrationSchedule],
             theta0: Sequence[float], t_end: float, dt: Optional[float] = None,
             inc: Optional[IncidenceSet] = None) -> Trajectory:
    """Integrate the (optionally vibrated) network from ``theta0``.

    The default step keeps at least 50 steps per fastest period present
    (natural drift, coupling, or vibration carrier); an explicit ``dt``
    coarser than 1/40 of that period raises StepTooCoarse.
    """
    theta0 = np.asarray(theta0, dtype=float)
    if theta0.shape != (kn.net.n,):
        raise ValueError("theta0 must have one phase per node")
    if t_end < 0:
        raise ValueError("t_end must be nonnegative")
    if schedule is not None:
        schedule.check_edges(kn.net, kn.partition)
    auto_dt, min_period = _default_step(kn, schedule)
    if dt is None:
        dt = auto_dt
    elif dt > min_period / steps_per_period * (1 + 1e-12):
        raise StepTooCoarse(
            f"dt={dt:g} undersamples the fastest period {min_period:g}"
        )
    if inc is None:
        inc = _default_incidence(kn)
    w = kn.net.weight_matrix()
    if t_end == 0:
        times = np.zeros(1)
        recs = theta0[None, None, :].copy()
        used_dt = 0.0
    else:
        times, recs, _ = _integrate_batch(w, kn.omega, _schedule_arrays(schedule),
                                          theta0[None, :], t_end, dt)
        used_dt = dt
    theta = recs[0]
    return Trajectory(times=times, theta=theta, x=theta @ inc.Bhat_intra,
                      y=theta @ inc.Bhat_inter, dt=used_dt)


# ---------------------------------------------------------------------------
# linearization around cluster-synchronized motion


@dataclass(frozen=True)
class Linearization:
    """Reduced Jacobian blocks of the intra-cluster error dynamics.

    ``J`` is block diagonal over clusters (``J_blocks``); ``M1`` collects
    the rows through which inter-cluster edges force the intra coordinates,
    so the inter forcing is ``M1 @ diag(sin(R2 x + R3 y)-terms)``.
    """

    inc: IncidenceSet
    J_blocks: Tuple[np.ndarray, ...]
    J: np.ndarray
    M1: np.ndarray


def linearize(kn: KuramotoNetwork, inc: Optional[IncidenceSet] = None,
              tol: float = invariance_tolerance) -> Linearization:
    if inc is None:
        inc = _default_incidence(kn)
    res = check_invariance(kn.net, kn.partition, kn.omega, tol=tol)
    if not res.ok:
        raise InvarianceViolated(
            "cluster-synchronized states are not invariant for this network",
            res.violations,
        )
    m_i = inc.m_intra
    bhat_i = inc.Bhat_intra
    weighted_pos_intra = inc.Bpos[:, :m_i] * inc.W_intra
    j = -(bhat_i.T @ weighted_pos_intra @ inc.R1)
    blocks = []
    for k, sl in enumerate(inc.coord_slices):
        blocks.append(j[sl, sl].copy())
    # the construction is block diagonal; discard numerical dust elsewhere
    j_clean = np.zeros_like(j)
    for sl, blk in zip(inc.coord_slices, blocks):
        j_clean[sl, sl] = blk
    weighted_pos_inter = inc.Bpos[:, m_i:] * inc.W_inter
    m1 = -(bhat_i.T @ weighted_pos_inter)
    return Linearization(inc=inc, J_blocks=tuple(blocks), J=j_clean, M1=m1)


# ---------------------------------------------------------------------------
# slot matrices of a schedule (reduced-coordinate vibration influence)


def edge_influence(inc: IncidenceSet, e: Edge) -> np.ndarray:
    """Influence of a unit vibration on edge ``e`` on the reduced Jacobian.

    Rank-one: (tree coordinates of the target node) times (the tree-path
    row of the edge).
    """
    col = inc.edge_column(e)
    left = -inc.Bhat_intra.T @ inc.Bpos[:, col]
    right = inc.R[col, : inc.n_intra_coords]
    return np.outer(left, right)


def schedule_slot_matrices(inc: IncidenceSet,
                           schedule: VibrationSchedule) -> List[List[Tuple[float, float, float, np.ndarray]]]:
    """Per-cluster vibration terms in reduced coordinates (fast time).

    Returns, for each cluster, a list of (amplitude, frequency, phase, M)
    with M the reduced influence matrix of that edge restricted to the
    cluster's coordinate block.
    """
    label = inc.partition.node_to_cluster()
    out: List[List[Tuple[float, float, float, np.ndarray]]] = [[] for _ in inc.partition.clusters]
    for (s, t), entry in schedule.sorted_items():
        k = int(label[t])
        if label[s] != k:
            raise GraphError(f"vibrated edge ({s},{t}) crosses clusters")
        m_full = edge_influence(inc, (s, t))
        sl = inc.coord_slices[k]
        out[k].append((entry.amplitude, entry.frequency, entry.phase,
                       m_full[sl, sl].copy()))
    return out


def cluster_vibration_matrix(terms) -> Optional[callable]:
    """Callable P(t) summing sinusoidal slot terms; None when empty."""
    if not terms:
        return None
    amps = np.array([a for a, _, _, _ in terms])
    freqs = np.array([f for _, f, _, _ in terms])
    phases = np.array([p for _, _, p, _ in terms])
    mats = np.array([m for _, _, _, m in terms])

    def p(t: float) -> np.ndarray:
        return np.einsum("e,eij->ij", amps * np.sin(freqs * t + phases), mats)

    return p


# ---------------------------------------------------------------------------
# perturbation bounds


def perturbation_bounds(kn: KuramotoNetwork, inc: Optional[IncidenceSet] = None,
                        schedule: Optional[VibrationSchedule] = None) -> np.ndarray:
    """Entrywise bound gamma[k, l] on the inter-cluster forcing gains.

    Combines the static envelope of the inter-edge rows with the worst
    sampled conjugation growth of the per-cluster vibration flows.
    """
    if inc is None:
        inc = _default_incidence(kn)
    lin = linearize(kn, inc)
    r = inc.partition.r
    envelope = np.abs(lin.M1) @ np.abs(inc.R2)
    gains = np.zeros((r, r))
    for k, sk in enumerate(inc.coord_slices):
        for l, sl_ in enumerate(inc.coord_slices):
            block = envelope[sk, sl_]
            if block.size:
                gains[k, l] = np.linalg.svd(block, compute_uv=False)[0]

    growth = np.ones(r)
    shrink = np.ones(r)
    if schedule is not None and schedule.entries:
        terms = schedule_slot_matrices(inc, schedule)
        for k in range(r):
            p = cluster_vibration_matrix(terms[k])
            if p is None:
                continue
            freqs = [f for _, f, _, _ in terms[k]]
            t_max = 20.0 * 2.0 * np.pi / min(freqs)
            dt = 2.0 * np.pi / max(freqs) / default_oversampling
            d = terms[k][0][3].shape[0]
            phi = np.eye(d)
            sup_fwd, sup_inv = 1.0, 1.0
            steps = int(np.ceil(t_max / dt))
            h = t_max / steps
            t = 0.0
            for _ in range(steps):
                k1 = p(t) @ phi
                k2 = p(t + 0.5 * h) @ (phi + 0.5 * h * k1)
                k3 = p(t + 0.5 * h) @ (phi + 0.5 * h * k2)
                k4 = p(t + h) @ (phi + h * k3)
                phi = phi + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
                t += h
                s = np.linalg.svd(phi, compute_uv=False)
                sup_fwd = max(sup_fwd, float(s[0]))
                sup_inv = max(sup_inv, float(1.0 / s[-1]))
            growth[k] = sup_fwd
            shrink[k] = sup_inv
    cond = np.outer(shrink, growth) * envelope_safety
    if schedule is None or not schedule.entries:
        cond = np.ones((r, r))
    return cond * gains


# ---------------------------------------------------------------------------
# empirical classification


@dataclass(frozen=True)
class Classification:
    stable: bool
    slopes: Tuple[float, ...]
    initial_norms: Tuple[float, ...]
    final_norms: Tuple[float, ...]


def classification_horizon(j_blocks: Sequence[np.ndarray]) -> float:
    """Suggested ensemble horizon from the slowest predicted decay rate."""
    rates = []
    for blk in j_blocks:
        rates.extend(np.abs(np.linalg.eigvals(blk).real))
    slowest = min((r for r in rates if r > 1e-12), default=1.0)
    return float(min(classification_horizon_cap,
                     classification_horizon_rates / slowest))


def perturbed_initial_states(inc: IncidenceSet, n_samples: int, kick: float,
                             seed: int,
                             base_theta: Optional[Sequence[float]] = None,
                             clusters: Optional[Sequence[int]] = None) -> np.ndarray:
    """Random phase vectors whose intra-cluster coordinates have norm ``kick``.

    ``clusters`` restricts the kick to the tree coordinates of the listed
    clusters (all clusters by default).
    """
    n = inc.net.n
    base = np.zeros(n) if base_theta is None else np.asarray(base_theta, dtype=float)
    rng = np.random.default_rng(seed)
    gram = inc.Bhat_intra.T @ inc.Bhat_intra
    lift = inc.Bhat_intra @ np.linalg.inv(gram)
    mask = np.ones(inc.n_intra_coords)
    if clusters is not None:
        mask = np.zeros(inc.n_intra_coords)
        for k in clusters:
            mask[inc.coord_slices[k]] = 1.0

    # per-cluster constants cancel the lift's spill into the inter
    # coordinates, so the kick leaves the base state's y untouched;
    # the free global constant is pinned so the lowest-indexed
    # unkicked cluster stays exactly at the base state
    label = inc.partition.node_to_cluster()
    inter_tree = inc.tree_edges[inc.n_intra_coords:]
    kicked = set(range(inc.partition.r)) if clusters is None else set(clusters)
    unkicked = sorted(set(range(inc.partition.r)) - kicked)

    def level(theta: np.ndarray) -> np.ndarray:
        offsets = {0: 0.0}
        pending = list(inter_tree)
        while pending:
            for e in list(pending):
                s, t = e
                ks, kt = label[s], label[t]
                if ks in offsets and kt not in offsets:
                    offsets[kt] = offsets[ks] + theta[s] - theta[t]
                elif kt in offsets and ks not in offsets:
                    offsets[ks] = offsets[kt] + theta[t] - theta[s]
                elif ks not in offsets:
                    continue
                pending.remove(e)
        gauge = offsets[unkicked[0]] if unkicked else 0.0
        return theta + np.array([offsets[label[i]] - gauge for i in range(n)])

    th0 = np.empty((n_samples, n))
    for s in range(n_samples):
        v = rng.standard_normal(inc.n_intra_coords) * mask
        v *= kick / np.linalg.norm(v)
        th0[s] = base + level(lift @ v)
    return th0


def sample_perturbed_trajectories(kn: KuramotoNetwork, inc: Optional[IncidenceSet],
                                  schedule: Optional[VibrationSchedule],
                                  n_samples: int = 10, kick: float = 0.1,
                                  seed: int = 0, t_end: float = 240.0,
                                  dt: Optional[float] = None,
                                  base_theta: Optional[Sequence[float]] = None,
                                  clusters: Optional[Sequence[int]] = None) -> List[Trajectory]:
    """Ensemble of runs from random intra-cluster kicks of fixed norm."""
    if inc is None:
        inc = _default_incidence(kn)
    if schedule is not None:
        schedule.check_edges(kn.net, kn.partition)
    th0 = perturbed_initial_states(inc, n_samples, kick, seed,
                                   base_theta=base_theta, clusters=clusters)
    auto_dt, min_period = _default_step(kn, schedule)
    if dt is None:
        dt = auto_dt
    elif dt > min_period / steps_per_period * (1 + 1e-12):
        raise StepTooCoarse(f"dt={dt:g} undersamples the fastest period {min_period:g}")
    times, recs, _ = _integrate_batch(kn.net.weight_matrix(), kn.omega,
                                      _schedule_arrays(schedule), th0, t_end, dt)
    out = []
    for s in range(n_samples):
        theta = recs[s]
        out.append(Trajectory(times=times, theta=theta,
                              x=theta @ inc.Bhat_intra, y=theta @ inc.Bhat_inter,
                              dt=dt))
    return out


def classify_partial_stability(trajectories: Sequence[Trajectory],
                               slope_threshold: float = classification_slope_threshold,
                               decay_factor: float = classification_decay_factor,
                               converged_floor: float = classification_converged_floor) -> Classification:
    """Empirical verdict from the tail behaviour of intra-cluster errors.

    Stable means every run either ends below an absolute convergence floor
    (its tail slope is then floating-point noise) or shows a fitted
    log-norm slope below the threshold over the second half of the horizon
    while ending at least a factor ``decay_factor`` below its initial
    error.
    """
    slopes, initials, finals = [], [], []
    stable = True
    for traj in trajectories:
        norms = np.linalg.norm(traj.x, axis=1)
        norms = np.maximum(norms, 1e-300)
        half = len(norms) // 2
        t_tail = traj.times[half:]
        slope = float(np.polyfit(t_tail, np.log(norms[half:]), 1)[0])
        slopes.append(slope)
        initials.append(float(norms[0]))
        finals.append(float(norms[-1]))
        if finals[-1] < converged_floor:
            continue
        if not (slope < slope_threshold and finals[-1] < initials[-1] / decay_factor):
            stable = False
    return Classification(stable=stable, slopes=tuple(slopes),
                          initial_norms=tuple(initials), final_norms=tuple(finals))
