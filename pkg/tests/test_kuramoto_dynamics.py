import math

import numpy as np
import pytest

import vibrosync as vs
from vibrosync.kuramoto_dynamics import (InvarianceViolated, NonFiniteState,
                                         Trajectory, classification_horizon)
from vibrosync.linalg import StepTooCoarse


def two_node_kn():
    net = vs.DirectedNetwork.from_edges(2, [(0, 1, 1.0), (1, 0, 1.0)])
    part = vs.ClusterPartition(net, ((0, 1),))
    return vs.KuramotoNetwork(net=net, omega=np.array([2.0, 2.0]), partition=part)


def test_geodesic_distance():
    assert vs.geodesic_distance(0.0, math.pi / 2) == pytest.approx(math.pi / 2)
    assert vs.geodesic_distance(0.1, 2 * math.pi - 0.1) == pytest.approx(0.2)
    assert vs.geodesic_distance(1.3, 1.3) == 0.0


def test_sync_error_uses_wrapped_distances():
    theta = np.array([[0.0, 2 * math.pi - 0.1, 0.05, 6.0]])
    net = vs.DirectedNetwork.from_edges(
        4, [(0, 1, 1.0), (1, 0, 1.0), (2, 3, 1.0), (3, 2, 1.0),
            (0, 2, 1.0), (2, 0, 1.0)])
    part = vs.ClusterPartition(net, ((0, 1), (2, 3)))
    err = vs.sync_error(theta, part)
    assert err[0] == pytest.approx(max(0.1, abs(6.0 - 2 * math.pi - 0.05)))


def test_two_node_synchronization():
    kn = two_node_kn()
    traj = vs.simulate(kn, None, np.array([0.0, 0.1]), 12.0)
    gap = np.abs(traj.theta[:, 1] - traj.theta[:, 0])
    assert gap[-1] < 1e-3
    assert np.all(np.diff(gap) <= 1e-12)


def test_single_directed_edge_sign_convention():
    # dtheta0/dt = omega0 + w01 sin(theta1 - theta0) exactly at t=0
    net = vs.DirectedNetwork.from_edges(2, [(0, 1, 0.5), (1, 0, 0.5)])
    part = vs.ClusterPartition(net, ((0, 1),))
    kn = vs.KuramotoNetwork(net=net, omega=np.array([0.3, 0.3]), partition=part)
    th0 = np.array([0.2, 1.1])
    h = 1e-6
    traj = vs.simulate(kn, None, th0, h, dt=h)
    rate = (traj.theta[-1] - th0) / h
    # w[0,1] is the weight node 0 receives from node 1 (edge (1, 0))
    expected0 = 0.3 + 0.5 * math.sin(th0[1] - th0[0])
    assert rate[0] == pytest.approx(expected0, abs=1e-6)


def test_omega_shift_equivariance():
    kn = two_node_kn()
    th0 = np.array([0.0, 0.4])
    base = vs.simulate(kn, None, th0, 5.0, dt=1e-3)
    shifted_kn = vs.KuramotoNetwork(net=kn.net, omega=kn.omega + 3.0,
                                    partition=kn.partition)
    shifted = vs.simulate(shifted_kn, None, th0, 5.0, dt=1e-3)
    drift = shifted.theta - base.theta - 3.0 * base.times[:, None]
    assert np.abs(drift).max() < 1e-8


def test_dt_refinement_agrees():
    kn = two_node_kn()
    th0 = np.array([0.0, 0.7])
    a = vs.simulate(kn, None, th0, 8.0, dt=2e-3)
    b = vs.simulate(kn, None, th0, 8.0, dt=1e-3)
    assert np.abs(a.theta[-1] - b.theta[-1]).max() < 1e-6


def test_simulate_zero_horizon_and_coarse_dt():
    kn = two_node_kn()
    traj = vs.simulate(kn, None, np.array([0.0, 0.1]), 0.0)
    assert traj.theta.shape == (1, 2)
    with pytest.raises(StepTooCoarse):
        vs.simulate(kn, None, np.array([0.0, 0.1]), 1.0, dt=0.5)


def test_long_run_is_decimated():
    kn = two_node_kn()
    traj = vs.simulate(kn, None, np.array([0.0, 0.1]), 300.0, dt=1e-3)
    assert len(traj.times) <= 100_001
    assert traj.times[-1] == pytest.approx(300.0, abs=1e-6)


def test_schedule_validation():
    entry = vs.VibrationEntry(amplitude=1.0, frequency=1.0)
    vs.VibrationSchedule(entries={(0, 1): entry}, epsilon=0.01)
    with pytest.raises(ValueError):
        vs.VibrationSchedule(entries={(0, 1): vs.VibrationEntry(1.0, -2.0)})
    with pytest.raises(ValueError):
        vs.VibrationSchedule(entries={(0, 1): vs.VibrationEntry(1.0, 1.0),
                                      (1, 0): vs.VibrationEntry(1.0, 2.0)})
    # equal carriers and irrational ratios are both fine
    vs.VibrationSchedule(entries={(0, 1): vs.VibrationEntry(1.0, 1.0),
                                  (1, 0): vs.VibrationEntry(-1.0, 1.0)})
    vs.VibrationSchedule(entries={(0, 1): vs.VibrationEntry(1.0, 1.0),
                                  (1, 0): vs.VibrationEntry(1.0, math.sqrt(2))})
    with pytest.raises(ValueError):
        vs.VibrationSchedule(entries={(0, 1): vs.VibrationEntry(0.0, 1.0)})


def test_schedule_check_edges(flip_kn):
    sched = vs.VibrationSchedule(
        entries={(0, 4): vs.VibrationEntry(1.0, 1.0)}, epsilon=0.01)
    with pytest.raises(ValueError):
        sched.check_edges(flip_kn.net, flip_kn.partition)  # inter edge
    missing = vs.VibrationSchedule(
        entries={(1, 3): vs.VibrationEntry(1.0, 1.0)}, epsilon=0.01)
    with pytest.raises(ValueError):
        missing.check_edges(flip_kn.net, flip_kn.partition)


def test_nonfinite_guard():
    net = vs.DirectedNetwork.from_edges(2, [(0, 1, 1.0), (1, 0, 1.0)])
    part = vs.ClusterPartition(net, ((0, 1),))
    kn = vs.KuramotoNetwork(net=net, omega=np.array([1.0, 1.0]), partition=part)
    with pytest.raises(NonFiniteState):
        vs.simulate(kn, None, np.array([np.nan, 0.0]), 1.0)


def test_linearize_flagship_blocks(flip_kn, flip_inc, flip_lin):
    j1 = 0.05 * np.array([[-8, 0, 2], [-1, -4, -1], [1, -1, -5]], dtype=float)
    j2 = np.array([[-3, 0, 1], [-1, -2, 1], [1, 0, -3]], dtype=float)
    assert np.abs(flip_lin.J_blocks[0] - j1).max() < 1e-9
    assert np.abs(flip_lin.J_blocks[1] - j2).max() < 1e-9
    # the stacked Jacobian is block diagonal in tree coordinates
    off = flip_lin.J.copy()
    off[:3, :3] = 0.0
    off[3:, 3:] = 0.0
    assert np.abs(off).max() < 1e-9


def test_linearize_rejects_invariance_violations():
    net = vs.DirectedNetwork.from_edges(
        4, [(0, 1, 1.0), (1, 0, 1.0), (2, 3, 1.0), (3, 2, 1.0),
            (0, 2, 1.0), (2, 0, 1.0)])
    part = vs.ClusterPartition(net, ((0, 1), (2, 3)))
    kn = vs.KuramotoNetwork(net=net, omega=np.array([1.0, 2.0, 3.0, 3.0]),
                            partition=part)
    with pytest.raises(InvarianceViolated):
        vs.linearize(kn)


def test_linearize_matches_finite_differences():
    # single cluster: the reduced field is exactly x' = J x + O(x^2)
    net = vs.DirectedNetwork.from_edges(
        3, [(0, 1, 0.4), (1, 0, 0.7), (1, 2, 0.3), (2, 1, 0.5), (0, 2, 0.2),
            (2, 0, 0.9)])
    part = vs.ClusterPartition(net, ((0, 1, 2),))
    kn = vs.KuramotoNetwork(net=net, omega=np.array([1.1, 1.1, 1.1]),
                            partition=part)
    tree = vs.select_spanning_tree(net, part)
    inc = vs.build_incidence(net, part, tree)
    lin = vs.linearize(kn, inc)

    w = net.weight_matrix()

    def xdot(x):
        # lift tree-coordinate offsets to phases (root pinned at zero)
        theta = np.zeros(3)
        for p, (parent, child) in enumerate(inc.tree_edges):
            theta[child] = theta[parent] + x[p]
        diff = theta[None, :] - theta[:, None]
        td = kn.omega + (w * np.sin(diff)).sum(axis=1)
        return inc.x_of(td)

    h = 1e-7
    for p in range(2):
        col = (xdot(h * np.eye(2)[p]) - xdot(-h * np.eye(2)[p])) / (2 * h)
        assert col == pytest.approx(lin.J_blocks[0][:, p], abs=1e-6)


def test_perturbation_bounds_envelope(flip_kn, flip_inc, flip_lin):
    gamma = vs.perturbation_bounds(flip_kn, flip_inc)
    assert gamma.shape == (2, 2)
    m1 = flip_lin.M1
    r2 = flip_inc.R[flip_inc.m_intra:, : flip_inc.n_intra_coords]
    rng = np.random.default_rng(0)
    for _ in range(1000):
        d = np.diag(rng.uniform(-1.0, 1.0, size=m1.shape[1]))
        coupling = m1 @ d @ r2
        for k, sk in enumerate(flip_inc.coord_slices):
            for l, sl in enumerate(flip_inc.coord_slices):
                block = coupling[sk, sl]
                sigma = np.linalg.svd(block, compute_uv=False)[0]
                assert sigma <= gamma[k, l] + 1e-9


def test_perturbed_initial_states_structure(flip_inc):
    states = vs.perturbed_initial_states(flip_inc, 5, 0.2, seed=1, clusters=(0,))
    assert states.shape == (5, 8)
    assert np.abs(states[:, 4:]).max() == 0.0  # cluster 1 untouched
    for row in states:
        # the kick is normalized in tree coordinates, off the manifold
        assert np.linalg.norm(flip_inc.x_of(row)) == pytest.approx(0.2)
        assert np.abs(flip_inc.y_of(row)).max() < 1e-12
    again = vs.perturbed_initial_states(flip_inc, 5, 0.2, seed=1, clusters=(0,))
    assert np.array_equal(states, again)


def test_classifier_on_synthetic_trajectories():
    times = np.linspace(0.0, 20.0, 400)

    def fake(rate):
        x = np.exp(rate * times)[:, None] * np.array([[0.1, 0.05]])
        theta = np.zeros((len(times), 3))
        return Trajectory(times=times, theta=theta, x=x,
                          y=np.zeros((len(times), 0)), dt=times[1] - times[0])

    stable = vs.classify_partial_stability([fake(-1.0), fake(-0.8)])
    assert stable.stable
    assert stable.slopes == pytest.approx((-1.0, -0.8), abs=1e-6)
    mixed = vs.classify_partial_stability([fake(-1.0), fake(0.3)])
    assert not mixed.stable


def test_classification_horizon_caps():
    fast = [np.array([[-1.0]])]
    assert classification_horizon(fast) == pytest.approx(200.0)
    slow = [np.array([[-0.01]])]
    assert classification_horizon(slow) == pytest.approx(500.0)


def test_sample_perturbed_trajectories_shapes(flip_kn, flip_inc):
    trajs = vs.sample_perturbed_trajectories(flip_kn, flip_inc, None,
                                             n_samples=3, kick=0.05, seed=2,
                                             t_end=1.0)
    assert len(trajs) == 3
    for tr in trajs:
        assert tr.theta.shape[1] == 8
        assert tr.x.shape[1] == flip_inc.n_intra_coords
