"""Lagged input and lagged state: Gramians, P sequence, controllers."""
import numpy as np
import pytest

from stochctrl import (
    NoiseModel,
    PathTree,
    SingularPBracket,
    SystemSpec,
    TransformedSystem,
    forward_simulate,
    gramian,
    input_delay_controller,
    input_delay_decide,
    input_delay_gramian,
    input_delay_gramian_oracle,
    member_of_S_state_delay,
    random_system,
    state_delay_P,
    state_delay_controller,
    state_delay_decide,
    state_delay_gramian,
    state_delay_gramian_oracle,
)
from stochctrl.transform import BsdeForm


def test_input_delay_benchmark_gramian(bench_input_delay):
    spec, expected = bench_input_delay
    ts = TransformedSystem.build(spec)
    G = input_delay_gramian(ts.form, spec.tau, 2)
    np.testing.assert_allclose(G, expected["G2"], atol=1e-12)
    assert np.linalg.matrix_rank(G) == 2


def test_input_delay_decide_benchmark(bench_input_delay):
    spec, _ = bench_input_delay
    report = input_delay_decide(spec, N_max=2)
    assert report.kind == "input-delay"
    assert report.controllable and report.witness_N == 0
    assert report.rank_R is None and report.criteria_agree is None


def test_input_delay_gramian_matches_enumeration(rng):
    for noise in (NoiseModel.rademacher(), NoiseModel.symmetric_three_point()):
        for _ in range(4):
            n = int(rng.integers(1, 3))
            tau = int(rng.integers(1, 3))
            ts = TransformedSystem.build(random_system(rng, n, n + 1, noise=noise, tau=tau))
            N = int(rng.integers(0, 4))
            G = input_delay_gramian(ts.form, tau, N)
            Go = input_delay_gramian_oracle(ts.form, tau, N, noise)
            assert np.linalg.norm(G - Go) < 1e-9


def test_zero_delayed_channel_collapses(rng):
    # B1 = 0 must reproduce the undelayed Gramian exactly
    spec = random_system(rng, 2, 3, tau=2)
    spec = SystemSpec(
        A=spec.A, B=spec.B, Abar=spec.Abar, Bbar=spec.Bbar,
        B1=np.zeros((2, 3)), tau=2,
    )
    ts = TransformedSystem.build(spec)
    for N in range(4):
        np.testing.assert_allclose(
            input_delay_gramian(ts.form, 2, N), gramian(ts.form, N), atol=1e-12
        )


def test_delay_longer_than_horizon(rng):
    # every delayed summand stays in its deterministic regime
    ts = TransformedSystem.build(random_system(rng, 2, 3, tau=4))
    G = input_delay_gramian(ts.form, 4, 2)
    Go = input_delay_gramian_oracle(ts.form, 4, 2, ts.spec.noise)
    assert np.linalg.norm(G - Go) < 1e-12


def test_input_delay_controller_benchmark(bench_input_delay):
    spec, expected = bench_input_delay
    ts = TransformedSystem.build(spec)
    tree = PathTree(spec.noise, 2)
    ctrl = input_delay_controller(ts, tree, expected["x0"])
    sim = forward_simulate(tree, spec, expected["x0"], ctrl.u, u1=ctrl.u1)
    assert np.abs(sim.at(3)).max() < 1e-8
    # pre-horizon decisions are part of the controller
    assert min(ctrl.u1.stages()) == -1


def test_input_delay_steer_to_target(rng):
    from stochctrl import random_attainable_terminal

    spec = random_system(rng, 2, 3, tau=1)
    ts = TransformedSystem.build(spec)
    tree = PathTree(spec.noise, 3)
    x0 = np.array([1.0, 2.0])
    target = random_attainable_terminal(rng, tree, ts.form, scale=0.5)
    ctrl = input_delay_controller(ts, tree, x0, target=target)
    sim = forward_simulate(tree, spec, x0, ctrl.u, u1=ctrl.u1)
    assert np.abs(sim.at(4) - target).max() < 1e-8


def test_state_delay_P_benchmark(bench_state_delay):
    spec, expected = bench_state_delay
    ts = TransformedSystem.build(spec)
    pseq = state_delay_P(ts.form, 1, 2)
    np.testing.assert_allclose(pseq.P[2], np.eye(2), atol=1e-12)
    np.testing.assert_allclose(pseq.P[1], expected["P1"], atol=1e-9)
    np.testing.assert_allclose(pseq.P[0], expected["P0"], atol=1e-9)


def test_state_delay_benchmark_gramian(bench_state_delay):
    spec, expected = bench_state_delay
    ts = TransformedSystem.build(spec)
    G = state_delay_gramian(ts.form, 1, 2)
    np.testing.assert_allclose(G, expected["G2"], atol=1e-9)
    assert np.linalg.matrix_rank(G) == 2


def test_state_delay_gramian_matches_enumeration(rng):
    for _ in range(6):
        n = int(rng.integers(1, 3))
        ts = TransformedSystem.build(random_system(rng, n, n + 1, d=1))
        N = int(rng.integers(0, 4))
        G = state_delay_gramian(ts.form, 1, N)
        Go = state_delay_gramian_oracle(ts.form, 1, N, ts.spec.noise)
        assert np.linalg.norm(G - Go) < 1e-9


def test_zero_delayed_state_collapses(rng):
    spec = random_system(rng, 2, 3, d=1)
    spec = SystemSpec(
        A=spec.A, B=spec.B, Abar=spec.Abar, Bbar=spec.Bbar,
        A1=np.zeros((2, 2)), d=1,
    )
    ts = TransformedSystem.build(spec)
    pseq = state_delay_P(ts.form, 1, 3)
    for k in range(4):
        np.testing.assert_allclose(pseq.P[k], np.eye(2), atol=1e-12)
    for N in range(4):
        np.testing.assert_allclose(
            state_delay_gramian(ts.form, 1, N), gramian(ts.form, N), atol=1e-12
        )


def test_state_delay_longer_than_horizon(rng):
    # the lagged term never activates inside the window
    spec = random_system(rng, 2, 3, d=4)
    ts = TransformedSystem.build(spec)
    np.testing.assert_allclose(
        state_delay_gramian(ts.form, 4, 2), gramian(ts.form, 2), atol=1e-12
    )


def test_singular_bracket_reported():
    # C = I and C1 = I make the first bracket exactly zero
    form = BsdeForm(
        C=np.eye(2),
        Cbar=np.zeros((2, 2)),
        D=np.array([[1.0], [0.0]]),
        C1=np.eye(2),
    )
    with pytest.raises(SingularPBracket) as info:
        state_delay_P(form, 1, 2)
    assert info.value.k == 1


def test_state_delay_decide_benchmark(bench_state_delay):
    spec, _ = bench_state_delay
    report = state_delay_decide(spec, N_max=2)
    assert report.kind == "state-delay"
    assert report.controllable and report.witness_N == 1
    assert abs(report.min_singular[2] - 0.063550705672848526) < 1e-9


def test_state_delay_controller_benchmark(bench_state_delay):
    spec, expected = bench_state_delay
    ts = TransformedSystem.build(spec)
    tree = PathTree(spec.noise, 2)
    ctrl = state_delay_controller(ts, tree, expected["x0"])
    sim = forward_simulate(tree, spec, expected["x0"], ctrl.u)
    assert np.abs(sim.at(3)).max() < 1e-8


def delayed_attainable_terminal(rng, tree, form, d, scale=1.0):
    """Forward-run the lagged homogeneous equation; in the attainable
    set by construction. Pre-horizon states are zero, mirroring the
    plant's convention."""
    n = form.n
    Cinv = np.linalg.inv(form.C)
    xs = {0: scale * rng.normal(size=(1, n))}
    for k in range(tree.horizon + 1):
        z = scale * rng.normal(size=(tree.n_nodes(k), n))
        lag = xs[k - d] if k - d >= 0 else np.zeros((1, n))
        lag = tree.lift(lag, max(0, k - d), k)
        a = (xs[k] - z @ form.Cbar.T - lag @ form.C1.T) @ Cinv.T
        xs[k + 1] = (a[:, None, :] + tree.support[None, :, None] * z[:, None, :]).reshape(-1, n)
    return xs[tree.horizon + 1]


def test_state_delay_membership_three_point(rng):
    noise = NoiseModel.symmetric_three_point()
    spec = random_system(rng, 2, 3, d=1, noise=noise)
    ts = TransformedSystem.build(spec)
    tree = PathTree(noise, 2)
    good = delayed_attainable_terminal(rng, tree, ts.form, 1, scale=0.5)
    assert member_of_S_state_delay(tree, ts.form, 1, good).member
    w_last = tree.support[[h[-1] for h in tree.histories(3)]]
    bad = (w_last**2)[:, None] * np.array([0.4, -0.2])[None, :]
    assert not member_of_S_state_delay(tree, ts.form, 1, bad).member


def test_state_delay_steer_to_target(rng):
    spec = random_system(rng, 2, 3, d=1)
    ts = TransformedSystem.build(spec)
    tree = PathTree(spec.noise, 3)
    x0 = np.array([-1.0, 0.5])
    target = delayed_attainable_terminal(rng, tree, ts.form, 1, scale=0.5)
    ctrl = state_delay_controller(ts, tree, x0, target=target)
    sim = forward_simulate(tree, spec, x0, ctrl.u)
    assert np.abs(sim.at(4) - target).max() < 1e-8
