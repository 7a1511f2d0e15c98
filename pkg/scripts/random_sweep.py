"""Randomized agreement sweep: closed-form Gramians against enumeration,
plus closed-loop steering error, over a configurable family of systems.

Usage: python scripts/random_sweep.py --trials 100 --seed 7
"""
import argparse
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from stochctrl import (
    NoiseModel,
    PathTree,
    TransformedSystem,
    forward_simulate,
    gramian,
    gramian_invertible,
    gramian_oracle,
    input_delay_gramian,
    input_delay_gramian_oracle,
    null_controller,
    random_system,
    random_x0,
    state_delay_gramian,
    state_delay_gramian_oracle,
)


@dataclass
class SweepConfig:
    trials: int = 100
    seed: int = 0
    dims: tuple[int, ...] = (1, 2, 3)
    extra_inputs: int = 1
    max_horizon: int = 5
    taus: tuple[int, ...] = (1, 2)
    state_lag: int = 1
    three_point_spread: float = 2.0
    gramian_tol: float = 1e-9
    steering_tol: float = 1e-8
    noises: dict = field(init=False)

    def __post_init__(self):
        self.noises = {
            "two-point": NoiseModel.rademacher(),
            "three-point": NoiseModel.symmetric_three_point(self.three_point_spread),
        }


def sweep(cfg: SweepConfig) -> int:
    rng = np.random.default_rng(cfg.seed)
    worst = {"plain": 0.0, "input-delay": 0.0, "state-delay": 0.0, "steering": 0.0}
    start = time.perf_counter()
    steered = 0
    for trial in range(cfg.trials):
        n = int(rng.choice(cfg.dims))
        m = n + cfg.extra_inputs
        N = int(rng.integers(0, cfg.max_horizon + 1))
        name = "two-point" if trial % 2 else "three-point"
        noise = cfg.noises[name]

        ts = TransformedSystem.build(random_system(rng, n, m, noise=noise))
        gap = np.linalg.norm(gramian(ts.form, N) - gramian_oracle(ts.form, N, noise))
        worst["plain"] = max(worst["plain"], gap)

        tau = int(cfg.taus[trial % len(cfg.taus)])
        ts_in = TransformedSystem.build(random_system(rng, n, m, noise=noise, tau=tau))
        gap = np.linalg.norm(
            input_delay_gramian(ts_in.form, tau, N)
            - input_delay_gramian_oracle(ts_in.form, tau, N, noise)
        )
        worst["input-delay"] = max(worst["input-delay"], gap)

        ts_st = TransformedSystem.build(random_system(rng, n, m, noise=noise, d=cfg.state_lag))
        gap = np.linalg.norm(
            state_delay_gramian(ts_st.form, cfg.state_lag, N)
            - state_delay_gramian_oracle(ts_st.form, cfg.state_lag, N, noise)
        )
        worst["state-delay"] = max(worst["state-delay"], gap)

        horizon = max(N, 1)
        if gramian_invertible(gramian(ts.form, horizon))[0]:
            tree = PathTree(noise, horizon)
            x0 = random_x0(rng, n)
            ctrl = null_controller(ts, tree, x0)
            sim = forward_simulate(tree, ts.spec, x0, ctrl.u)
            worst["steering"] = max(worst["steering"], float(np.abs(sim.at(horizon + 1)).max()))
            steered += 1

    elapsed = time.perf_counter() - start
    print(f"trials: {cfg.trials} (steering loops: {steered}) in {elapsed:.1f}s")
    failures = 0
    for key, value in worst.items():
        tol = cfg.steering_tol if key == "steering" else cfg.gramian_tol
        status = "ok" if value <= tol else "FAIL"
        failures += status == "FAIL"
        print(f"worst {key}: {value:.3e} (tolerance {tol:g}) {status}")
    return 1 if failures else 0


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--trials", type=int, default=100)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--max-horizon", type=int, default=5)
    args = parser.parse_args()
    sys.exit(sweep(SweepConfig(trials=args.trials, seed=args.seed, max_horizon=args.max_horizon)))
