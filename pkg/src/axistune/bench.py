"""Shared evaluation bench for gain-tuning experiments.

Every tuning strategy in this package -- Bayesian optimization, grid
search, and the classical baselines -- scores candidate gains through
one :class:`TuningBench` so their costs are directly comparable and
repeated queries hit a memo instead of the simulator.  The bench owns
the reference trajectory, the cost weights, and the simulation
configuration; a gain triple (kp, kv, ki) in it has exactly one cost.

Batch evaluation (`evaluate_many`) runs the vectorized simulator and is
the intended path for grids; single queries fall back to the scalar
simulator.  Both paths share the memo, so a point is never simulated
twice regardless of which strategy asked first.
"""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from .metrics import CostWeights, MetricVector, cost as metric_cost, extract_metrics
from .plant import PlantParams
from .refgen import (
    ReferenceProfile,
    TrajectorySpec,
    constant_speed_profile,
    generate_profile,
)
from .simloop import (
    CurrentControllerGains,
    GainVector,
    SimConfig,
    SimTrace,
    simulate,
    simulate_batch,
    stability_probe,
)

__all__ = ["BENCH_MOVE", "TuningBench", "benchmark_profile"]

# Default scoring move: 0.1 m point-to-point at 0.25 m/s with 5 m/s^2
# ramps, then a 1 s dwell so the settling and terminal-error metrics
# have a window to observe.
BENCH_MOVE = TrajectorySpec(
    position_setpoint=0.1,
    speed_setpoint=0.25,
    acceleration=5.0,
    deceleration=5.0,
    dwell_time=1.0,
)


def benchmark_profile(dt: float = 1e-3) -> ReferenceProfile:
    """Default scoring trajectory, sampled at the controller tick."""
    return generate_profile(BENCH_MOVE, dt)


class TuningBench:
    """Memoized cost oracle over position-cascade gain triples.

    Parameters
    ----------
    plant, current_gains : electromechanical model and drive-internal
        current-loop gains, fixed for the life of the bench.
    profile : ReferenceProfile, optional
        Scoring trajectory; defaults to :func:`benchmark_profile`.
    weights : CostWeights
        Scalarization of the metric vector.
    sim_config : SimConfig, optional
        Must be in position mode for cost queries; the probe helpers
        derive their own speed-mode variants from it.
    settle_band, overshoot_percent : forwarded to metric extraction.
    """

    def __init__(
        self,
        plant: PlantParams,
        current_gains: CurrentControllerGains,
        weights: CostWeights,
        profile: ReferenceProfile | None = None,
        sim_config: SimConfig | None = None,
        settle_band: float = 0.02,
        overshoot_percent: bool = False,
    ):
        cfg = sim_config if sim_config is not None else SimConfig()
        if cfg.mode != "position":
            raise ValueError("the bench scores the position cascade; "
                             "probe helpers build their own speed-mode configs")
        self.plant = plant
        self.current_gains = current_gains
        self.weights = weights
        self.cfg = cfg
        self.profile = profile if profile is not None else benchmark_profile(cfg.dt)
        self.settle_band = settle_band
        self.overshoot_percent = overshoot_percent
        self._memo: dict[tuple[float, float, float], MetricVector] = {}
        self.n_sims = 0

    # -- core cost queries ----------------------------------------------------

    def metrics(self, triple) -> MetricVector:
        """Metric vector at (kp, kv, ki); simulates on first query."""
        key = self._key(triple)
        m = self._memo.get(key)
        if m is None:
            trace = simulate(
                self.plant, GainVector(*key), self.current_gains, self.profile, self.cfg
            )
            self.n_sims += 1
            m = self._extract(trace)
            self._memo[key] = m
        return m

    def cost(self, triple) -> float:
        """Scalar cost at (kp, kv, ki)."""
        return metric_cost(self.metrics(triple), self.weights)

    def evaluate_many(self, triples: np.ndarray) -> np.ndarray:
        """Costs for an (N, 3) array of gain triples, batch-simulated.

        Rows already in the memo are not re-simulated; fresh rows go
        through the vectorized simulator in one pass.
        """
        triples = np.atleast_2d(np.asarray(triples, dtype=float))
        if triples.ndim != 2 or triples.shape[1] != 3:
            raise ValueError("expected an (N, 3) array of (kp, kv, ki) rows")
        keys = [self._key(row) for row in triples]
        fresh = [k for k in dict.fromkeys(keys) if k not in self._memo]
        if fresh:
            batch = np.array(fresh, dtype=float)
            for key, trace in zip(
                fresh,
                simulate_batch(self.plant, batch, self.current_gains,
                               self.profile, self.cfg),
            ):
                self._memo[key] = self._extract(trace)
            self.n_sims += len(fresh)
        return np.array(
            [metric_cost(self._memo[k], self.weights) for k in keys], dtype=float
        )

    def metric_table(self, triples: np.ndarray) -> list[MetricVector]:
        """Metric vectors for an (N, 3) array, filling the memo in batch."""
        triples = np.atleast_2d(np.asarray(triples, dtype=float))
        self.evaluate_many(triples)
        return [self._memo[self._key(row)] for row in triples]

    def trace(self, triple) -> SimTrace:
        """Full simulation trace at (kp, kv, ki); never memoized."""
        return simulate(
            self.plant, GainVector(*self._key(triple)), self.current_gains,
            self.profile, self.cfg,
        )

    # -- probe runs for the classical autotuners --------------------------------

    def speed_step(self, kv: float, ki: float, speed: float,
                   duration: float) -> SimTrace:
        """Speed-loop step response with the position loop open.

        Drives the speed cascade (PI with the given gains; ki = 0 is a
        pure P loop) toward a constant linear-speed setpoint.
        """
        cfg = replace(self.cfg, mode="speed")
        profile = constant_speed_profile(speed, duration, cfg.dt)
        return simulate(self.plant, GainVector(0.0, kv, ki), self.current_gains,
                        profile, cfg)

    def relay_run(self, amplitude: float, duration: float,
                  hysteresis: float = 0.0, speed: float = 0.0) -> SimTrace:
        """Replace the speed controller with an ideal relay.

        The current reference switches between +/- `amplitude` on the
        sign of the angular speed error (with the given hysteresis, in
        rad/s), inducing a limit cycle around the setpoint.
        """
        cfg = replace(self.cfg, mode="speed", relay_amplitude=float(amplitude),
                      relay_hysteresis=float(hysteresis))
        profile = constant_speed_profile(speed, duration, cfg.dt)
        return simulate(self.plant, GainVector(0.0, 1.0, 0.0), self.current_gains,
                        profile, cfg)

    def position_overshoot_pct(self, triple) -> float:
        """Position overshoot as a percentage of the commanded move."""
        m = self.metrics(triple)
        if m.is_diverged:
            return math.inf
        move = float(np.max(np.abs(self.profile.position)))
        if self.overshoot_percent:
            return m.pos_overshoot
        return 100.0 * m.pos_overshoot / move if move > 0.0 else 0.0

    def probe(self, triple) -> tuple[bool, float]:
        """Stability verdict for a gain triple from a short test move."""
        return stability_probe(self.plant, GainVector(*self._key(triple)),
                               self.current_gains, self.cfg)

    # -- internals ---------------------------------------------------------------

    @staticmethod
    def _key(triple) -> tuple[float, float, float]:
        kp, kv, ki = (float(v) for v in np.asarray(triple, dtype=float).reshape(3))
        return kp, kv, ki

    def _extract(self, trace: SimTrace) -> MetricVector:
        return extract_metrics(trace, self.profile, settle_band=self.settle_band,
                               overshoot_percent=self.overshoot_percent)
