"""Classical autotuning procedures: Ziegler-Nichols, relay feedback, ITAE.

All three produce a `TuningResult` whose cost comes from the same bench
as the optimizer's, so the methods are directly comparable.  The two
frequency-domain methods probe the speed loop (the innermost tunable
loop, tuned first as in standard cascade commissioning): Ziegler-
Nichols bisects the proportional gain to the sustained-oscillation
boundary, relay feedback induces a limit cycle and applies the
describing-function relation Ku = 4d / (pi * a).  Both then map
(Ku, Tu) through the classic PI table Kv = 0.45 Ku, Ti = Tu / 1.2 and
raise the position gain to the largest value keeping overshoot under
25 %.

The oscillation probes may sweep the speed gain beyond the feasible
box: the box bounds what gains are committed, not what a boundary
search transiently visits.  Gains that land outside it are clamped to
the nearest feasible value and the result is flagged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks

from .bench import TuningBench
from .metrics import MetricVector
from .simloop import SimTrace
from .tuner import FeasibleSet

__all__ = [
    "TuningResult",
    "TuningError",
    "measure_limit_cycle",
    "ziegler_nichols",
    "relay_tune",
    "itae_tune",
]

_PI_TABLE_KV = 0.45     # Kv = 0.45 * Ku
_PI_TABLE_TI = 1.2      # Ti = Tu / 1.2
_OVERSHOOT_LIMIT = 25.0  # percent of the move


@dataclass(frozen=True)
class TuningResult:
    """Outcome of one tuning method, scored on the shared bench."""

    method: str
    gains: tuple[float, float, float]     # (kp, kv, ki)
    cost: float
    metrics: MetricVector
    diagnostics: dict = field(default_factory=dict)
    clamped: bool = False


class TuningError(RuntimeError):
    """A probe experiment could not reach a verdict.

    Carries the probe log and the last trace so the failed experiment
    can be replayed and inspected.
    """

    def __init__(self, message: str, diagnostics: dict | None = None,
                 trace: SimTrace | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
        self.trace = trace


# -- oscillation measurement ----------------------------------------------------


def _oscillation(trace: SimTrace, floor: float,
                 settle_frac: float = 0.4) -> tuple[bool, float, float | None]:
    """Classify the tail of a speed-loop probe.

    Returns (oscillating, amplitude, period).  The verdict compares the
    peak deviation of the last half of the post-transient window against
    the half before it: a sustained or growing envelope that also
    exceeds ``floor`` counts as oscillating, so decaying transients and
    solver-level ripple do not.  Amplitude and period describe the final
    window (period is None when too few cycles are visible).
    """
    if trace.diverged:
        return True, math.inf, None
    e = np.asarray(trace.e_speed, dtype=float)
    tail = e[int(settle_frac * len(e)):]
    if len(tail) < 8:
        return False, 0.0, None
    tail = tail - np.mean(tail)
    half = len(tail) // 2
    env_a = float(np.abs(tail[:half]).max())
    env_b = float(np.abs(tail[half:]).max())
    oscillating = env_b >= 0.9 * env_a and env_b >= floor
    amplitude, period, _ = measure_limit_cycle(tail[half:], trace.dt)
    return oscillating, amplitude, period


def measure_limit_cycle(signal: np.ndarray, dt: float,
                        min_cycles: int = 5) -> tuple[float, float | None, int]:
    """Amplitude and period of a steady oscillation.

    Amplitude is half the peak-to-peak span; the period is the mean
    spacing of the last ``min_cycles`` prominent positive peaks (None if
    fewer are visible).  Returns (amplitude, period, n_peaks).
    """
    w = np.asarray(signal, dtype=float)
    w = w - np.mean(w)
    amplitude = float(w.max() - w.min()) / 2.0
    if amplitude <= 0.0:
        return 0.0, None, 0
    peaks, _ = find_peaks(w, prominence=0.3 * amplitude)
    if len(peaks) < min_cycles + 1:
        return amplitude, None, len(peaks)
    last = peaks[-(min_cycles + 1):]
    period = float(np.mean(np.diff(last))) * dt
    return amplitude, period, len(peaks)


# -- shared mapping steps -------------------------------------------------------


def _pi_from_ultimate(ku: float, tu: float) -> tuple[float, float]:
    kv = _PI_TABLE_KV * ku
    ti = tu / _PI_TABLE_TI
    return kv, kv / ti


def _clamp_speed_gains(fset: FeasibleSet, kv: float,
                       ki: float) -> tuple[float, float, bool]:
    """Force (kv, ki) into the feasible box, honoring a tn-quantized axis."""
    kv_f = float(np.clip(kv, *fset.kv))
    if fset.third_axis == "tn":
        tn = kv_f / ki if ki > 0.0 else fset.third[1]
        tn_f = float(np.clip(tn, *fset.third))
        ki_f = kv_f / tn_f
        clamped = kv_f != kv or tn_f != tn
    else:
        ki_f = float(np.clip(ki, *fset.third))
        clamped = kv_f != kv or ki_f != ki
    return kv_f, ki_f, clamped


def _position_gain(bench: TuningBench, fset: FeasibleSet, kv: float, ki: float,
                   rel_tol: float = 1e-3) -> tuple[float, list[tuple[float, float]]]:
    """Largest feasible kp keeping position overshoot under the 25 % bound."""
    lo, hi = fset.kp
    history: list[tuple[float, float]] = []

    def overshoot(kp: float) -> float:
        pct = bench.position_overshoot_pct((kp, kv, ki))
        history.append((kp, pct))
        return pct

    if overshoot(hi) < _OVERSHOOT_LIMIT:
        return hi, history
    if overshoot(lo) >= _OVERSHOOT_LIMIT:
        raise TuningError(
            f"position overshoot exceeds {_OVERSHOOT_LIMIT:.0f}% even at the "
            f"smallest feasible kp with speed gains ({kv:.4g}, {ki:.4g})",
            diagnostics={"overshoot_history": history},
        )
    while (hi - lo) > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if overshoot(mid) < _OVERSHOOT_LIMIT:
            lo = mid
        else:
            hi = mid
    return lo, history


def _finish(bench: TuningBench, method: str, kp: float, kv: float, ki: float,
            diagnostics: dict, clamped: bool) -> TuningResult:
    triple = (kp, kv, ki)
    return TuningResult(
        method=method,
        gains=triple,
        cost=bench.cost(triple),
        metrics=bench.metrics(triple),
        diagnostics=diagnostics,
        clamped=clamped,
    )


# -- the three methods ----------------------------------------------------------


def ziegler_nichols(
    bench: TuningBench,
    fset: FeasibleSet,
    speed: float = 0.1,
    duration: float = 2.0,
    probe_cap: float = 100.0,
    rel_tol: float = 1e-3,
) -> TuningResult:
    """Ultimate-gain tuning of the cascade.

    With the position loop open and the speed integral off, bisects the
    speed gain to the sustained-oscillation boundary of a step probe at
    ``speed`` m/s.  The upward search doubles from the feasible ceiling
    and gives up past ``probe_cap`` times it.

    Raises
    ------
    TuningError
        No oscillation boundary within reach, oscillation already
        sustained at the smallest feasible gain, or no measurable period
        at the boundary.
    """
    floor = 1e-4 * speed
    probes: list[dict] = []

    def probe(kv: float) -> tuple[bool, float, float | None, SimTrace]:
        trace = bench.speed_step(kv, 0.0, speed=speed, duration=duration)
        osc, amp, period = _oscillation(trace, floor)
        probes.append({"kv": kv, "oscillating": osc, "amplitude": amp,
                       "period": period})
        return osc, amp, period, trace

    lo = fset.kv[0]
    osc, _, _, trace = probe(lo)
    if osc:
        raise TuningError(
            "oscillation already sustained at the smallest feasible speed gain",
            diagnostics={"probes": probes}, trace=trace,
        )
    hi = fset.kv[1]
    cap = probe_cap * fset.kv[1]
    boundary_period: float | None = None
    while True:
        osc, _, period, trace = probe(hi)
        if osc:
            boundary_period = period
            break
        lo = hi
        hi *= 2.0
        if hi > cap:
            raise TuningError(
                f"no oscillation boundary found below {cap:.4g} "
                f"({probe_cap:.0f}x the feasible speed-gain ceiling)",
                diagnostics={"probes": probes}, trace=trace,
            )
    while (hi - lo) > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        osc, _, period, trace = probe(mid)
        if osc:
            hi = mid
            if period is not None:
                boundary_period = period
        else:
            lo = mid
    if boundary_period is None:
        raise TuningError("no measurable oscillation period at the boundary",
                          diagnostics={"probes": probes}, trace=trace)

    ku, tu = hi, boundary_period
    kv_t, ki_t = _pi_from_ultimate(ku, tu)
    kv, ki, clamped = _clamp_speed_gains(fset, kv_t, ki_t)
    kp, overshoot_history = _position_gain(bench, fset, kv, ki)
    return _finish(bench, "ziegler-nichols", kp, kv, ki, {
        "ku": ku, "tu": tu, "table_kv": kv_t, "table_ki": ki_t,
        "probes": probes, "overshoot_history": overshoot_history,
    }, clamped)


def relay_tune(
    bench: TuningBench,
    fset: FeasibleSet,
    amplitude: float | None = None,
    duration: float = 2.0,
    hysteresis: float = 0.0,
    speed: float = 0.0,
) -> TuningResult:
    """Relay-feedback tuning of the cascade.

    Replaces the speed controller with an ideal relay of the given
    current amplitude (default 10 % of the current limit), measures the
    limit cycle of the speed error, and converts it to an ultimate gain
    via the describing function Ku = 4d / (pi * a), with ``a`` in the
    angular units the speed gain acts on.  The PI table and position
    bisection then match :func:`ziegler_nichols`.

    Raises
    ------
    TuningError
        Fewer than five limit cycles visible within the horizon.
    """
    d = 0.1 * bench.cfg.current_limit if amplitude is None else float(amplitude)
    trace = bench.relay_run(d, duration, hysteresis=hysteresis, speed=speed)
    if trace.diverged:
        raise TuningError("relay probe diverged", trace=trace)
    e = np.asarray(trace.e_speed, dtype=float)
    window = e[len(e) // 2:]
    a_lin, tu, n_peaks = measure_limit_cycle(window, trace.dt)
    if tu is None or a_lin <= 0.0:
        raise TuningError(
            f"no limit cycle within the simulation horizon ({n_peaks} cycles seen)",
            diagnostics={"amplitude": a_lin, "n_peaks": n_peaks}, trace=trace,
        )
    a = a_lin / bench.plant.lead_per_rad
    ku = 4.0 * d / (math.pi * a)
    kv_t, ki_t = _pi_from_ultimate(ku, tu)
    kv, ki, clamped = _clamp_speed_gains(fset, kv_t, ki_t)
    kp, overshoot_history = _position_gain(bench, fset, kv, ki)
    return _finish(bench, "relay", kp, kv, ki, {
        "d": d, "a": a, "tu": tu, "ku": ku, "n_cycles": n_peaks,
        "table_kv": kv_t, "table_ki": ki_t,
        "overshoot_history": overshoot_history,
    }, clamped)


def itae_tune(bench: TuningBench, fset: FeasibleSet) -> TuningResult:
    """Exhaustive minimization of the summed position and speed ITAE.

    Scores every grid point on the two time-weighted tracking integrals
    with unit weights (ignoring the bench's weighted cost, which is
    still reported for comparison against the other methods) and keeps
    the first minimizer in grid order.
    """
    triples = fset.canonical(fset.grid())
    table = bench.metric_table(triples)
    vals = np.array(
        [math.inf if m.is_diverged else m.pos_itae + m.spd_itae for m in table]
    )
    best = int(np.argmin(vals))
    kp, kv, ki = (float(v) for v in triples[best])
    return _finish(bench, "itae", kp, kv, ki, {
        "itae": float(vals[best]), "criterion": "pos_itae + spd_itae",
        "grid_index": best,
    }, False)
