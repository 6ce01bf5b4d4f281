"""Adaptive high-order propagation with dense output and event refinement.

The integrator is DOP853 (8th-order embedded Runge-Kutta with a free 7th
order interpolant).  Two backends share this interface: a compiled core
(``ilmtour._core``) with native right-hand sides for the rotating-frame
three-body fields, and a pure-Python driver built on scipy's stepper
object.  The compiled backend is used automatically when it is importable,
the field is one of the native kinds, and no Python callbacks are
involved; set ILMTOUR_PURE_PYTHON=1 to force the fallback.

Event times are refined by root-polishing the event scalar on the dense
output (bisection with inverse-quadratic interpolation, via brentq).
"""

from __future__ import annotations

import bisect
import math
import os
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.integrate import DOP853
from scipy.optimize import brentq

__all__ = [
    "IntegratorConfig", "EventSpec", "Crossing", "Trajectory",
    "PropagationError", "StiffnessError", "EventNotFoundError",
    "propagate", "propagate_with_stm", "propagate_to_event",
    "backend_name",
]

_EPS = np.finfo(float).eps

if os.environ.get("ILMTOUR_PURE_PYTHON"):
    _core = None
else:
    try:
        from . import _core
    except ImportError:
        _core = None


def backend_name() -> str:
    return "compiled" if _core is not None else "python"


class PropagationError(RuntimeError):
    pass


class StiffnessError(PropagationError):
    """Step size underflow; the requested tolerance cannot be met."""


class EventNotFoundError(PropagationError):
    """Terminal event did not occur within the allowed span."""


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-13
    abs_tol: float = 1e-13
    max_step: float = math.inf
    max_duration: float | None = None

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol"):
            v = getattr(self, name)
            if not (0.0 < v <= 1e-3):
                raise ValueError(f"{name} = {v} outside (0, 1e-3]")
        if self.max_step <= 0.0:
            raise ValueError("max_step must be positive")


# event kinds; "altitude" is a sphere crossing used as a feasibility floor,
# kept distinct so downstream code can recognize rejected trajectories
_KINDS = ("y_plane", "x_plane", "sphere", "altitude", "callback")


@dataclass(frozen=True)
class EventSpec:
    """Scalar event g(t, y) = 0 along the flow.

    direction: +1 counts only ascending crossings (g goes - to +), -1 only
    descending, 0 both.  count selects which accepted occurrence terminates
    (when terminal).  constraint is an optional (axis, op, value) gate with
    op in {"<", ">"}; crossings violating it are discarded, not counted.
    """

    kind: str
    direction: int = 0
    count: int = 1
    terminal: bool = False
    value: float = 0.0
    center: tuple = (0.0, 0.0, 0.0)
    radius: float = 0.0
    func: object = None
    constraint: tuple | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")
        if self.kind == "callback" and not callable(self.func):
            raise ValueError("callback event requires func")
        if self.kind in ("sphere", "altitude") and self.radius <= 0.0:
            raise ValueError("sphere event requires positive radius")
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if self.constraint is not None and self.constraint[1] not in ("<", ">"):
            raise ValueError("constraint op must be '<' or '>'")

    def g(self, t, y):
        if self.kind == "y_plane":
            return y[1]
        if self.kind == "x_plane":
            return y[0] - self.value
        if self.kind in ("sphere", "altitude"):
            dx = y[0] - self.center[0]
            dy = y[1] - self.center[1]
            dz = y[2] - self.center[2]
            return math.sqrt(dx * dx + dy * dy + dz * dz) - self.radius
        return self.func(t, y)

    def accepts(self, y) -> bool:
        if self.constraint is None:
            return True
        axis, op, val = self.constraint
        return y[axis] < val if op == "<" else y[axis] > val


@dataclass(frozen=True)
class Crossing:
    event: int
    t: float
    y: np.ndarray


class Trajectory:
    """Sampled propagation result, optionally with dense interpolation."""

    def __init__(self, t, y, crossings, status, terminal_index=None, segments=None):
        self.t = np.asarray(t)
        self.y = np.asarray(y)
        self.crossings = crossings
        self.status = status          # "finished" | "event" | "stopped"
        self.terminal_index = terminal_index
        self._segments = segments

    @property
    def t_final(self) -> float:
        return float(self.t[-1])

    @property
    def y_final(self) -> np.ndarray:
        return self.y[-1]

    def __call__(self, t):
        if self._segments is None:
            raise ValueError("trajectory was propagated without dense output")
        t = np.asarray(t, float)
        scalar = t.ndim == 0
        tq = np.atleast_1d(t)
        fwd = self.t[-1] >= self.t[0]
        # per-segment end times, increasing in propagation direction
        ends = [s.t_max if fwd else -s.t_min for s in self._segments]
        out = np.empty((tq.size, self.y.shape[1]))
        for k, tk in enumerate(tq):
            idx = min(bisect.bisect_left(ends, tk if fwd else -tk),
                      len(self._segments) - 1)
            out[k] = self._segments[idx](tk)
        return out[0] if scalar else out


def _resolve_field(field):
    """Return (python_fun, native_tag) for a field argument.

    Accepts a plain callable f(t, y), or an object exposing eom/params
    (a rotating-frame three-body model), in which case the compiled core
    can run it natively.
    """
    if callable(field) and not hasattr(field, "eom"):
        tag = getattr(field, "native_kind", None)
        return field, tag
    kind = getattr(field, "native_kind", "cr3bp")
    return field.eom, (kind, field.params)


_BRENTQ_RTOL = 4 * _EPS


def _refine(gfun, lo, hi):
    """Root of gfun on [lo, hi] to machine precision (bisection + IQI)."""
    glo, ghi = gfun(lo), gfun(hi)
    if glo == 0.0:
        return lo
    if ghi == 0.0:
        return hi
    return brentq(gfun, lo, hi, xtol=1e-15, rtol=_BRENTQ_RTOL)


def _propagate_python(fun, y0, t0, t1, cfg, events, stop_when, dense):
    solver = DOP853(fun, t0, np.asarray(y0, float), t1,
                    rtol=cfg.rel_tol, atol=cfg.abs_tol, max_step=cfg.max_step)
    g_prev = [ev.g(t0, y0) for ev in events]
    counts = [0] * len(events)
    ts, ys = [t0], [np.asarray(y0, float).copy()]
    segments = [] if dense else None
    crossings: list[Crossing] = []
    status, term_idx = "finished", None
    span = abs(t1 - t0)

    while solver.status == "running":
        solver.step()
        if solver.status == "failed":
            raise StiffnessError(
                f"step size underflow at t = {solver.t:.6g} "
                f"(rel_tol = {cfg.rel_tol:g})")
        t_old, t_new, y_new = solver.t_old, solver.t, solver.y
        interp = solver.dense_output() if (dense or events) else None
        if dense:
            segments.append(interp)

        # scan all events on this step, refine, then apply in time order
        hits = []
        for i, ev in enumerate(events):
            g_new = ev.g(t_new, y_new)
            go = g_prev[i]
            g_prev[i] = g_new
            up = go <= 0.0 <= g_new
            down = go >= 0.0 >= g_new
            if go == 0.0 and g_new == 0.0:
                continue
            if not ((up and ev.direction >= 0) or (down and ev.direction <= 0)):
                continue
            t_e = _refine(lambda tt, e=ev: e.g(tt, interp(tt)), t_old, t_new)
            if abs(t_e - t0) <= 1e-12 * max(span, 1.0) and not ts[1:]:
                continue  # crossing at the very start of the propagation
            hits.append((t_e, i))
        hits.sort(key=lambda h: h[0], reverse=t1 < t0)

        stop_t = None
        for t_e, i in hits:
            ev = events[i]
            y_e = interp(t_e)
            if not ev.accepts(y_e):
                continue
            counts[i] += 1
            crossings.append(Crossing(i, t_e, np.asarray(y_e, float)))
            if ev.terminal and counts[i] >= ev.count:
                status, term_idx, stop_t = "event", i, t_e
                break
            if stop_when is not None and stop_when(counts):
                status, stop_t = "stopped", t_e
                break
        if stop_t is not None:
            ts.append(stop_t)
            ys.append(np.asarray(interp(stop_t), float))
            if dense:
                pass  # last segment already covers stop_t
            break

        ts.append(t_new)
        ys.append(y_new.copy())

    return Trajectory(ts, ys, crossings, status, term_idx, segments)


def _try_compiled(tag, y0, t0, t1, cfg, events, stop_when, dense):
    """Run the compiled core if it can handle this job; else None."""
    if _core is None or tag is None or dense or len(y0) != _core.dim_of(tag[0]):
        return None
    if any(ev.kind == "callback" for ev in events):
        return None
    if stop_when is not None and not isinstance(stop_when, dict):
        return None
    return _core.propagate(tag[0], np.asarray(tag[1], float),
                           np.asarray(y0, float), t0, t1,
                           cfg.rel_tol, cfg.abs_tol, cfg.max_step,
                           events, stop_when)


def propagate(field, state0, t_span, config=None, events=(), stop_when=None,
              dense=False) -> Trajectory:
    """Propagate state0 over t_span, recording step samples and crossings.

    stop_when may be a callable on the per-event crossing-count list (the
    propagation halts with status "stopped" when it returns true), or a
    dict {event_index: required_count} demanding all listed counts, which
    the compiled backend understands natively.
    """
    cfg = config or IntegratorConfig()
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not (math.isfinite(t0) and math.isfinite(t1)):
        raise ValueError("t_span must be finite")
    if cfg.max_duration is not None and abs(t1 - t0) > cfg.max_duration:
        raise PropagationError(
            f"span {abs(t1 - t0):.6g} exceeds max_duration {cfg.max_duration:.6g}")
    fun, tag = _resolve_field(field)
    out = _try_compiled(tag, state0, t0, t1, cfg, events, stop_when, dense)
    if out is not None:
        ts, ys, cross_raw, status_code, term_idx = out
        crossings = [Crossing(int(i), float(t), y) for i, t, y in cross_raw]
        status = ("finished", "event", "stopped")[status_code]
        return Trajectory(ts, ys, crossings, status,
                          term_idx if term_idx >= 0 else None, None)
    if isinstance(stop_when, dict):
        need = dict(stop_when)
        stop_when = lambda counts: all(counts[i] >= n for i, n in need.items())
    return _propagate_python(fun, state0, t0, t1, cfg, events, stop_when, dense)


def propagate_with_stm(model, state0, t_span, config=None):
    """Propagate state plus 6x6 state transition matrix (42-dim system).

    Returns (final_state, stm, trajectory); the trajectory samples carry
    the full 42-dim augmented state.
    """
    cfg = config or IntegratorConfig()
    y0 = np.concatenate([np.asarray(state0, float), np.eye(6).ravel()])
    t0, t1 = float(t_span[0]), float(t_span[1])
    out = None
    if _core is not None:
        out = _core.propagate("cr3bp_stm", np.asarray(model.params, float),
                              y0, t0, t1, cfg.rel_tol, cfg.abs_tol,
                              cfg.max_step, (), None)
    if out is not None:
        ts, ys, _, _, _ = out
        traj = Trajectory(ts, ys, [], "finished", None, None)
    else:
        traj = _propagate_python(model.eom_stm, y0, t0, t1, cfg, (), None, False)
    yf = traj.y_final
    return yf[:6].copy(), yf[6:].reshape(6, 6).copy(), traj


def propagate_to_event(field, state0, events, config=None, t_max=None):
    """Propagate until the terminal event fires; error if it never does.

    Returns (event_state, event_time, event_index, trajectory).
    """
    events = list(events)
    if not events:
        raise ValueError("at least one event required")
    if not any(ev.terminal for ev in events):
        raise ValueError("at least one event must be terminal")
    cfg = config or IntegratorConfig()
    if t_max is None:
        if cfg.max_duration is None:
            raise ValueError("t_max or config.max_duration required")
        t_max = cfg.max_duration
    traj = propagate(field, state0, (0.0, t_max), cfg, events)
    if traj.status != "event":
        raise EventNotFoundError(
            f"no terminal event within {t_max:.6g} time units "
            f"({len(traj.crossings)} non-terminal crossings seen)")
    return traj.y_final.copy(), traj.t_final, traj.terminal_index, traj
