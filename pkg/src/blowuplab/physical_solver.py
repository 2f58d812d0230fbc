"""Explicit RK4 integration of ``u_t = Δu + |u|^{p-1}u`` up to numerical blow-up."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .core import DomainError, ProblemSpec, Snapshot, initial_snapshot, laplacian

log = logging.getLogger(__name__)

BLOWUP = "blowup-threshold-reached"
FINAL_TIME = "final-time-reached"
UNDERFLOW = "step-underflow"


class IntegratorFault(RuntimeError):
    """The integrator produced non-finite values."""

    def __init__(self, message: str, dump: dict | None = None):
        super().__init__(message)
        self.dump = dump or {}


class StepUnderflow(RuntimeError):
    pass


class EstimationError(ValueError):
    pass


@dataclass(frozen=True)
class StepControl:
    cfl_safety: float = 0.4
    ode_safety: float = 0.05
    u_max: float = 1e8
    dt_min: float = 1e-14
    t_final: float = 10.0
    # keep a trace snapshot each time the sup-norm grows by this factor
    trace_growth: float = 1.02
    integrator: str = "rk4-explicit"

    def __post_init__(self):
        if not 0 < self.cfl_safety < 1:
            raise ValueError("cfl_safety must lie in (0, 1)")
        if not 0 < self.ode_safety < 1:
            raise ValueError("ode_safety must lie in (0, 1)")
        for name in ("u_max", "dt_min", "t_final"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.trace_growth > 1:
            raise ValueError("trace_growth must exceed 1")
        if self.integrator != "rk4-explicit":
            raise ValueError(f"unsupported integrator {self.integrator!r}")

    def dt_for(self, sup_norm: float, h: float, N: int, p: float) -> float:
        dt = self.cfl_safety * h * h / (2.0 * N)
        if sup_norm > 0:
            dt = min(dt, self.ode_safety * sup_norm ** (1.0 - p))
        return dt


@dataclass
class RunResult:
    spec: ProblemSpec
    control: StepControl
    snapshots: list[Snapshot]
    # per accepted step: t, sup_norm, dt, mass
    series: np.ndarray
    trace: list[Snapshot]
    # u_t at each trace snapshot, for Hermite interpolation in time
    trace_rates: list[np.ndarray]
    T_hat: float | None
    termination: str
    fit_slope: float | None = None
    positivity_violation: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def final(self) -> Snapshot:
        return self.trace[-1]

    def sup_series(self) -> tuple[np.ndarray, np.ndarray]:
        return self.series[:, 0], self.series[:, 1]

    def state_at(self, t: float) -> Snapshot:
        """Solution at time ``t`` by cubic Hermite interpolation of the trace."""
        times = np.array([s.time for s in self.trace])
        if not times[0] <= t <= times[-1]:
            raise DomainError(
                f"time {t!r} outside the computed range [{times[0]}, {times[-1]}]"
            )
        i = int(np.searchsorted(times, t, side="right")) - 1
        if i >= len(times) - 1 or times[i] == t:
            return self.trace[i]
        a, b = self.trace[i], self.trace[i + 1]
        u = _hermite(
            a.time, b.time, a.values, b.values, self.trace_rates[i], self.trace_rates[i + 1], t
        )
        return a.with_values(u, t, a.step_index)


def reaction(u: np.ndarray, p: float) -> np.ndarray:
    return np.abs(u) ** (p - 1.0) * u


def _rhs(u, grid, boundary, p):
    f = laplacian(u, grid, boundary) + reaction(u, p)
    if boundary == "dirichlet":
        f[-1] = 0.0
        if not grid.radial:
            f[0] = 0.0
    return f


def _rk4(u, dt, grid, boundary, p):
    k1 = _rhs(u, grid, boundary, p)
    k2 = _rhs(u + 0.5 * dt * k1, grid, boundary, p)
    k3 = _rhs(u + 0.5 * dt * k2, grid, boundary, p)
    k4 = _rhs(u + dt * k3, grid, boundary, p)
    return u + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4), k1


def step(snapshot: Snapshot, control: StepControl, dt: float | None = None) -> Snapshot:
    """Advance one RK4 step; ``dt`` defaults to the dual CFL/ODE law."""
    spec = snapshot.spec
    grid = snapshot.grid
    if dt is None:
        dt = control.dt_for(snapshot.sup_norm, grid.h, spec.N, spec.p)
    if dt < control.dt_min:
        raise StepUnderflow(f"dt = {dt:.3e} below dt_min = {control.dt_min:.3e}")
    with np.errstate(over="ignore", invalid="ignore"):
        u, _ = _rk4(np.asarray(snapshot.values), dt, grid, spec.boundary, spec.p)
    if not np.all(np.isfinite(u)):
        raise IntegratorFault(
            "non-finite value after RK4 step",
            {"t": snapshot.time, "dt": dt, "sup_norm": snapshot.sup_norm},
        )
    return snapshot.with_values(u, snapshot.time + dt, snapshot.step_index + 1)


def _hermite(t0, t1, u0, u1, f0, f1, t):
    dt = t1 - t0
    th = (t - t0) / dt
    h00 = 2 * th**3 - 3 * th**2 + 1
    h10 = th**3 - 2 * th**2 + th
    h01 = -2 * th**3 + 3 * th**2
    h11 = th**3 - th**2
    return h00 * u0 + h10 * dt * f0 + h01 * u1 + h11 * dt * f1


def solve_until_blowup(
    spec: ProblemSpec,
    control: StepControl | None = None,
    output_times=(),
    node_count: int = 401,
    initial: Snapshot | None = None,
    fit_window: int = 40,
) -> RunResult:
    """Integrate until the sup-norm reaches ``control.u_max`` or ``t_final``.

    Snapshots at ``output_times`` come from cubic Hermite interpolation between
    accepted steps. ``trace`` keeps the accepted states on a geometric ladder of
    the sup-norm (plus the first and last), which is what the diagnostics use.
    """
    control = control or StepControl()
    snap = initial if initial is not None else initial_snapshot(spec, node_count)
    grid = snap.grid
    p = spec.p
    boundary = spec.boundary
    weights = grid.quadrature_weights()
    pending = sorted(float(t) for t in output_times)
    if any(t < 0 for t in pending):
        raise ValueError("output times must be nonnegative")

    u = np.array(snap.values)
    t = snap.time
    positive = bool(np.all(u >= 0)) and np.any(u > 0)
    rows = [(t, float(np.max(np.abs(u))), 0.0, float(weights @ u))]
    snapshots: list[Snapshot] = []
    trace = [snap]
    rates = [_rhs(u, grid, boundary, p)]
    last_trace_sup = rows[0][1]
    violation = 0.0
    k = 0
    while pending and pending[0] <= t:
        snapshots.append(snap.with_values(u, pending.pop(0), 0))

    termination = FINAL_TIME
    while True:
        sup = float(np.max(np.abs(u)))
        if sup >= control.u_max:
            termination = BLOWUP
            break
        if t >= control.t_final:
            break
        dt = control.dt_for(sup, grid.h, spec.N, p)
        dt = min(dt, control.t_final - t) if control.t_final - t > control.dt_min else dt
        if dt < control.dt_min:
            termination = UNDERFLOW
            break
        with np.errstate(over="ignore", invalid="ignore"):
            u_new, f_old = _rk4(u, dt, grid, boundary, p)
        if not np.all(np.isfinite(u_new)):
            raise IntegratorFault(
                "non-finite value after RK4 step", {"t": t, "dt": dt, "sup_norm": sup, "step": k}
            )
        t_new = t + dt
        k += 1
        if positive:
            neg = float(-np.min(u_new))
            if neg > violation:
                violation = neg
        while pending and pending[0] <= t_new:
            f_new = _rhs(u_new, grid, boundary, p)
            tq = pending.pop(0)
            snapshots.append(
                snap.with_values(_hermite(t, t_new, u, u_new, f_old, f_new, tq), tq, k)
            )
        u, t = u_new, t_new
        sup_new = float(np.max(np.abs(u)))
        rows.append((t, sup_new, dt, float(weights @ u)))
        if sup_new >= control.trace_growth * last_trace_sup or sup_new >= control.u_max:
            trace.append(snap.with_values(u, t, k))
            rates.append(_rhs(u, grid, boundary, p))
            last_trace_sup = sup_new

    if trace[-1].time != t:
        trace.append(snap.with_values(u, t, k))
        rates.append(_rhs(u, grid, boundary, p))
    series = np.array(rows, dtype=float)
    T_hat = None
    slope = None
    # an underflowing step is itself a sign of blow-up, so both get an estimate
    if termination in (BLOWUP, UNDERFLOW):
        try:
            T_hat, slope = estimate_blowup_time(series[:, :2], p, window=fit_window)
        except EstimationError as exc:
            log.warning("blow-up time not estimated: %s", exc)
    if violation > 1e-12:
        log.warning("positivity violated by %.3e", violation)
    return RunResult(
        spec=spec,
        control=control,
        snapshots=snapshots,
        series=series,
        trace=trace,
        trace_rates=rates,
        T_hat=T_hat,
        termination=termination,
        fit_slope=slope,
        positivity_violation=violation,
        meta={"steps": k, "node_count": grid.node_count, "h": grid.h},
    )


def estimate_blowup_time(sup_series, p: float, window: int = 40, threshold: float = 0.0):
    """Extrapolate the blow-up time from ``(t, ||u||_inf)`` pairs.

    Fits ``||u||^{-(p-1)}`` linearly in t over the last ``window`` usable
    points and returns ``(T_hat, slope)``. A nonnegative slope means the data
    is not blowing up and the estimate is refused.
    """
    data = np.asarray(sup_series, dtype=float)
    if data.ndim != 2 or data.shape[1] < 2:
        raise EstimationError("expected (t, sup_norm) pairs")
    usable = data[(data[:, 1] > threshold) & (data[:, 1] > 0)]
    if usable.shape[0] < 5:
        raise EstimationError(f"need at least 5 usable points, got {usable.shape[0]}")
    tail = usable[-window:]
    t = tail[:, 0]
    z = tail[:, 1] ** (1.0 - p)
    # centre t for conditioning
    tm = t.mean()
    slope, intercept = np.polyfit(t - tm, z, 1)
    if not slope < 0:
        raise EstimationError(f"sup-norm is not growing (fitted slope {slope:.3e} >= 0)")
    return float(tm - intercept / slope), float(slope)
