"""Post-processing of blow-up runs: rate classification and critical-norm checks.

All functions read immutable runs and snapshots and return plain report
objects; nothing here mutates or re-integrates a run except through the
public state interpolation of :class:`~blowuplab.physical_solver.RunResult`.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss

from .core import DomainError, Snapshot, ball_volume, rescale_snapshot, sphere_area
from .physical_solver import RunResult
from .similarity import RhoQuadrature, snapshot_interpolant, to_similarity_frame, weighted_norm

log = logging.getLogger(__name__)

TYPE_I = "type-I"
TYPE_II = "type-II-suspected"
UNDETERMINED = "undetermined"

GL_ORDER = 8


# ----------------------------------------------------------------------------
# spatial integrals


def _measure(snapshot: Snapshot, x: np.ndarray) -> np.ndarray:
    grid = snapshot.grid
    if grid.radial and grid.N > 1:
        return sphere_area(grid.N) * np.abs(x) ** (grid.N - 1)
    return np.ones_like(x)


def _power_integral(snapshot: Snapshot, lo: float, hi: float, q: float) -> float:
    """``∫_lo^hi |u|^q dμ`` with Gauss-Legendre on each spline piece."""
    grid = snapshot.grid
    lo = max(lo, float(grid.nodes[0]))
    hi = min(hi, float(grid.nodes[-1]))
    if hi <= lo:
        return 0.0
    inner = grid.nodes[(grid.nodes > lo) & (grid.nodes < hi)]
    breaks = np.concatenate([[lo], inner, [hi]])
    xg, wg = leggauss(GL_ORDER)
    half = 0.5 * np.diff(breaks)
    mid = 0.5 * (breaks[1:] + breaks[:-1])
    x = mid[:, None] + half[:, None] * xg[None, :]
    f = snapshot_interpolant(snapshot)
    vals = np.abs(f(x)) ** q * _measure(snapshot, x)
    return float(np.sum(half[:, None] * wg[None, :] * vals))


@dataclass(frozen=True)
class CriticalNorm:
    integral: float
    norm: float | None
    q_star: float


def critical_norm(snapshot: Snapshot, region=None, q_star: float | None = None) -> CriticalNorm:
    """``∫ |u|^{q*}`` over the whole domain or over ``region = ("ball", a, r)``.

    The norm ``integral^{1/q*}`` is included when ``q* >= 1``.
    """
    q = snapshot.spec.exponents.q_star if q_star is None else float(q_star)
    grid = snapshot.grid
    if region is None or region == "whole-domain":
        lo, hi = float(grid.nodes[0]), float(grid.nodes[-1])
    else:
        kind, a, r = region
        if kind != "ball":
            raise ValueError(f"unknown region {kind!r}")
        if not r >= 0:
            raise DomainError("ball radius must be nonnegative")
        if grid.radial and grid.N > 1:
            if a != 0:
                raise DomainError("radial snapshots only support balls about the origin")
            lo, hi = 0.0, float(r)
        else:
            lo, hi = a - r, a + r
    integral = _power_integral(snapshot, lo, hi, q)
    return CriticalNorm(integral, integral ** (1.0 / q) if q >= 1 else None, q)


def concentration_integral(snapshot: Snapshot, a: float, k: float, T_hat: float,
                           q_star: float | None = None) -> float:
    """``∫_{|x-a| <= k sqrt(T_hat - t)} |u|^{q*} dx`` on the backward parabola."""
    if not snapshot.time < T_hat:
        raise DomainError("the snapshot must precede the blow-up time")
    radius = k * math.sqrt(T_hat - snapshot.time)
    return critical_norm(snapshot, ("ball", a, radius), q_star).integral


def w_frame_integral(snapshot: Snapshot, a: float, k: float, T_hat: float,
                     q_star: float | None = None, nodes: int = 20001) -> float:
    """``∫_{|y| <= k} |w_a(s, y)|^{q*} dy`` computed in the similarity frame."""
    spec = snapshot.spec
    q = spec.exponents.q_star if q_star is None else float(q_star)
    radial = snapshot.grid.radial and spec.N > 1
    y = np.linspace(0.0, k, nodes) if radial else np.linspace(-k, k, nodes)
    frame = to_similarity_frame(snapshot, a, T_hat, y)
    g = np.abs(frame.w) ** q
    if radial:
        g = g * sphere_area(spec.N) * y ** (spec.N - 1)
    # composite Simpson on the uniform y-grid (odd node count)
    h = y[1] - y[0]
    return float(h / 3.0 * (g[0] + g[-1] + 4.0 * g[1:-1:2].sum() + 2.0 * g[2:-1:2].sum()))


def homogeneous_concentration(N: int, p: float, k: float) -> float:
    """Limit ``κ^{q*} |B_k|`` of the parabola integral for the ODE solution."""
    from .core import derive_exponents

    ex = derive_exponents(N, p)
    return ex.kappa**ex.q_star * ball_volume(N) * k**N


# ----------------------------------------------------------------------------
# series and type classification


@dataclass
class DiagnosticsSeries:
    t: np.ndarray
    sup_norm: np.ndarray
    m: np.ndarray
    critical: np.ndarray
    local: dict = field(default_factory=dict)
    concentration: dict = field(default_factory=dict)
    far_field: np.ndarray | None = None
    T_hat: float | None = None
    p: float = 3.0

    def __post_init__(self):
        if self.m.size and not np.all(np.isfinite(self.m)):
            raise ValueError("m(t) must be finite before T_hat")

    @property
    def M(self) -> float:
        return float(np.max(self.m)) if self.m.size else 0.0

    @property
    def tau(self) -> np.ndarray:
        return self.T_hat - self.t


def _states(run: RunResult) -> list[Snapshot]:
    """Trace and output snapshots merged in time order."""
    seen = {}
    for snap in list(run.trace) + list(run.snapshots):
        seen.setdefault(snap.time, snap)
    return [seen[t] for t in sorted(seen)]


def series_from_sup(t, sup, T_hat: float, p: float) -> DiagnosticsSeries:
    """Minimal series from ``(t, ||u||_∞)`` pairs, used for synthetic checks."""
    t = np.asarray(t, dtype=float)
    sup = np.asarray(sup, dtype=float)
    keep = t < T_hat
    t, sup = t[keep], sup[keep]
    m = (T_hat - t) ** (1.0 / (p - 1.0)) * sup
    return DiagnosticsSeries(t, sup, m, np.full(t.shape, np.nan), T_hat=T_hat, p=p)


def build_series(
    run: RunResult,
    balls: Sequence[tuple[float, float]] = (),
    parabolas: Sequence[tuple[float, float]] = (),
    R_far: float | None = None,
    T_hat: float | None = None,
) -> DiagnosticsSeries:
    """Evaluate every diagnostic on the run's states before ``T_hat``.

    ``balls`` are ``(a, r)`` pairs for local critical integrals and
    ``parabolas`` are ``(a, k)`` pairs for concentration integrals.
    """
    T = run.T_hat if T_hat is None else T_hat
    if T is None:
        raise DomainError("run has no blow-up time estimate")
    states = [s for s in _states(run) if s.time < T]
    beta = run.spec.exponents.beta
    t = np.array([s.time for s in states])
    sup = np.array([s.sup_norm for s in states])
    crit = np.array([critical_norm(s).integral for s in states])
    local = {
        (a, r): np.array([critical_norm(s, ("ball", a, r)).integral for s in states])
        for a, r in balls
    }
    conc = {
        (a, k): np.array([concentration_integral(s, a, k, T) for s in states])
        for a, k in parabolas
    }
    far = None
    if R_far is not None:
        far = np.array([_far_sup(s, R_far) for s in states])
    return DiagnosticsSeries(
        t=t, sup_norm=sup, m=(T - t) ** beta * sup, critical=crit, local=local,
        concentration=conc, far_field=far, T_hat=T, p=run.spec.p,
    )


@dataclass(frozen=True)
class TypeReport:
    verdict: str
    C1_hat: float | None
    C2_hat: float | None
    records: int
    reason: str = ""


def _window(series: DiagnosticsSeries, decades: float) -> np.ndarray:
    tau = series.tau
    if tau.size == 0:
        return np.zeros(0, dtype=bool)
    return tau <= tau.min() * 10.0**decades


def classify_blowup_type(
    series: DiagnosticsSeries,
    window: float = 2.0,
    ratio: float = 10.0,
    threshold: float = 0.0,
    trend: float = 0.1,
    min_records: int = 10,
) -> TypeReport:
    """Classify the blow-up rate from ``m(t) = (T_hat - t)^β ||u(t)||_∞``.

    The window is the last ``window`` decades of ``T_hat - t``. A monotone
    rise of m by more than ``trend`` (relative) across the window, or by more
    than ``ratio``, flags type II; otherwise ``C2_hat/C1_hat < ratio`` certifies
    type I.
    """
    sel = _window(series, window) & (series.sup_norm > threshold)
    n = int(np.count_nonzero(sel))
    if n < min_records:
        return TypeReport(UNDETERMINED, None, None, n,
                          f"only {n} records in the window (need {min_records})")
    order = np.argsort(series.t[sel])
    m = series.m[sel][order]
    c1, c2 = float(m.min()), float(m.max())
    rise = m[-1] / m[0]
    monotone = bool(np.all(np.diff(m) >= -1e-12 * np.abs(m[1:])))
    if rise > ratio or (monotone and rise > 1.0 + trend):
        return TypeReport(TYPE_II, c1, c2, n, f"m rises by a factor {rise:.3g}")
    if c2 / c1 < ratio:
        return TypeReport(TYPE_I, c1, c2, n)
    return TypeReport(UNDETERMINED, c1, c2, n, f"C2/C1 = {c2 / c1:.3g} without a trend")


# ----------------------------------------------------------------------------
# ε-regularity and far field


@dataclass(frozen=True)
class DecayReport:
    a: float
    q: float
    s: np.ndarray
    norms: np.ndarray
    rate_hat: float
    C0_hat: float
    passes: bool
    band: tuple[float, float]
    reason: str = ""


def epsilon_regularity_check(
    run: RunResult,
    a: float,
    q: float | None = None,
    fit_window: tuple[float, float] | None = None,
    T: float | None = None,
    quad: RhoQuadrature | None = None,
    band: tuple[float, float] = (0.85, 1.15),
) -> DecayReport:
    """Fit the decay rate of ``||w_a(s)||_{L^q_ρ}`` over a window in s.

    ``q`` defaults to ``max(p, Np/2) + 1``. The default window is the last two
    decades of ``T - t`` covered by the run. Passing requires the fitted rate
    to lie in ``[band[0] β, band[1] β]``; ``C0_hat`` is the least constant with
    ``||w(s)||_q <= C0 e^{-β(s-σ)} ||w(σ)||_{L^1_ρ}`` on the window.
    """
    spec = run.spec
    ex = spec.exponents
    if q is None:
        q = max(spec.p, spec.N * spec.p / 2.0) + 1.0
    if q < spec.p or q <= spec.N * spec.p / 2.0:
        log.warning("q = %g violates q >= p, q > Np/2; decay is checked anyway", q)
    T = run.T_hat if T is None else T
    if T is None:
        raise DomainError("run has no blow-up time estimate")
    states = [s for s in _states(run) if s.time < T]
    if not states:
        raise DomainError("insufficient data: no state before T")
    s_all = np.array([-math.log(T - st.time) for st in states])
    if fit_window is None:
        fit_window = (s_all[-1] - 2.0 * math.log(10.0), s_all[-1])
    lo, hi = fit_window
    if lo > s_all[-1] or hi > s_all[-1] + 1e-9:
        raise DomainError(
            f"insufficient data: window [{lo:.3f}, {hi:.3f}] beyond resolved s <= {s_all[-1]:.3f}"
        )
    sel = [i for i, s in enumerate(s_all) if lo <= s <= hi]
    if len(sel) < 3:
        raise DomainError(f"insufficient data: {len(sel)} states in the window")
    radial = spec.radial and spec.N > 1
    quad = quad or RhoQuadrature(N=spec.N if radial else 1)
    y = quad.grid()
    s = s_all[sel]
    nq, n1 = [], []
    for i in sel:
        frame = to_similarity_frame(states[i], a, T, y)
        nq.append(weighted_norm(frame, q).value)
        n1.append(weighted_norm(frame, 1.0).value)
    nq = np.array(nq)
    n1 = np.array(n1)
    beta = ex.beta
    if np.any(nq <= 0):
        raise DomainError("weighted norm vanished in the window")
    rate = -float(np.polyfit(s, np.log(nq), 1)[0])
    C0 = float(np.max(nq * np.exp(beta * (s - s[0])) / n1[0]))
    lo_b, hi_b = band[0] * beta, band[1] * beta
    ok = lo_b <= rate <= hi_b
    reason = "" if ok else f"rate {rate:.4g} outside [{lo_b:.4g}, {hi_b:.4g}]"
    return DecayReport(float(a), float(q), s, nq, rate, C0, ok, (lo_b, hi_b), reason)


def _far_sup(snapshot: Snapshot, R_far: float) -> float:
    x = snapshot.grid.nodes
    sel = np.abs(x) >= R_far
    return float(np.max(np.abs(snapshot.values[sel]))) if np.any(sel) else 0.0


@dataclass(frozen=True)
class FarFieldReport:
    R_far: float
    sup_value: float
    growth: float
    bounded: bool


def far_field_bound_check(run: RunResult, R_far: float, growth_limit: float = 0.10) -> FarFieldReport:
    """Sup of |u| over ``|x| >= R_far`` across all states.

    Bounded iff the far-field sup grew by at most ``growth_limit`` over the last
    decade of ``T_hat - t`` (the last half of the time span without a blow-up
    estimate).
    """
    states = _states(run)
    if R_far > states[0].grid.R:
        raise DomainError(f"R_far = {R_far} lies beyond the grid radius {states[0].grid.R}")
    t = np.array([s.time for s in states])
    far = np.array([_far_sup(s, R_far) for s in states])
    if run.T_hat is not None:
        keep = t < run.T_hat
        t, far = t[keep], far[keep]
        tau = run.T_hat - t
        win = tau <= 10.0 * tau.min()
    else:
        win = t >= 0.5 * t[-1]
    ref = far[win][0]
    peak = float(np.max(far[win]))
    growth = peak / ref - 1.0 if ref > 0 else (0.0 if peak == 0 else math.inf)
    return FarFieldReport(float(R_far), float(np.max(far)), float(growth), growth <= growth_limit)


# ----------------------------------------------------------------------------
# blow-up points and scaling


@dataclass(frozen=True)
class BlowupPoint:
    center: float
    peak: float
    radius: float


@dataclass(frozen=True)
class BlowupPointSet:
    points: tuple[BlowupPoint, ...]
    U_loc: float

    @property
    def centers(self) -> list[float]:
        return [pt.center for pt in self.points]

    def __len__(self):
        return len(self.points)


def locate_blowup_points(run: RunResult, U_loc: float | None = None,
                         radius_factor: float = 3.0) -> BlowupPointSet:
    """Local maxima of |u| above ``U_loc`` at the final resolved time.

    Maxima closer than ``radius_factor * sqrt(T_hat - t_final)`` (at least one
    grid step) are merged into the higher one. ``U_loc`` defaults to 10% of the
    final sup-norm.
    """
    final = run.final
    if run.T_hat is None:
        log.warning("run did not blow up; no blow-up points")
        return BlowupPointSet((), float(U_loc or 0.0))
    u = np.abs(final.values)
    x = final.grid.nodes
    U_loc = 0.1 * float(u.max()) if U_loc is None else float(U_loc)
    left = np.concatenate([[-np.inf], u[:-1]])
    right = np.concatenate([u[1:], [-np.inf]])
    if final.grid.radial:
        left[0] = -np.inf
    idx = np.flatnonzero((u >= left) & (u >= right) & (u > U_loc))
    radius = max(radius_factor * math.sqrt(max(run.T_hat - final.time, 0.0)), final.grid.h)
    points: list[BlowupPoint] = []
    for i in sorted(idx, key=lambda j: -u[j]):
        if all(abs(x[i] - pt.center) > radius for pt in points):
            points.append(BlowupPoint(float(x[i]), float(u[i]), radius))
    if not points:
        log.warning("no local maximum above U_loc = %g", U_loc)
    points.sort(key=lambda pt: pt.center)
    return BlowupPointSet(tuple(points), U_loc)


def rescale_run(run: RunResult, lam: float) -> RunResult:
    """Apply ``u -> λ^{2β} u(λ^2 t, λ x)`` to every state of a run."""
    beta = run.spec.exponents.beta
    trace = [rescale_snapshot(s, lam) for s in run.trace]
    snaps = [rescale_snapshot(s, lam) for s in run.snapshots]
    series = np.array(run.series, dtype=float)
    series[:, 0] /= lam**2
    series[:, 1] *= lam ** (2.0 * beta)
    series[:, 2] /= lam**2
    series[:, 3] *= lam ** (2.0 * beta - run.spec.N)
    rates = [lam ** (2.0 * beta + 2.0) * r for r in run.trace_rates]
    return replace(
        run,
        spec=trace[0].spec,
        snapshots=snaps,
        series=series,
        trace=trace,
        trace_rates=rates,
        T_hat=None if run.T_hat is None else run.T_hat / lam**2,
        positivity_violation=run.positivity_violation * lam ** (2.0 * beta),
    )
