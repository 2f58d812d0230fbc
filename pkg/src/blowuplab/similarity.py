"""Similarity variables, Gaussian-weighted norms and the Ornstein-Uhlenbeck semigroup.

Around a point ``a`` and a blow-up time ``T`` the rescaled field is

    w_a(s, y) = (T - t)^β u(t, a + y sqrt(T - t)),    s = -log(T - t),

which solves ``w_s = Δw - (y/2)·∇w + |w|^{p-1}w - βw`` on the expanding
domain ``e^{s/2}(Ω - a)`` and vanishes outside it. The linear part generates
the semigroup ``T(s)``; its kernel follows from the SDE
``dY = -Y/2 ds + sqrt(2) dW``: Y_s is Gaussian with mean ``e^{-s/2} y`` and
variance ``2(1 - e^{-s})`` per coordinate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import erfc, gammaincc, roots_genlaguerre, roots_hermite

from .core import DomainError, Grid, Snapshot, derive_exponents, laplacian, sphere_area

PHYSICAL = "transformed-from-physical"
NATIVE = "native-w-solve"
VN = "vn-frame"


@dataclass(frozen=True, eq=False)
class SimilarityFrame:
    """One rescaled field sampled on a uniform y-grid.

    ``radial`` frames sample ``y`` in ``[0, Y_max]``; full-line (N = 1) frames
    sample ``[-Y_max, Y_max]``. ``domain`` is ``(geometry, R)`` of the physical
    problem, used to mask nodes outside the transformed domain.
    """

    y: np.ndarray
    w: np.ndarray
    s: float
    s0: float
    center: float
    N: int
    p: float
    radial: bool
    source: str = PHYSICAL
    T: float | None = None
    domain: tuple[str, float] | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.shape != np.shape(self.y):
            raise ValueError("frame values and y-grid differ in shape")
        if not np.all(np.isfinite(w)):
            raise ValueError("frame values must be finite")
        if self.source != VN and self.s < self.s0 - 1e-12:
            raise ValueError("similarity time precedes s0")
        object.__setattr__(self, "w", w)

    @property
    def Y_max(self) -> float:
        return float(self.y[-1])

    @property
    def dy(self) -> float:
        return float(self.y[1] - self.y[0])

    def with_w(self, w: np.ndarray, s: float, source: str | None = None) -> "SimilarityFrame":
        return SimilarityFrame(
            y=self.y,
            w=w,
            s=s,
            s0=self.s0,
            center=self.center,
            N=self.N,
            p=self.p,
            radial=self.radial,
            source=source or self.source,
            T=self.T,
            domain=self.domain,
        )

    def interpolant(self) -> Callable[[np.ndarray], np.ndarray]:
        """Cubic interpolant of w (even extension for radial frames), zero outside."""
        return _spline_with_zero(self.y, self.w, self.radial, self.N)


def y_grid(Y_max: float = 12.0, nodes: int = 2401, radial: bool = False) -> np.ndarray:
    if nodes < 3:
        raise ValueError("a y-grid needs at least 3 nodes")
    if radial:
        return np.linspace(0.0, Y_max, nodes)
    return np.linspace(-Y_max, Y_max, nodes)


def _spline_with_zero(x, v, radial, N):
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if radial:
        xs = np.concatenate([-x[:0:-1], x])
        vs = np.concatenate([v[:0:-1], v])
        lo, hi = -x[-1], x[-1]
    else:
        xs, vs = x, v
        lo, hi = x[0], x[-1]
    spline = CubicSpline(xs, vs)

    def f(z):
        z = np.asarray(z, dtype=float)
        if radial and N > 1:
            z = np.abs(z)
        out = spline(z)
        return np.where((z >= lo) & (z <= hi), out, 0.0)

    return f


def snapshot_interpolant(snapshot: Snapshot) -> Callable[[np.ndarray], np.ndarray]:
    """Cubic interpolant of u in the physical coordinate, zero outside Ω."""
    grid = snapshot.grid
    return _spline_with_zero(grid.nodes, snapshot.values, grid.radial, grid.N)


def _physical_coordinate(snapshot: Snapshot, a: float, y: np.ndarray, scale: float):
    if snapshot.grid.radial and snapshot.grid.N > 1:
        if a != 0:
            raise DomainError("off-centre rescaling is only supported for N = 1")
        return y * scale
    return a + y * scale


def to_similarity_frame(
    snapshot: Snapshot, a: float, T_hat: float, y: np.ndarray | None = None
) -> SimilarityFrame:
    t = snapshot.time
    if not t < T_hat:
        raise DomainError(f"snapshot time {t} is not before T = {T_hat}")
    spec = snapshot.spec
    ex = spec.exponents
    radial = snapshot.grid.radial and spec.N > 1
    y = y_grid(radial=radial) if y is None else np.asarray(y, dtype=float)
    tau = T_hat - t
    f = snapshot_interpolant(snapshot)
    x = _physical_coordinate(snapshot, a, y, math.sqrt(tau))
    w = tau**ex.beta * f(x)
    return SimilarityFrame(
        y=y,
        w=w,
        s=-math.log(tau),
        s0=-math.log(T_hat),
        center=float(a),
        N=spec.N,
        p=spec.p,
        radial=radial,
        source=PHYSICAL,
        T=T_hat,
        domain=(spec.geometry, spec.R),
        meta={"t": t},
    )


def from_similarity_frame(frame: SimilarityFrame, x: np.ndarray) -> np.ndarray:
    """Map a w-frame back to physical values ``u(t, x)`` at the given nodes."""
    if frame.T is None:
        raise DomainError("frame carries no blow-up time")
    tau = math.exp(-frame.s)
    beta = 1.0 / (frame.p - 1.0)
    x = np.asarray(x, dtype=float)
    yq = np.abs(x) / math.sqrt(tau) if frame.radial else (x - frame.center) / math.sqrt(tau)
    return tau ** (-beta) * frame.interpolant()(yq)


def to_vn_frame(run, t_n: float, s: float, y: np.ndarray | None = None, M: float | None = None,
                a: float = 0.0) -> SimilarityFrame:
    """Rescale a run around ``(T_hat, a)`` with base time ``t_n``.

    ``v_n(s, y) = (T - t_n)^β u(T + (T - t_n) s, a + y sqrt(T - t_n))`` for
    ``s`` in (-2, 0). When ``M`` is given, the bound ``|v_n| <= M |s|^{-β}`` is
    checked and recorded in ``meta``.
    """
    T = run.T_hat
    if T is None:
        raise DomainError("run has no blow-up time estimate")
    if not -2.0 < s < 0.0:
        raise DomainError(f"v_n frames need s in (-2, 0), got {s}")
    if not t_n < T:
        raise DomainError("t_n must precede the blow-up time")
    scale = T - t_n
    t = T + scale * s
    snap = run.state_at(t)
    spec = run.spec
    ex = spec.exponents
    radial = snap.grid.radial and spec.N > 1
    y = y_grid(radial=radial) if y is None else np.asarray(y, dtype=float)
    x = _physical_coordinate(snap, a, y, math.sqrt(scale))
    v = scale**ex.beta * snapshot_interpolant(snap)(x)
    meta = {"n_time": t_n, "t": t}
    if M is not None:
        bound = M * abs(s) ** (-ex.beta)
        meta["bound"] = bound
        meta["bound_ok"] = bool(np.max(np.abs(v)) <= bound)
    return SimilarityFrame(
        y=y,
        w=v,
        s=s,
        s0=-2.0,
        center=float(a),
        N=spec.N,
        p=spec.p,
        radial=radial,
        source=VN,
        T=T,
        domain=(spec.geometry, spec.R),
        meta=meta,
    )


# ----------------------------------------------------------------------------
# weighted quadrature


def rho(y: np.ndarray) -> np.ndarray:
    return np.exp(-np.asarray(y, dtype=float) ** 2 / 4.0)


def rho_mass(N: int) -> float:
    return (4.0 * math.pi) ** (N / 2.0)


def rho_tail_mass(N: int, Y: float) -> float:
    """``∫_{|y| > Y} ρ dy`` in R^N."""
    if N == 1:
        return 2.0 * math.sqrt(math.pi) * float(erfc(Y / 2.0))
    return rho_mass(N) * float(gammaincc(N / 2.0, Y * Y / 4.0))


@dataclass(frozen=True)
class RhoQuadrature:
    """Quadrature for ``∫ f(y) ρ(y) dy`` over R^N (radial functions when N > 1).

    ``trapezoid`` works on a uniform grid truncated at ``Y_max`` and reports
    the analytic Gaussian tail; ``gauss-hermite`` uses the mapped Hermite rule
    (generalised Laguerre in r^2 for radial N > 1), which has no truncation.
    """

    N: int = 1
    rule: str = "trapezoid"
    Y_max: float = 12.0
    nodes: int = 2401
    gh_nodes: int = 80

    def __post_init__(self):
        if self.rule not in ("trapezoid", "gauss-hermite"):
            raise ValueError(f"unknown quadrature rule {self.rule!r}")

    @property
    def radial(self) -> bool:
        return self.N > 1

    def grid(self) -> np.ndarray:
        return y_grid(self.Y_max, self.nodes, self.radial)

    def tail_mass(self) -> float:
        if self.rule == "gauss-hermite":
            return 0.0
        return rho_tail_mass(self.N, self.Y_max)

    def points_weights(self) -> tuple[np.ndarray, np.ndarray]:
        """Points y_i and weights c_i with ``Σ c_i f(y_i) ≈ ∫ f ρ``."""
        if self.rule == "trapezoid":
            y = self.grid()
            return y, trapezoid_rho_weights(y, self.N, self.radial)
        if not self.radial:
            x, wx = roots_hermite(self.gh_nodes)
            # y = 2x maps e^{-x^2} onto e^{-y^2/4}
            return 2.0 * x, 2.0 * wx
        alpha = self.N / 2.0 - 1.0
        t, wt = roots_genlaguerre(self.gh_nodes, alpha)
        return 2.0 * np.sqrt(t), wt * 2.0 ** (self.N - 1) * sphere_area(self.N)


def trapezoid_rho_weights(y: np.ndarray, N: int, radial: bool) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    dy = y[1] - y[0]
    w = np.full(y.shape, dy)
    w[0] = w[-1] = 0.5 * dy
    w = w * rho(y)
    if radial:
        w = w * sphere_area(N) * y ** (N - 1)
    return w


class WeightedNorm(NamedTuple):
    value: float
    uncertainty: float
    quasi: bool

    def __float__(self):
        return self.value


def _norm_from_values(values, weights, q, tail, sup):
    integral = float(weights @ np.abs(values) ** q)
    value = integral ** (1.0 / q)
    unc = (integral + sup**q * tail) ** (1.0 / q) - value
    return WeightedNorm(value, unc, q < 1)


def weighted_norm(frame, q: float, quad: RhoQuadrature | None = None) -> WeightedNorm:
    """``(∫ |w|^q ρ dy)^{1/q}`` with the truncated Gaussian tail as uncertainty.

    ``frame`` is a :class:`SimilarityFrame` or a callable of y. For frames and
    the trapezoid rule the frame's own grid is used. Values ``q < 1`` are
    allowed and flagged as a quasi-norm.
    """
    if not q > 0:
        raise DomainError(f"q must be positive, got {q}")
    if isinstance(frame, SimilarityFrame):
        N = frame.N
        if quad is None or quad.rule == "trapezoid":
            weights = trapezoid_rho_weights(frame.y, N, frame.radial)
            sup = float(np.max(np.abs(frame.w))) if frame.w.size else 0.0
            tail = rho_tail_mass(N, frame.Y_max)
            if not frame.radial and frame.y[0] > -frame.Y_max + 1e-12:
                raise ValueError("full-line frames must be symmetric in y")
            return _norm_from_values(frame.w, weights, q, tail, sup)
        f = frame.interpolant()
    else:
        f = frame
        quad = quad or RhoQuadrature()
    y, c = quad.points_weights()
    values = np.asarray(f(y), dtype=float)
    sup = float(np.max(np.abs(values)))
    return _norm_from_values(values, c, q, quad.tail_mass(), sup)


# ----------------------------------------------------------------------------
# Ornstein-Uhlenbeck semigroup


def _as_callable(phi, N: int) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(phi, SimilarityFrame):
        return phi.interpolant()
    if callable(phi):
        return phi
    y, v = phi
    return _spline_with_zero(y, v, N > 1, N)


def mehler_apply(phi, s: float, quad: RhoQuadrature | None = None,
                 y: np.ndarray | None = None) -> np.ndarray:
    """Evaluate ``T(s)φ`` at the points ``y`` (default: the quadrature grid).

    ``T(s)φ(y) = E φ(e^{-s/2} y + sqrt(2(1 - e^{-s})) Z)`` with Z standard
    normal in R^N. The ``gauss-hermite`` rule evaluates this expectation with
    Hermite nodes (radial N > 1: Hermite along the axis, generalised Laguerre
    for the transverse chi-square part); the ``trapezoid`` rule convolves with
    the explicit kernel on the grid (N = 1 only).
    """
    if s < 0:
        raise DomainError(f"semigroup time must be nonnegative, got {s}")
    quad = quad or RhoQuadrature(rule="gauss-hermite")
    N = quad.N
    y = quad.grid() if y is None else np.asarray(y, dtype=float)
    if s == 0:
        return np.asarray(_as_callable(phi, N)(y), dtype=float)
    a = math.exp(-s / 2.0)
    v = -math.expm1(-s)
    if quad.rule == "trapezoid":
        if N != 1:
            raise NotImplementedError("kernel quadrature is one-dimensional")
        z = quad.grid()
        if callable(phi) or isinstance(phi, SimilarityFrame):
            phi_z = np.asarray(_as_callable(phi, N)(z), dtype=float)
        else:
            phi_z = np.asarray(phi[1], dtype=float)
            if phi_z.shape != z.shape:
                raise ValueError("sampled φ must live on the quadrature grid")
        return kernel_matrix(y, z, s) @ phi_z
    shape = y.shape
    y = y.ravel()
    f = _as_callable(phi, N)
    x, wx = roots_hermite(quad.gh_nodes)
    wx = wx / math.sqrt(math.pi)
    spread = math.sqrt(2.0 * v)
    # axial component: mean a*y, std sqrt(2v): a*y + 2 sqrt(v) x
    axial = a * y[:, None] + spread * math.sqrt(2.0) * x[None, :]
    if N == 1:
        return (np.asarray(f(axial), dtype=float) @ wx).reshape(shape)
    alpha = (N - 1) / 2.0 - 1.0
    tl, wl = roots_genlaguerre(quad.gh_nodes, alpha)
    wl = wl / math.gamma(alpha + 1.0)
    # transverse |Z'|^2 ~ chi^2_{N-1} = 2 t, scaled by 2v
    radius = np.sqrt(axial[:, :, None] ** 2 + 2.0 * v * 2.0 * tl[None, None, :])
    vals = np.asarray(f(radius), dtype=float)
    return np.einsum("ijk,j,k->i", vals, wx, wl).reshape(shape)


def kernel_matrix(y: np.ndarray, z: np.ndarray, s: float) -> np.ndarray:
    """Trapezoid-weighted Mehler kernel ``K_s(y, z) dz`` (N = 1)."""
    a = math.exp(-s / 2.0)
    v = -math.expm1(-s)
    dz = z[1] - z[0]
    wz = np.full(z.shape, dz)
    wz[0] = wz[-1] = 0.5 * dz
    diff = z[None, :] - a * y[:, None]
    return np.exp(-(diff**2) / (4.0 * v)) / math.sqrt(4.0 * math.pi * v) * wz[None, :]


@dataclass(frozen=True)
class ContractionReport:
    q: float
    s: float
    norm_in: float
    norm_out: float
    margin: float
    tolerance: float
    violated: bool


def _contraction_reports(f, s, qs, quad, tolerance):
    y, c = (quad.grid(), trapezoid_rho_weights(quad.grid(), quad.N, quad.radial))
    if quad.rule == "gauss-hermite":
        y, c = quad.points_weights()
    before = np.asarray(f(y), dtype=float)
    after = mehler_apply(f, s, RhoQuadrature(N=quad.N, rule="gauss-hermite",
                                             gh_nodes=quad.gh_nodes), y)
    tail = quad.tail_mass() if quad.rule == "trapezoid" else 0.0
    sup = float(np.max(np.abs(before)))
    out = []
    for q in qs:
        if q < 1:
            raise DomainError("contraction is stated for q >= 1")
        n_in = _norm_from_values(before, c, q, tail, sup)
        n_out = _norm_from_values(after, c, q, tail, sup)
        tol = tolerance + n_in.uncertainty + n_out.uncertainty
        margin = n_in.value - n_out.value
        out.append(ContractionReport(q, s, n_in.value, n_out.value, margin, tol, margin < -tol))
    return out


def contraction_check(phi, s: float, q: float, quad: RhoQuadrature | None = None,
                      tolerance: float = 1e-6) -> ContractionReport:
    """Compare ``||T(s)φ||`` with ``||φ||`` in ``L^q_ρ``; the margin is in - out."""
    quad = quad or RhoQuadrature()
    return _contraction_reports(_as_callable(phi, quad.N), s, [q], quad, tolerance)[0]


def contraction_sweep(phis, s_values, q_values, quad: RhoQuadrature | None = None,
                      tolerance: float = 1e-6) -> list[ContractionReport]:
    """:func:`contraction_check` over a product of functions, times and exponents.

    ``T(s)φ`` is evaluated once per (φ, s) and shared by all q.
    """
    quad = quad or RhoQuadrature()
    reports = []
    for phi in phis:
        f = _as_callable(phi, quad.N)
        for s in s_values:
            reports.extend(_contraction_reports(f, s, q_values, quad, tolerance))
    return reports


def random_band_limited(rng: np.random.Generator, modes: int = 6, omega_max: float = 3.0):
    """Random trigonometric sum ``Σ c_k cos(ω_k y + θ_k)``, |ω_k| <= omega_max."""
    amp = rng.normal(size=modes)
    omega = rng.uniform(0.0, omega_max, size=modes)
    phase = rng.uniform(0.0, 2.0 * math.pi, size=modes)
    offset = rng.normal()

    def phi(y):
        y = np.asarray(y, dtype=float)
        return offset + np.sum(
            amp * np.cos(omega * y[..., None] + phase), axis=-1
        )

    return phi


@dataclass
class SmoothingScan:
    q: float
    m: float
    family: str
    rows: list[tuple[float, float, float]]
    bounded: dict[float, bool]
    growth: dict[float, float]
    s_star: float | None

    def ratios(self, s: float) -> tuple[np.ndarray, np.ndarray]:
        sel = [(b, r) for b, ss, r in self.rows if ss == s]
        b, r = zip(*sel)
        return np.array(b), np.array(r)


def delayed_smoothing_scan(
    q: float,
    spike_centers: Sequence[float],
    s_values: Sequence[float],
    quad: RhoQuadrature | None = None,
    m: float = 1.0,
    width: float = 0.05,
    family: str = "spike",
    growth_tol: float = 2.0,
    slope_tol: float = 1e-3,
) -> SmoothingScan:
    """Tabulate ``||T(s)φ_b||_{L^q_ρ} / ||φ_b||_{L^m_ρ}`` over centres b and times s.

    ``family="spike"``: φ_b are Gaussians of fixed width centred at b; the
    ratio counts as bounded at time s when ``max_b ratio / ratio(b=0)`` stays
    below ``growth_tol`` over the scanned centres. ``family="exponential"``:
    φ_c = exp(c y) (the ``spike_centers`` act as c); bounded when the fitted
    slope of log-ratio against c^2 is at most ``slope_tol``. ``s_star`` is the
    least scanned s from which on every ratio is bounded.
    """
    if not q > m >= 1:
        raise DomainError("need 1 <= m < q")
    if family not in ("spike", "exponential"):
        raise ValueError(f"unknown test family {family!r}")
    quad = quad or RhoQuadrature()
    if quad.N != 1 or quad.rule != "trapezoid":
        raise NotImplementedError("scan uses the one-dimensional trapezoid grid")
    y = quad.grid()
    c = trapezoid_rho_weights(y, 1, False)
    centers = np.asarray(spike_centers, dtype=float)
    if family == "spike":
        Phi = np.exp(-((y[:, None] - centers[None, :]) ** 2) / (2.0 * width**2))
    else:
        Phi = np.exp(y[:, None] * centers[None, :])
    denom = (c @ np.abs(Phi) ** m) ** (1.0 / m)
    gh = RhoQuadrature(N=1, rule="gauss-hermite", gh_nodes=quad.gh_nodes)
    rows = []
    bounded = {}
    growth = {}
    for s in s_values:
        if family == "spike":
            out = kernel_matrix(y, y, s) @ Phi
        else:
            out = np.column_stack(
                [mehler_apply(lambda z, cc=cc: np.exp(cc * z), s, gh, y) for cc in centers]
            )
        ratio = (c @ np.abs(out) ** q) ** (1.0 / q) / denom
        for b, r in zip(centers, ratio):
            rows.append((float(b), float(s), float(r)))
        if family == "spike":
            ref = ratio[np.argmin(np.abs(centers))]
            growth[float(s)] = float(np.max(ratio) / ref)
            bounded[float(s)] = growth[float(s)] <= growth_tol
        else:
            slope = float(np.polyfit(centers**2, np.log(ratio), 1)[0])
            growth[float(s)] = slope
            bounded[float(s)] = slope <= slope_tol
    s_star = None
    for s in sorted(bounded, reverse=True):
        if not bounded[s]:
            break
        s_star = s
    return SmoothingScan(q, m, family, rows, bounded, growth, s_star)


# ----------------------------------------------------------------------------
# rescaled PDE


def _active_mask(frame: SimilarityFrame, s: float) -> np.ndarray | None:
    if frame.domain is None:
        return None
    geometry, R = frame.domain
    x = frame.y * math.exp(-s / 2.0)
    if frame.radial:
        return x < R
    return np.abs(frame.center + x) < R


def w_rhs(w: np.ndarray, frame: SimilarityFrame, boundary: str = "dirichlet") -> np.ndarray:
    """``Δw - (y/2)·∇w + |w|^{p-1}w - βw`` on the frame grid (boundary rows pinned)."""
    y = frame.y
    dy = frame.dy
    beta = 1.0 / (frame.p - 1.0)
    grid = Grid(
        kind="uniform-radial" if frame.radial else "uniform-interval",
        nodes=y,
        h=dy,
        R=frame.Y_max,
        N=frame.N if frame.radial else 1,
    )
    lap = laplacian(w, grid, "neumann" if boundary == "neumann" else "dirichlet")
    drift = np.zeros_like(w)
    central = (w[2:] - w[:-2]) / (2.0 * dy)
    yi = y[1:-1]
    # cell Péclet |y| dy / 2 > 2: fall back to upwinding (velocity +y/2)
    up = np.abs(yi) * dy > 4.0
    if np.any(up):
        back = (w[1:-1] - w[:-2]) / dy
        fwd = (w[2:] - w[1:-1]) / dy
        central = np.where(up, np.where(yi > 0, back, fwd), central)
    drift[1:-1] = -0.5 * yi * central
    if boundary == "neumann":
        drift[-1] = 0.0
    out = lap + drift + np.abs(w) ** (frame.p - 1.0) * w - beta * w
    if boundary == "dirichlet":
        out[-1] = 0.0
        if not frame.radial:
            out[0] = 0.0
    elif not frame.radial:
        raise ValueError("neumann w-boundary is only available on radial frames")
    return out


def solve_w_equation(
    initial: SimilarityFrame,
    s_end: float,
    control=None,
    boundary: str = "dirichlet",
    output_s: Sequence[float] = (),
) -> list[SimilarityFrame]:
    """Integrate the rescaled PDE from ``initial.s`` to ``s_end`` with RK4.

    Returns frames at ``output_s`` (exact step landings) followed by the final
    frame. Nodes outside the transformed domain are held at zero.
    """
    from .physical_solver import IntegratorFault, StepControl, StepUnderflow

    control = control or StepControl()
    if s_end < initial.s:
        raise DomainError("s_end precedes the initial frame")
    frame = initial.with_w(initial.w, initial.s, NATIVE)
    w = np.array(initial.w)
    s = initial.s
    N = initial.N if initial.radial else 1
    p = initial.p
    dy = initial.dy
    targets = sorted(x for x in output_s if initial.s < x < s_end) + [s_end]
    frames = []

    def apply_mask(v, at):
        mask = _active_mask(frame, at)
        if mask is not None:
            v = np.where(mask, v, 0.0)
        return v

    w = apply_mask(w, s)
    for target in targets:
        while s < target - 1e-15:
            sup = float(np.max(np.abs(w)))
            dt = control.cfl_safety * dy * dy / (2.0 * N)
            if sup > 0:
                dt = min(dt, control.ode_safety * sup ** (1.0 - p))
            dt = min(dt, target - s)
            if dt < control.dt_min and target - s > control.dt_min:
                raise StepUnderflow(f"w-step {dt:.3e} below dt_min")
            k1 = w_rhs(w, frame, boundary)
            k2 = w_rhs(w + 0.5 * dt * k1, frame, boundary)
            k3 = w_rhs(w + 0.5 * dt * k2, frame, boundary)
            k4 = w_rhs(w + dt * k3, frame, boundary)
            w = w + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            s = target if target - (s + dt) < 1e-15 else s + dt
            w = apply_mask(w, s)
            if not np.all(np.isfinite(w)):
                raise IntegratorFault("non-finite value in the w-equation", {"s": s})
        frames.append(frame.with_w(w.copy(), s, NATIVE))
    return frames
