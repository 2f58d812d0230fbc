"""Radial backward self-similar profiles and the Aubin-Talenti bubble.

A profile solves ``φ'' + ((N-1)/r - r/2) φ' + |φ|^{p-1}φ - βφ = 0`` with
``φ'(0) = 0``. Shooting from ``φ(0) = alpha`` ends at the first of three
events: a sign crossing, an upward turn of a positive solution (φ' = 0 with
φ'' > 0, after which the e^{r^2/4} mode takes over), or growth past
``G_max * alpha``. Profiles that decay like ``r^{-2β}`` sit on the boundary
between the first class and the other two and are found by bisection.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicSpline
from scipy.special import beta as beta_fn
from scipy.special import betainc

from .core import DomainError, Grid, bubble_constant, derive_exponents, laplacian, sphere_area

log = logging.getLogger(__name__)

CONSTANT = "constant-kappa"
ZERO = "constant-zero"
CROSSING = "sign-crossing"
UNBOUNDED = "grows-unbounded"
DECAYING = "decaying-candidate"

R0 = 1e-6


class ShootingError(RuntimeError):
    """The profile ODE could not be integrated."""


class BracketError(ValueError):
    """Bisection endpoints fall in the same shooting class."""


@dataclass(frozen=True, eq=False)
class ProfileSolution:
    alpha: float
    N: int
    p: float
    r: np.ndarray
    phi: np.ndarray
    dphi: np.ndarray
    classification: str
    tail_exponent: float | None
    R_max: float
    meta: dict = field(default_factory=dict)

    @property
    def tail_constant(self) -> float:
        """``|φ(R_max)| R_max^{2β}``, the amplitude of the algebraic tail."""
        beta = 1.0 / (self.p - 1.0)
        return float(abs(self.phi[-1]) * self.R_max ** (2.0 * beta))


def profile_rhs(r: float, phi: float, dphi: float, N: int, p: float) -> float:
    """φ'' from the radial profile equation; r = 0 uses the regular limit."""
    beta = 1.0 / (p - 1.0)
    source = abs(phi) ** (p - 1.0) * phi - beta * phi
    if r == 0:
        return -source / N
    return -((N - 1) / r - r / 2.0) * dphi - source


def _tail_fit(r, phi, lo, hi):
    sel = (r >= lo) & (r <= hi) & (phi != 0)
    if np.count_nonzero(sel) < 3:
        return None
    return float(np.polyfit(np.log(r[sel]), np.log(np.abs(phi[sel])), 1)[0])


def _integrate(alpha, N, p, R_max, tolerance, G_max):
    beta = 1.0 / (p - 1.0)
    f2 = (beta * alpha - abs(alpha) ** (p - 1.0) * alpha) / N

    def rhs(r, Y):
        return (Y[1], profile_rhs(r, Y[0], Y[1], N, p))

    def cross(r, Y):
        return Y[0]

    def turn(r, Y):
        # only an upward turn of a positive branch counts
        return Y[1] if Y[0] > 0 else -1.0

    def grow(r, Y):
        return abs(Y[0]) - G_max * abs(alpha)

    for ev in (cross, turn, grow):
        ev.terminal = True
    turn.direction = 1.0
    y0 = (alpha + 0.5 * f2 * R0**2, f2 * R0)
    sol = integrate.solve_ivp(
        rhs, (R0, R_max), y0, method="DOP853", rtol=tolerance, atol=tolerance * 1e-2,
        events=(cross, turn, grow), dense_output=True,
    )
    if sol.status == -1:
        raise ShootingError(f"profile integration failed at alpha={alpha}: {sol.message}")
    return sol


def _event(sol):
    names = (CROSSING, UNBOUNDED, UNBOUNDED)
    hits = [(ev[0], name) for ev, name in zip(sol.t_events, names) if ev.size]
    if not hits:
        return None, float(sol.t[-1])
    r, name = min(hits)
    return name, float(r)


def _sample(sol, alpha, r_end, samples):
    r = np.linspace(0.0, r_end, samples)
    Y = sol.sol(np.maximum(r, R0))
    phi, dphi = Y[0], Y[1]
    phi[0], dphi[0] = alpha, 0.0
    return r, phi, dphi


def shoot_profile(
    alpha: float,
    N: int,
    p: float,
    R_max: float = 30.0,
    tolerance: float = 1e-12,
    G_max: float = 1e3,
    samples: int = 2001,
) -> ProfileSolution:
    """Shoot from ``φ(0) = alpha`` and classify by the first event."""
    ex = derive_exponents(N, p)
    if alpha < 0:
        raise DomainError("profiles are shot from alpha >= 0 (the equation is odd)")
    r = np.linspace(0.0, R_max, samples)
    # κ is matched to rounding so that differently computed κ values agree
    if alpha == 0 or math.isclose(alpha, ex.kappa, rel_tol=1e-14):
        kind = ZERO if alpha == 0 else CONSTANT
        return ProfileSolution(alpha, N, p, r, np.full_like(r, alpha), np.zeros_like(r),
                               kind, None, R_max, {"event_radius": None})
    sol = _integrate(alpha, N, p, R_max, tolerance, G_max)
    kind, r_end = _event(sol)
    r, phi, dphi = _sample(sol, alpha, r_end, samples)
    tail = None
    if kind is None:
        if abs(phi[-1]) < abs(phi[samples // 2]):
            kind = DECAYING
            tail = _tail_fit(r, phi, R_max / 2.0, R_max)
        else:
            kind = UNBOUNDED
    return ProfileSolution(alpha, N, p, r, phi, dphi, kind, tail, r_end,
                           {"event_radius": r_end if kind in (CROSSING, UNBOUNDED) else None})


def classify_alpha(alpha, N, p, R_max=30.0, tolerance=1e-12, G_max=1e3) -> str:
    return shoot_profile(alpha, N, p, R_max, tolerance, G_max, samples=3).classification


def scan_alpha(N: int, p: float, alphas, **kw) -> list[tuple[float, str]]:
    """Classify each shooting value; the result feeds :func:`brackets_from_scan`."""
    return [(float(a), classify_alpha(float(a), N, p, **kw)) for a in alphas]


def brackets_from_scan(scan: list[tuple[float, str]]) -> list[tuple[float, float]]:
    """Adjacent scan values whose classes differ (one of them sign-crossing)."""
    out = []
    for (a0, c0), (a1, c1) in zip(scan, scan[1:]):
        if c0 != c1 and CROSSING in (c0, c1):
            out.append((a0, a1))
    return out


def _departure_radius(sol_a, sol_b, r_end, rel_tol, samples=4001):
    r = np.linspace(1.0, r_end, samples)
    fa = sol_a.sol(r)[0]
    fb = sol_b.sol(r)[0]
    off = np.abs(fa - fb) > rel_tol * np.maximum(np.abs(fa), np.abs(fb))
    if not np.any(off):
        return float(r_end)
    return float(r[np.argmax(off)])


def find_profile(
    N: int,
    p: float,
    alpha_bracket: tuple[float, float],
    bisection_tolerance: float = 1e-13,
    R_max: float = 30.0,
    tolerance: float = 1e-12,
    G_max: float = 1e3,
    departure_tol: float = 1e-3,
    samples: int = 2001,
) -> ProfileSolution:
    """Bisect a shooting bracket down to the decaying profile between the classes.

    The two final bracket solutions agree up to the radius where the growing
    mode of the linearisation separates them; the returned candidate is the
    common trajectory truncated there, with the tail exponent fitted on
    ``[R_eff/2, R_eff]``.
    """
    lo, hi = sorted(float(a) for a in alpha_bracket)
    kw = dict(R_max=R_max, tolerance=tolerance, G_max=G_max)
    c_lo = classify_alpha(lo, N, p, **kw)
    c_hi = classify_alpha(hi, N, p, **kw)
    if c_lo == c_hi or CROSSING not in (c_lo, c_hi):
        raise BracketError(
            f"bracket [{lo}, {hi}] does not separate sign-crossing from another class "
            f"({c_lo} / {c_hi})"
        )
    while hi - lo > bisection_tolerance * max(1.0, abs(hi)):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if classify_alpha(mid, N, p, **kw) == c_lo:
            lo = mid
        else:
            hi = mid
    sol_lo = _integrate(lo, N, p, R_max, tolerance, G_max)
    sol_hi = _integrate(hi, N, p, R_max, tolerance, G_max)
    r_stop = min(_event(sol_lo)[1], _event(sol_hi)[1])
    R_eff = _departure_radius(sol_lo, sol_hi, r_stop, departure_tol)
    alpha = 0.5 * (lo + hi)
    r, phi, dphi = _sample(sol_lo, lo, R_eff, samples)
    phi[0] = alpha
    decaying = abs(phi[-1]) < abs(phi[samples // 2])
    kind = DECAYING if decaying else CROSSING
    tail = _tail_fit(r, phi, R_eff / 2.0, R_eff) if decaying else None
    return ProfileSolution(
        alpha, N, p, r, phi, dphi, kind, tail, R_eff,
        {"bracket": (lo, hi), "classes": (c_lo, c_hi), "departure_tol": departure_tol},
    )


def search_profiles(
    N: int,
    p: float,
    alpha_range: tuple[float, float] | None = None,
    step: float = 0.05,
    **kw,
) -> list[ProfileSolution]:
    """Pre-scan ``alpha_range`` and bisect every bracket that turns up.

    The default range is ``[κ + 0.01, 10]``. Only decaying candidates are
    returned; an empty list means no nonconstant profile in the range.
    """
    ex = derive_exponents(N, p)
    a0, a1 = alpha_range or (ex.kappa + 0.01, 10.0)
    alphas = np.arange(a0, a1 + 0.5 * step, step)
    shoot_kw = {k: kw[k] for k in ("R_max", "tolerance", "G_max") if k in kw}
    scan = scan_alpha(N, p, alphas, **shoot_kw)
    found = []
    for bracket in brackets_from_scan(scan):
        prof = find_profile(N, p, bracket, **kw)
        if prof.classification == DECAYING:
            found.append(prof)
    return found


def critical_norm_ladder(r, phi, N: int, q_star: float, R_values) -> np.ndarray:
    """``I(R) = ∫_{1 <= |y| <= R} |φ|^{q*} dy`` from radial samples."""
    r = np.asarray(r, dtype=float)
    g = np.abs(np.asarray(phi, dtype=float)) ** q_star * r ** (N - 1) * sphere_area(N)
    sel = r >= 1.0 - 1e-12
    spline = CubicSpline(r[sel], g[sel])
    return np.array([float(spline.integrate(r[sel][0], R)) for R in R_values])


def log_fit(R_values, I_values) -> tuple[float, float]:
    """Slope and correlation of the least-squares fit ``I ≈ a + b log R``."""
    x = np.log(np.asarray(R_values, dtype=float))
    y = np.asarray(I_values, dtype=float)
    slope = float(np.polyfit(x, y, 1)[0])
    corr = float(np.corrcoef(x, y)[0, 1])
    return slope, corr


def profile_critical_norm_growth(
    profile: ProfileSolution, q_star: float | None = None, rungs: int = 16
) -> tuple[float, float]:
    """Fit ``I(R)`` against ``log R`` on a geometric ladder ``R in [2, R_max]``.

    A tail ``c r^{-2β}`` gives ``|φ|^{q*} r^{N-1} ~ c^{q*}/r`` and hence slope
    ``ω_{N-1} c^{q*}``.
    """
    if profile.classification != DECAYING:
        raise DomainError(f"needs a decaying candidate, got {profile.classification}")
    if q_star is None:
        q_star = derive_exponents(profile.N, profile.p).q_star
    R_values = np.geomspace(2.0, profile.R_max, rungs)
    I = critical_norm_ladder(profile.r, profile.phi, profile.N, q_star, R_values)
    return log_fit(R_values, I)


def atlas_rows(profiles) -> list[dict]:
    rows = []
    for prof in profiles:
        slope = None
        if prof.classification == DECAYING:
            slope = profile_critical_norm_growth(prof)[0]
        rows.append({
            "N": prof.N,
            "p": prof.p,
            "alpha": prof.alpha,
            "classification": prof.classification,
            "tail_exponent": prof.tail_exponent,
            "norm_slope": slope,
        })
    return rows


# ----------------------------------------------------------------------------
# Aubin-Talenti bubble


@dataclass(frozen=True)
class BubbleSpec:
    N: int
    lam: float = 1.0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 3:
            raise DomainError("the bubble needs N >= 3")
        if not self.lam > 0:
            raise DomainError("λ must be positive")

    @property
    def c(self) -> float:
        return bubble_constant(self.N)

    @property
    def p(self) -> float:
        return (self.N + 2) / (self.N - 2)

    @property
    def q_star(self) -> float:
        return 2.0 * self.N / (self.N - 2)


def bubble_value(spec: BubbleSpec, x) -> np.ndarray:
    """``U_λ(x) = λ^{-(N-2)/2} c (1 + |x|^2/λ^2)^{-(N-2)/2}``; x is a radius."""
    r = np.abs(np.asarray(x, dtype=float))
    k = (spec.N - 2) / 2.0
    return spec.lam ** (-k) * spec.c * (1.0 + (r / spec.lam) ** 2) ** (-k)


def bubble_residual(spec: BubbleSpec, grid: Grid, richardson: bool = True) -> float:
    """``max |ΔU_λ + U_λ^{p_S}|`` over the grid (boundary node excluded).

    With ``richardson`` the Laplacian is extrapolated from steps h and 2h,
    evaluated on the even nodes, which removes the O(h^2) stencil error.
    """
    if not grid.radial:
        raise DomainError("bubble residual needs a radial grid")
    if grid.N != spec.N:
        raise DomainError("grid dimension differs from the bubble dimension")
    u = bubble_value(spec, grid.nodes)
    lap = laplacian(u, grid, "neumann")
    nodes = grid.nodes
    if richardson:
        coarse_nodes = nodes[::2]
        if coarse_nodes[-1] != nodes[-1]:
            raise DomainError("Richardson extrapolation needs an odd node count")
        coarse = Grid(grid.kind, coarse_nodes, 2.0 * grid.h, grid.R, grid.N)
        lap = (4.0 * lap[::2] - laplacian(u[::2], coarse, "neumann")) / 3.0
        u = u[::2]
    res = lap + u**spec.p
    return float(np.max(np.abs(res[:-1])))


def bubble_norm_oracle(N: int) -> float:
    """Closed form ``c^{q*} ω_{N-1} B(N/2, N/2)/2`` of ``∫ U^{q*}``."""
    spec = BubbleSpec(N)
    return spec.c**spec.q_star * sphere_area(N) * 0.5 * float(beta_fn(N / 2.0, N / 2.0))


def bubble_critical_norm(spec: BubbleSpec, cutoff: float = 50.0) -> float:
    """``∫_{R^N} |U_λ|^{q*} dx`` by adaptive radial quadrature on ``[0, cutoff λ]``
    plus the exact incomplete-beta tail beyond it."""
    N = spec.N
    q = spec.q_star
    omega = sphere_area(N)

    def integrand(r):
        return bubble_value(spec, r) ** q * r ** (N - 1) * omega

    R = cutoff * spec.lam
    # split at the scale λ so the adaptive rule sees the bump
    pieces = [0.0, spec.lam, 10.0 * spec.lam, R]
    body = sum(
        integrate.quad(integrand, a, b, epsabs=0.0, epsrel=1e-13, limit=200)[0]
        for a, b in zip(pieces, pieces[1:])
    )
    a = N / 2.0
    # 1 - I_t(a, a) = I_{1-t}(a, a) with t = cutoff^2 / (1 + cutoff^2)
    upper = float(betainc(a, a, 1.0 / (1.0 + cutoff**2)))
    tail = spec.c**q * omega * 0.5 * float(beta_fn(a, a)) * upper
    return body + tail
