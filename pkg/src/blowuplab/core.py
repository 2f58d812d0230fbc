"""Exponent arithmetic, problem description, grids and the discrete Laplacian.

Everything here is immutable and pure; the solvers and post-processors in the
rest of the package only ever consume these objects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np
from scipy.special import gamma as gamma_fn

GEOMETRIES = ("interval", "ball", "whole_space")
BOUNDARIES = ("dirichlet", "neumann", "homogeneous")
INITIAL_FAMILIES = ("constant", "gaussian", "two_bump", "bubble", "table")


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigurationError(ValueError):
    """A structurally invalid configuration (bad grid size, unknown key, ...)."""


@dataclass(frozen=True)
class DerivedExponents:
    N: int
    p: float
    beta: float
    q_star: float
    p_sobolev: float
    p_jl: float
    p_lepin: float
    kappa: float


def derive_exponents(N: int, p: float) -> DerivedExponents:
    """Return the exponents attached to ``u_t = Δu + |u|^{p-1}u`` in dimension N.

    Infinite thresholds (Sobolev for N <= 2, Joseph-Lundgren and Lepin for
    N <= 10) are returned as ``math.inf``.
    """
    if int(N) != N or N < 1:
        raise DomainError(f"dimension must be a positive integer, got {N!r}")
    if not p > 1:
        raise DomainError(f"p must exceed 1, got {p!r}")
    N = int(N)
    p = float(p)
    beta = 1.0 / (p - 1.0)
    q_star = N * (p - 1.0) / 2.0
    p_sobolev = (N + 2) / (N - 2) if N >= 3 else math.inf
    excess = max(N - 10, 0)
    if excess == 0:
        p_jl = math.inf
        p_lepin = math.inf
    else:
        p_jl = 1.0 + 4.0 * (N - 4 + 2.0 * math.sqrt(N - 1)) / ((N - 2) * excess)
        p_lepin = 1.0 + 6.0 / excess
    return DerivedExponents(
        N=N,
        p=p,
        beta=beta,
        q_star=q_star,
        p_sobolev=p_sobolev,
        p_jl=p_jl,
        p_lepin=p_lepin,
        kappa=_kappa(beta),
    )


def _kappa(beta: float) -> float:
    # β^β overflows for p close to 1; report that as an explicit infinity
    log_kappa = beta * math.log(beta)
    return math.exp(log_kappa) if log_kappa < 709.0 else math.inf


def sphere_area(N: int) -> float:
    """Surface measure of the unit sphere in R^N (2 for N = 1)."""
    return 2.0 * math.pi ** (N / 2.0) / float(gamma_fn(N / 2.0))


def ball_volume(N: int) -> float:
    return sphere_area(N) / N


def bubble_constant(N: int) -> float:
    """Normalisation making ``c (1+r^2)^{-(N-2)/2}`` solve ``ΔU + U^{p_S} = 0``."""
    if N < 3:
        raise DomainError("the Aubin-Talenti bubble needs N >= 3")
    return float(N * (N - 2)) ** ((N - 2) / 4.0)


@dataclass(frozen=True)
class InitialData:
    family: str = "gaussian"
    params: Mapping[str, float] = field(default_factory=dict)
    table: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.family not in INITIAL_FAMILIES:
            raise ConfigurationError(f"unknown initial data family {self.family!r}")
        if self.family == "table" and not self.table:
            raise ConfigurationError("table initial data needs node values")

    def param(self, name: str, default: float) -> float:
        return float(self.params.get(name, default))


@dataclass(frozen=True)
class ProblemSpec:
    N: int = 1
    p: float = 3.0
    geometry: str = "interval"
    R: float = 4.0
    boundary: str = "dirichlet"
    initial: InitialData = field(default_factory=InitialData)

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise DomainError(f"N must be a positive integer, got {self.N!r}")
        if not self.p > 1:
            raise DomainError(f"p must exceed 1, got {self.p!r}")
        if not self.R > 0:
            raise DomainError(f"R must be positive, got {self.R!r}")
        if self.geometry not in GEOMETRIES:
            raise ConfigurationError(f"unknown geometry {self.geometry!r}")
        if self.boundary not in BOUNDARIES:
            raise ConfigurationError(f"unknown boundary condition {self.boundary!r}")
        if self.geometry == "interval" and self.N != 1:
            raise ConfigurationError("interval geometry is one-dimensional (N = 1)")
        if self.geometry == "whole_space" and self.boundary != "dirichlet":
            raise ConfigurationError("whole-space truncation uses dirichlet-zero at R")
        if self.boundary == "homogeneous" and self.initial.family != "constant":
            raise ConfigurationError("homogeneous problems need constant initial data")

    @property
    def exponents(self) -> DerivedExponents:
        return derive_exponents(self.N, self.p)

    @property
    def radial(self) -> bool:
        return self.geometry != "interval"


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform node set.

    Radial grids cover ``[0, R]`` (r_0 = 0 is the symmetry centre); interval
    grids cover the full interval ``[-R, R]``.
    """

    kind: str
    nodes: np.ndarray
    h: float
    R: float
    N: int = 1

    @property
    def node_count(self) -> int:
        return int(self.nodes.size)

    @property
    def radial(self) -> bool:
        return self.kind == "uniform-radial"

    def quadrature_weights(self) -> np.ndarray:
        """Trapezoid weights for ``∫ f dx`` over the physical domain."""
        w = np.full(self.node_count, self.h)
        w[0] = w[-1] = 0.5 * self.h
        if self.radial:
            w = w * sphere_area(self.N) * np.abs(self.nodes) ** (self.N - 1)
        return w

    def __eq__(self, other):
        return (
            isinstance(other, Grid)
            and self.kind == other.kind
            and self.N == other.N
            and self.R == other.R
            and np.array_equal(self.nodes, other.nodes)
        )

    __hash__ = None


def make_grid(kind: str, R: float, node_count: int, N: int = 1) -> Grid:
    if node_count < 3:
        raise ConfigurationError(f"a grid needs at least 3 nodes, got {node_count}")
    if not R > 0:
        raise DomainError(f"grid radius must be positive, got {R}")
    if kind == "uniform-radial":
        nodes = np.linspace(0.0, R, node_count)
        h = R / (node_count - 1)
    elif kind == "uniform-interval":
        nodes = np.linspace(-R, R, node_count)
        h = 2.0 * R / (node_count - 1)
    else:
        raise ConfigurationError(f"unknown grid kind {kind!r}")
    nodes.setflags(write=False)
    return Grid(kind=kind, nodes=nodes, h=h, R=float(R), N=int(N))


def build_grid(spec: ProblemSpec, node_count: int) -> Grid:
    kind = "uniform-radial" if spec.radial else "uniform-interval"
    return make_grid(kind, spec.R, node_count, spec.N)


@dataclass(frozen=True, eq=False)
class Snapshot:
    grid: Grid
    values: np.ndarray
    time: float
    spec: ProblemSpec
    step_index: int = 0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.node_count,):
            raise ValueError(
                f"snapshot has {values.size} values for {self.grid.node_count} nodes"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("snapshot values must be finite")
        if self.time < 0:
            raise ValueError("snapshot time must be nonnegative")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def with_values(self, values: np.ndarray, time: float, step_index: int | None = None):
        return Snapshot(
            grid=self.grid,
            values=values,
            time=time,
            spec=self.spec,
            step_index=self.step_index if step_index is None else step_index,
        )


def evaluate_initial(spec: ProblemSpec, grid: Grid) -> np.ndarray:
    init = spec.initial
    x = grid.nodes
    r = np.abs(x)
    if init.family == "constant":
        u = np.full(x.shape, init.param("c", 1.0))
    elif init.family == "gaussian":
        A = init.param("amplitude", 5.0)
        sigma = init.param("width", 1.0)
        x0 = init.param("center", 0.0) if not grid.radial else 0.0
        u = A * np.exp(-((x - x0) ** 2) / (2.0 * sigma**2))
    elif init.family == "two_bump":
        A = init.param("amplitude", 5.0)
        sigma = init.param("width", 0.3)
        b = init.param("separation", 1.5)
        u = A * (
            np.exp(-((x - b) ** 2) / (2.0 * sigma**2))
            + np.exp(-((x + b) ** 2) / (2.0 * sigma**2))
        )
    elif init.family == "bubble":
        lam = init.param("lambda", 1.0)
        c = bubble_constant(spec.N)
        u = lam ** (-(spec.N - 2) / 2.0) * c * (1.0 + (r / lam) ** 2) ** (-(spec.N - 2) / 2.0)
    else:
        u = np.asarray(init.table, dtype=float)
        if u.shape != x.shape:
            raise ConfigurationError(
                f"table has {u.size} values but the grid has {x.size} nodes"
            )
    u = np.array(u, dtype=float)
    if spec.boundary == "dirichlet":
        u[-1] = 0.0
        if not grid.radial:
            u[0] = 0.0
    return u


def initial_snapshot(spec: ProblemSpec, node_count: int) -> Snapshot:
    grid = build_grid(spec, node_count)
    return Snapshot(grid=grid, values=evaluate_initial(spec, grid), time=0.0, spec=spec)


def laplacian(values: np.ndarray, grid: Grid, boundary: str) -> np.ndarray:
    """Second-order finite-difference Laplacian on a uniform grid.

    Radial grids use ``u'' + (N-1)u'/r`` with the even-extension limit
    ``2N (u_1 - u_0)/h^2`` at the origin. Dirichlet boundary rows return 0 so
    pinned values stay pinned.
    """
    u = np.asarray(values, dtype=float)
    h2 = grid.h * grid.h
    out = np.empty_like(u)
    out[1:-1] = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / h2
    if grid.radial and grid.N > 1:
        r = grid.nodes[1:-1]
        out[1:-1] += (grid.N - 1) / r * (u[2:] - u[:-2]) / (2.0 * grid.h)
    if grid.radial:
        out[0] = 2.0 * grid.N * (u[1] - u[0]) / h2
    elif boundary == "dirichlet":
        out[0] = 0.0
    else:
        out[0] = 2.0 * (u[1] - u[0]) / h2
    if boundary == "dirichlet":
        out[-1] = 0.0
    else:
        # ghost node u_{n} = u_{n-2}; the first-derivative term vanishes
        out[-1] = 2.0 * (u[-2] - u[-1]) / h2
    return out


def apply_laplacian(snapshot: Snapshot) -> np.ndarray:
    return laplacian(snapshot.values, snapshot.grid, snapshot.spec.boundary)


def rescale_snapshot(snapshot: Snapshot, lam: float) -> Snapshot:
    """Apply the parabolic scaling ``u -> lam^{2β} u(lam^2 t, lam x)``.

    The rescaled field lives on the grid shrunk by ``lam`` at time ``t/lam^2``.
    """
    if not lam > 0:
        raise DomainError("scaling factor must be positive")
    spec = snapshot.spec
    beta = spec.exponents.beta
    grid = snapshot.grid
    nodes = grid.nodes / lam
    nodes.setflags(write=False)
    new_grid = Grid(kind=grid.kind, nodes=nodes, h=grid.h / lam, R=grid.R / lam, N=grid.N)
    # initial-data metadata is kept as-is; only the domain radius changes
    new_spec = replace(spec, R=spec.R / lam)
    return Snapshot(
        grid=new_grid,
        values=lam ** (2.0 * beta) * snapshot.values,
        time=snapshot.time / lam**2,
        spec=new_spec,
        step_index=snapshot.step_index,
    )
