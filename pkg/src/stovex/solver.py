"""Entropy weak solutions of the limit-shape conservation law on circle and line.

The density rho = phi_x in [-1, 1] evolves by

    rho_y + d/dx F(rho) = 0,      F(rho) = (1 - v^2) / (v (1 + v rho)),

with drift v in (0, 1).  Characteristics move at f(rho) = F'(rho) =
-(1 - v^2)/(1 + v rho)^2 < 0, shocks at the Rankine-Hugoniot quotient
(F(rho_L) - F(rho_R)) / (rho_L - rho_R), and rarefaction fans are
rho = f^{-1}((x - x*)/(y - y*)).  f is increasing, F strictly convex, so the
entropy condition for shocks is rho_left > rho_right.  The closed form for
F(f^{-1}(x)) is sqrt((1 - v^2) |x|) / v (derived by direct substitution; note
the sign under the root).

Orientation: with this sign of the y-axis all profiles drift left.  The lattice
gas drifts toward increasing site index, so comparisons against simulation
mirror the x-axis (see cli.run_compare).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

EDGE_TOL = 1e-9


@dataclass(frozen=True)
class FluxParams:
    """Drift parameter of the conservation law, strictly inside (0, 1)."""

    v: float

    def __post_init__(self) -> None:
        if not (0.0 < self.v < 1.0):
            raise ValueError(f"v must lie strictly in (0, 1), got {self.v}")


def flux(rho, fp: FluxParams):
    """F(rho) = (1 - v^2) / (v (1 + v rho)); decreasing and strictly convex on [-1, 1]."""
    v = fp.v
    return (1.0 - v * v) / (v * (1.0 + v * np.asarray(rho)))


def speed(rho, fp: FluxParams):
    """Characteristic speed f(rho) = F'(rho) = -(1 - v^2)/(1 + v rho)^2 < 0, increasing."""
    v = fp.v
    return -(1.0 - v * v) / (1.0 + v * np.asarray(rho)) ** 2


def speed_range(fp: FluxParams) -> tuple[float, float]:
    """(f(-1), f(1)) = (-(1+v)/(1-v), -(1-v)/(1+v))."""
    v = fp.v
    return (-(1.0 + v) / (1.0 - v), -(1.0 - v) / (1.0 + v))


def speed_inverse(x, fp: FluxParams):
    """rho with f(rho) = x, for x in [f(-1), f(1)]: rho = (-1 + sqrt((1-v^2)/|x|)) / v."""
    v = fp.v
    x = np.asarray(x, dtype=float)
    lo, hi = speed_range(fp)
    if np.any(x < lo - EDGE_TOL) or np.any(x > hi + EDGE_TOL):
        raise ValueError(f"speed {x} outside [{lo}, {hi}]")
    xc = np.clip(x, lo, hi)
    out = (-1.0 + np.sqrt((1.0 - v * v) / np.abs(xc))) / v
    return float(out) if np.isscalar(x) or out.ndim == 0 else out


def flux_at_speed(x, fp: FluxParams):
    """F(f^{-1}(x)) = sqrt((1 - v^2) |x|) / v."""
    v = fp.v
    return np.sqrt((1.0 - v * v) * np.abs(np.asarray(x))) / v


def rh_speed(rho_l: float, rho_r: float, fp: FluxParams) -> float:
    """Rankine-Hugoniot quotient; symmetric in its two states."""
    if rho_l == rho_r:
        raise ValueError("Rankine-Hugoniot speed needs distinct states")
    return float((flux(rho_l, fp) - flux(rho_r, fp)) / (rho_l - rho_r))


def rh_speed_or_tangent(rho_l: float, rho_r: float, fp: FluxParams) -> float:
    """RH quotient with the secant-to-tangent limit for nearly equal states."""
    if abs(rho_l - rho_r) < 1e-9:
        return float(speed(0.5 * (rho_l + rho_r), fp))
    return rh_speed(rho_l, rho_r, fp)


@dataclass(frozen=True)
class RiemannWave:
    """Classification of a single density jump: shock, fan, or constant."""

    kind: str                       # "shock" | "fan" | "constant"
    speed: float | None = None      # shock speed
    span: tuple[float, float] | None = None   # (f(rho_l), f(rho_r)) for fans


def riemann(rho_l: float, rho_r: float, fp: FluxParams) -> RiemannWave:
    for r in (rho_l, rho_r):
        if abs(r) > 1.0 + 1e-12:
            raise ValueError(f"density {r} outside [-1, 1]")
    if rho_l > rho_r:
        return RiemannWave("shock", speed=rh_speed(rho_l, rho_r, fp))
    if rho_l < rho_r:
        return RiemannWave("fan", span=(float(speed(rho_l, fp)), float(speed(rho_r, fp))))
    return RiemannWave("constant")


def fan_value(x: float, y: float, center: tuple[float, float], fp: FluxParams) -> float:
    """Self-similar fan profile f^{-1}((x - x*)/(y - y*)) for y > y*."""
    xc, yc = center
    if y <= yc:
        raise ValueError("fan evaluated at or before its center time")
    return float(speed_inverse((x - xc) / (y - yc), fp))


# ---------------------------------------------------------------------------
# piecewise-constant data


@dataclass
class PiecewiseDensity:
    """Piecewise-constant density on a circle of circumference L (or on the line).

    Circle: k breakpoints and k values, values[j] on the arc
    [breakpoints[j], breakpoints[j+1}) with cyclic wrap.  Line (L = inf):
    k breakpoints and k+1 values, values[0] left of breakpoints[0].
    """

    L: float
    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        self.breakpoints = np.asarray(self.breakpoints, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if np.any(np.diff(self.breakpoints) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if np.any(np.abs(self.values) > 1.0 + 1e-12):
            raise ValueError("density values must lie in [-1, 1]")
        if self.line_mode:
            if len(self.values) != len(self.breakpoints) + 1:
                raise ValueError("line mode needs len(values) == len(breakpoints) + 1")
        else:
            if self.L <= 0:
                raise ValueError("circumference must be positive")
            if len(self.values) != len(self.breakpoints) or len(self.values) == 0:
                raise ValueError("circle mode needs len(values) == len(breakpoints) >= 1")
            if self.breakpoints[0] < 0 or self.breakpoints[-1] >= self.L:
                raise ValueError("breakpoints must lie in [0, L)")

    @property
    def line_mode(self) -> bool:
        return math.isinf(self.L)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.line_mode:
            idx = np.searchsorted(self.breakpoints, x, side="right")
            out = self.values[idx]
        else:
            xw = np.mod(x, self.L)
            idx = np.searchsorted(self.breakpoints, xw, side="right") - 1
            out = self.values[idx]   # idx == -1 wraps to the last arc
        return float(out) if out.ndim == 0 else out

    def primitive(self, x):
        """Exact antiderivative of the density from 0 (circle mode only)."""
        if self.line_mode:
            raise ValueError("primitive is defined for circle mode")
        bp = self.breakpoints
        vals = self.values
        # arc boundaries covering [0, L]: prepend the wrap arc if needed
        if bp[0] > 0.0:
            edges = np.concatenate([[0.0], bp, [self.L]])
            vv = np.concatenate([[vals[-1]], vals])
        else:
            edges = np.concatenate([bp, [self.L]])
            vv = vals
        cum = np.concatenate([[0.0], np.cumsum(vv * np.diff(edges))])

        def prim(t):
            t = np.asarray(t, dtype=float)
            wind = np.floor(t / self.L)
            tw = t - wind * self.L
            j = np.clip(np.searchsorted(edges, tw, side="right") - 1, 0, len(vv) - 1)
            out = cum[j] + vv[j] * (tw - edges[j]) + wind * cum[-1]
            return float(out) if out.ndim == 0 else out

        return prim(x)

    def cell_averages(self, n_x: int) -> np.ndarray:
        """Exact averages over n_x uniform cells (circle mode)."""
        edges = np.linspace(0.0, self.L, n_x + 1)
        masses = self.primitive(edges)
        return np.diff(masses) / (self.L / n_x)

    def mirrored(self) -> "PiecewiseDensity":
        """Spatial mirror x -> L - x (circle mode)."""
        if self.line_mode:
            raise ValueError("mirrored is defined for circle mode")
        bp = np.mod(self.L - self.breakpoints[::-1], self.L)
        vals = np.roll(self.values[::-1], -1)
        order = np.argsort(bp)
        return PiecewiseDensity(self.L, bp[order], vals[order])

    def total_mass(self) -> float:
        return float(self.primitive(self.L))


# ---------------------------------------------------------------------------
# closed-form step solutions


def example1(rho_l: float, rho_r: float, x: float, y: float, fp: FluxParams) -> float:
    """Decreasing step on the line: a single shock along x = v0 y."""
    if not rho_l > rho_r:
        raise ValueError("example1 needs rho_l > rho_r")
    if y <= 0:
        return rho_r if x >= 0 else rho_l
    v0 = rh_speed(rho_l, rho_r, fp)
    return rho_r if x / y >= v0 else rho_l


def example2(x: float, y: float, fp: FluxParams, rho_l: float = -1.0, rho_r: float = 1.0) -> float:
    """Increasing step on the line: centered fan between speeds f(rho_l) < f(rho_r)."""
    if not rho_l < rho_r:
        raise ValueError("example2 needs rho_l < rho_r")
    if y <= 0:
        return rho_r if x >= 0 else rho_l
    xi = x / y
    lo, hi = float(speed(rho_l, fp)), float(speed(rho_r, fp))
    if xi >= hi:
        return rho_r
    if xi <= lo:
        return rho_l
    return float(speed_inverse(xi, fp))


_EXAMPLE3_CACHE: dict[tuple[float, float, float], object] = {}


def example3_solution(L: float, x1: float, fp: FluxParams, y_max: float):
    """Tracked solution of the periodic domain wall (+1 on (0, x1), -1 on (x1, L))."""
    from .tracking import front_track

    if not 0.0 < x1 < L:
        raise ValueError("need 0 < x1 < L")
    if not x1 > 0.5 * L * (1.0 - fp.v):
        raise ValueError("example3 assumes x1 > L (1 - v) / 2")
    key = (L, x1, fp.v)
    sol = _EXAMPLE3_CACHE.get(key)
    if sol is None or sol.y_max < y_max:
        rho0 = PiecewiseDensity(L, np.array([0.0, x1]), np.array([1.0, -1.0]))
        sol = front_track(rho0, y_max, fp)
        _EXAMPLE3_CACHE[key] = sol
    return sol


def example3(L: float, x1: float, x: float, y: float, fp: FluxParams) -> float:
    """Periodic domain wall, evaluated through the front tracker."""
    return float(example3_solution(L, x1, fp, max(y, 1e-9)).rho(x, y))


def asymptotic_shock_slope(rho_ave: float, fp: FluxParams) -> float:
    """Late-time slope of the domain-wall shock: f(rho_ave), rho_ave = (2 x1 - L)/L."""
    if abs(rho_ave) >= 1.0:
        raise ValueError("need |rho_ave| < 1")
    return float(speed(rho_ave, fp))


# ---------------------------------------------------------------------------
# reference discretization


@dataclass
class GridSolution:
    L: float
    n_x: int
    dx: float
    y: float
    averages: np.ndarray


def _godunov_flux(ul: np.ndarray, ur: np.ndarray, fp: FluxParams) -> np.ndarray:
    """General convex-flux Godunov interface flux.

    min of F over [ul, ur] when ul <= ur, max over [ur, ul] otherwise.  F has
    no sonic point on [-1, 1] (f < 0 throughout), so the minimum over an
    interval sits at its right end and the maximum at an endpoint.
    """
    Fl, Fr = flux(ul, fp), flux(ur, fp)
    return np.where(ul <= ur, Fr, np.maximum(Fl, Fr))


def godunov(
    rho0: PiecewiseDensity,
    n_x: int,
    y_max: float,
    fp: FluxParams,
    cfl: float = 0.9,
) -> GridSolution:
    """First-order Godunov scheme for rho_y + F(rho)_x = 0 on the periodic circle."""
    if rho0.line_mode:
        raise ValueError("godunov runs on the circle")
    if not (0.0 < cfl <= 1.0):
        raise ValueError("cfl must lie in (0, 1]")
    if n_x < 8:
        raise ValueError("need n_x >= 8")
    L = rho0.L
    dx = L / n_x
    u = rho0.cell_averages(n_x)
    fmax = abs(speed(-1.0, fp))
    dy = cfl * dx / fmax
    y = 0.0
    while y < y_max - 1e-14:
        step = min(dy, y_max - y)
        ur = np.roll(u, -1)
        fh = _godunov_flux(u, ur, fp)          # interface j+1/2
        u = u - (step / dx) * (fh - np.roll(fh, 1))
        y += step
    return GridSolution(L=L, n_x=n_x, dx=dx, y=y, averages=u)


# ---------------------------------------------------------------------------
# transforms and limits


def burgers_transform(rho, fp: FluxParams):
    """u = f(rho); u then satisfies u_y + u u_x = 0 wherever rho is smooth.

    The residual identity u_y + u u_x = f'(rho) (rho_y + dF(rho)/dx) holds
    pointwise by the chain rule, so the two residuals agree to discretization
    order on any smooth numerical solution.
    """
    return speed(rho, fp)


def asep_limit_residual(
    p_rate: float,
    q_rate: float,
    eps_seq,
    n_grid: int = 1024,
) -> np.ndarray:
    """Max-norm residual of the slow-drift expansion of the exact transport term.

    With b1 = eps p, b2 = eps q, the exact coefficient (1 - v^2)/(1 + v rho)^2
    with v = eps (p - q) / (2 - eps (p + q)) expands to 1 - eps (p - q) rho
    plus O(eps^2); the residual against the first-order form is returned for
    each eps on a smooth test profile.
    """
    if p_rate <= 0 or q_rate <= 0:
        raise ValueError("rates must be positive")
    x = np.linspace(0.0, 1.0, n_grid, endpoint=False)
    rho = 0.45 * np.sin(2 * np.pi * x) + 0.2 * np.cos(4 * np.pi * x)
    rho_x = 0.45 * 2 * np.pi * np.cos(2 * np.pi * x) - 0.2 * 4 * np.pi * np.sin(4 * np.pi * x)
    out = []
    for eps in eps_seq:
        b1, b2 = eps * p_rate, eps * q_rate
        if not (0 <= b1 < 1 and 0 <= b2 < 1):
            raise ValueError(f"eps {eps} makes b parameters leave [0, 1)")
        v = (b1 - b2) / (2.0 - b1 - b2)
        exact = (1.0 - v * v) / (1.0 + v * rho) ** 2 * rho_x
        first_order = rho_x * (1.0 - eps * (p_rate - q_rate) * rho)
        out.append(float(np.abs(exact - first_order).max()))
    return np.asarray(out)


# ---------------------------------------------------------------------------
# heights from the density


def slope_pair(rho, fp: FluxParams):
    """Vertical slope phi_y = (rho + v)/(1 + v rho) paired with phi_x = rho.

    Its rho-derivative is -f(rho), which is exactly what makes the two-leg
    height integral path independent when rho solves the conservation law.
    """
    v = fp.v
    return (np.asarray(rho) + v) / (1.0 + v * np.asarray(rho))


def height_from_density(rho, phi00: float, fp: FluxParams, quad_limit: int = 200):
    """Height evaluator phi(x, y) built from a density evaluator rho(x, y).

    phi(x, y) = phi00 + int_0^y phi_y(0, t) dt + int_0^x rho(s, y) ds with
    phi_y from ``slope_pair``.  Shock crossings are jump-integrable; the
    quadrature is adaptive.
    """

    def phi(x: float, y: float) -> float:
        vert, _ = integrate.quad(
            lambda t: slope_pair(rho(0.0, t), fp), 0.0, y, limit=quad_limit
        )
        horiz, _ = integrate.quad(lambda s: rho(s, y), 0.0, x, limit=quad_limit)
        return phi00 + vert + horiz

    return phi


def loop_integral(
    rho,
    fp: FluxParams,
    x0: float,
    x1: float,
    y0: float,
    y1: float,
    points_x=None,
    quad_limit: int = 200,
) -> float:
    """Circulation of (rho dx + phi_y dy) around a rectangle; zero for weak solutions.

    points_x, when given, maps y to known density discontinuity positions used
    as quadrature breakpoints on the horizontal legs.
    """

    def pts(y):
        if points_x is None:
            return None
        return [p for p in points_x(y) if x0 < p < x1]

    bottom, _ = integrate.quad(lambda s: rho(s, y0), x0, x1, points=pts(y0), limit=quad_limit)
    top, _ = integrate.quad(lambda s: rho(s, y1), x0, x1, points=pts(y1), limit=quad_limit)
    right, _ = integrate.quad(lambda t: slope_pair(rho(x1, t), fp), y0, y1, limit=quad_limit)
    left, _ = integrate.quad(lambda t: slope_pair(rho(x0, t), fp), y0, y1, limit=quad_limit)
    return bottom + right - top - left
