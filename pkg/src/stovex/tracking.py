"""Event-driven exact front tracking for piecewise-constant initial data.

Fronts are shocks (positions integrated with an adaptive Runge-Kutta solver)
and fan edges (exact rays).  Between adjacent fronts the solution is a constant
or a centered fan kept in closed form, so the only numerical error is in shock
trajectories.  Events are collisions of adjacent fronts; at an event the pair
is replaced by the Riemann solution of its outer states (always a shock or an
annihilation here, since fans are only born at y = 0).

On the circle, front positions are stored unwrapped and ascending with the
cyclic closure "last front to first front + L".  Every inter-front region
carries its own unwrapped frame; fan centers are shifted by L whenever the
front list is rotated past the seam, which is what lets one shock end up with
the same periodic fan on both sides (domain-wall data does exactly this).
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import solve_ivp

from .solver import (
    EDGE_TOL,
    FluxParams,
    PiecewiseDensity,
    flux,
    rh_speed_or_tangent,
    riemann,
    speed,
    speed_inverse,
    speed_range,
)
from .xfer import InvariantViolation

MAX_EVENTS = 10**6
SHOCK = "shock"
FAN_LEFT = "fan_left_edge"
FAN_RIGHT = "fan_right_edge"


@dataclass(frozen=True)
class ConstRegion:
    value: float

    def value_at(self, x: float, y: float, fp: FluxParams) -> float:
        return self.value

    def shifted(self, dx: float) -> "ConstRegion":
        return self

    def mass(self, xa: float, xb: float, y: float, fp: FluxParams) -> float:
        return self.value * (xb - xa)


@dataclass(frozen=True)
class FanRegion:
    xc: float
    yc: float

    def value_at(self, x: float, y: float, fp: FluxParams) -> float:
        lo, hi = speed_range(fp)
        xi = np.clip((x - self.xc) / (y - self.yc), lo, hi)
        return float(speed_inverse(xi, fp))

    def shifted(self, dx: float) -> "FanRegion":
        return FanRegion(self.xc + dx, self.yc)

    def mass(self, xa: float, xb: float, y: float, fp: FluxParams) -> float:
        # integral of f^{-1}((x - xc)/(y - yc)) via the antiderivative
        # rho f(rho) - F(rho) of rho df/drho
        lo, hi = speed_range(fp)
        dy = y - self.yc

        def G(x: float) -> float:
            rho = speed_inverse(np.clip((x - self.xc) / dy, lo, hi), fp)
            return float(rho * speed(rho, fp) - flux(rho, fp))

        return dy * (G(xb) - G(xa))


@dataclass(frozen=True)
class Front:
    kind: str
    xc: float                 # shocks: position at segment start; edges: ray origin
    yc: float = 0.0
    edge_value: float = 0.0   # edges only

    def edge_position(self, y: float, fp: FluxParams) -> float:
        return self.xc + float(speed(self.edge_value, fp)) * (y - self.yc)


@dataclass
class Segment:
    """One inter-event span: fixed topology, dense shock trajectories."""

    y0: float
    y1: float
    fronts: list[Front]
    regions: list
    shock_slots: dict[int, int]     # front index -> ODE state index
    ode_sol: object | None          # scipy dense OdeSolution, or None

    def positions(self, y: float, fp: FluxParams) -> np.ndarray:
        yq = min(max(y, self.y0), self.y1)
        out = np.empty(len(self.fronts))
        shock_state = self.ode_sol(yq) if self.ode_sol is not None else None
        for i, f in enumerate(self.fronts):
            if f.kind == SHOCK:
                out[i] = shock_state[self.shock_slots[i]]
            else:
                out[i] = f.edge_position(yq, fp)
        return out


def _initial_fronts(rho0: PiecewiseDensity, fp: FluxParams):
    bp, vals = rho0.breakpoints, rho0.values
    fronts: list[Front] = []
    regions: list = []
    if rho0.line_mode:
        regions.append(ConstRegion(float(vals[0])))
        for j, xb in enumerate(bp):
            vl, vr = float(vals[j]), float(vals[j + 1])
            wave = riemann(vl, vr, fp)
            if wave.kind == "shock":
                fronts.append(Front(SHOCK, xc=float(xb)))
                regions.append(ConstRegion(vr))
            elif wave.kind == "fan":
                fronts.append(Front(FAN_LEFT, xc=float(xb), edge_value=vl))
                regions.append(FanRegion(float(xb), 0.0))
                fronts.append(Front(FAN_RIGHT, xc=float(xb), edge_value=vr))
                regions.append(ConstRegion(vr))
        return fronts, regions
    k = len(bp)
    for j in range(k):
        xb = float(bp[j])
        vl, vr = float(vals[j - 1]), float(vals[j])
        wave = riemann(vl, vr, fp)
        if wave.kind == "constant":
            continue
        if wave.kind == "shock":
            fronts.append(Front(SHOCK, xc=xb))
        else:
            fronts.append(Front(FAN_LEFT, xc=xb, edge_value=vl))
            regions.append(FanRegion(xb, 0.0))
            fronts.append(Front(FAN_RIGHT, xc=xb, edge_value=vr))
        regions.append(ConstRegion(vr))
    return fronts, regions


class FrontSolution:
    """Entropy solution as tracked fronts; evaluator, shock data, mass, event log."""

    def __init__(self, rho0: PiecewiseDensity, fp: FluxParams, y_max: float):
        self.rho0 = rho0
        self.fp = fp
        self.L = rho0.L
        self.y_max = y_max
        self.segments: list[Segment] = []
        self.events: list[tuple[float, str]] = []
        self._seg_starts: list[float] = []

    # -- queries ------------------------------------------------------------

    def _segment_at(self, y: float) -> Segment:
        i = bisect.bisect_right(self._seg_starts, y) - 1
        return self.segments[max(i, 0)]

    def _locate(self, seg: Segment, x: float, y: float):
        pos = seg.positions(y, self.fp)
        n = len(pos)
        if n == 0:
            return seg.regions[0], x
        if self.rho0.line_mode:
            j = int(np.searchsorted(pos, x, side="right"))
            return seg.regions[j], x
        xs = pos[0] + (x - pos[0]) % self.L
        j = int(np.searchsorted(pos, xs, side="right")) - 1
        return seg.regions[max(j, 0)], xs

    def rho(self, x: float, y: float) -> float:
        if y <= 0.0:
            return float(self.rho0(x))
        if y > self.y_max + 1e-12:
            raise ValueError(f"solution tracked only to y = {self.y_max}")
        seg = self._segment_at(min(y, self.y_max))
        region, xs = self._locate(seg, x, y)
        return region.value_at(xs, y, self.fp)

    def rho_profile(self, xs, y: float) -> np.ndarray:
        return np.array([self.rho(float(x), y) for x in np.asarray(xs, dtype=float)])

    def front_list(self, y: float):
        """(kind, position (wrapped on the circle), left value, right value) per front."""
        seg = self._segment_at(y)
        pos = seg.positions(y, self.fp)
        out = []
        for i, f in enumerate(seg.fronts):
            vl, vr = self._front_states(seg, i, pos, y)
            x = pos[i] % self.L if not self.rho0.line_mode else pos[i]
            out.append((f.kind, float(x), vl, vr))
        return out

    def _front_states(self, seg: Segment, i: int, pos: np.ndarray, y: float):
        n = len(seg.fronts)
        if self.rho0.line_mode:
            left, right = seg.regions[i], seg.regions[i + 1]
            return left.value_at(pos[i], y, self.fp), right.value_at(pos[i], y, self.fp)
        left = seg.regions[(i - 1) % n]
        right = seg.regions[i]
        shift = self.L if i == 0 else 0.0
        return (
            left.value_at(pos[i] + shift, y, self.fp),
            right.value_at(pos[i], y, self.fp),
        )

    def shock_positions(self, y: float) -> list[float]:
        seg = self._segment_at(y)
        pos = seg.positions(y, self.fp)
        out = [pos[i] for i, f in enumerate(seg.fronts) if f.kind == SHOCK]
        if not self.rho0.line_mode:
            out = [p % self.L for p in out]
        return out

    def shock_slopes(self, y: float) -> list[float]:
        seg = self._segment_at(y)
        pos = seg.positions(y, self.fp)
        out = []
        for i, f in enumerate(seg.fronts):
            if f.kind != SHOCK:
                continue
            vl, vr = self._front_states(seg, i, pos, y)
            out.append(rh_speed_or_tangent(vl, vr, self.fp))
        return out

    def check_entropy(self, y: float, tol: float = 1e-9) -> None:
        seg = self._segment_at(y)
        pos = seg.positions(y, self.fp)
        for i, f in enumerate(seg.fronts):
            if f.kind != SHOCK:
                continue
            vl, vr = self._front_states(seg, i, pos, y)
            if not vl > vr - tol:
                raise InvariantViolation(
                    f"entropy violation at y={y}: shock states {vl} !> {vr}"
                )

    def mass(self, y: float) -> float:
        if self.rho0.line_mode:
            raise ValueError("total mass is defined on the circle")
        if y <= 0.0:
            return self.rho0.total_mass()
        seg = self._segment_at(min(y, self.y_max))
        pos = seg.positions(y, self.fp)
        n = len(pos)
        if n == 0:
            return seg.regions[0].value * self.L
        total = 0.0
        for j in range(n):
            xa = pos[j]
            xb = pos[(j + 1) % n] + (self.L if j == n - 1 else 0.0)
            total += seg.regions[j].mass(xa, xb, y, self.fp)
        return total

    def primitive(self, x: float, y: float) -> float:
        """Exact integral of the profile from 0 to x along the circle, x in [0, L]."""
        if self.rho0.line_mode:
            raise ValueError("primitive is defined on the circle")
        if x <= 0.0:
            return 0.0
        if y <= 0.0:
            return float(self.rho0.primitive(x))
        full = self.mass(y)
        if x >= self.L - 1e-14:
            return full
        seg = self._segment_at(min(y, self.y_max))
        pos = seg.positions(y, self.fp)
        n = len(pos)
        if n == 0:
            return seg.regions[0].value * x

        def to_window(t: float) -> float:
            return pos[0] + (t - pos[0]) % self.L

        def window_integral(a: float, b: float) -> float:
            total = 0.0
            for j in range(n):
                xa = pos[j]
                xb = pos[(j + 1) % n] + (self.L if j == n - 1 else 0.0)
                lo, hi = max(xa, a), min(xb, b)
                if hi > lo:
                    total += seg.regions[j].mass(lo, hi, y, self.fp)
            return total

        aw, bw = to_window(0.0), to_window(x)
        if bw >= aw:
            return window_integral(aw, bw)
        return full - window_integral(bw, aw)


# ---------------------------------------------------------------------------
# tracking loop


def _rotate(fronts: list[Front], regions: list, L: float):
    f0 = replace(fronts[0], xc=fronts[0].xc + L)
    return fronts[1:] + [f0], regions[1:] + [regions[0].shifted(L)]


def _integrate_segment(
    fronts: list[Front],
    regions: list,
    y0: float,
    y_stop: float,
    fp: FluxParams,
    L: float,
    line_mode: bool,
):
    """Advance a fixed topology; returns (Segment, y_end, event_fired)."""
    n = len(fronts)
    shock_slots = {i: k for k, i in enumerate(i for i, f in enumerate(fronts) if f.kind == SHOCK)}
    s0 = np.array([fronts[i].xc for i in shock_slots])

    def positions(y, s):
        out = np.empty(n)
        for i, f in enumerate(fronts):
            out[i] = s[shock_slots[i]] if f.kind == SHOCK else f.edge_position(y, fp)
        return out

    def side_values(i: int, y: float, pos: np.ndarray):
        if line_mode:
            return (
                regions[i].value_at(pos[i], y, fp),
                regions[i + 1].value_at(pos[i], y, fp),
            )
        left = regions[(i - 1) % n]
        shift = L if i == 0 else 0.0
        return (
            left.value_at(pos[i] + shift, y, fp),
            regions[i].value_at(pos[i], y, fp),
        )

    def rhs(y, s):
        pos = positions(y, s)
        out = np.empty(len(s))
        for i, slot in shock_slots.items():
            vl, vr = side_values(i, y, pos)
            out[slot] = rh_speed_or_tangent(vl, vr, fp)
        return out

    if not shock_slots:
        seg = Segment(y0, y_stop, fronts, regions, shock_slots, None)
        return seg, y_stop, False

    pair_count = n if (not line_mode and n >= 2) else (n - 1 if n >= 2 else 0)

    def make_gap(k):
        def gap(y, s):
            pos = positions(y, s)
            hi = pos[(k + 1) % n] + (L if (not line_mode and k == n - 1) else 0.0)
            return hi - pos[k]

        gap.terminal = True
        gap.direction = -1.0
        return gap

    events = [make_gap(k) for k in range(pair_count)]
    sol = solve_ivp(
        rhs,
        (y0, y_stop),
        s0,
        method="RK45",
        rtol=1e-12,
        atol=1e-14,
        dense_output=True,
        events=events,
    )
    if not sol.success:
        raise RuntimeError(f"shock integration failed: {sol.message}")
    fired = sol.status == 1
    y_end = float(sol.t[-1])
    seg = Segment(y0, y_end, fronts, regions, shock_slots, sol.sol)
    return seg, y_end, fired


def _merge_pair(fronts, regions, pos, i, y, fp, L, line_mode):
    """Replace colliding adjacent pair (i, i+1) by the shock of its outer states."""
    n = len(fronts)
    f1, f2 = fronts[i], fronts[i + 1]
    x_star = 0.5 * (pos[i] + pos[i + 1])
    if line_mode:
        left, right = regions[i], regions[i + 2]
        vl = left.value_at(x_star, y, fp)
    else:
        left, right = regions[(i - 1) % n], regions[(i + 1) % n]
        vl = left.value_at(x_star + (L if i == 0 else 0.0), y, fp)
    vr = right.value_at(x_star, y, fp)
    if f1.kind != SHOCK and f2.kind != SHOCK:
        raise InvariantViolation(f"fan edges collided without a shock at y={y}")
    if vl < vr - 1e-9:
        raise InvariantViolation(
            f"non-admissible state pair ({vl}, {vr}) after collision at y={y}"
        )
    new = Front(SHOCK, xc=x_star)
    fronts = fronts[:i] + [new] + fronts[i + 2 :]
    if line_mode:
        regions = regions[: i + 1] + regions[i + 2 :]
    else:
        regions = regions[:i] + regions[i + 1 :]
    desc = f"{f1.kind}+{f2.kind} -> shock at x={x_star % L if not line_mode else x_star:.6g}"
    return fronts, regions, desc


def _restructure(seg: Segment, y: float, fp: FluxParams, L: float, line_mode: bool):
    """Resolve all zero gaps at an event time; returns new (fronts, regions, descs)."""
    fronts = list(seg.fronts)
    regions = list(seg.regions)
    pos = seg.positions(y, fp)
    # pin shocks at their event-time positions
    fronts = [
        replace(f, xc=float(pos[i])) if f.kind == SHOCK else f
        for i, f in enumerate(fronts)
    ]
    descs = []
    scale = L if not line_mode else max(1.0, float(np.ptp(pos)) if len(pos) else 1.0)
    tol = 1e-8 * scale
    for _ in range(len(fronts)):
        n = len(fronts)
        if n < 2:
            break
        pos = np.empty(n)
        for i, f in enumerate(fronts):
            pos[i] = f.xc if f.kind == SHOCK else f.edge_position(y, fp)
        pair_count = n if not line_mode else n - 1
        gaps = []
        for k in range(pair_count):
            hi = pos[(k + 1) % n] + (L if (not line_mode and k == n - 1) else 0.0)
            gaps.append(hi - pos[k])
        hits = [k for k, g in enumerate(gaps) if g <= tol]
        if not hits:
            break
        k = hits[0]
        if not line_mode and k == n - 1:
            fronts, regions = _rotate(fronts, regions, L)
            continue
        fronts, regions, desc = _merge_pair(fronts, regions, pos, k, y, fp, L, line_mode)
        descs.append(desc)
    if not descs:
        raise InvariantViolation(f"event fired at y={y} but no gap closed")
    return fronts, regions, descs


def front_track(rho0: PiecewiseDensity, y_max: float, fp: FluxParams) -> FrontSolution:
    """Exact evolution of piecewise-constant data up to y_max."""
    if y_max <= 0:
        raise ValueError("y_max must be positive")
    sol = FrontSolution(rho0, fp, y_max)
    fronts, regions = _initial_fronts(rho0, fp)
    y = 0.0
    for _ in range(MAX_EVENTS):
        seg, y_end, fired = _integrate_segment(
            fronts, regions, y, y_max, fp, rho0.L, rho0.line_mode
        )
        sol.segments.append(seg)
        sol._seg_starts.append(seg.y0)
        if not fired:
            break
        fronts, regions, descs = _restructure(seg, y_end, fp, rho0.L, rho0.line_mode)
        sol.events.extend((y_end, d) for d in descs)
        sol.check_entropy(y_end)
        if y_end <= y + 1e-15:
            raise RuntimeError(f"event loop stalled at y={y_end}")
        y = y_end
        if y >= y_max - 1e-13:
            break
    else:
        raise RuntimeError(f"more than {MAX_EVENTS} events; aborting")
    return sol


def dump_profile(path, sol: FrontSolution, xs, ys) -> None:
    """CSV 'y,x,rho' over a grid."""
    with open(path, "w") as fh:
        fh.write("y,x,rho\n")
        for y in ys:
            for x in xs:
                fh.write(f"{y:.17g},{x:.17g},{sol.rho(float(x), float(y)):.17g}\n")


def dump_front_log(path, sol: FrontSolution, ys) -> None:
    """CSV 'y,kind,position,left_state,right_state'."""
    with open(path, "w") as fh:
        fh.write("y,kind,position,left_state,right_state\n")
        for y in ys:
            for kind, x, vl, vr in sol.front_list(float(y)):
                fh.write(f"{y:.17g},{kind},{x:.17g},{vl:.17g},{vr:.17g}\n")
