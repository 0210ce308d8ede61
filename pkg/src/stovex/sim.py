"""Exact-distribution Monte Carlo for the row-to-row Markov dynamics on a ring.

One row update moves every particle i from alpha_i to beta_i in
[alpha_i, alpha_{i+1}] with path weights (stay b2, interior hop of d sites
c1*c2*b1^(d-1), landing on the next departure site b1^(gap-1)), subject to the
exclusion rule beta_i != beta_{i+1}.  The only coupling is the cyclic pairwise
constraint "particle i landed on alpha_{i+1} forbids particle i+1 staying", so
a row is sampled exactly (no rejection) by a two-state transfer recursion over
the indicator s_i = [beta_i == alpha_{i+1}]:

1. forward messages along the chain for both values of the pivot indicator
   s_{m-1}, giving the two closed-ring partition weights;
2. draw the pivot, back-sample s_{m-2} .. s_0 from the conditional messages;
3. draw each remaining displacement from its conditional law, inverse-CDF of a
   truncated geometric for interior hops (exact tail renormalization, robust
   for b1 near 1).

Sampled rows agree with the exact ``xfer.markov_block`` columns; the test suite
certifies this in total variation at 10^6 samples.

Height accounting: faces of the cylinder carry integer heights with
h(0,0) = 0.  Crossing a vertical edge rightward changes the height by +1 when
the edge is occupied, -1 otherwise.  Crossing a horizontal edge upward changes
it by -1 when the edge carries a particle path, +1 otherwise; with rightward
particle motion this is the unique vertical sign choice consistent with the
ice rule at the turning vertices (the test suite checks every sampled
configuration).  Row jump records are retained because heights depend on the
traversed horizontal edges, not just on consecutive ring states.

Degenerate sectors: m = 0 and m = M are fixed points of the ring state, but
their rows still carry two configurations each (empty row vs purely horizontal
loop, weight 1 : b1^M; all-stay vs coherent full shift, weight b2^M : 1), and
the loop choice matters for heights, so it is sampled.
"""

from __future__ import annotations

import concurrent.futures
import math
from dataclasses import dataclass, field

import numpy as np

from .params import ModelScale, StochasticWeights
from .xfer import InvariantViolation


@dataclass(frozen=True)
class RingState:
    """m particle positions, strictly increasing, on the ring {0..M-1}."""

    M: int
    positions: tuple[int, ...]

    def __post_init__(self) -> None:
        pos = self.positions
        if any(not (0 <= p < self.M) for p in pos):
            raise ValueError(f"positions must lie in [0, {self.M})")
        if any(pos[i] >= pos[i + 1] for i in range(len(pos) - 1)):
            raise ValueError("positions must be strictly increasing")

    @property
    def m(self) -> int:
        return len(self.positions)

    def occupancy(self) -> np.ndarray:
        occ = np.zeros(self.M, dtype=np.int8)
        occ[list(self.positions)] = 1
        return occ


@dataclass(frozen=True)
class RowMove:
    """Jump record of one row: particle start sites, displacements, and the
    loop flag for the m = 0 all-horizontal configuration."""

    starts: tuple[int, ...]
    jumps: tuple[int, ...]
    loop: bool = False


@dataclass
class Trajectory:
    states: list[RingState]
    moves: list[RowMove]

    @property
    def M(self) -> int:
        return self.states[0].M


def path_weight(gap: int, d: int, w: StochasticWeights) -> float:
    """Weight of one particle's path: d = 0 stays, 0 < d < gap interior, d = gap lands."""
    if gap < 1:
        raise ValueError(f"gap must be >= 1, got {gap}")
    if not (0 <= d <= gap):
        raise ValueError(f"displacement {d} outside [0, {gap}]")
    if d == 0:
        return w.b2
    if d < gap:
        return w.c1 * w.c2 * w.b1 ** (d - 1)
    return w.b1 ** (gap - 1)


def row_budget(m: int) -> int:
    """Uniforms consumed per row per run (fixed so streams are position-independent)."""
    return max(2 * m, 1)


def _cyclic_gaps(pos: np.ndarray, M: int) -> np.ndarray:
    K, m = pos.shape
    if m == 1:
        return np.full((K, 1), M, dtype=np.int64)
    return (np.roll(pos, -1, axis=1) - pos) % M


def _interior_jump(v: np.ndarray, g: np.ndarray, b1: float) -> np.ndarray:
    """Inverse CDF of P(d = 1+j) proportional to b1^j on j in [0, g-2]."""
    if b1 <= 0.0:
        return np.ones_like(g)
    tail = 1.0 - b1 ** (g - 1).astype(float)
    j = np.floor(np.log1p(-v * tail) / math.log(b1)).astype(np.int64)
    return 1 + np.clip(j, 0, np.maximum(g - 2, 0))


def _step_batch(pos: np.ndarray, M: int, w: StochasticWeights, U: np.ndarray):
    """One exact row update for K rings in lockstep.

    pos is (K, m) with each row sorted; U is (K, row_budget(m)) iid uniforms.
    Returns (sorted new positions, displacements aligned with pos).
    """
    K, m = pos.shape
    if not (1 <= m <= M):
        raise ValueError("batch step needs 1 <= m <= M")
    b1, b2 = w.b1, w.b2
    g = _cyclic_gaps(pos, M)
    C = b1 ** (g - 1).astype(float)          # land on next departure site
    B = (1.0 - b2) * (1.0 - C)               # all interior hops combined
    A = b2

    d = np.zeros((K, m), dtype=np.int64)
    if m == 1:
        g1 = g[:, 0]
        tot = A + B[:, 0] + C[:, 0]
        t = U[:, 0] * tot
        interior = (t >= A) & (t < A + B[:, 0])
        wrap = t >= A + B[:, 0]
        d[wrap, 0] = g1[wrap]
        if interior.any():
            v = (t[interior] - A) / B[interior, 0]
            d[interior, 0] = _interior_jump(v, g1[interior], b1)
    else:
        # forward messages F[i][k, c, s_i], conditioned on the pivot s_{m-1} = c
        msgs = []
        F = np.empty((K, 2, 2))
        F[:, 0, 0] = A + B[:, 0]
        F[:, 1, 0] = B[:, 0]
        F[:, 0, 1] = F[:, 1, 1] = 0.0
        F[:, :, 1] = C[:, 0, None]
        msgs.append(F)
        for i in range(1, m - 1):
            Fn = np.empty((K, 2, 2))
            Fn[:, :, 0] = F[:, :, 0] * (A + B[:, i, None]) + F[:, :, 1] * B[:, i, None]
            Fn[:, :, 1] = (F[:, :, 0] + F[:, :, 1]) * C[:, i, None]
            norm = Fn.max(axis=(1, 2))
            Fn /= np.maximum(norm, 1e-300)[:, None, None]
            msgs.append(Fn)
            F = Fn
        Z0 = F[:, 0, 0] * (A + B[:, m - 1]) + F[:, 0, 1] * B[:, m - 1]
        Z1 = (F[:, 1, 0] + F[:, 1, 1]) * C[:, m - 1]
        s = np.empty((K, m), dtype=np.int8)
        s[:, m - 1] = U[:, 0] * (Z0 + Z1) >= Z0
        rows = np.arange(K)
        c = s[:, m - 1].astype(np.intp)
        for i in range(m - 2, -1, -1):
            nxt = s[:, i + 1]
            Fi = msgs[i]
            f0 = Fi[rows, c, 0]
            f1 = Fi[rows, c, 1]
            w0 = np.where(nxt == 1, f0 * C[:, i + 1], f0 * (A + B[:, i + 1]))
            w1 = np.where(nxt == 1, f1 * C[:, i + 1], f1 * B[:, i + 1])
            s[:, i] = U[:, 1 + (m - 2 - i)] * (w0 + w1) >= w0

        d[s == 1] = g[s == 1]
        s_prev = np.roll(s, 1, axis=1)
        Aeff = np.where(s_prev == 0, A, 0.0)
        t = U[:, m : 2 * m] * (Aeff + B)
        interior = (s == 0) & (t >= Aeff) & (B > 0.0)
        if interior.any():
            v = (t[interior] - Aeff[interior]) / B[interior]
            d[interior] = _interior_jump(v, g[interior], b1)

    newpos = np.sort((pos + d) % M, axis=1)
    return newpos, d


def _loop_probability(M: int, w: StochasticWeights, m: int) -> float:
    # m = 0: empty row vs horizontal loop; m = M: all-stay vs coherent shift
    if m == 0:
        return w.b1**M / (1.0 + w.b1**M)
    return 1.0 / (1.0 + w.b2**M)


def sample_row(state: RingState, w: StochasticWeights, rng: np.random.Generator):
    """One exact row update; returns (new state, jump record)."""
    M, m = state.M, state.m
    U = rng.random((1, row_budget(m)))
    if m == 0:
        return state, RowMove((), (), loop=bool(U[0, 0] < _loop_probability(M, w, 0)))
    pos = np.array([state.positions], dtype=np.int64)
    newpos, d = _step_batch(pos, M, w, U)
    return (
        RingState(M, tuple(int(x) for x in newpos[0])),
        RowMove(tuple(state.positions), tuple(int(x) for x in d[0])),
    )


def evolve(s0: RingState, N: int, w: StochasticWeights, rng: np.random.Generator) -> Trajectory:
    """N row updates; particle number is conserved exactly."""
    states = [s0]
    moves = []
    for _ in range(N):
        nxt, mv = sample_row(states[-1], w, rng)
        states.append(nxt)
        moves.append(mv)
    return Trajectory(states=states, moves=moves)


# ---------------------------------------------------------------------------
# heights


@dataclass
class HeightField:
    """Integer heights on the (N+1) x (M+1) face grid, h(0,0) = 0, fixed monodromy."""

    M: int
    N: int
    grid: np.ndarray
    monodromy: int
    base: int = 0

    def validate(self) -> None:
        if self.grid.shape != (self.N + 1, self.M + 1):
            raise InvariantViolation("height grid has wrong shape")
        if self.grid[0, 0] != self.base:
            raise InvariantViolation("height base is not h(0,0)")
        if np.abs(np.diff(self.grid, axis=1)).max() != 1:
            raise InvariantViolation("horizontal height increments must be +-1")
        if self.N >= 1 and np.abs(np.diff(self.grid, axis=0)).max() != 1:
            raise InvariantViolation("vertical height increments must be +-1")
        wrap = self.grid[:, self.M] - self.grid[:, 0]
        if not np.all(wrap == self.monodromy):
            raise InvariantViolation("monodromy is not constant across rows")


def _covered_bonds(starts: np.ndarray, jumps: np.ndarray, M: int) -> np.ndarray:
    """Boolean (K, M): bond i (between sites i and i+1) traversed by some path."""
    K, m = starts.shape
    diff = np.zeros((K, M + 1), dtype=np.int64)
    rows = np.broadcast_to(np.arange(K)[:, None], (K, m))
    end = starts + jumps
    moving = jumps > 0
    first_stop = np.minimum(end, M)
    width = M + 1
    flat = np.bincount(
        (rows[moving] * width + starts[moving]), minlength=K * width
    ) - np.bincount((rows[moving] * width + first_stop[moving]), minlength=K * width)
    wrapped = end > M
    if wrapped.any():
        flat += np.bincount(rows[wrapped] * width, minlength=K * width)
        flat -= np.bincount(rows[wrapped] * width + (end[wrapped] - M), minlength=K * width)
    diff += flat.reshape(K, width)
    return np.cumsum(diff[:, :M], axis=1) > 0


def _row_heights(h0: np.ndarray, occ: np.ndarray) -> np.ndarray:
    """Heights along one face row from its leftmost value and the edge occupancies."""
    K, M = occ.shape
    out = np.empty((K, M + 1), dtype=np.int64)
    out[:, 0] = h0
    np.cumsum(2 * occ.astype(np.int64) - 1, axis=1, out=out[:, 1:])
    out[:, 1:] += h0[:, None]
    return out


def height_from_trajectory(traj: Trajectory) -> HeightField:
    """Assemble the face heights of one sampled configuration and verify consistency."""
    M = traj.M
    N = len(traj.moves)
    occ = np.stack([s.occupancy() for s in traj.states])
    grid = np.empty((N + 1, M + 1), dtype=np.int64)
    grid[0] = _row_heights(np.zeros(1, dtype=np.int64), occ[:1])[0]
    bond_col = (np.arange(M + 1) - 1) % M
    for n, mv in enumerate(traj.moves):
        if mv.loop:
            cover = np.ones((1, M), dtype=bool)
        elif len(mv.starts) == 0:
            cover = np.zeros((1, M), dtype=bool)
        else:
            cover = _covered_bonds(
                np.array([mv.starts], dtype=np.int64),
                np.array([mv.jumps], dtype=np.int64),
                M,
            )
        h0 = grid[n, 0] + 1 - 2 * int(cover[0, M - 1])
        grid[n + 1] = _row_heights(np.array([h0]), occ[n + 1 : n + 2])[0]
        expected = 1 - 2 * cover[0, bond_col].astype(np.int64)
        if not np.array_equal(grid[n + 1] - grid[n], expected):
            raise InvariantViolation(f"jump records inconsistent with heights at row {n}")
    hf = HeightField(M=M, N=N, grid=grid, monodromy=2 * traj.states[0].m - M)
    hf.validate()
    return hf


def normalized_height(hf: HeightField, scale: ModelScale):
    """Piecewise-constant field phi(x, y) = eps * h(floor(x/eps), floor(y/eps))."""
    if scale.M != hf.M:
        raise ValueError("scale.M does not match the height field")
    eps = scale.eps

    def phi(x, y):
        ix = np.clip(np.floor(np.asarray(x) / eps).astype(int), 0, hf.M)
        iy = np.clip(np.floor(np.asarray(y) / eps).astype(int), 0, hf.N)
        return eps * hf.grid[iy, ix]

    return phi


# ---------------------------------------------------------------------------
# ensembles


@dataclass
class RunStats:
    """Per-edge occupation frequencies and mean face heights over K runs."""

    M: int
    N: int
    runs: int
    mean_density: np.ndarray   # (N+1, M), values in [0, 1]
    mean_height: np.ndarray    # (N+1, M+1)


def _ensemble_chunk(
    s0: RingState,
    N: int,
    w: StochasticWeights,
    seeds,
    check_heights: bool,
):
    M, m = s0.M, s0.m
    K = len(seeds)
    gens = [np.random.Generator(np.random.Philox(s)) for s in seeds]
    budget = row_budget(m)
    occ_counts = np.zeros((N + 1, M), dtype=np.int64)
    h_sums = np.zeros((N + 1, M + 1), dtype=np.int64)

    pos = np.tile(np.array(s0.positions, dtype=np.int64), (K, 1)) if m else None
    occ = np.tile(s0.occupancy().astype(bool), (K, 1))
    h = _row_heights(np.zeros(K, dtype=np.int64), occ)
    occ_counts[0] = K * s0.occupancy().astype(np.int64)
    h_sums[0] = h.sum(axis=0)
    bond_col = (np.arange(M + 1) - 1) % M
    rows = np.arange(K)

    U = np.empty((K, budget))
    for n in range(N):
        for r in range(K):
            U[r] = gens[r].random(budget)
        if m == 0:
            cover = np.broadcast_to(
                (U[:, 0] < _loop_probability(M, w, 0))[:, None], (K, M)
            )
            occ_new = occ
        else:
            newpos, jumps = _step_batch(pos, M, w, U)
            cover = _covered_bonds(pos, jumps, M)
            occ_new = np.zeros((K, M), dtype=bool)
            occ_new[rows[:, None], newpos] = True
            pos = newpos
        h_new = _row_heights(h[:, 0] + 1 - 2 * cover[:, M - 1], occ_new)
        if check_heights:
            steps = h_new - h
            expected = 1 - 2 * cover[:, bond_col]
            if not np.array_equal(steps, expected):
                raise InvariantViolation(f"height increment violation at row {n}")
            if not np.all(h_new[:, M] - h_new[:, 0] == 2 * m - M):
                raise InvariantViolation(f"monodromy violation at row {n}")
        occ_counts[n + 1] = occ_new.sum(axis=0)
        h_sums[n + 1] = h_new.sum(axis=0)
        occ, h = occ_new, h_new
    return occ_counts, h_sums


def ensemble_density(
    s0: RingState,
    N: int,
    runs: int,
    w: StochasticWeights,
    master_seed: int,
    threads: int | None = None,
    check_heights: bool = True,
) -> RunStats:
    """Occupation frequencies and mean heights over independent trajectories.

    Run r consumes its own counter-based stream derived from
    ``SeedSequence(master_seed).spawn(runs)[r]``; results are bit-identical for
    any thread count because accumulators are integers.
    """
    if runs < 1:
        raise ValueError("need runs >= 1")
    seeds = np.random.SeedSequence(master_seed).spawn(runs)
    threads = max(1, threads or 1)
    chunks = np.array_split(np.arange(runs), min(threads, runs))
    occ_counts = np.zeros((N + 1, s0.M), dtype=np.int64)
    h_sums = np.zeros((N + 1, s0.M + 1), dtype=np.int64)
    if threads == 1:
        parts = [_ensemble_chunk(s0, N, w, seeds, check_heights)]
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=len(chunks)) as ex:
            parts = list(
                ex.map(
                    lambda idx: _ensemble_chunk(
                        s0, N, w, [seeds[i] for i in idx], check_heights
                    ),
                    chunks,
                )
            )
    for oc, hs in parts:
        occ_counts += oc
        h_sums += hs
    return RunStats(
        M=s0.M,
        N=N,
        runs=runs,
        mean_density=occ_counts / runs,
        mean_height=h_sums / runs,
    )


def sample_transitions(
    state: RingState,
    w: StochasticWeights,
    n_samples: int,
    seed: int,
    chunk: int = 200_000,
) -> dict[tuple[int, ...], int]:
    """Counts of one-step destinations from a fixed state (single stream, chunked)."""
    M, m = state.M, state.m
    if not (1 <= m <= M):
        raise ValueError("transition sampling needs 1 <= m <= M")
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    budget = row_budget(m)
    counts: dict[tuple[int, ...], int] = {}
    left = n_samples
    base = np.array(state.positions, dtype=np.int64)
    while left > 0:
        K = min(chunk, left)
        left -= K
        U = gen.random((K, budget))
        newpos, _ = _step_batch(np.tile(base, (K, 1)), M, w, U)
        uniq, cnt = np.unique(newpos, axis=0, return_counts=True)
        for row, c in zip(uniq, cnt):
            key = tuple(int(x) for x in row)
            counts[key] = counts.get(key, 0) + int(c)
    return counts


# ---------------------------------------------------------------------------
# dumps


def dump_trajectory(path, traj: Trajectory) -> None:
    with open(path, "w") as fh:
        fh.write("row,site,occupied\n")
        for n, s in enumerate(traj.states):
            occ = s.occupancy()
            for site in range(s.M):
                fh.write(f"{n},{site},{int(occ[site])}\n")


def dump_height(path, hf: HeightField) -> None:
    with open(path, "w") as fh:
        fh.write("row,face,height\n")
        for n in range(hf.N + 1):
            for face in range(hf.M + 1):
                fh.write(f"{n},{face},{int(hf.grid[n, face])}\n")


def dump_stats(path, stats: RunStats) -> None:
    with open(path, "w") as fh:
        fh.write("row,site,mean_density\n")
        for n in range(stats.N + 1):
            for site in range(stats.M):
                fh.write(f"{n},{site},{stats.mean_density[n, site]:.17g}\n")
