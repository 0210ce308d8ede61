"""Exact dense transfer-matrix computations at small ring size M.

Basis and orientation conventions:

* A row state is a subset of occupied sites on the ring {0..M-1}.  Within a
  fixed particle-number sector the basis is ordered lexicographically on the
  occupancy bit-string (site 0 first).
* The 4x4 vertex matrix acts on (vertical edge) x (horizontal edge) in the
  ordered tensor basis (e0e0, e0e1, e1e0, e1e1), rows = outgoing, columns =
  incoming.  The horizontal (auxiliary) leg is threaded left to right around
  the ring and traced, so ``transfer_block(M, m, w)[beta, alpha]`` is the total
  weight of row configurations taking bottom state alpha to top state beta with
  particles drifting toward increasing site index.
* Transfer-matrix entries never depend on ``lam`` on the ring (the two c-type
  vertices occur in equal numbers in every closed row configuration); this is
  measured, not assumed, by ``transfer_lambda_dependence``.

The normalization constant of a sector is *measured* by ``column_sum_constant``
and matched against the two candidate closed forms ``1 + b1^(M-m) b2^m`` and
``1 + b1^m b2^(M-m)``; the first one is the one that fits (see
``normalization_form``).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .params import BaxterPoint, StochasticWeights, weights_from_baxter

MAX_DENSE_M = 14
MAX_PRODUCT_M = 10
ENUMERATION_GUARD = 10**7

FOUR_BASIS = ("e0e0", "e0e1", "e1e0", "e1e1")


class InvariantViolation(RuntimeError):
    """An exact structural property failed (non-uniform column sums, bad heights, ...)."""


@dataclass(frozen=True, order=True)
class BoundaryConfig:
    """Occupied sites of one ring row, positions sorted increasing."""

    M: int
    occupied: tuple[int, ...]

    def __post_init__(self) -> None:
        occ = self.occupied
        if any(not (0 <= s < self.M) for s in occ):
            raise ValueError(f"sites must lie in [0, {self.M}), got {occ}")
        if any(occ[i] >= occ[i + 1] for i in range(len(occ) - 1)):
            raise ValueError("occupied sites must be strictly increasing")

    @property
    def m(self) -> int:
        return len(self.occupied)

    def bits(self) -> tuple[int, ...]:
        s = set(self.occupied)
        return tuple(1 if i in s else 0 for i in range(self.M))


def sector_basis(M: int, m: int) -> list[BoundaryConfig]:
    """All m-particle states, ordered lexicographically on the bit-string."""
    if not (0 <= m <= M):
        raise ValueError(f"need 0 <= m <= M, got m={m}, M={M}")
    configs = [BoundaryConfig(M, c) for c in itertools.combinations(range(M), m)]
    configs.sort(key=lambda c: c.bits())
    return configs


@dataclass
class TransferBlock:
    """Dense m-particle sector of the row transfer matrix; matrix[beta, alpha]."""

    M: int
    m: int
    basis: list[BoundaryConfig]
    matrix: np.ndarray

    def index(self, config: BoundaryConfig) -> int:
        return self.basis.index(config)


# ---------------------------------------------------------------------------
# vertex matrices


def _sandwich(u: float, eta: float, H: float, lam: float, derivative: bool = False) -> np.ndarray:
    """(D^V x D^{H+log lam}) R(u) (D^V x D^{H-log lam}) with V = -H.

    With ``derivative=True`` the symmetric core R(u) is replaced by its
    entrywise u-derivative (cosh in place of sinh; the c entries drop out),
    holding H, V and lam fixed.
    """
    a, b, c = math.sinh(u + eta), math.sinh(u), math.sinh(eta)
    if derivative:
        a, b, c = math.cosh(u + eta), math.cosh(u), 0.0
    core = np.array(
        [
            [a, 0.0, 0.0, 0.0],
            [0.0, b, c, 0.0],
            [0.0, c, b, 0.0],
            [0.0, 0.0, 0.0, a],
        ]
    )
    alpha = math.log(lam)
    V = -H

    def d(beta: float) -> np.ndarray:
        return np.diag([math.exp(beta / 2.0), math.exp(-beta / 2.0)])

    return np.kron(d(V), d(H + alpha)) @ core @ np.kron(d(V), d(H - alpha))


def r_matrix(p: BaxterPoint) -> np.ndarray:
    """Field-dressed 4x4 vertex matrix at the stochastic point, normalized so a1 = 1.

    Basis ``FOUR_BASIS`` = (vertical x horizontal); diagonal carries the a and b
    weights, the central anti-diagonal carries c1 = c*lam and c2 = c/lam.
    """
    H = -p.branch * p.eta / 2.0
    lam = math.exp(-p.branch * p.u)
    return _sandwich(p.u, p.eta, H, lam) / math.sinh(p.u + p.eta)


def r_matrix_du(p: BaxterPoint) -> np.ndarray:
    """Entrywise u-derivative of the unnormalized vertex matrix (fields and lam fixed)."""
    H = -p.branch * p.eta / 2.0
    lam = math.exp(-p.branch * p.u)
    return _sandwich(p.u, p.eta, H, lam, derivative=True)


def _tensor_from_four(R4: np.ndarray) -> np.ndarray:
    """Reindex a 4x4 vertex matrix as V[v_in, h_in, v_out, h_out]."""
    V = np.zeros((2, 2, 2, 2))
    for v_in in range(2):
        for h_in in range(2):
            for v_out in range(2):
                for h_out in range(2):
                    V[v_in, h_in, v_out, h_out] = R4[2 * v_out + h_out, 2 * v_in + h_in]
    return V


def _role_tensor(w: StochasticWeights) -> np.ndarray:
    """Vertex tensor from the weight values: stay = b2, horizontal transit = b1."""
    V = np.zeros((2, 2, 2, 2))
    V[0, 0, 0, 0] = w.a1
    V[1, 1, 1, 1] = w.a2
    V[1, 0, 1, 0] = w.b2
    V[0, 1, 0, 1] = w.b1
    V[1, 0, 0, 1] = w.c1   # departure: vertical in, horizontal out
    V[0, 1, 1, 0] = w.c2   # arrival: horizontal in, vertical out
    return V


def _contract(bits: np.ndarray, V: np.ndarray, Vd: np.ndarray | None = None):
    """Trace of the site-ordered product of 2x2 auxiliary matrices, all state pairs.

    bits is (D, M); returns (D, D) with [beta, alpha] indexing, and optionally
    the simultaneous derivative via the product rule when Vd is given.
    """
    D, M = bits.shape
    prod = np.broadcast_to(np.eye(2), (D, D, 2, 2)).copy()
    dprod = np.zeros((D, D, 2, 2)) if Vd is not None else None
    for site in range(M):
        a = bits[None, :, site]
        b = bits[:, None, site]
        W = V[a, :, b, :]
        if Vd is not None:
            dprod = dprod @ W + prod @ Vd[a, :, b, :]
        prod = prod @ W
    T = np.trace(prod, axis1=2, axis2=3)
    if Vd is not None:
        return T, np.trace(dprod, axis1=2, axis2=3)
    return T


def _sector_bits(basis: list[BoundaryConfig]) -> np.ndarray:
    return np.array([c.bits() for c in basis], dtype=np.intp)


def transfer_block(M: int, m: int, w: StochasticWeights) -> TransferBlock:
    """Dense m-particle sector of T_M at the stochastic weights w."""
    if M > MAX_DENSE_M:
        raise ValueError(f"dense transfer blocks are limited to M <= {MAX_DENSE_M}")
    basis = sector_basis(M, m)
    T = _contract(_sector_bits(basis), _role_tensor(w))
    return TransferBlock(M=M, m=m, basis=basis, matrix=T)


def brute_force_transition(
    alpha: BoundaryConfig, w: StochasticWeights
) -> dict[BoundaryConfig, float]:
    """Total weight of every reachable top state, by enumerating all particle paths.

    Particle i moves from alpha_i to beta_i in [alpha_i, alpha_{i+1}] (ring
    convention alpha_{m+1} = alpha_1 + M); tuples with beta_i = beta_{i+1} are
    excluded.  Path weights: stay b2, interior hop of d sites c1*c2*b1^(d-1),
    landing on the next departure site b1^(gap-1).  The m = 0 sector has two
    configurations, the empty row and the purely horizontal loop of weight b1^M.
    """
    M, m = alpha.M, alpha.m
    if M > 20:
        raise ValueError("path enumeration is limited to M <= 20")
    if m == 0:
        return {alpha: 1.0 + w.b1**M}
    pos = alpha.occupied
    if m == 1:
        gaps = [M]
    else:
        gaps = [(pos[(i + 1) % m] - pos[i]) % M for i in range(m)]
    size = 1
    for g in gaps:
        size *= g + 1
        if size > ENUMERATION_GUARD:
            raise ValueError(f"destination count exceeds guard {ENUMERATION_GUARD}")
    out: dict[BoundaryConfig, float] = {}
    for ds in itertools.product(*[range(g + 1) for g in gaps]):
        if m > 1 and any(ds[i] == gaps[i] and ds[(i + 1) % m] == 0 for i in range(m)):
            continue
        weight = 1.0
        for g, d in zip(gaps, ds):
            if d == 0:
                weight *= w.b2
            elif d < g:
                weight *= w.c1 * w.c2 * w.b1 ** (d - 1)
            else:
                weight *= w.b1 ** (g - 1)
        beta = BoundaryConfig(M, tuple(sorted((p + d) % M for p, d in zip(pos, ds))))
        out[beta] = out.get(beta, 0.0) + weight
    return out


# ---------------------------------------------------------------------------
# stochasticity


def column_sum_constant(
    M: int, m: int, w: StochasticWeights, block: TransferBlock | None = None, rtol: float = 1e-12
) -> float:
    """The common column sum of a sector, verified uniform to relative spread rtol."""
    if block is None:
        block = transfer_block(M, m, w)
    sums = block.matrix.sum(axis=0)
    spread = float(sums.max() - sums.min())
    mean = float(sums.mean())
    if spread > rtol * max(abs(mean), 1e-300):
        raise InvariantViolation(
            f"column sums not uniform at M={M}, m={m}: spread {spread:.3e} vs mean {mean:.6e}"
        )
    return mean


def normalization_forms(M: int, m: int, w: StochasticWeights) -> dict[str, float]:
    """The two candidate closed forms for the sector normalization constant."""
    return {
        "b1^(M-m) b2^m": 1.0 + w.b1 ** (M - m) * w.b2**m,
        "b1^m b2^(M-m)": 1.0 + w.b1**m * w.b2 ** (M - m),
    }


def normalization_form(
    M: int, m: int, w: StochasticWeights, block: TransferBlock | None = None
) -> str:
    """Which closed form the measured constant matches ('both' when they coincide)."""
    z = column_sum_constant(M, m, w, block=block)
    forms = normalization_forms(M, m, w)
    hits = [name for name, val in forms.items() if abs(val - z) <= 1e-12 * max(z, 1.0)]
    if len(hits) == 2:
        return "both"
    if len(hits) == 1:
        return hits[0]
    raise InvariantViolation(f"measured constant {z!r} matches neither closed form {forms!r}")


def stochasticity_negative_control(
    M: int, m: int, w: StochasticWeights, perturbation: float = 0.05
) -> bool:
    """True when a deliberate c1 != 1 - b1 corruption is caught as non-stochastic."""
    V = _role_tensor(w)
    V[1, 0, 0, 1] += perturbation
    T = _contract(_sector_bits(sector_basis(M, m)), V)
    sums = T.sum(axis=0)
    return float(sums.max() - sums.min()) > 1e-6 * max(abs(float(sums.mean())), 1e-300)


def markov_block(M: int, m: int, w: StochasticWeights) -> TransferBlock:
    """Column-stochastic sector: transfer_block divided by its measured column sum."""
    block = transfer_block(M, m, w)
    z = column_sum_constant(M, m, w, block=block)
    P = block.matrix / z
    if P.min() < -1e-15:
        raise InvariantViolation(f"negative transition weight {P.min():.3e}")
    colsums = P.sum(axis=0)
    if np.abs(colsums - 1.0).max() > 1e-12:
        raise InvariantViolation("markov_block columns do not sum to 1")
    return TransferBlock(M=M, m=m, basis=block.basis, matrix=P)


# ---------------------------------------------------------------------------
# commuting family and lambda dependence


def commutator_norm(M: int, u1: float, u2: float, eta: float, branch: int = +1) -> float:
    """max-norm of [T(u1), T(u2)] over all particle sectors, shared eta/H/V."""
    if M > MAX_PRODUCT_M:
        raise ValueError(f"commutators are limited to M <= {MAX_PRODUCT_M}")
    w1 = weights_from_baxter(BaxterPoint(u1, eta, branch))
    w2 = weights_from_baxter(BaxterPoint(u2, eta, branch))
    worst = 0.0
    for m in range(M + 1):
        T1 = transfer_block(M, m, w1).matrix
        T2 = transfer_block(M, m, w2).matrix
        worst = max(worst, float(np.abs(T1 @ T2 - T2 @ T1).max()))
    return worst


def transfer_max_entry(M: int, u: float, eta: float, branch: int = +1) -> float:
    w = weights_from_baxter(BaxterPoint(u, eta, branch))
    return max(
        float(np.abs(transfer_block(M, m, w).matrix).max()) for m in range(M + 1)
    )


def transfer_lambda_dependence(M: int, w: StochasticWeights) -> float:
    """max entry difference between T built with (c1, c2) and with the symmetric split.

    Zero (to round-off) on the ring: c-type vertices pair up in every closed
    row configuration, so only the product c1*c2 ever enters.
    """
    c = math.sqrt(w.c1 * w.c2)
    V_asym = _role_tensor(w)
    V_sym = V_asym.copy()
    V_sym[1, 0, 0, 1] = c
    V_sym[0, 1, 1, 0] = c
    worst = 0.0
    for m in range(M + 1):
        bits = _sector_bits(sector_basis(M, m))
        worst = max(worst, float(np.abs(_contract(bits, V_asym) - _contract(bits, V_sym)).max()))
    return worst


# ---------------------------------------------------------------------------
# exclusion-process generator relation


def _asep_pair_sum(M: int, p: float, q: float) -> np.ndarray:
    """Sum over ring bonds (i, i+1) of the displayed two-site matrix H(p, q).

    Full-space basis index is the occupancy bitmask with bit i = site i.  The
    two-site matrix, in the ordered basis (e0e0, e0e1, e1e0, e1e1) of sites
    (i, i+1), is [[0,0,0,0],[0,q,-p,0],[0,-q,p,0],[0,0,0,0]]; every column sums
    to zero.
    """
    h = np.array(
        [
            [0.0, 0.0, 0.0, 0.0],
            [0.0, q, -p, 0.0],
            [0.0, -q, p, 0.0],
            [0.0, 0.0, 0.0, 0.0],
        ]
    )
    dim = 1 << M
    masks = np.arange(dim)
    W = np.zeros((dim, dim))
    for i in range(M):
        j = (i + 1) % M
        bi = (masks >> i) & 1
        bj = (masks >> j) & 1
        local = 2 * bi + bj
        cleared = masks & ~((1 << i) | (1 << j))
        for r_in in range(4):
            sel = local == r_in
            if not sel.any():
                continue
            a = masks[sel]
            base = cleared[sel]
            for r_out in range(4):
                if h[r_out, r_in] == 0.0:
                    continue
                b = base | (((r_out >> 1) & 1) << i) | ((r_out & 1) << j)
                W[b, a] += h[r_out, r_in]
    return W


def asep_generator(M: int, eta: float) -> np.ndarray:
    """Sum of local H(p, q) over ring bonds with p = e^eta/sinh(eta), q = e^-eta/sinh(eta)."""
    if M > 12:
        raise ValueError("asep_generator is limited to M <= 12")
    p = math.exp(eta) / math.sinh(eta)
    q = math.exp(-eta) / math.sinh(eta)
    return _asep_pair_sum(M, p, q)


def verify_asep_relation(M: int, p: BaxterPoint) -> float:
    """Residual of the exclusion-generator identity satisfied by the transfer matrix.

    With the unnormalized stochastic-line family T(u) (entries built from
    sinh(u+eta), sinh(u), sinh(eta) and the fields of ``p``), the identity that
    actually holds, measured here, is::

        T'(0) T(0)^{-1} - M*coth(eta)*I  =  -sum_i H_{i,i+1}(p, q)

    for branch +1 (p and q swap roles for branch -1).  Two remarks, both forced
    by exact structure: the coefficient of coth(eta) is M, since the column
    sums of T'(0)T(0)^{-1} equal d/du log(column constant) = M coth(eta); and
    the sign in front of the H-sum is negative, since T'(0)T(0)^{-1} is
    entrywise nonnegative while H(p, q) has negative off-diagonal entries.
    Returns the max-norm of the difference of the two sides.
    """
    if M > MAX_PRODUCT_M:
        raise ValueError(f"verify_asep_relation is limited to M <= {MAX_PRODUCT_M}")
    eta = p.eta
    H = -p.branch * eta / 2.0
    V0 = _tensor_from_four(_sandwich(0.0, eta, H, 1.0))
    Vd = _tensor_from_four(_sandwich(0.0, eta, H, 1.0, derivative=True))
    bits = ((np.arange(1 << M)[:, None] >> np.arange(M)[None, :]) & 1).astype(np.intp)
    T0, dT0 = _contract(bits, V0, Vd)
    lhs = dT0 @ np.linalg.inv(T0) - M / math.tanh(eta) * np.eye(1 << M)
    rate_p = math.exp(p.branch * eta) / math.sinh(eta)
    rate_q = math.exp(-p.branch * eta) / math.sinh(eta)
    return float(np.abs(lhs + _asep_pair_sum(M, rate_p, rate_q)).max())


# ---------------------------------------------------------------------------
# dumps


def dump_matrix(path, block: TransferBlock) -> None:
    """Plain-text dump: header '# M m rows cols', one row per line, 17 significant digits."""
    rows, cols = block.matrix.shape
    with open(path, "w") as fh:
        fh.write(f"# {block.M} {block.m} {rows} {cols}\n")
        for row in block.matrix:
            fh.write(" ".join(f"{x:.17g}" for x in row) + "\n")
