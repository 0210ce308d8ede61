"""Parametrizations of the stochastic six-vertex model and the exact relations between them.

Every other module reads its conventions from here, so they are spelled out once:

* Probability parameters ``b1, b2 in [0, 1)``.  In a row update a particle pays
  ``b2`` to stay put, ``c1*c2*b1**(d-1)`` to hop ``d`` sites right into open
  space, and ``b1**(gap-1)`` to land on the departure site of the next particle,
  with ``a = 1`` and ``c_i = 1 - b_i``.  These weights make the normalized row
  transfer matrix a Markov matrix (verified exactly in the ``xfer`` tests).

* Hyperbolic point ``(u, eta, branch)`` with ``u, eta > 0`` and
  ``branch in {+1, -1}``::

      b1 = sinh(u) exp(+branch*eta) / sinh(u+eta)
      b2 = sinh(u) exp(-branch*eta) / sinh(u+eta)
      c1 = sinh(eta) exp(-branch*u) / sinh(u+eta)
      c2 = sinh(eta) exp(+branch*u) / sinh(u+eta)

  so ``branch=+1`` means ``b1 > b2``.  The anisotropy is
  ``delta = cosh(eta) > 1`` for every ``u``.

* Field convention: ``H = -branch*eta/2`` and ``V = +branch*eta/2``, with
  ``lam = exp(-branch*u)``.  This is the unique sign choice for which the
  field-dressed R matrix, traced over its horizontal (auxiliary) leg, produces
  the row weights above with ``b2`` on the vertical-through vertex.  (The
  opposite choice swaps the roles of ``b1`` and ``b2``, i.e. describes the
  mirror-image process.)

* Drift parameter ``v``: with the probability parameters,
  ``(b1-b2)/(2-b1-b2)`` equals ``tanh(u)`` identically.  Three sign
  conventions are exposed because downstream formulas are written for
  ``v in (0,1)``; ``"magnitude"`` is the default.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

V_CONVENTIONS = ("magnitude", "b1_minus_b2", "b2_minus_b1")


@dataclass(frozen=True)
class BaxterPoint:
    """Spectral/anisotropy coordinates (u, eta) with the branch sign of the weights."""

    u: float
    eta: float
    branch: int = +1

    def __post_init__(self) -> None:
        if not (self.u > 0 and math.isfinite(self.u)):
            raise ValueError(f"u must be positive, got {self.u}")
        if not (self.eta > 0 and math.isfinite(self.eta)):
            raise ValueError(f"eta must be positive, got {self.eta}")
        if self.branch not in (+1, -1):
            raise ValueError(f"branch must be +1 or -1, got {self.branch}")


@dataclass(frozen=True)
class StochasticWeights:
    """The six vertex weights at the stochastic point plus derived parameters.

    ``lam`` is the c-weight asymmetry (c1 = c*lam, c2 = c/lam); on a ring it
    cancels out of every transfer-matrix entry.  ``baxter`` is the generating
    point when one exists (it does not for b1 == b2, where delta == 1).
    """

    a1: float
    a2: float
    b1: float
    b2: float
    c1: float
    c2: float
    H: float
    V: float
    lam: float
    delta: float
    v: float
    v_convention: str = "magnitude"
    baxter: BaxterPoint | None = None

    def __post_init__(self) -> None:
        for name in ("b1", "b2"):
            b = getattr(self, name)
            if not (0.0 <= b <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {b}")
        if abs(self.c1 - (1.0 - self.b1)) > 1e-12 or abs(self.c2 - (1.0 - self.b2)) > 1e-12:
            raise ValueError("stochastic point requires c_i = 1 - b_i")
        if self.v_convention not in V_CONVENTIONS:
            raise ValueError(f"unknown v_convention {self.v_convention!r}")


@dataclass(frozen=True)
class ModelScale:
    """Lattice/continuum correspondence: M sites, N rows, mesh eps on an L x T cylinder."""

    L: float
    T_len: float
    M: int
    N: int
    eps: float

    @classmethod
    def from_dimensions(cls, L: float, T_len: float, M: int) -> "ModelScale":
        """T_len is rounded up to the nearest multiple of eps = L/M (no ragged final row)."""
        if L <= 0 or T_len <= 0 or M < 1:
            raise ValueError("need L > 0, T_len > 0, M >= 1")
        eps = L / M
        N = max(1, math.ceil(T_len / eps - 1e-12))
        return cls(L=L, T_len=N * eps, M=M, N=N, eps=eps)


def delta_from_probabilities(b1: float, b2: float) -> float:
    """Anisotropy (a1*a2 + b1*b2 - c1*c2) / (2*sqrt(a1*a2*b1*b2)) at a = 1, c = 1 - b."""
    if b1 * b2 == 0.0:
        return math.inf
    c1, c2 = 1.0 - b1, 1.0 - b2
    return (1.0 + b1 * b2 - c1 * c2) / (2.0 * math.sqrt(b1 * b2))


def _drift(b1: float, b2: float, convention: str) -> float:
    base = (b1 - b2) / (2.0 - b1 - b2)
    if convention == "b1_minus_b2":
        return base
    if convention == "b2_minus_b1":
        return -base
    if convention == "magnitude":
        return abs(base)
    raise ValueError(f"unknown v_convention {convention!r}")


def weights_from_baxter(p: BaxterPoint, v_convention: str = "magnitude") -> StochasticWeights:
    """Stochastic weights at the point (u, eta, branch); delta comes out as cosh(eta)."""
    den = math.sinh(p.u + p.eta)
    b1 = math.sinh(p.u) * math.exp(p.branch * p.eta) / den
    b2 = math.sinh(p.u) * math.exp(-p.branch * p.eta) / den
    c1 = math.sinh(p.eta) * math.exp(-p.branch * p.u) / den
    c2 = math.sinh(p.eta) * math.exp(p.branch * p.u) / den
    return StochasticWeights(
        a1=1.0,
        a2=1.0,
        b1=b1,
        b2=b2,
        c1=c1,
        c2=c2,
        H=-p.branch * p.eta / 2.0,
        V=p.branch * p.eta / 2.0,
        lam=math.exp(-p.branch * p.u),
        delta=delta_from_probabilities(b1, b2),
        v=_drift(b1, b2, v_convention),
        v_convention=v_convention,
        baxter=p,
    )


def recover_baxter(b1: float, b2: float) -> BaxterPoint:
    """Invert the hyperbolic parametrization.

    delta = cosh(eta) fixes eta, then sqrt(b1*b2) = sinh(u)/sinh(u+eta) fixes u.
    Requires 0 < b1, b2 < 1 and b1 != b2.
    """
    if not (0.0 < b1 < 1.0 and 0.0 < b2 < 1.0):
        raise ValueError("recover_baxter needs b1, b2 strictly inside (0, 1)")
    if b1 == b2:
        raise ValueError("b1 == b2 has delta == 1 and no (u, eta > 0) preimage")
    delta = delta_from_probabilities(b1, b2)
    eta = math.acosh(delta)
    g = math.sqrt(b1 * b2)
    u = math.atanh(g * math.sinh(eta) / (1.0 - g * math.cosh(eta)))
    return BaxterPoint(u=u, eta=eta, branch=+1 if b1 > b2 else -1)


def weights_from_probabilities(
    b1: float,
    b2: float,
    v_convention: str = "magnitude",
    allow_equal: bool = False,
) -> StochasticWeights:
    """Stochastic weights directly from the two hop probabilities.

    The ordering must be strict (either b1 > b2 or b1 < b2) unless the caller
    opts into the drifting-free point v = 0 with ``allow_equal=True``.
    """
    for name, b in (("b1", b1), ("b2", b2)):
        if not (0.0 <= b < 1.0):
            raise ValueError(f"{name} must lie in [0, 1), got {b}")
    if b1 == b2 and not allow_equal:
        raise ValueError("b1 == b2 gives v = 0; pass allow_equal=True to accept it")
    recoverable = (
        0.0 < b1 < 1.0
        and 0.0 < b2 < 1.0
        and b1 != b2
        and delta_from_probabilities(b1, b2) > 1.0
    )
    p, H, lam = None, 0.0, 1.0
    if recoverable:
        try:
            p = recover_baxter(b1, b2)
            H = -p.branch * p.eta / 2.0
            lam = math.exp(-p.branch * p.u)
        except (ValueError, OverflowError):
            p, H, lam = None, 0.0, 1.0   # preimage not representable in floats
    return StochasticWeights(
        a1=1.0,
        a2=1.0,
        b1=b1,
        b2=b2,
        c1=1.0 - b1,
        c2=1.0 - b2,
        H=H,
        V=-H,
        lam=lam,
        delta=delta_from_probabilities(b1, b2),
        v=_drift(b1, b2, v_convention),
        v_convention=v_convention,
        baxter=p,
    )


def drift_param(w: StochasticWeights) -> float:
    """Drift v per w.v_convention; the denominator 2 - b1 - b2 is positive for b_i < 1."""
    return _drift(w.b1, w.b2, w.v_convention)


def critical_line_slope(t: float, p: BaxterPoint, sign: int) -> float:
    """Slope pairing s(t) = (t + sign*tanh(u+eta)) / (1 + sign*tanh(u+eta)*t).

    A Mobius map of [-1, 1] onto itself (velocity-addition form); applying it
    with ``sign`` and then ``-sign`` returns the input.
    """
    if sign not in (+1, -1):
        raise ValueError("sign must be +1 or -1")
    if abs(t) > 1.0 + 1e-12:
        raise ValueError(f"slope t must lie in [-1, 1], got {t}")
    tau = math.tanh(p.u + p.eta)
    den = 1.0 + sign * tau * t
    if abs(den) < 1e-15:
        raise ValueError("singular denominator in critical-line map")
    return (t + sign * tau) / den
