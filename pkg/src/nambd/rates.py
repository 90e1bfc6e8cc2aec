"""Analytic NAM rates, the potential-of-mean-force integral, and the Bernoulli
statistics used to size and score replications."""
from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist
from typing import Callable, Sequence

from .errors import (DivergentIntegral, EmptySample, NonPositiveInput, OmegaOutOfRange,
                     OrderingViolation, QuadratureNonConvergence)
from .model import EndState


class PotentialOfMeanForce:
    """Centrosymmetric interaction energy E(r) in units of kT.

    Subclasses supply ``energy``; ``derivative`` defaults to a central
    difference.  ``kernel_args`` is defined only for potentials the compiled
    trajectory kernels know how to evaluate.
    """

    is_zero = False

    def energy(self, r: float) -> float:
        raise NotImplementedError

    def derivative(self, r: float) -> float:
        h = 1e-6 * max(1.0, abs(r))
        return (self.energy(r + h) - self.energy(r - h)) / (2 * h)


class ZeroPotential(PotentialOfMeanForce):
    is_zero = True

    def energy(self, r):
        return 0.0

    def derivative(self, r):
        return 0.0

    def __repr__(self):
        return "ZeroPotential()"


@dataclass(frozen=True)
class ConstantShift(PotentialOfMeanForce):
    """E(r) = c everywhere.  Exerts no force; scales the rate by exp(-c)."""

    c: float

    def energy(self, r):
        return self.c

    def derivative(self, r):
        return 0.0


@dataclass(frozen=True)
class ScreenedCoulomb(PotentialOfMeanForce):
    """Debye-Hueckel form E(r) = Q * exp(-kappa r) / r (Q < 0 attracts)."""

    Q: float
    kappa: float

    def energy(self, r):
        return self.Q * math.exp(-self.kappa * r) / r

    def derivative(self, r):
        e = self.Q * math.exp(-self.kappa * r) / r
        return -e * (self.kappa * r + 1.0) / r

    def kernel_args(self):
        from ._kernels import POT_SCREENED_COULOMB
        return POT_SCREENED_COULOMB, float(self.Q), float(self.kappa)


class CallablePotential(PotentialOfMeanForce):
    def __init__(self, energy: Callable[[float], float],
                 derivative: Callable[[float], float] | None = None):
        self._energy = energy
        self._derivative = derivative

    def energy(self, r):
        return float(self._energy(r))

    def derivative(self, r):
        if self._derivative is None:
            return super().derivative(r)
        return float(self._derivative(r))


def smoluchowski_rate(D: float, b: float) -> float:
    if not (D > 0 and b > 0):
        raise NonPositiveInput(f"need D > 0 and b > 0, got D={D}, b={b}")
    return 4.0 * math.pi * D * b


def adaptive_simpson(f, lo, hi, rel_tol=1e-10, abs_tol=0.0, max_depth=60, max_evals=2_000_000):
    """Adaptive Simpson with Richardson correction; raises on budget exhaustion."""
    fa, fm, fb = f(lo), f(0.5 * (lo + hi)), f(hi)
    whole = (hi - lo) / 6.0 * (fa + 4 * fm + fb)
    # first pass: a coarse estimate fixes the absolute target
    stack = [(lo, hi, fa, fm, fb, whole, 0)]
    total = 0.0
    evals = 3
    scale = abs(whole)
    while stack:
        a, b, fa, fm, fb, s, depth = stack.pop()
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        evals += 2
        left = (m - a) / 6.0 * (fa + 4 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4 * frm + fb)
        delta = left + right - s
        tol = max(abs_tol, rel_tol * scale) * (b - a) / (hi - lo)
        if abs(delta) <= 15.0 * tol:
            total += left + right + delta / 15.0
            continue
        if depth >= max_depth or evals > max_evals:
            raise QuadratureNonConvergence(
                f"adaptive Simpson did not reach tolerance on [{lo}, {hi}] "
                f"(depth {depth}, {evals} evaluations)")
        stack.append((m, b, fm, frm, fb, right, depth + 1))
        stack.append((a, m, fa, flm, fm, left, depth + 1))
    return total


def _check_decay(pmf: PotentialOfMeanForce, b: float):
    probe = [pmf.energy(b * 10.0 ** k) for k in range(2, 9)]
    if not all(math.isfinite(e) for e in probe):
        raise DivergentIntegral("potential is not finite at large separation")
    if abs(probe[-1]) > 1e-6 or abs(probe[-1]) > abs(probe[0]) > 0:
        raise DivergentIntegral(f"potential does not decay to 0 (E({b * 1e8:g}) = {probe[-1]:g})")


def rate_with_potential(D: float, b: float, pmf: PotentialOfMeanForce | None = None,
                        quad_tol: float = 1e-8) -> float:
    """4*pi / integral_b^inf exp(E(r)) / (r^2 D) dr.

    With u = 1/r the integral becomes integral_0^(1/b) exp(E(1/u)) / D du,
    which is finite on a closed interval (E(inf) = 0 gives 1/D at u = 0).
    """
    if not (D > 0 and b > 0):
        raise NonPositiveInput(f"need D > 0 and b > 0, got D={D}, b={b}")
    if pmf is None or pmf.is_zero:
        return smoluchowski_rate(D, b)
    if isinstance(pmf, ConstantShift):
        # constant energy: nothing to integrate numerically
        return smoluchowski_rate(D, b) * math.exp(-pmf.c)
    _check_decay(pmf, b)

    def integrand(u):
        if u == 0.0:
            return 1.0 / D
        e = pmf.energy(1.0 / u)
        if not math.isfinite(e):
            raise DivergentIntegral(f"potential not finite at r={1.0 / u:g}")
        return math.exp(e) / D

    integral = adaptive_simpson(integrand, 0.0, 1.0 / b, rel_tol=quad_tol / 10.0)
    return 4.0 * math.pi / integral


def beta_infinity(beta: float, k_b: float, k_q: float) -> float:
    """Correct the truncated-domain reaction probability to an unbounded domain."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must lie in [0, 1], got {beta}")
    if not (0 < k_b <= k_q):
        raise OmegaOutOfRange(f"need 0 < k_b <= k_q, got k_b={k_b}, k_q={k_q}")
    if beta == 0.0:
        return 0.0  # also covers omega == 1, where the formula is 0/0
    omega = k_b / k_q
    # 1 - (1 - beta)*omega, rearranged so omega -> 1 doesn't cancel
    return min(1.0, beta / ((1.0 - omega) + beta * omega))


def association_rate(k_b: float, beta_inf: float) -> float:
    return k_b * beta_inf


def hitting_probability(a: float, r0: float, q: float) -> float:
    """Probability that free diffusion from radius r0 reaches a before q."""
    if not (0 < a <= r0 <= q and a < q):
        raise OrderingViolation(f"need 0 < a <= r0 <= q, got a={a}, r0={r0}, q={q}")
    return (a / r0) * (q - r0) / (q - a)


def analytic_beta(a: float, b: float, q: float) -> float:
    if not (0 < a < b < q):
        raise OrderingViolation(f"need 0 < a < b < q, got a={a}, b={b}, q={q}")
    return hitting_probability(a, b, q)


def required_replications(beta_pilot: float, e: float, c: float) -> int:
    """Replications so that a Bernoulli mean lands within +-e with confidence c
    (normal approximation), never fewer than 2."""
    z = NormalDist().inv_cdf((1.0 + c) / 2.0)
    sigma = math.sqrt(max(beta_pilot * (1.0 - beta_pilot), 0.0))
    n = math.ceil((z * sigma / e) ** 2)
    return max(2, n)


def pilot_sizing_beta(reacted: int, n: int, c: float) -> float:
    """Conservative stand-in for beta when sizing from a small pilot.

    Plugging the raw pilot fraction into ``required_replications`` undersizes
    whenever the pilot happens to see few reactions (k=2 of 50 -> n~100).  We
    instead take the end of the pilot's Wilson score interval (same confidence
    c) that lies closest to 0.5, i.e. the largest Bernoulli variance still
    consistent with the pilot.
    """
    if n <= 0:
        raise EmptySample("pilot has no terminated replications")
    z = NormalDist().inv_cdf((1.0 + c) / 2.0)
    p = reacted / n
    z2n = z * z / n
    centre = (p + z2n / 2.0) / (1.0 + z2n)
    half = z * math.sqrt(p * (1.0 - p) / n + z2n / (4.0 * n)) / (1.0 + z2n)
    lo, hi = centre - half, centre + half
    if hi < 0.5:
        return hi
    if lo > 0.5:
        return lo
    return 0.5


@dataclass(frozen=True)
class BetaEstimate:
    beta_hat: float
    std_error: float
    n: int
    per_run_end_states: tuple

    @property
    def reacted(self) -> int:
        return sum(s is EndState.REACTED for s in self.per_run_end_states)

    def ci_half_width(self, c: float = 0.99) -> float:
        return NormalDist().inv_cdf((1.0 + c) / 2.0) * self.std_error


def estimate_beta(end_states: Sequence[EndState]) -> BetaEstimate:
    states = tuple(EndState(s) for s in end_states)
    if not states:
        raise EmptySample("cannot estimate beta from zero replications")
    n = len(states)
    hits = sum(s is EndState.REACTED for s in states)
    beta = hits / n
    return BetaEstimate(beta, math.sqrt(beta * (1.0 - beta) / n), n, states)


def pmf_to_dict(pmf) -> dict | None:
    if pmf is None or pmf.is_zero:
        return None
    if isinstance(pmf, ScreenedCoulomb):
        return {"kind": "screened_coulomb", "Q": pmf.Q, "kappa": pmf.kappa}
    if isinstance(pmf, ConstantShift):
        return {"kind": "constant", "c": pmf.c}
    raise TypeError(f"{type(pmf).__name__} has no dict form")


def pmf_from_dict(d: dict | None) -> PotentialOfMeanForce | None:
    """Inverse of :func:`pmf_to_dict`; ``None`` or ``{"kind": "none"}`` mean no potential."""
    if d is None:
        return None
    kind = str(d.get("kind", "")).lower()
    if kind in ("none", "zero"):
        return None
    if kind in ("screened_coulomb", "debye_huckel"):
        return ScreenedCoulomb(float(d["Q"]), float(d["kappa"]))
    if kind == "constant":
        return ConstantShift(float(d["c"]))
    raise ValueError(f"unknown potential kind {d.get('kind')!r}")
