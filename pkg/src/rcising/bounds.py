"""Closed-form constants and inequalities of the entanglement bound.

Inputs ``gamma`` (decay rate) and ``C`` (prefactor) are measured or
assumed; nothing here derives them from ``(lam, delta)``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

LN2 = math.log(2.0)
K_FLOOR = 2
TAIL_TOL = 1e-9


def constant_A(lam: float, delta: float) -> float:
    """``(delta / (2 (2 lam + delta)))**2``; exact for rational inputs."""
    if not (lam > 0 and delta > 0):
        raise ValueError("lam and delta must be positive")
    return (delta / (2 * (2 * lam + delta))) ** 2


def disorder_product(x: int, k: int, lambda_seq, delta_seq) -> float:
    """``prod_{i=1..k} delta_{x+i} / (2 (delta_{x+i} + lam_{x+i,x+i-1} + lam_{x+i,x+i+1}))``.

    ``delta_seq[y]`` is the field at site ``y`` and ``lambda_seq[y]`` the
    coupling of the bond ``(y, y+1)``; both may be dicts or sequences.
    """
    out = 1.0
    for i in range(1, k + 1):
        y = x + i
        if y - 1 < 0 and not isinstance(lambda_seq, dict):
            raise ValueError(f"missing coupling for bond ({y - 1}, {y})")
        try:
            d, left, right = delta_seq[y], lambda_seq[y - 1], lambda_seq[y]
        except (KeyError, IndexError) as exc:
            raise ValueError(f"missing intensity near site {y}") from exc
        out *= d / (2 * (d + left + right))
    return out


@dataclass(frozen=True)
class DisorderCheck:
    holds: bool
    worst_ratio: float
    worst_site: int | None


def check_disorder_condition(lambda_seq: Sequence[float], delta_seq: Sequence[float], lam: float, delta: float) -> DisorderCheck:
    """Check ``lam_{x,y} / delta_x <= lam / delta`` for ``y = x +- 1``.

    ``delta_seq[x]`` for sites ``0..n-1``; ``lambda_seq[x]`` couples ``x`` and ``x+1``.
    """
    theta = lam / delta
    worst, site = -math.inf, None
    n = len(delta_seq)
    for x in range(n):
        for b in (x - 1, x):
            if 0 <= b < len(lambda_seq):
                r = lambda_seq[b] / delta_seq[x]
                if r > worst:
                    worst, site = r, x
    if site is None:
        return DisorderCheck(True, 0.0, None)
    return DisorderCheck(worst <= theta, worst, site)


def r_k(C1: float, gamma: float, K: float) -> float:
    """``C1 exp(-gamma K / 2)``."""
    return C1 * math.exp(-0.5 * gamma * K)


def lemma1_envelope(A: float, K: int, R_K: float) -> tuple[float, float]:
    """``(A**(2K) (1 - R_K), A**(-2K) (1 + R_K))``, valid for ``R_K <= 1/2``."""
    if R_K > 0.5:
        raise ValueError("envelope needs R_K <= 1/2")
    return A ** (2 * K) * (1 - R_K), A ** (-2 * K) * (1 + R_K)


def choose_K(C: float, gamma: float) -> int:
    """Smallest integer ``K >= 2`` with ``C exp(-gamma K) <= 1``."""
    if not (C > 0 and gamma > 0):
        raise ValueError("C and gamma must be positive")
    K = max(K_FLOOR, math.ceil(math.log(C) / gamma))
    # guard the ceil against rounding on either side
    while K > K_FLOOR and C * math.exp(-gamma * (K - 1)) <= 1:
        K -= 1
    while C * math.exp(-gamma * K) > 1:
        K += 1
    return K


def derived_rates(gamma: float) -> dict[str, float]:
    """Fractions of the connectivity decay rate that enter the separate estimates."""
    return {
        "density_difference": gamma / 3,
        "boundary_mixing": 2 * gamma / 7,
        "ratio_mixing": gamma / 2,
    }


def _tail_term_coeffs(xi: float, c: float, order: int) -> list[tuple[float, float]]:
    # f(x) = (c/ln2) x^-xi (xi ln x - ln c); f^(j)(x) = (c/ln2) x^(-xi-j) (A_j ln x + B_j)
    A, B = xi, -math.log(c)
    out = [(A, B)]
    for j in range(order):
        p = xi + j
        A, B = -p * A, -p * B + A
        out.append((A, B))
    return out


def tail_sum(c: float, xi: float, nu: int, tol: float = TAIL_TOL) -> tuple[float, float]:
    """``-sum_{j > nu} (c / j**xi) log2(c / j**xi)`` and a bound on its truncation error.

    Sums terms explicitly below a cutoff ``J`` and adds the Euler-Maclaurin
    tail ``int_J^inf f + f(J)/2 - f'(J)/12 + f'''(J)/720``.  Once ``f''''``
    keeps one sign beyond ``J`` the remainder is at most
    ``2 zeta(4) / (2 pi)**4 |f'''(J)|``; ``J`` doubles until that is below ``tol``.
    """
    if xi <= 1:
        raise ValueError("series diverges for xi <= 1")
    pref = c / LN2
    coeffs = _tail_term_coeffs(xi, c, 4)

    def deriv(j, x):
        A, B = coeffs[j]
        return pref * x ** (-xi - j) * (A * math.log(x) + B)

    def integral(x):
        # int_x^inf t^-xi (xi ln t - ln c) dt
        e = xi - 1
        return pref * x ** (-e) * (xi * (math.log(x) / e + 1 / e**2) - math.log(c) / e)

    # f'''' keeps one sign once A_4 ln x + B_4 does
    A4, B4 = coeffs[4]
    sign_start = math.exp(min(-B4 / A4, 700.0))
    J = max(nu + 1, int(math.ceil(sign_start)) + 1, 64)
    zeta4 = math.pi**4 / 90
    while True:
        remainder = 2 * zeta4 / (2 * math.pi) ** 4 * abs(deriv(3, J))
        if remainder < tol:
            break
        J *= 2
    head = 0.0
    chunk = 1 << 22
    for start in range(nu + 1, J, chunk):
        j = np.arange(start, min(start + chunk, J), dtype=np.float64)
        head += float(pref * np.sum(j**-xi * (xi * np.log(j) - math.log(c))))
    tail = integral(J) + deriv(0, J) / 2 - deriv(1, J) / 12 + deriv(3, J) / 720
    return head + tail, remainder


@dataclass(frozen=True)
class EntropyBound:
    K: int
    xi: float
    c: float
    nu: int
    c1: float
    bound: float
    tail_error: float

    def as_dict(self) -> dict:
        return asdict(self)


def entropy_bound(C: float, gamma: float, tol: float = TAIL_TOL) -> EntropyBound:
    """Uniform entropy bound ``2(K+2) + c1`` from an eigenvalue tail ``c / j**xi``.

    ``K = choose_K(C, gamma)``, ``xi = gamma / (2 ln 2)``,
    ``c = e^{gamma(K+1)} / (1 - e^{-gamma})``, ``nu = 2**(2(K+2))`` and
    ``c1`` is the tail sum beyond ``nu``.  Requires ``gamma > 2 ln 2``.
    """
    if not gamma > 2 * LN2:
        raise ValueError("entropy bound needs gamma > 2 ln 2")
    K = choose_K(C, gamma)
    xi = gamma / (2 * LN2)
    c = math.exp(gamma * (K + 1)) / (1 - math.exp(-gamma))
    nu = 2 ** (2 * (K + 2))
    c1, err = tail_sum(c, xi, nu, tol)
    return EntropyBound(K, xi, c, nu, c1, 2 * (K + 2) + c1, err)


def bounds_report(lam: float, delta: float, gamma: float, C: float, K: int | None = None, C1: float = 1.0) -> dict:
    """Every derived constant for ``(lam, delta, gamma, C)``, as a plain dict."""
    out: dict = {
        "lambda": lam,
        "delta": delta,
        "theta": lam / delta,
        "gamma": gamma,
        "C": C,
        "A": constant_A(lam, delta),
        "sqrt_A": math.sqrt(constant_A(lam, delta)),
        "K": choose_K(C, gamma),
        "derived_rates": derived_rates(gamma),
    }
    Kr = K if K is not None else out["K"]
    out["R_K"] = r_k(C1, gamma, Kr)
    if out["R_K"] <= 0.5:
        lo, hi = lemma1_envelope(out["A"], Kr, out["R_K"])
        out["lemma1_envelope"] = [lo, hi]
    if gamma > 2 * LN2:
        out["entropy_bound"] = entropy_bound(C, gamma).as_dict()
    else:
        out["entropy_bound"] = None
    return out
