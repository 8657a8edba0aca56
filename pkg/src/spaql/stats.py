"""Confidence intervals, Welch's t-test and the CartPole solved criterion.

Student-t tails are computed from the regularized incomplete beta function:
for t with v degrees of freedom, P(|T| > t) = I_{v/(v+t^2)}(v/2, 1/2).
"""
from __future__ import annotations

import math
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import betainc, betaincinv

SOLVED_THRESHOLD = 195.0
SOLVED_TRIALS = 100


def t_two_sided_p(t: float, dof: float) -> float:
    if math.isinf(t):
        return 0.0
    return float(betainc(dof / 2, 0.5, dof / (dof + t * t)))


def t_critical(p: float, dof: float) -> float:
    """Quantile of Student's t for upper-tail probability 1 - p (p > 0.5)."""
    x = float(betaincinv(dof / 2, 0.5, 2 * (1 - p)))
    return math.sqrt(dof * (1 - x) / x)


def ci95(samples: Sequence[float]) -> tuple[float, float]:
    x = np.asarray(samples, dtype=float)
    n = len(x)
    if n < 2:
        raise ValueError("a confidence interval needs at least two samples")
    m = float(x.mean())
    half = t_critical(0.975, n - 1) * float(x.std(ddof=1)) / math.sqrt(n)
    return m - half, m + half


class WelchResult(NamedTuple):
    t: float
    dof: float
    p: float


def welch_test(a: Sequence[float], b: Sequence[float], sided: str = "two") -> WelchResult:
    """Welch's unequal-variance t-test.

    ``sided="one"`` tests the alternative mean(a) > mean(b).
    """
    if sided not in ("two", "one"):
        raise ValueError("sided must be 'two' or 'one'")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = len(a), len(b)
    if na < 2 or nb < 2:
        return WelchResult(0.0, float(max(na + nb - 2, 0)), 1.0)
    ma, mb = float(a.mean()), float(b.mean())
    va, vb = float(a.var(ddof=1)) / na, float(b.var(ddof=1)) / nb
    se2 = va + vb
    if se2 == 0.0:
        if ma == mb:
            return WelchResult(0.0, float(na + nb - 2), 1.0)
        t = math.copysign(math.inf, ma - mb)
        p = 0.0 if (sided == "two" or t > 0) else 1.0
        return WelchResult(t, float(na + nb - 2), p)
    t = (ma - mb) / math.sqrt(se2)
    dof = se2**2 / (va**2 / (na - 1) + vb**2 / (nb - 1))
    p2 = t_two_sided_p(t, dof)
    if sided == "two":
        return WelchResult(t, dof, p2)
    return WelchResult(t, dof, p2 / 2 if t > 0 else 1 - p2 / 2)


def solved_check(returns: Sequence[float]) -> bool:
    """True when the mean of exactly 100 evaluation returns reaches 195."""
    if len(returns) != SOLVED_TRIALS:
        raise ValueError(f"the solved criterion needs exactly {SOLVED_TRIALS} returns")
    return float(np.mean(returns)) >= SOLVED_THRESHOLD
