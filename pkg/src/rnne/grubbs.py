"""Iterative max-Grubbs outlier screening and its Student-t critical value.

The t quantile is computed from scratch: bisection on the t CDF expressed
through the regularized incomplete beta function (continued-fraction
evaluation), converged to 1e-10.
"""

import logging
import math

import numpy as np

from .exceptions import ValidationError

log = logging.getLogger(__name__)

_MAX_CF_ITERS = 300
_CF_EPS = 1e-15
_TINY = 1e-300


def _beta_cf(a, b, x):
    """Continued fraction for the incomplete beta function (Lentz's method)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_CF_ITERS + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise ArithmeticError(f"incomplete beta failed to converge for a={a}, b={b}, x={x}")


def regularized_incomplete_beta(a, b, x):
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cf(a, b, x) / a
    return 1.0 - front * _beta_cf(b, a, 1.0 - x) / b


def student_t_sf(t, df):
    """Upper tail probability P(T > t) for Student t with df degrees of freedom."""
    if df <= 0:
        raise ValidationError("degrees of freedom must be positive")
    x = df / (df + t * t)
    tail = 0.5 * regularized_incomplete_beta(0.5 * df, 0.5, x)
    return tail if t >= 0 else 1.0 - tail


def student_t_upper_quantile(q, df, tol=1e-10):
    """Value t with P(T > t) = q, for q in (0, 0.5], by bisection on the CDF."""
    if not 0.0 < q <= 0.5:
        raise ValidationError("upper-tail probability must be in (0, 0.5]")
    lo, hi = 0.0, 1.0
    while student_t_sf(hi, df) > q:
        hi *= 2.0
        if hi > 1e12:
            raise ArithmeticError("t quantile bracket expansion failed")
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if student_t_sf(mid, df) > q:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def grubbs_critical_value(m, alpha):
    """Critical value for the max-Grubbs statistic at sample size m.

    Uses t at the upper alpha/(2m) tail with m-2 degrees of freedom, i.e.
    G_crit(8, 0.05) = 2.1266.
    """
    if m < 3:
        raise ValidationError("Grubbs critical value needs at least 3 samples")
    t = student_t_upper_quantile(alpha / (2.0 * m), m - 2)
    return (m - 1) / math.sqrt(m) * math.sqrt(t * t / (m - 2 + t * t))


def grubbs_outliers(scores, exclude=None, alpha=0.05):
    """Indices whose score is flagged by the iterative one-sided max test.

    Repeatedly tests the largest remaining score against the critical value,
    removing it while the test rejects.  Excluded slots never participate.
    Fewer than 3 usable entries or zero variance yields an empty set.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1:
        raise ValidationError("scores must be a 1-D vector")
    if not 0.0 < alpha < 1.0:
        raise ValidationError(f"significance must be in (0, 1), got {alpha}")
    if exclude is None:
        usable = list(range(scores.size))
    else:
        exclude = np.asarray(exclude, dtype=bool)
        if exclude.shape != scores.shape:
            raise ValidationError("exclusion mask shape mismatch")
        usable = np.nonzero(~exclude)[0].tolist()
    if len(usable) < 3:
        log.warning(
            "Grubbs test skipped: only %d usable entries (need 3)", len(usable)
        )
        return set()

    outliers = set()
    remaining = usable
    while len(remaining) >= 3:
        vals = scores[remaining]
        mean = vals.mean()
        sd = vals.std(ddof=1)
        if sd == 0.0:
            break
        pos = int(np.argmax(vals))
        g = (vals[pos] - mean) / sd
        if g <= grubbs_critical_value(len(remaining), alpha):
            break
        outliers.add(remaining[pos])
        remaining = remaining[:pos] + remaining[pos + 1 :]
    return outliers
