"""
Welch's two-sample t-test on top of an in-repo regularized incomplete beta
function.
"""
from dataclasses import dataclass
import math

import numpy as np
from scipy.special import gammaln

from fusion_impute.helper_functions import ImputeError

BETACF_MAX_ITER = 10000
BETACF_EPS = 1e-15
BETACF_TINY = 1e-300


def _betacf(a, b, x):
    """
    Continued fraction of the incomplete beta function, evaluated with the
    modified Lentz method.
    """
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < BETACF_TINY:
        d = BETACF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, BETACF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < BETACF_TINY:
            d = BETACF_TINY
        c = 1.0 + aa / c
        if abs(c) < BETACF_TINY:
            c = BETACF_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < BETACF_TINY:
            d = BETACF_TINY
        c = 1.0 + aa / c
        if abs(c) < BETACF_TINY:
            c = BETACF_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < BETACF_EPS:
            return h
    raise ImputeError("The incomplete beta continued fraction did not converge for a={}, b={}, "
                      "x={}.".format(a, b, x))


def incomplete_beta(a, b, x):
    """
    Regularized incomplete beta function ``I_x(a, b)``.

    Parameters
    ----------
    a, b: float
        Positive shape parameters.
    x: float
        Point in [0, 1].

    Returns
    -------
    value: float

    Raises
    ------
    ValueError
        If ``a`` or ``b`` is not positive or ``x`` lies outside [0, 1].

    Examples
    --------
    >>> round(incomplete_beta(1.0, 1.0, 0.3), 12)
    0.3
    """
    if not (a > 0 and b > 0):
        raise ValueError("The shape parameters need to be positive, got a={}, b={}.".format(a, b))
    if not 0.0 <= x <= 1.0:
        raise ValueError("x needs to lie in [0, 1], got {}.".format(x))
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    log_front = (gammaln(a + b) - gammaln(a) - gammaln(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    # the fraction converges fast on this side of the mean
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_sf_two_sided(t, df):
    """``P(|T| >= |t|)`` for a Student t variable with `df` degrees of freedom."""
    if math.isinf(t):
        return 0.0
    return incomplete_beta(0.5 * df, 0.5, df / (df + t * t))


def t_cdf(t, df):
    """Cumulative distribution function of the Student t distribution."""
    tail = 0.5 * t_sf_two_sided(t, df)
    return 1.0 - tail if t > 0 else tail


@dataclass(frozen=True)
class WelchResult:
    statistic: float
    df: float
    p_value: float
    zero_variance: bool = False


def welch_ttest(a, b):
    """
    Two-sided Welch t-test of equal means for samples with unequal variances.

    The degrees of freedom follow the Welch-Satterthwaite approximation.
    If both samples have zero variance the statistic is undefined; the
    result is flagged and ``p_value`` is 1 for equal means and 0 otherwise.

    Parameters
    ----------
    a, b: array_like
        Samples with at least 2 values each.

    Returns
    -------
    result: WelchResult
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) < 2 or len(b) < 2:
        raise ValueError("Both samples need at least 2 values, got {} and {}.".format(
            len(a), len(b)))
    se_a = a.var(ddof=1) / len(a)
    se_b = b.var(ddof=1) / len(b)
    diff = float(a.mean() - b.mean())
    se = se_a + se_b
    if se == 0:
        return WelchResult(0.0 if diff == 0 else math.copysign(math.inf, diff), math.nan,
                           1.0 if diff == 0 else 0.0, zero_variance=True)
    statistic = diff / math.sqrt(se)
    df = se ** 2 / (se_a ** 2 / (len(a) - 1) + se_b ** 2 / (len(b) - 1))
    return WelchResult(statistic, df, t_sf_two_sided(statistic, df))
