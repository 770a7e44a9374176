"""Standard-normal quantiles and CDF without a stats-library dependency.

Backed by the stdlib's rational-approximation inverse CDF; the quantiles for
the common interval levels are pinned to their conventional 7-digit values so
interval bounds are stable across platforms.
"""

from statistics import NormalDist

_STD = NormalDist()

# 1 - alpha/2 quantiles for the usual interval levels
_PINNED = {
    0.10: 1.644854,
    0.05: 1.959964,
    0.01: 2.575829,
}


def two_sided_z(alpha: float) -> float:
    """z with P(|Z| <= z) = 1 - alpha."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    for a, z in _PINNED.items():
        if abs(alpha - a) < 1e-12:
            return z
    return _STD.inv_cdf(1.0 - alpha / 2.0)


def norm_ppf(p: float) -> float:
    return _STD.inv_cdf(p)


def norm_cdf(x: float) -> float:
    return _STD.cdf(x)
