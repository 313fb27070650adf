import math
from statistics import NormalDist

Z95 = NormalDist().inv_cdf(0.975)


def mean_ci(values, z=Z95):
    """Sample mean and normal-approximation half-width (None for fewer than 2 values).

    Sums use ``math.fsum`` so aggregates do not depend on the order of the trials.
    """
    vals = [float(v) for v in values]
    n = len(vals)
    if n == 0:
        raise ValueError("no values to aggregate")
    mean = math.fsum(vals) / n
    if n < 2:
        return mean, None
    var = math.fsum((v - mean) ** 2 for v in vals) / (n - 1)
    return mean, z * math.sqrt(var / n)
