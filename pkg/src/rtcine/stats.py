"""Paired-agreement statistics: Bland-Altman and Wilcoxon signed-rank."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

LOA_Z = 1.96
EXACT_MAX_N = 25


@dataclass(frozen=True)
class AgreementStats:
    bias: float
    sd_diff: float
    loa_low: float
    loa_high: float
    p_value: float | None = None
    n: int = 0

    def to_dict(self):
        return {"n": self.n, "bias": self.bias, "sd_diff": self.sd_diff,
                "loa_low": self.loa_low, "loa_high": self.loa_high, "p_value": self.p_value}


def _diffs(pairs):
    arr = np.asarray(pairs, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("pairs must have shape (n, 2)")
    return arr[:, 0] - arr[:, 1]


def bland_altman(pairs, with_p=False):
    """Bias of ``x - y`` with ``bias +/- 1.96 * SD`` limits (sample SD)."""
    d = _diffs(pairs)
    if d.size < 2:
        raise ValueError("need at least 2 pairs")
    bias = float(d.mean())
    sd = float(d.std(ddof=1))
    p = wilcoxon_signed_rank(pairs) if with_p else None
    return AgreementStats(bias, sd, bias - LOA_Z * sd, bias + LOA_Z * sd, p, int(d.size))


def signed_rank_null(doubled_ranks):
    """Counts of each attainable (doubled) positive-rank sum over all 2^n signs."""
    total = int(sum(doubled_ranks))
    counts = np.zeros(total + 1, dtype=np.float64)
    counts[0] = 1.0
    for r in doubled_ranks:
        counts[r:] = counts[r:] + counts[:-r]
    return counts


def wilcoxon_signed_rank(pairs, exact_max_n=EXACT_MAX_N):
    """Two-sided p-value for paired differences ``x - y``.

    Zero differences are dropped. Up to ``exact_max_n`` remaining pairs the
    null distribution is enumerated exactly (ties use average ranks);
    beyond that a normal approximation with tie correction is used, without
    continuity correction. All-zero differences give p = 1.
    """
    d = _diffs(pairs)
    d = d[d != 0]
    n = d.size
    if n == 0:
        return 1.0
    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    if n <= exact_max_n:
        doubled = np.rint(2 * ranks).astype(int)
        counts = signed_rank_null(doubled)
        w2 = int(round(2 * w_plus))
        total = counts.sum()
        lower = counts[: w2 + 1].sum() / total
        upper = counts[w2:].sum() / total
        return float(min(1.0, 2.0 * min(lower, upper)))
    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(np.abs(d), return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(tie_counts ** 3 - tie_counts)) / 48.0
    z = (w_plus - mean) / math.sqrt(var)
    return float(min(1.0, math.erfc(abs(z) / math.sqrt(2.0))))
