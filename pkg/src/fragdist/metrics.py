"""Total variation distance and empirical laws."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dist_core import PmfVector
from .errors import InsufficientData, InvalidParameter

# combined tail mass above which a TV value is flagged as imprecise
TAIL_WARNING = 1e-9


@dataclass(frozen=True)
class TvReport:
    """TV distance with a certificate set ``A`` maximising ``Q1(A) - Q2(A)``.

    ``tail_in_set`` records whether the unresolved tail atom belongs to the
    maximiser; ``tail_uncertainty`` is half the combined tail mass.
    """

    tv: float
    achieving_set: frozenset = field(default_factory=frozenset)
    tail_in_set: bool = False
    tail_uncertainty: float = 0.0
    precision_warning: bool = False

    def to_dict(self) -> dict:
        return {
            "tv": self.tv,
            "achieving_set": sorted(int(k) for k in self.achieving_set),
            "tail_in_set": self.tail_in_set,
            "tail_uncertainty": self.tail_uncertainty,
            "precision_warning": self.precision_warning,
        }


def tv_distance(a: PmfVector, b: PmfVector) -> TvReport:
    """Half-L1 distance, each tail treated as one extra atom."""
    lo = min(a.offset, b.offset)
    hi = max(a.end, b.end)
    da, db = a.dense(lo, hi), b.dense(lo, hi)
    diff = da - db
    tail_diff = a.tail_mass - b.tail_mass
    tv = 0.5 * (float(np.abs(diff).sum()) + abs(tail_diff))
    tv = min(max(tv, 0.0), 1.0)
    achieving = frozenset(int(k) for k in np.arange(lo, hi)[diff > 0])
    combined_tail = a.tail_mass + b.tail_mass
    return TvReport(
        tv=tv,
        achieving_set=achieving,
        tail_in_set=tail_diff > 0,
        tail_uncertainty=0.5 * combined_tail,
        precision_warning=combined_tail > TAIL_WARNING,
    )


def set_discrepancy(a: PmfVector, b: PmfVector, A) -> float:
    """``|Q1(A) - Q2(A)|`` over stored support points."""
    ks = [int(k) for k in A]
    return abs(sum(a.prob(k) for k in ks) - sum(b.prob(k) for k in ks))


def empirical_pmf(counts) -> PmfVector:
    counts = np.asarray(getattr(counts, "counts", counts), dtype=np.int64)
    if counts.size == 0:
        raise InvalidParameter("empirical law of an empty batch")
    if np.any(counts < 0):
        raise InvalidParameter("counts must be non-negative")
    lo = int(counts.min())
    freq = np.bincount(counts - lo).astype(np.float64) / counts.size
    return PmfVector(lo, freq, 0.0)


def conditional_empirical(counts, m: int, min_count: int = 100) -> PmfVector:
    """Empirical law of the draws that are ``>= m``."""
    counts = np.asarray(getattr(counts, "counts", counts), dtype=np.int64)
    kept = counts[counts >= m]
    if kept.size < min_count:
        raise InsufficientData(f"only {kept.size} draws >= {m}; need {min_count}")
    return empirical_pmf(kept)
