"""Coincidence histograms and the estimators built on them.

The histogram is a plain count of inter-channel delays t1 - t0 on a
uniform bin grid centered at zero.  All figures of merit reduce to ratios
of integrated peak areas: the zero-delay peak area normalized by the mean
uncorrelated side peak gives g2(0) for an autocorrelation run, and
V = 1 - 2*A0 for a two-photon interference run.  Uncertainties are pure
Poisson counting statistics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import SetupParams

DEFAULT_SIDE_PEAKS = (-6, -5, -4, -3, -2, 2, 3, 4, 5, 6)


@dataclass(frozen=True, eq=False)
class CorrelationHistogram:
    """Coincidence counts versus inter-channel delay.

    Bins are uniform and symmetric about zero delay; the span must cover
    at least +/- 10 repetition periods so that side-peak normalization
    always has material to work with.
    """

    bin_width_ps: float
    delays_ps: np.ndarray
    counts: np.ndarray
    rep_period_ps: float

    def __post_init__(self):
        d = np.asarray(self.delays_ps, dtype=float)
        c = np.asarray(self.counts, dtype=np.int64)
        object.__setattr__(self, "delays_ps", d)
        object.__setattr__(self, "counts", c)
        if d.size != c.size or d.size < 3:
            raise ValueError("delays and counts must match and hold >= 3 bins")
        if d.size % 2 != 1 or abs(d[d.size // 2]) > 1e-9 * self.bin_width_ps:
            raise ValueError("delay grid must contain a bin centered at zero")
        steps = np.diff(d)
        if np.any(np.abs(steps - self.bin_width_ps) > 1e-9 * self.bin_width_ps):
            raise ValueError("delay grid must be uniform at the stated bin width")
        if np.any(c < 0):
            raise ValueError("counts must be non-negative")
        span = d[-1] + 0.5 * self.bin_width_ps
        if span < 10.0 * self.rep_period_ps * (1.0 - 1e-12):
            raise ValueError(
                f"histogram span +/-{span:.0f} ps must cover at least 10 repetition "
                f"periods ({10 * self.rep_period_ps:.0f} ps)"
            )

    @property
    def total_counts(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class PeakIntegral:
    """Integrated coincidences around one multiple of the repetition period."""

    peak_index: int
    area: int
    window_ps: float


@dataclass(frozen=True)
class G2Result:
    value: float
    std_err: float
    zero_area: int
    side_mean: float
    n_side_peaks: int


@dataclass(frozen=True)
class HomResult:
    value: float
    std_err: float
    zero_area: int
    side_mean: float
    n_side_peaks: int


@dataclass(frozen=True)
class CorrectedOverlap:
    value: float
    clamped: bool


@dataclass(frozen=True)
class BrightnessChain:
    fibered_rate_cps: float
    fibered_brightness: float
    first_lens_brightness: float


def _require_sorted(t: np.ndarray, name: str):
    if t.size > 1 and np.any(np.diff(t) < 0):
        raise ValueError(f"{name} must be sorted by time")


def build_histogram(
    clicks0: np.ndarray,
    clicks1: np.ndarray,
    bin_width_ps: float,
    max_delay_ps: float,
    rep_period_ps: float,
    block: int = 200_000,
) -> CorrelationHistogram:
    """Histogram all pairs (t1 - t0) with |t1 - t0| <= max_delay.

    A two-pointer sweep (binary-searched window bounds per click) keeps the
    cost linear in clicks plus emitted pairs rather than all-pairs
    quadratic.  ``block`` limits peak memory when streams are long.
    """
    if bin_width_ps <= 0:
        raise ValueError(f"bin_width_ps must be > 0, got {bin_width_ps}")
    t0 = np.asarray(clicks0, dtype=float)
    t1 = np.asarray(clicks1, dtype=float)
    _require_sorted(t0, "clicks0")
    _require_sorted(t1, "clicks1")

    half = int(round(max_delay_ps / bin_width_ps))
    edge = (half + 0.5) * bin_width_ps
    counts = np.zeros(2 * half + 1, dtype=np.int64)
    for start in range(0, t0.size, block):
        ref = t0[start : start + block]
        lo = np.searchsorted(t1, ref - edge, side="left")
        hi = np.searchsorted(t1, ref + edge, side="right")
        m = hi - lo
        total = int(m.sum())
        if total == 0:
            continue
        # Flat index trick: for each reference click, take its window
        # [lo, hi) of partner clicks in one vectorized gather.
        offsets = np.repeat(hi - np.cumsum(m), m) + np.arange(total)
        deltas = t1[offsets] - np.repeat(ref, m)
        idx = np.rint(deltas / bin_width_ps).astype(np.int64) + half
        np.add.at(counts, np.clip(idx, 0, counts.size - 1), 1)
    delays = (np.arange(2 * half + 1) - half) * bin_width_ps
    return CorrelationHistogram(bin_width_ps, delays, counts, rep_period_ps)


def integrate_peaks(
    hist: CorrelationHistogram,
    window_ps: float,
    peak_indices,
) -> list[PeakIntegral]:
    """Sum counts within +/- window of each k * rep_period delay."""
    if window_ps > hist.rep_period_ps / 2.0:
        raise ValueError(
            f"window {window_ps} ps exceeds half a repetition period "
            f"({hist.rep_period_ps / 2.0:.1f} ps); peaks would overlap"
        )
    span = hist.delays_ps[-1] + 0.5 * hist.bin_width_ps
    out = []
    tol = 1e-9 * hist.bin_width_ps
    for k in sorted(peak_indices):
        center = k * hist.rep_period_ps
        if abs(center) + window_ps > span + tol:
            raise ValueError(f"peak {k} at {center:.0f} ps lies outside the histogram span")
        mask = np.abs(hist.delays_ps - center) <= window_ps + tol
        out.append(PeakIntegral(peak_index=k, area=int(hist.counts[mask].sum()), window_ps=window_ps))
    return out


def _peak_ratio(hist, window_ps, side_peaks):
    side = tuple(side_peaks)
    if 0 in side:
        raise ValueError("side peaks must exclude the zero-delay peak")
    if not side:
        raise ValueError("need at least one side peak for normalization")
    integrals = integrate_peaks(hist, window_ps, (0, *side))
    areas = {p.peak_index: p.area for p in integrals}
    a0 = areas[0]
    side_areas = np.array([areas[k] for k in side], dtype=float)
    s_mean = float(side_areas.mean())
    if s_mean <= 0:
        raise ValueError("side peaks are empty; normalization undefined")
    n = len(side)
    ratio = a0 / s_mean
    err = math.hypot(
        math.sqrt(a0) / s_mean,
        a0 * math.sqrt(side_areas.sum()) / (n * s_mean**2),
    )
    return ratio, err, a0, s_mean, n


def g2_zero(
    hist: CorrelationHistogram,
    window_ps: float = 2000.0,
    side_peaks=DEFAULT_SIDE_PEAKS,
) -> G2Result:
    """Zero-delay autocorrelation normalized by the mean side peak."""
    ratio, err, a0, s_mean, n = _peak_ratio(hist, window_ps, side_peaks)
    return G2Result(value=ratio, std_err=err, zero_area=a0, side_mean=s_mean, n_side_peaks=n)


def hom_visibility(
    hist: CorrelationHistogram,
    window_ps: float = 2000.0,
    side_peaks=DEFAULT_SIDE_PEAKS,
) -> HomResult:
    """Raw two-photon interference visibility V = 1 - 2 * A0.

    The |k| = 1 side peaks are partially suppressed by the interferometer
    pairing and are excluded from the default normalization set.
    """
    ratio, err, a0, s_mean, n = _peak_ratio(hist, window_ps, side_peaks)
    return HomResult(
        value=1.0 - 2.0 * ratio,
        std_err=2.0 * err,
        zero_area=a0,
        side_mean=s_mean,
        n_side_peaks=n,
    )


def corrected_overlap(v_raw: float, g2: float) -> CorrectedOverlap:
    """Mean wavepacket overlap corrected for multiphoton noise.

    Uses the first-order correction M = (V_raw + g2) / (1 - g2), clamped
    to 1 with a flag when noise pushes the estimate above unity.
    """
    if not 0.0 <= g2 < 1.0:
        raise ValueError(f"g2 must lie in [0, 1), got {g2}")
    if v_raw > 1.0:
        raise ValueError(f"v_raw must be <= 1, got {v_raw}")
    m = (v_raw + g2) / (1.0 - g2)
    if m > 1.0:
        return CorrectedOverlap(value=1.0, clamped=True)
    return CorrectedOverlap(value=m, clamped=False)


def brightness_chain(detected_rate_cps: float, setup: SetupParams) -> BrightnessChain:
    """Propagate a detected count rate back through the efficiency chain.

    detected -> fibered (divide by detector efficiency) -> per-pulse
    brightness at the fiber (divide by repetition rate) -> first-lens
    brightness (divide by setup transmission).
    """
    if detected_rate_cps < 0:
        raise ValueError(f"detected rate must be >= 0, got {detected_rate_cps}")
    if not 0.0 < setup.eta_det <= 1.0 or not 0.0 < setup.eta_setup <= 1.0:
        raise ValueError("efficiencies must lie in (0, 1]")
    fibered_rate = detected_rate_cps / setup.eta_det
    fibered_b = fibered_rate / (setup.rep_rate_mhz * 1e6)
    first_lens_b = fibered_b / setup.eta_setup
    return BrightnessChain(
        fibered_rate_cps=fibered_rate,
        fibered_brightness=fibered_b,
        first_lens_brightness=first_lens_b,
    )


def write_histogram(hist: CorrelationHistogram, path, meta: dict | None = None):
    """Write a histogram as delimited text: bin_center_ps,counts."""
    lines = []
    head = f"# bin_width_ps={hist.bin_width_ps!r} rep_period_ps={hist.rep_period_ps!r}"
    if meta:
        head += " " + " ".join(f"{k}={v}" for k, v in meta.items())
    lines.append(head)
    lines.append("bin_center_ps,counts")
    for d, c in zip(hist.delays_ps, hist.counts):
        lines.append(f"{float(d)!r},{int(c)}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def read_histogram(path) -> CorrelationHistogram:
    bin_width = rep_period = None
    delays, counts = [], []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for tok in line[1:].split():
                    if tok.startswith("bin_width_ps="):
                        bin_width = float(tok.split("=", 1)[1])
                    elif tok.startswith("rep_period_ps="):
                        rep_period = float(tok.split("=", 1)[1])
                continue
            if line.startswith("bin_center_ps"):
                continue
            d, c = line.split(",")
            delays.append(float(d))
            counts.append(int(c))
    if bin_width is None or rep_period is None:
        raise ValueError(f"{path}: missing bin_width_ps/rep_period_ps header")
    return CorrelationHistogram(bin_width, np.array(delays), np.array(counts), rep_period)
