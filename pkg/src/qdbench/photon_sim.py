"""Monte Carlo generation of emission events and detector click streams.

Simulation is organized as two stages.  ``simulate_pulse_train`` draws the
per-pulse emission physics (first photon, re-excitation, laser leakage)
into an :class:`EventBatch`.  The detector-geometry functions
``hbt_streams`` and ``hom_streams`` then turn events into two time-sorted
click streams, applying efficiency thinning, 50/50 routing, Gaussian
timing jitter and dark counts.

Reproducibility: every random decision derives from an :class:`RngSpec`
(seed, stream_id).  Pulse ranges are processed in fixed-size chunks, each
chunk seeded independently from (seed, stream_id, chunk_index), so the
generated events are bit-identical no matter how chunks are distributed
over worker threads.
"""

from __future__ import annotations

import enum
import functools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dynamics import FWHM_TO_SIGMA, exciton_cross_intensity
from .model import (
    ExcitonParams,
    SetupParams,
    SourceParams,
    TransitionKind,
    fss_period,
    validate_setup,
    validate_source,
)

#: Pulses per RNG chunk.  Fixed: changing it changes every simulated stream.
CHUNK_PULSES = 1 << 16


class UnsamplableEmissionError(ValueError):
    """The configured source has identically zero cross-polarized emission."""


class Origin(enum.IntEnum):
    QD_FIRST = 0
    QD_REEXCITE = 1
    LASER = 2
    DARK = 3


@dataclass(frozen=True)
class PhotonEvent:
    """One emission event, time relative to its own excitation pulse."""

    pulse_index: int
    emit_time_ps: float
    origin: Origin


@dataclass(frozen=True, eq=False)
class EventBatch:
    """Column-oriented list of photon events, sorted by pulse index."""

    pulse_index: np.ndarray
    emit_time_ps: np.ndarray
    origin: np.ndarray
    n_pulses: int

    def __len__(self) -> int:
        return int(self.pulse_index.size)

    def __getitem__(self, i: int) -> PhotonEvent:
        return PhotonEvent(
            int(self.pulse_index[i]),
            float(self.emit_time_ps[i]),
            Origin(int(self.origin[i])),
        )

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def qd_mask(self) -> np.ndarray:
        return self.origin <= Origin.QD_REEXCITE

    def per_pulse_qd_counts(self) -> np.ndarray:
        return np.bincount(self.pulse_index[self.qd_mask()], minlength=self.n_pulses)


@dataclass(frozen=True)
class RngSpec:
    """Root of a reproducible random stream family.

    (seed, stream_id) fully determine every derived generator; extra key
    integers (for chunks or sub-purposes) extend the spawn key.
    """

    seed: int
    stream_id: int = 0

    def generator(self, *key: int) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id, *key))
        return np.random.Generator(np.random.PCG64(ss))


@functools.lru_cache(maxsize=64)
def _exciton_inverse_cdf_table(tau_ps: float, delta_fss_uev: float, theta_rad: float):
    """Tabulated inverse CDF of the cross-polarized emission density.

    The table spans 14 lifetimes (truncated mass ~ 1e-6) with a step fine
    enough to resolve both the decay and the beat oscillation.
    """
    p = ExcitonParams(tau_ps, delta_fss_uev, theta_rad)
    if delta_fss_uev <= 0 or math.sin(2.0 * theta_rad) == 0.0:
        raise UnsamplableEmissionError(
            "exciton emits no cross-polarized light for delta_fss = 0 or "
            "theta in {0, pi/2}; nothing to sample"
        )
    step = min(tau_ps, fss_period(delta_fss_uev)) / 256.0
    t = np.arange(0.0, 14.0 * tau_ps + step, step)
    pdf = exciton_cross_intensity(t, p)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (pdf[1:] + pdf[:-1]) * step)])
    total = cdf[-1]
    if total <= 0.0:
        raise UnsamplableEmissionError("emission density integrates to zero")
    return cdf / total, t


def sample_emission_time(rng: np.random.Generator, source: SourceParams, size=None):
    """Draw emission times (ps) from the source's intensity profile.

    Trion times are closed-form exponential draws; exciton times come
    from inverse-CDF interpolation on a tabulated grid.
    """
    if source.kind is TransitionKind.TRION:
        return source.trion.tau_ps * rng.standard_exponential(size=size)
    x = source.exciton
    cdf, t = _exciton_inverse_cdf_table(x.tau_ps, x.delta_fss_uev, x.theta_rad)
    u = rng.random(size)
    return np.interp(u, cdf, t)


def _reexcite_conditional_prob(source: SourceParams) -> float:
    """Conditional re-excitation probability given a first photon.

    Chosen so the unconditional two-photon probability per pulse equals
    source.p_two_photon.
    """
    b = source.brightness_first_lens
    if source.p_two_photon == 0.0:
        return 0.0
    return source.p_two_photon / b


def _simulate_chunk(rng: RngSpec, source, setup, lo: int, hi: int, chunk_key: int):
    g = rng.generator(chunk_key)
    n = hi - lo
    b = source.brightness_first_lens
    p2c = _reexcite_conditional_prob(source)
    sigma_pulse = setup.pulse_fwhm_ps * FWHM_TO_SIGMA

    first_mask = g.random(n) < b
    k = int(first_mask.sum())
    first_times = np.asarray(sample_emission_time(g, source, size=k), dtype=float)

    re_sel = g.random(k) < p2c
    m = int(re_sel.sum())
    re_times = first_times[re_sel] + np.asarray(sample_emission_time(g, source, size=m), dtype=float)

    leak_mask = g.random(n) < setup.laser_leak_per_pulse
    j = int(leak_mask.sum())
    leak_times = g.normal(0.0, sigma_pulse, size=j)

    pulses_local = np.arange(lo, hi, dtype=np.int64)
    first_pulses = pulses_local[first_mask]
    parts_pulse = [first_pulses, first_pulses[re_sel], pulses_local[leak_mask]]
    parts_time = [first_times, re_times, leak_times]
    parts_origin = [
        np.full(k, Origin.QD_FIRST, dtype=np.int8),
        np.full(m, Origin.QD_REEXCITE, dtype=np.int8),
        np.full(j, Origin.LASER, dtype=np.int8),
    ]
    pulse = np.concatenate(parts_pulse)
    emit = np.concatenate(parts_time)
    origin = np.concatenate(parts_origin)
    order = np.argsort(pulse, kind="stable")
    return pulse[order], emit[order], origin[order]


def simulate_pulse_train(
    rng: RngSpec,
    source: SourceParams,
    setup: SetupParams,
    n_pulses: int,
    threads: int = 1,
) -> EventBatch:
    """Simulate emission events for a train of excitation pulses.

    Per pulse, independently: a first photon with probability equal to the
    first-lens brightness; given a first photon, a re-excitation photon
    whose emission restarts after the first one; a laser-leak photon with
    the configured per-pulse probability, Gaussian-timed around the pulse.

    The chunked RNG layout makes the result independent of ``threads``.
    """
    if n_pulses <= 0:
        raise ValueError(f"n_pulses must be > 0, got {n_pulses}")
    validate_source(source)
    validate_setup(setup)
    if source.kind is TransitionKind.EXCITON and source.brightness_first_lens > 0:
        # Fail fast on unsamplable emission before launching workers.
        _exciton_inverse_cdf_table(
            source.exciton.tau_ps, source.exciton.delta_fss_uev, source.exciton.theta_rad
        )

    bounds = [(lo, min(lo + CHUNK_PULSES, n_pulses)) for lo in range(0, n_pulses, CHUNK_PULSES)]
    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(
                pool.map(
                    lambda ib: _simulate_chunk(rng, source, setup, ib[1][0], ib[1][1], ib[0]),
                    enumerate(bounds),
                )
            )
    else:
        chunks = [
            _simulate_chunk(rng, source, setup, lo, hi, i) for i, (lo, hi) in enumerate(bounds)
        ]
    pulse = np.concatenate([c[0] for c in chunks])
    emit = np.concatenate([c[1] for c in chunks])
    origin = np.concatenate([c[2] for c in chunks])
    return EventBatch(pulse, emit, origin, n_pulses)


def _as_arrays(events) -> EventBatch:
    if isinstance(events, EventBatch):
        return events
    evs = list(events)
    return EventBatch(
        np.array([e.pulse_index for e in evs], dtype=np.int64),
        np.array([e.emit_time_ps for e in evs], dtype=float),
        np.array([int(e.origin) for e in evs], dtype=np.int8),
        n_pulses=max((e.pulse_index for e in evs), default=-1) + 1,
    )


def _dark_clicks(g: np.random.Generator, setup: SetupParams, duration_ps: float):
    lam = setup.dark_rate_cps * duration_ps * 1e-12
    out = []
    for _ in range(2):
        n = int(g.poisson(lam))
        out.append(np.sort(g.uniform(0.0, duration_ps, size=n)))
    return out


def _finalize_streams(times, channels, keep, dark0, dark1):
    t0 = np.sort(np.concatenate([times[keep & (channels == 0)], dark0]))
    t1 = np.sort(np.concatenate([times[keep & (channels == 1)], dark1]))
    return t0, t1


def hbt_streams(
    rng: RngSpec,
    events,
    setup: SetupParams,
    n_pulses: int | None = None,
):
    """Detector click streams for an intensity-autocorrelation measurement.

    Each photon survives one combined efficiency Bernoulli
    (eta_setup * eta_det), is routed 50/50 to one of two detectors, and is
    stamped at pulse_index * rep_period + emit_time + Gaussian jitter.
    Dark counts are an independent Poisson process per channel.

    Returns (times_channel0, times_channel1) in ps, each sorted.
    """
    batch = _as_arrays(events)
    n_pulses = batch.n_pulses if n_pulses is None else n_pulses
    g = rng.generator()
    n = len(batch)
    period = setup.rep_period_ps
    sigma_j = setup.jitter_fwhm_ps * FWHM_TO_SIGMA

    keep = g.random(n) < setup.eta_total
    channels = g.integers(0, 2, size=n)
    jitter = g.normal(0.0, sigma_j, size=n) if sigma_j > 0 else np.zeros(n)
    times = batch.pulse_index * period + batch.emit_time_ps + jitter
    dark0, dark1 = _dark_clicks(g, setup, n_pulses * period)
    return _finalize_streams(times, channels, keep, dark0, dark1)


def _empirical_pair_overlap(batch: EventBatch, overlap: float) -> float:
    """Pairwise coalescence probability that realizes the requested overlap.

    The reported mean wavepacket overlap M is defined after correcting the
    raw interference visibility for multiphoton noise with
    M = (V_raw + g2) / (1 - g2).  Counting coincidences of the pairing
    model at the histogram level gives

        V_raw = [m_pair * (p1^2 + 3 p1 p2) - 2 p2] / mu^2

    with p1, p2 the one- and two-photon pulse fractions and mu the mean
    photon number.  Solving for m_pair so that the corrected visibility
    equals M inverts the correction exactly:

        m_pair = M * (1 - g2) * mu^2 / (p1^2 + 3 p1 p2),  g2 = 2 p2 / mu^2.

    For an ideal single-photon stream (p2 = 0) this reduces to m_pair = M.
    """
    counts = batch.per_pulse_qd_counts()
    n = batch.n_pulses
    if n <= 0:
        return overlap
    p1 = np.count_nonzero(counts == 1) / n
    p2 = np.count_nonzero(counts >= 2) / n
    mu = counts.sum() / n
    if p1 <= 0 or mu <= 0:
        return overlap
    g2 = 2.0 * p2 / mu**2
    m_pair = overlap * (1.0 - g2) * mu**2 / (p1**2 + 3.0 * p1 * p2)
    return min(1.0, max(0.0, m_pair))


def hom_streams(
    rng: RngSpec,
    events,
    setup: SetupParams,
    overlap: float,
    n_pulses: int | None = None,
):
    """Click streams behind a path-unbalanced two-photon interferometer.

    Each photon takes the short or long arm with probability 1/2; the long
    arm adds one repetition period, so a long photon from pulse k meets a
    short photon from pulse k+1 in the same output slot.  Meeting QD
    photons coalesce (both exit the same, random, port) with the pairwise
    probability derived from ``overlap``; everything else routes
    independently.  Laser-leak photons never coalesce.  Efficiency,
    jitter and dark counts are applied as in :func:`hbt_streams`.
    """
    if not 0.0 <= overlap <= 1.0:
        raise ValueError(f"overlap must lie in [0, 1], got {overlap}")
    batch = _as_arrays(events)
    n_pulses = batch.n_pulses if n_pulses is None else n_pulses
    g = rng.generator()
    n = len(batch)
    period = setup.rep_period_ps
    delay = setup.hom_delay_ps if setup.hom_delay_ps is not None else period
    sigma_j = setup.jitter_fwhm_ps * FWHM_TO_SIGMA
    m_pair = _empirical_pair_overlap(batch, overlap)

    arm = g.integers(0, 2, size=n)
    slot = batch.pulse_index + arm
    qd = batch.qd_mask()

    # Greedy pairing: the first long-arm QD photon in a slot meets the
    # first short-arm QD photon of the same slot.
    long_idx = np.where(qd & (arm == 1))[0]
    short_idx = np.where(qd & (arm == 0))[0]
    long_slots, long_first = np.unique(slot[long_idx], return_index=True)
    short_slots, short_first = np.unique(slot[short_idx], return_index=True)
    _, li, si = np.intersect1d(long_slots, short_slots, assume_unique=True, return_indices=True)
    pair_a = long_idx[long_first[li]]
    pair_b = short_idx[short_first[si]]

    coalesce = g.random(pair_a.size) < m_pair
    joint_port = g.integers(0, 2, size=pair_a.size)
    channels = g.integers(0, 2, size=n)
    channels[pair_a[coalesce]] = joint_port[coalesce]
    channels[pair_b[coalesce]] = joint_port[coalesce]

    keep = g.random(n) < setup.eta_total
    jitter = g.normal(0.0, sigma_j, size=n) if sigma_j > 0 else np.zeros(n)
    times = batch.pulse_index * period + batch.emit_time_ps + arm * delay + jitter
    dark0, dark1 = _dark_clicks(g, setup, n_pulses * period)
    return _finalize_streams(times, channels, keep, dark0, dark1)


def fold_to_pulse_window(times_ps: np.ndarray, period_ps: float) -> np.ndarray:
    """Map absolute click times onto [0, period) relative to their pulse."""
    return np.mod(times_ps, period_ps)
