"""Deterministic emission-intensity models.

Cross-polarized excitation of a neutral exciton populates a superposition
of the two fine-structure eigenstates.  Both components decay with the
same Purcell-enhanced lifetime tau while beating against each other at
the splitting frequency delta/hbar, so the intensity collected in the
orthogonal polarization is

    I(t) = exp(-t/tau) * sin^2(t * delta / 2 hbar) * sin^2(2 theta).

A trion has polarization-symmetric selection rules and emits a plain
exponential exp(-t/tau) with an instantaneous rise; the finite rise seen
on a detector comes entirely from the instrument response, which is
modeled as a unit-area Gaussian of given FWHM.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import (
    HBAR_UEV_PS,
    ExcitonParams,
    SourceParams,
    TransitionKind,
    TrionParams,
)

FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))


class ResolutionError(ValueError):
    """Grid too coarse to resolve the requested convolution kernel."""


@dataclass(frozen=True, eq=False)
class IntensityCurve:
    """Intensity sampled on a uniform time grid (arbitrary units)."""

    t_ps: np.ndarray
    values: np.ndarray
    grid_step_ps: float

    def __post_init__(self):
        t = np.asarray(self.t_ps, dtype=float)
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "t_ps", t)
        object.__setattr__(self, "values", v)
        if t.ndim != 1 or t.size < 2 or v.shape != t.shape:
            raise ValueError("curve needs matching 1-d time and value arrays with >= 2 points")
        steps = np.diff(t)
        if np.any(steps <= 0):
            raise ValueError("time grid must be strictly increasing")
        if np.any(np.abs(steps - self.grid_step_ps) > 1e-9 * self.grid_step_ps):
            raise ValueError("time grid must be uniform to 1e-9 relative")
        if np.any(v < 0):
            raise ValueError("intensity values must be non-negative")

    def integral(self) -> float:
        """Trapezoidal integral over the grid."""
        return float(np.trapezoid(self.values, self.t_ps))


@dataclass(frozen=True)
class PhiScanPoint:
    """Integrated line intensities at one excitation polarization angle."""

    phi_rad: float
    cavity_light: float
    qd_light: float

    def __post_init__(self):
        if self.cavity_light < 0 or self.qd_light < 0:
            raise ValueError("intensities must be non-negative")


def _check_nonnegative_time(t) -> np.ndarray:
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0):
        raise ValueError("time must be >= 0 (no emission before the excitation pulse)")
    return arr


def exciton_amplitudes(t, p: ExcitonParams):
    """Eigenstate amplitudes (a_V', a_H') of the decaying exciton at time t.

    Starting from the cavity-aligned superposition cos(theta)|V'> +
    sin(theta)|H'>, each component evolves with its own energy phase and
    the shared amplitude decay exp(-t/2tau), so the total population is
    exp(-t/tau).
    """
    tt = _check_nonnegative_time(t)
    decay = np.exp(-tt / (2.0 * p.tau_ps))
    a_v = np.cos(p.theta_rad) * np.exp(-1j * p.e_v_prime_uev * tt / HBAR_UEV_PS) * decay
    a_h = np.sin(p.theta_rad) * np.exp(-1j * p.e_h_prime_uev * tt / HBAR_UEV_PS) * decay
    return a_v, a_h


def exciton_cross_intensity(t, p: ExcitonParams):
    """Cross-polarized exciton emission intensity at time t (closed form)."""
    tt = _check_nonnegative_time(t)
    beat = np.sin(tt * p.delta_fss_uev / (2.0 * HBAR_UEV_PS)) ** 2
    return np.exp(-tt / p.tau_ps) * beat * math.sin(2.0 * p.theta_rad) ** 2


def trion_intensity(t, p: TrionParams):
    """Trion emission intensity at time t: unnormalized exp(-t/tau)."""
    tt = _check_nonnegative_time(t)
    return np.exp(-tt / p.tau_ps)


def source_intensity(t, source: SourceParams):
    """Dispatch to the intensity model matching the source kind."""
    if source.kind is TransitionKind.EXCITON:
        return exciton_cross_intensity(t, source.exciton)
    return trion_intensity(t, source.trion)


def cross_intensity_integral(p: ExcitonParams) -> float:
    """Closed-form integral of the cross-polarized intensity over [0, inf).

    Equals sin^2(2 theta) * (tau/2) * r^2 / (1 + r^2) with r = delta*tau/hbar.
    """
    r = p.delta_fss_uev * p.tau_ps / HBAR_UEV_PS
    return math.sin(2.0 * p.theta_rad) ** 2 * 0.5 * p.tau_ps * r * r / (1.0 + r * r)


def peak_emission_delay(p: ExcitonParams) -> float:
    """First time t* > 0 at which the cross-polarized intensity peaks.

    Setting the derivative of exp(-t/tau) sin^2(t delta / 2 hbar) to zero
    gives tan(t delta / 2 hbar) = tau * delta / hbar on the first branch,
    solved here in closed form through the arctangent.
    """
    if p.delta_fss_uev <= 0:
        raise ValueError("no emission maximum exists for delta_fss = 0 (intensity is zero)")
    if p.tau_ps <= 0:
        raise ValueError(f"tau_ps must be > 0, got {p.tau_ps}")
    r = p.tau_ps * p.delta_fss_uev / HBAR_UEV_PS
    return 2.0 * HBAR_UEV_PS / p.delta_fss_uev * math.atan(r)


def gaussian_kernel(grid_step_ps: float, fwhm_ps: float, n_sigma: float = 5.0):
    """Discrete unit-sum Gaussian kernel sampled on the given grid step.

    Returns (kernel, radius).  The kernel spans +/- n_sigma standard
    deviations; the sum normalization keeps discrete convolution exactly
    mass-preserving.
    """
    sigma = fwhm_ps * FWHM_TO_SIGMA
    radius = max(1, int(math.ceil(n_sigma * sigma / grid_step_ps)))
    x = np.arange(-radius, radius + 1) * grid_step_ps
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum(), radius


def convolve_padded(values: np.ndarray, kernel: np.ndarray, radius: int) -> np.ndarray:
    """Convolve with zero padding of one kernel radius on each side.

    The result is cropped back to the input length, so mass within
    ~n_sigma of the edges can leak off the grid; pad the model grid
    generously before calling if that matters.
    """
    padded = np.concatenate([np.zeros(radius), values, np.zeros(radius)])
    out = np.convolve(padded, kernel, mode="same")[radius:-radius]
    return np.clip(out, 0.0, None)


def convolve_irf(curve: IntensityCurve, fwhm_ps: float) -> IntensityCurve:
    """Convolve an intensity curve with a Gaussian instrument response.

    The returned curve lives on the same grid.  fwhm = 0 is the identity.
    A grid coarser than fwhm/4 undersamples the kernel and is rejected.
    """
    if fwhm_ps < 0:
        raise ValueError(f"fwhm_ps must be >= 0, got {fwhm_ps}")
    if fwhm_ps == 0.0:
        return curve
    if curve.grid_step_ps > fwhm_ps / 4.0:
        raise ResolutionError(
            f"grid step {curve.grid_step_ps} ps undersamples a {fwhm_ps} ps FWHM kernel; "
            f"need grid_step <= fwhm/4"
        )
    kernel, radius = gaussian_kernel(curve.grid_step_ps, fwhm_ps)
    smoothed = convolve_padded(curve.values, kernel, radius)
    return IntensityCurve(curve.t_ps, smoothed, curve.grid_step_ps)


def default_time_grid(source: SourceParams, setup=None) -> np.ndarray:
    """Default 1 ps grid spanning [-5 sigma_jitter, 10 tau]."""
    jitter = setup.jitter_fwhm_ps if setup is not None else 0.0
    lo = -5.0 * jitter * FWHM_TO_SIGMA
    hi = 10.0 * source.tau_ps
    n = int(math.ceil(hi - lo)) + 1
    return lo + np.arange(n, dtype=float)


def emission_curve(source: SourceParams, setup=None, t_ps: np.ndarray | None = None) -> IntensityCurve:
    """Model intensity curve for a source on a uniform grid.

    Times before the excitation pulse carry zero intensity, which is the
    correct left padding for a subsequent instrument-response convolution.
    """
    t = default_time_grid(source, setup) if t_ps is None else np.asarray(t_ps, dtype=float)
    step = float(t[1] - t[0])
    pos = np.clip(t, 0.0, None)
    vals = np.where(t >= 0.0, source_intensity(pos, source), 0.0)
    return IntensityCurve(t, vals, step)


def phi_scan_model(
    phi_rad: float,
    kind: TransitionKind,
    params: SourceParams,
    amp_cavity: float,
    amp_qd: float,
) -> PhiScanPoint:
    """Integrated line intensities versus excitation polarization angle phi.

    The cavity-rotated laser light vanishes when the excitation is along a
    cavity axis and is maximal at 45 degrees, hence sin^2(2 phi).  The QD
    line follows sin^2(2(theta - phi)) for an exciton (no cross-polarized
    emission when pumping an eigenstate) and is constant for a trion.
    """
    if amp_cavity < 0 or amp_qd < 0:
        raise ValueError("amplitudes must be non-negative")
    cavity = amp_cavity * math.sin(2.0 * phi_rad) ** 2
    if kind is TransitionKind.EXCITON:
        qd = amp_qd * math.sin(2.0 * (params.exciton.theta_rad - phi_rad)) ** 2
    else:
        qd = amp_qd
    return PhiScanPoint(phi_rad=phi_rad, cavity_light=cavity, qd_light=qd)
