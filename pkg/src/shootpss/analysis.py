"""Post-processing of shooting results: harmonic spectrum and convergence measures."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientHistory
from .transient import Waveform

R_REF = 50.0  # ohm, dBm reference


def dbm(volts):
    """Power of a sinusoid with peak amplitude ``volts`` into 50 ohm, in dBm."""
    v = np.asarray(volts, dtype=float)
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(v ** 2 / (2.0 * R_REF) / 1e-3)


@dataclass
class Spectrum:
    f: np.ndarray  # (H + 1,) k * f0
    phasors: np.ndarray  # (H + 1, n) complex peak phasors, DC bin real
    labels: tuple[str, ...]
    steps: int

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.phasors)

    @property
    def dbm(self) -> np.ndarray:
        return dbm(self.magnitude)

    def mean_square(self) -> np.ndarray:
        """Per-row time-domain mean square implied by the harmonics (Parseval)."""
        mag2 = self.magnitude ** 2
        ms = mag2[0] + 0.5 * mag2[1:].sum(axis=0)
        if self.steps % 2 == 0 and self.f.size - 1 == self.steps // 2:
            # the Nyquist bin is a real cosine, not split over +-f
            ms += 0.5 * mag2[-1]
        return ms


def spectrum(pss: Waveform, f0: float, harmonics: int | None = None) -> Spectrum:
    """Peak-amplitude harmonic phasors of one period of ``pss``."""
    N = pss.steps
    if harmonics is None:
        harmonics = N // 2
    if not 0 <= harmonics <= N // 2:
        raise ValueError(f"harmonics must lie in [0, {N // 2}]")
    X = np.fft.rfft(pss.samples[:N], axis=0) / N
    ph = 2.0 * X[: harmonics + 1]
    ph[0] = X[0].real
    if N % 2 == 0 and harmonics == N // 2:
        ph[-1] = X[N // 2].real
    return Spectrum(f0 * np.arange(harmonics + 1), ph, pss.labels, N)


def inverse_spectrum(spec: Spectrum) -> np.ndarray:
    """Period samples (without the repeated endpoint) from a full spectrum."""
    N = spec.steps
    if spec.f.size - 1 != N // 2:
        raise ValueError("inverse needs all harmonics up to N/2")
    X = spec.phasors / 2.0
    X[0] = spec.phasors[0]
    if N % 2 == 0:
        X[-1] = spec.phasors[-1]
    return np.fft.irfft(X * N, n=N, axis=0)


# ----------------------------------------------------------------------------
# convergence

@dataclass
class ConvergenceReport:
    eps: list[float]
    delta_f: list[float]
    delta_f_init: float
    K_stab: int | None
    l0: int
    sigma_hat: float | None
    muL_hat: float | None
    orders: list[float]


def order_ratios(eps) -> list[float]:
    """Per-step order estimates log(e[l+1]/e[l]) / log(e[l]/e[l-1])."""
    e = np.asarray(eps, dtype=float)
    out = []
    for l in range(1, e.size - 1):
        den = math.log(e[l] / e[l - 1])
        out.append(math.log(e[l + 1] / e[l]) / den if den != 0 else math.nan)
    return out


def estimate_order(eps) -> float:
    """Median order over a convergence-zone error sequence (needs >= 4 points)."""
    e = [v for v in eps]
    if len(e) < 4:
        raise InsufficientHistory(f"{len(e)} points in the convergence zone, need at least 4")
    return float(np.median(order_ratios(e)))


def linear_rate(eps) -> float:
    """Decimal digits gained over the last step, -log10(e[-1]/e[-2])."""
    if len(eps) < 2:
        raise InsufficientHistory("need at least two points")
    return -math.log10(eps[-1] / eps[-2])


def zone_entry(eps) -> int:
    """First index from which ``eps`` decreases strictly through to the end."""
    l0 = len(eps) - 1
    while l0 > 0 and eps[l0 - 1] > eps[l0]:
        l0 -= 1
    return l0


def waveform_distance(a: Waveform, b: Waveform) -> float:
    """2-norm over all period samples, matched by mesh index."""
    if a.samples.shape != b.samples.shape:
        raise ValueError("waveforms must share the mesh size")
    return float(np.linalg.norm(a.samples - b.samples))


def convergence_report(result, ref_solution, Tstab: float | None = None) -> ConvergenceReport:
    """Convergence measures of a shooting run against a reference steady state.

    ``result`` supplies the per-iteration waveforms and periods; samples are
    compared index by index, which aligns them in phase because both runs
    share the phase condition.
    """
    eps = [waveform_distance(w, ref_solution.pss_waveform) for w in result.iterates]
    f_ref = ref_solution.f0
    if getattr(result, "autonomous", False):
        delta_f = [abs(1.0 / T - f_ref) / f_ref for (_, _, T) in result.history]
    else:
        delta_f = [0.0] * len(eps)
    K = round(Tstab / ref_solution.T0) if Tstab is not None else None

    positive = all(e > 0 for e in eps)
    l0 = zone_entry(eps) if positive else len(eps) - 1
    zone = eps[l0:] if positive else []
    orders = order_ratios(zone) if len(zone) >= 3 else []
    try:
        sigma = estimate_order(zone)
    except InsufficientHistory:
        sigma = None
    mu = linear_rate(zone) if len(zone) >= 2 else None
    return ConvergenceReport(eps, delta_f, delta_f[0], K, l0, sigma, mu, orders)
