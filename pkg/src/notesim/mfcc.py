"""MFCC baseline features and polynomial summary statistics.

The baseline keeps the 13 lowest DCT coefficients of a log 40-band mel
spectrum. The polynomial variant augments the per-coefficient time averages
with averages of all degree <= 3 monomial products, giving a control of
dimensionality comparable to the scattering vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np
from scipy.fft import dct

from .audio import Waveform

_LOG_GUARD = 1e-10


@dataclass(frozen=True)
class MfccConfig:
    n_mel_bands: int = 40
    n_coeffs: int = 13
    frame_length: float = 0.025
    hop: float = 0.010

    def __post_init__(self):
        if self.n_mel_bands < 1 or self.n_coeffs < 1:
            raise ValueError("band and coefficient counts must be positive")
        if self.n_coeffs > self.n_mel_bands:
            raise ValueError("n_coeffs cannot exceed n_mel_bands")
        if self.frame_length <= 0 or self.hop <= 0:
            raise ValueError("frame_length and hop must be positive")


def hz_to_mel(f):
    """HTK mel scale."""
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_band_centers(n_bands: int, sample_rate: int) -> np.ndarray:
    """Center frequencies (Hz) of triangular bands spanning 0 to Nyquist."""
    edges = np.linspace(0.0, hz_to_mel(sample_rate / 2), n_bands + 2)
    return mel_to_hz(edges[1:-1])


def _mel_filter_matrix(n_bands: int, n_fft: int, sample_rate: int) -> np.ndarray:
    edges_hz = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2), n_bands + 2))
    fft_freqs = np.fft.rfftfreq(n_fft, d=1.0 / sample_rate)
    fb = np.zeros((n_bands, fft_freqs.size))
    for b in range(n_bands):
        lo, mid, hi = edges_hz[b], edges_hz[b + 1], edges_hz[b + 2]
        up = (fft_freqs - lo) / max(mid - lo, 1e-12)
        down = (hi - fft_freqs) / max(hi - mid, 1e-12)
        fb[b] = np.clip(np.minimum(up, down), 0.0, None)
    return fb


def mel_spectrogram(w: Waveform, cfg: MfccConfig = MfccConfig()) -> np.ndarray:
    """Magnitude STFT (Hann window) through a triangular mel filterbank.

    Returns [n_mel_bands x n_frames], entries >= 0.
    """
    frame = int(round(cfg.frame_length * w.sample_rate))
    hop = max(1, int(round(cfg.hop * w.sample_rate)))
    if w.samples.size < frame:
        raise ValueError("waveform shorter than one analysis frame")
    n_frames = 1 + (w.samples.size - frame) // hop
    window = np.hanning(frame)
    starts = np.arange(n_frames) * hop
    frames = np.lib.stride_tricks.sliding_window_view(w.samples, frame)[starts]
    spectra = np.abs(np.fft.rfft(frames * window, axis=1))
    fb = _mel_filter_matrix(cfg.n_mel_bands, frame, w.sample_rate)
    return fb @ spectra.T


def mfcc(w: Waveform, cfg: MfccConfig = MfccConfig()) -> np.ndarray:
    """DCT-II of the log mel spectrum along bands; keeps coefficients
    0..n_coeffs-1 (the 0th included). Returns [n_coeffs x n_frames]."""
    mel = mel_spectrogram(w, cfg)
    logmel = np.log(mel + _LOG_GUARD)
    coeffs = dct(logmel, type=2, axis=0, norm="ortho")
    return coeffs[: cfg.n_coeffs]


def band_amplitude_projection(centers, cfg: MfccConfig = MfccConfig(),
                              sample_rate: int = 22050) -> np.ndarray:
    """Expected mel-band response to a unit-amplitude sinusoid per center.

    Returns [n_mel_bands x len(centers)]. Chains the Hann analysis window's
    magnitude response with the triangular filters, i.e. the operator the
    mel spectrogram applies to an isolated spectral line. Use it to resample
    line spectra (e.g. constant-Q band amplitudes) onto the mel grid at the
    mel spectrogram's own resolution.
    """
    centers = np.asarray(centers, dtype=np.float64)
    frame = int(round(cfg.frame_length * sample_rate))
    window = np.hanning(frame)
    fft_freqs = np.fft.rfftfreq(frame, d=1.0 / sample_rate)
    tri = _mel_filter_matrix(cfg.n_mel_bands, frame, sample_rate)
    n = np.arange(frame)
    out = np.zeros((cfg.n_mel_bands, centers.size))
    halfwidth = 6.0 * sample_rate / frame  # window response is negligible beyond
    for k, f0 in enumerate(centers):
        resp = np.zeros(fft_freqs.size)
        sel = np.flatnonzero(np.abs(fft_freqs - f0) <= halfwidth)
        phases = np.exp(-2j * np.pi * np.outer(fft_freqs[sel] - f0, n) / sample_rate)
        resp[sel] = np.abs(phases @ window) / 2.0
        out[:, k] = tri @ resp
    return out


def summarize_mean(frames: np.ndarray) -> np.ndarray:
    """Per-row mean across frames.

    Uses exactly rounded summation so the result is invariant to frame
    order, bit for bit.
    """
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[1] < 1:
        raise ValueError("need a [rows x frames] matrix with >= 1 frame")
    n = frames.shape[1]
    return np.array([math.fsum(row) / n for row in frames])


def poly_dimension(n_inputs: int, max_degree: int) -> int:
    """Number of distinct monomials of degree 1..max_degree in n_inputs."""
    from math import comb

    return sum(comb(n_inputs + d - 1, d) for d in range(1, max_degree + 1))


def summarize_poly(frames: np.ndarray, max_degree: int = 3) -> np.ndarray:
    """Time averages of all monomials up to max_degree over the coefficient
    trajectories, in lexicographic index order (i), (i<=j), (i<=j<=k)."""
    if max_degree not in (2, 3):
        raise ValueError("max_degree must be 2 or 3")
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[1] < 1:
        raise ValueError("need a [rows x frames] matrix with >= 1 frame")
    rows, n = frames.shape
    out = []
    for degree in range(1, max_degree + 1):
        for combo in combinations_with_replacement(range(rows), degree):
            prod = frames[combo[0]]
            for idx in combo[1:]:
                prod = prod * frames[idx]
            out.append(math.fsum(prod) / n)
    return np.array(out)
