"""Constant-Q wavelet filterbank, scalogram, and two-layer time scattering.

The transform cascades complex Morlet band-pass filters with modulus
nonlinearities. Layer one measures energy per acoustic band lambda1; layer
two band-passes each first-layer envelope at modulation rates lambda2 and
so captures amplitude-modulation structure (tremolo, flutter, vibrato
flank ripple). Both layers are low-passed at the averaging scale T and
averaged over the whole recording into a single vector.

Implementation notes, since the numerics are the hard part:

* All filtering happens in the frequency domain. Each Morlet is a Gaussian
  bump (minus a DC-nulling correction) sampled only on its +/-5 sigma
  support, so building a filter costs O(support), not O(n_fft).
* Band envelopes are decimated by folding the product spectrum modulo a
  power-of-two length before the inverse FFT. Folding is an exact
  polyphase decimation of the analytic band signal, and the modulus of the
  decimated analytic signal equals the decimated envelope. Decimation
  rates keep >= 2x headroom over both the envelope bandwidth and the
  widest modulation filter applied downstream.
* "Low-pass at T, then average over the valid (unpadded) region" is a
  linear functional of each envelope, so it collapses into one cached
  weight vector per grid length; every scattering coefficient is then a
  single dot product.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .audio import Waveform

_LN2 = float(np.log(2.0))
_SUPPORT_SIGMAS = 5.0


@dataclass(frozen=True)
class FilterbankConfig:
    bins_per_octave: int
    f_min: float
    f_max: float
    sample_rate: int

    def __post_init__(self):
        if self.bins_per_octave < 1:
            raise ValueError("bins_per_octave must be >= 1")
        if not (0 < self.f_min < self.f_max <= self.sample_rate / 2):
            raise ValueError("need 0 < f_min < f_max <= Nyquist")


def default_first_order(sample_rate: int = 22050) -> FilterbankConfig:
    """Q=12 acoustic filterbank spanning C1 to 9 kHz."""
    return FilterbankConfig(12, 32.7, 9000.0, sample_rate)


def default_second_order(sample_rate: int = 22050) -> FilterbankConfig:
    """Q=1 modulation filterbank from 1 Hz up to half the acoustic ceiling."""
    return FilterbankConfig(1, 1.0, 4500.0, sample_rate)


class Filterbank:
    """Immutable bank of analytic Morlet band-pass filters.

    Center frequencies are geometric, f_min * 2^(k/Q); each filter's -3 dB
    bandwidth is its center divided by Q. Frequency-domain samples are
    cached per FFT grid so repeated transforms of equal-length signals pay
    the trigonometry once.
    """

    def __init__(self, config: FilterbankConfig):
        self.config = config
        n_bands = int(np.floor(config.bins_per_octave * np.log2(config.f_max / config.f_min) + 1e-9)) + 1
        if n_bands < 2:
            raise ValueError("fewer than 2 bands representable for this config")
        k = np.arange(n_bands)
        self.centers = config.f_min * np.exp2(k / config.bins_per_octave)
        # sigma such that the squared response has full width lambda/Q at half max
        self.sigmas = self.centers / (2.0 * config.bins_per_octave * np.sqrt(_LN2))
        self._support_cache: dict = {}

    def __len__(self) -> int:
        return len(self.centers)

    def band_nearest(self, freq: float) -> int:
        return int(np.argmin(np.abs(np.log(self.centers) - np.log(freq))))

    def sampled_supports(self, n_fft: int):
        """Per band: (lo_bin, values) of the filter on an n_fft grid.

        The support always starts at bin 0 because the DC-nulling correction
        term lives there; values above min(center + 5 sigma, Nyquist) are
        dropped.
        """
        key = (n_fft, self.config.sample_rate)
        cached = self._support_cache.get(key)
        if cached is not None:
            return cached
        df = self.config.sample_rate / n_fft
        out = []
        for lam, sig in zip(self.centers, self.sigmas):
            lo = max(int(np.floor((lam - _SUPPORT_SIGMAS * sig) / df)), 0)
            hi = min(int(np.ceil((lam + _SUPPORT_SIGMAS * sig) / df)) + 1, n_fft // 2 + 1)
            f = np.arange(lo, hi) * df
            vals = _morlet_hat(f, lam, sig)
            out.append((lo, vals))
        self._support_cache[key] = out
        return out


def _morlet_hat(f: np.ndarray, lam: float, sig: float) -> np.ndarray:
    """Gaussian bump at lam minus the correction that nulls the DC bin."""
    main = np.exp(-((f - lam) ** 2) / (2 * sig * sig))
    kappa = np.exp(-(lam * lam) / (2 * sig * sig))
    return main - kappa * np.exp(-(f * f) / (2 * sig * sig))


def build_filterbank(cfg: FilterbankConfig) -> Filterbank:
    return Filterbank(cfg)


@dataclass(frozen=True)
class ScatteringPath:
    order: int
    lambda1: float
    lambda2: float | None = None

    def __post_init__(self):
        if self.order not in (1, 2):
            raise ValueError("order must be 1 or 2")
        if self.order == 2:
            if self.lambda2 is None or not self.lambda2 < self.lambda1:
                raise ValueError("order-2 paths need lambda2 < lambda1")
        elif self.lambda2 is not None:
            raise ValueError("order-1 paths carry no lambda2")

    def to_dict(self) -> dict:
        d = {"order": self.order, "lambda1": self.lambda1}
        if self.order == 2:
            d["lambda2"] = self.lambda2
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScatteringPath":
        return cls(d["order"], d["lambda1"], d.get("lambda2"))


@dataclass
class ScatteringVector:
    values: np.ndarray
    paths: tuple[ScatteringPath, ...]
    averaging_scale: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (len(self.paths),):
            raise ValueError("values and paths must be parallel")

    def order_mask(self, order: int) -> np.ndarray:
        return np.array([p.order == order for p in self.paths])


@dataclass
class Scalogram:
    magnitudes: np.ndarray
    band_freqs: np.ndarray
    hop: float

    def __post_init__(self):
        if np.any(self.magnitudes < 0) or not np.all(np.isfinite(self.magnitudes)):
            raise ValueError("scalogram entries must be finite and non-negative")


def _next_pow2(n: int) -> int:
    return 1 << (int(n - 1).bit_length())


def _pad_reflect(x: np.ndarray, pad: int) -> np.ndarray:
    # np.pad reflect caps each application at len-1; iterate for tiny inputs
    out = x
    remaining = pad
    while remaining > 0:
        step = min(remaining, out.size - 1)
        out = np.pad(out, step, mode="reflect")
        remaining -= step
        if step == 0:
            break
    return out


def scalogram(w: Waveform, fb: Filterbank, hop: float = 0.005) -> Scalogram:
    """Complex modulus of the constant-Q transform on a common time grid.

    Rows are computed at full rate with reflection padding and subsampled
    to the common hop; padding is excluded from the output frames.
    """
    if w.sample_rate != fb.config.sample_rate:
        raise ValueError("waveform rate does not match filterbank rate")
    n = w.samples.size
    hop_samples = max(1, int(round(hop * w.sample_rate)))
    pad = min(n - 1, int(round(0.4 * w.sample_rate))) if n > 1 else 0
    padded = _pad_reflect(w.samples, pad)
    n_fft = _next_pow2(padded.size)
    spectrum = np.fft.fft(padded, n_fft)

    frame_idx = pad + np.arange(0, n, hop_samples)
    mags = np.empty((len(fb), frame_idx.size))
    supports = fb.sampled_supports(n_fft)
    for k, (lo, vals) in enumerate(supports):
        y = np.zeros(n_fft, dtype=complex)
        y[lo:lo + vals.size] = spectrum[lo:lo + vals.size] * vals
        band = np.fft.ifft(y)
        mags[k] = np.abs(band[frame_idx])
    return Scalogram(mags, fb.centers.copy(), hop_samples / w.sample_rate)


def _fold_spectrum(product: np.ndarray, lo: int, m: int, out: np.ndarray) -> None:
    """Accumulate product (occupying bins lo..lo+len) into out modulo m."""
    pos = lo
    idx = 0
    total = product.size
    while idx < total:
        offset = pos % m
        take = min(m - offset, total - idx)
        out[offset:offset + take] += product[idx:idx + take]
        pos += take
        idx += take


class _AveragingWeights:
    """Dot-product weights equal to 'low-pass at T then mean over valid'."""

    def __init__(self, n_fft: int, sample_rate: int, pad: int, n_valid: int, T: float):
        self.n_fft = n_fft
        self.sample_rate = sample_rate
        self.pad = pad
        self.n_valid = n_valid
        self.sigma_f = 2.0 / (np.pi * T)  # Gaussian lowpass, time scale T/4
        self._cache: dict[int, np.ndarray] = {}

    def for_length(self, m: int) -> np.ndarray:
        w = self._cache.get(m)
        if w is not None:
            return w
        decim = self.n_fft // m
        start = -(-self.pad // decim)  # ceil
        stop = -(-(self.pad + self.n_valid) // decim)
        stop = max(stop, start + 1)
        indicator = np.zeros(m)
        indicator[start:stop] = 1.0
        freqs = np.fft.rfftfreq(m, d=decim / self.sample_rate)
        phi = np.exp(-(freqs ** 2) / (2 * self.sigma_f ** 2))
        w = np.fft.irfft(np.fft.rfft(indicator) * phi, m) / (stop - start)
        self._cache[m] = w
        return w


def scattering_paths(fb1: Filterbank, fb2: Filterbank, T: float) -> tuple[ScatteringPath, ...]:
    """Canonical path list: order-1 ascending, then order-2 by (l1, l2).

    Second-order paths keep modulation rates below half the carrier band
    center and at or above 1/T.
    """
    paths = [ScatteringPath(1, float(lam)) for lam in fb1.centers]
    floor = 1.0 / T - 1e-9
    for lam1 in fb1.centers:
        for lam2 in fb2.centers:
            if floor <= lam2 < lam1 / 2:
                paths.append(ScatteringPath(2, float(lam1), float(lam2)))
    return tuple(paths)


def scatter(w: Waveform, cfg1: FilterbankConfig | None = None,
            cfg2: FilterbankConfig | None = None, T: float = 1.0,
            fb1: Filterbank | None = None, fb2: Filterbank | None = None,
            max_order: int = 2) -> ScatteringVector:
    """Two-layer globally averaged scattering vector of one waveform.

    Passing prebuilt filterbanks skips reconstruction; they are immutable
    and shared freely across threads. T must lie in [25 ms, 1 s].
    max_order=1 skips the modulation layer entirely.
    """
    if fb1 is None:
        fb1 = build_filterbank(cfg1 or default_first_order(w.sample_rate))
    if fb2 is None:
        fb2 = build_filterbank(cfg2 or default_second_order(w.sample_rate))
    if not 0.025 - 1e-9 <= T <= 1.0 + 1e-9:
        raise ValueError("averaging scale T must lie in [0.025, 1.0] seconds")
    if w.sample_rate != fb1.config.sample_rate:
        raise ValueError("waveform rate does not match filterbank rate")
    sr = w.sample_rate
    if int(round(T * sr)) < 1:
        raise ValueError("T is shorter than one sample at this rate")

    n = w.samples.size
    pad = min(n - 1, int(round(sr * max(0.5 * T, 0.4)))) if n > 1 else 0
    padded = _pad_reflect(w.samples, pad)
    n_fft = _next_pow2(padded.size)
    spectrum = np.fft.fft(padded, n_fft)
    weights = _AveragingWeights(n_fft, sr, pad, n, T)

    if max_order not in (1, 2):
        raise ValueError("max_order must be 1 or 2")
    paths = scattering_paths(fb1, fb2, T) if max_order == 2 \
        else tuple(ScatteringPath(1, float(lam)) for lam in fb1.centers)
    lam2_floor = 1.0 / T - 1e-9
    supports1 = fb1.sampled_supports(n_fft)
    supports2 = fb2.sampled_supports(n_fft)

    s1 = np.empty(len(fb1))
    s2: list[list[float]] = []
    for k, (lo, vals) in enumerate(supports1):
        lam1 = fb1.centers[k]
        sig1 = fb1.sigmas[k]
        # decimated rate keeps headroom over the envelope bandwidth and the
        # widest second-order filter (lambda2 < lambda1 / 2)
        r_req = max(4.0 * lam1, 16.0 * sig1, 64.0)
        decim = 1 << max(0, int(np.floor(np.log2(sr / r_req))))
        m = n_fft // decim
        folded = np.zeros(m, dtype=complex)
        _fold_spectrum(spectrum[lo:lo + vals.size] * vals, lo, m, folded)
        envelope = np.abs(np.fft.ifft(folded) / decim)
        s1[k] = float(envelope @ weights.for_length(m))

        rates = [v for v, lam2 in enumerate(fb2.centers)
                 if lam2_floor <= lam2 < lam1 / 2] if max_order == 2 else []
        s2.append([])
        if not rates:
            continue
        env_spectrum = np.fft.fft(envelope)
        r1 = sr / decim
        for v in rates:
            lam2 = fb2.centers[v]
            lo2, vals2 = supports2[v]
            # supports2 was sampled on the full grid; its bin spacing matches
            # every decimated grid because m * decim == n_fft
            hi2 = min(lo2 + vals2.size, m // 2)
            d2 = 1 << max(0, int(np.floor(np.log2(r1 / max(8.0 * lam2, 64.0)))))
            m2 = m // d2
            if m2 < 16:
                d2, m2 = 1, m
            folded2 = np.zeros(m2, dtype=complex)
            _fold_spectrum(env_spectrum[lo2:hi2] * vals2[:hi2 - lo2], lo2, m2, folded2)
            mod_env = np.abs(np.fft.ifft(folded2) / d2)
            s2[k].append(float(mod_env @ weights.for_length(m2)))

    values = np.concatenate([s1, np.array([x for row in s2 for x in row])]) \
        if any(s2) else s1
    return ScatteringVector(values, paths, T)


def scatter_batch(waves: Sequence[Waveform], cfg1: FilterbankConfig | None = None,
                  cfg2: FilterbankConfig | None = None, T: float = 1.0,
                  n_jobs: int = 1, max_order: int = 2):
    """Scattering vectors for many waveforms; returns (matrix, paths).

    Pure per item, so parallelism is free of shared mutable state.
    """
    from joblib import Parallel, delayed

    if not waves:
        raise ValueError("empty batch")
    sr = waves[0].sample_rate
    cfg1 = cfg1 or default_first_order(sr)
    cfg2 = cfg2 or default_second_order(sr)
    if n_jobs == 1:
        fb1, fb2 = build_filterbank(cfg1), build_filterbank(cfg2)
        vectors = [scatter(w, T=T, fb1=fb1, fb2=fb2, max_order=max_order) for w in waves]
    else:
        vectors = Parallel(n_jobs=n_jobs, batch_size=16)(
            delayed(scatter)(w, cfg1, cfg2, T, max_order=max_order) for w in waves
        )
    paths = vectors[0].paths
    matrix = np.vstack([v.values for v in vectors])
    return matrix, paths


@dataclass
class CompressionStats:
    """Per-path medians over a training corpus plus the epsilon of the
    quasi-logarithmic compression."""

    medians: np.ndarray
    epsilon: float
    paths: tuple[ScatteringPath, ...]

    def __post_init__(self):
        self.medians = np.asarray(self.medians, dtype=np.float64)
        if self.medians.shape != (len(self.paths),):
            raise ValueError("medians and paths must be parallel")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if np.any(self.medians < 0):
            raise ValueError("medians must be non-negative")

    def effective_medians(self) -> np.ndarray:
        """Zero medians replaced by the smallest positive one (degenerate
        corpora only); all-zero stats signal 'output zero' via zeros."""
        med = self.medians.copy()
        positive = med[med > 0]
        if positive.size:
            med[med == 0] = positive.min()
        return med


def fit_compression(vectors: Sequence[ScatteringVector], epsilon: float = 1e-3) -> CompressionStats:
    """Median of each path's coefficient across a collection of vectors."""
    if not vectors:
        raise ValueError("need at least one vector to fit compression stats")
    paths = vectors[0].paths
    for v in vectors[1:]:
        if v.paths != paths:
            raise ValueError("mismatched path lists across vectors")
    matrix = np.vstack([v.values for v in vectors])
    return CompressionStats(np.median(matrix, axis=0), epsilon, paths)


def fit_compression_matrix(matrix: np.ndarray, paths: tuple[ScatteringPath, ...],
                           epsilon: float = 1e-3) -> CompressionStats:
    if matrix.ndim != 2 or matrix.shape[0] < 1 or matrix.shape[1] != len(paths):
        raise ValueError("matrix rows must be scattering vectors over `paths`")
    return CompressionStats(np.median(matrix, axis=0), epsilon, paths)


def log_compress(v: ScatteringVector, stats: CompressionStats) -> ScatteringVector:
    """out = log(1 + v / (epsilon * median)) per path; paths preserved."""
    if v.paths != stats.paths:
        raise ValueError("vector and stats have different path lists")
    return ScatteringVector(
        log_compress_matrix(v.values[None, :], stats)[0], v.paths, v.averaging_scale
    )


def log_compress_matrix(matrix: np.ndarray, stats: CompressionStats) -> np.ndarray:
    med = stats.effective_medians()
    out = np.zeros_like(matrix, dtype=np.float64)
    nz = med > 0
    out[:, nz] = np.log1p(matrix[:, nz] / (stats.epsilon * med[nz]))
    return out
