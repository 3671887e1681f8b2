"""Audio ingestion, resampling, and synthesis of modulated test tones.

All operations are pure functions of their inputs (including RNG seeds), so
they are safe to call from worker pools without shared state.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.io import wavfile
from scipy.signal import firwin, resample_poly

CANONICAL_RATE = 22050


class UnreadableAudio(ValueError):
    """File missing, truncated, or not a RIFF/WAV container."""


class UnsupportedEncoding(ValueError):
    """WAV encoding outside PCM 16/24/32-bit or 32/64-bit float."""


@dataclass(frozen=True)
class Waveform:
    """Mono audio: dimensionless samples in [-1, 1] plus a sample rate in Hz."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("waveform must be a non-empty 1-D sample array")
        if not np.all(np.isfinite(samples)):
            raise ValueError("waveform contains non-finite samples")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        object.__setattr__(self, "samples", samples)

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def rms(self) -> float:
        return float(np.sqrt(np.mean(np.square(self.samples))))


@dataclass(frozen=True)
class SynthSpec:
    """Parameters for one synthetic note.

    am_* control sinusoidal amplitude modulation of the summed tone,
    fm_* control sinusoidal frequency modulation (depth in semitones),
    partial_decay is the power-law exponent of harmonic amplitudes
    (amplitude of partial k is k**-partial_decay).
    """

    carrier_freq: float
    duration: float = 1.0
    am_rate: float = 0.0
    am_depth: float = 0.0
    fm_rate: float = 0.0
    fm_depth: float = 0.0
    n_partials: int = 1
    attack_time: float = 0.02
    noise_level: float = 0.0
    label: str = "ordinario"
    instrument: str = "Syn"
    dynamics: str = "mf"
    partial_decay: float = 1.0

    def __post_init__(self):
        if self.carrier_freq <= 0 or self.duration <= 0:
            raise ValueError("carrier_freq and duration must be positive")
        if self.am_rate < 0 or self.fm_rate < 0:
            raise ValueError("modulation rates must be non-negative")
        if not 0.0 <= self.am_depth <= 1.0:
            raise ValueError("am_depth must lie in [0, 1]")
        if not 0.0 <= self.noise_level <= 1.0:
            raise ValueError("noise_level must lie in [0, 1]")
        if self.n_partials < 1:
            raise ValueError("n_partials must be a positive integer")
        if self.attack_time <= 0:
            raise ValueError("attack_time must be positive")


def load_wav(path) -> Waveform:
    """Read a RIFF/WAV file as a mono waveform scaled to [-1, 1].

    Multichannel input is averaged down to mono; the file's sample rate is
    preserved. Raises UnreadableAudio for broken files and
    UnsupportedEncoding for sample formats outside PCM16/24/32 and float.
    """
    try:
        with open(path, "rb") as fh:
            payload = fh.read()
    except OSError as exc:
        raise UnreadableAudio(f"cannot open {path}: {exc}") from exc
    return _decode_wav_bytes(payload, str(path))


def _decode_wav_bytes(payload: bytes, origin: str) -> Waveform:
    try:
        rate, data = wavfile.read(io.BytesIO(payload))
    except Exception as exc:
        raise UnreadableAudio(f"unreadable WAV data in {origin}: {exc}") from exc
    if data.size == 0:
        raise UnreadableAudio(f"zero-length audio in {origin}")
    if data.dtype == np.int16:
        scale = 1.0 / 32768.0
    elif data.dtype == np.int32:
        scale = 1.0 / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        scale = 1.0
    else:
        raise UnsupportedEncoding(f"{origin}: unsupported sample format {data.dtype}")
    samples = data.astype(np.float64)
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    return Waveform(samples * scale, int(rate))


def save_wav(w: Waveform, path) -> None:
    """Write a waveform as 16-bit PCM."""
    clipped = np.clip(w.samples, -1.0, 1.0)
    wavfile.write(path, w.sample_rate, (clipped * 32767.0).astype(np.int16))


def resample(w: Waveform, target_rate: int) -> Waveform:
    """Band-limited polyphase resampling (Kaiser-windowed sinc, beta=12).

    Output length is round(len * target/source); a no-op when the rates
    already match.
    """
    if target_rate <= 0:
        raise ValueError("target_rate must be positive")
    if target_rate == w.sample_rate:
        return w
    g = np.gcd(int(target_rate), int(w.sample_rate))
    up, down = target_rate // g, w.sample_rate // g
    # 64 taps per polyphase branch; cutoff at the tighter of the two Nyquists.
    half_len = 32 * max(up, down)
    taps = firwin(2 * half_len + 1, 1.0 / max(up, down), window=("kaiser", 12.0))
    out = resample_poly(w.samples, up, down, window=taps)
    n_out = int(round(w.samples.size * target_rate / w.sample_rate))
    n_out = max(n_out, 1)
    if out.size < n_out:
        out = np.pad(out, (0, n_out - out.size))
    return Waveform(out[:n_out], int(target_rate))


def synth_note(spec: SynthSpec, sample_rate: int = CANONICAL_RATE, seed: int = 0):
    """Render one synthetic note; deterministic given (spec, sample_rate, seed).

    The note is a sum of n_partials harmonics with power-law amplitudes and
    an exponential attack, amplitude modulated by (1 + am_depth*sin(2*pi*
    am_rate*t)), frequency modulated by fm_depth semitones at fm_rate, plus
    white noise at noise_level RMS relative to the tone. The result is peak
    normalized to 0.9 so clipping can never occur.

    Returns (Waveform, NoteMetadata); metadata is deferred-imported to keep
    this module free of a corpus dependency at import time.
    """
    from .corpus import metadata_for_synth_note

    if spec.carrier_freq * spec.n_partials >= sample_rate / 2:
        raise ValueError(
            f"aliasing: partial {spec.n_partials} of {spec.carrier_freq} Hz "
            f"exceeds Nyquist ({sample_rate / 2} Hz)"
        )
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xA0D10]))
    n = int(round(spec.duration * sample_rate))
    t = np.arange(n) / sample_rate

    if spec.fm_rate > 0 and spec.fm_depth != 0:
        inst_freq = spec.carrier_freq * np.exp2(
            (spec.fm_depth / 12.0) * np.sin(2 * np.pi * spec.fm_rate * t)
        )
    else:
        inst_freq = np.full(n, spec.carrier_freq)
    base_phase = 2 * np.pi * np.cumsum(inst_freq) / sample_rate

    k = np.arange(1, spec.n_partials + 1)
    amps = k.astype(np.float64) ** (-spec.partial_decay)
    phases = rng.uniform(0, 2 * np.pi, size=spec.n_partials)
    tone = (amps[:, None] * np.sin(k[:, None] * base_phase[None, :] + phases[:, None])).sum(axis=0)

    env = 1.0 - np.exp(-t / spec.attack_time)
    fade = min(n, int(round(0.02 * sample_rate)))
    if fade > 1:
        env[-fade:] *= 0.5 * (1 + np.cos(np.linspace(0, np.pi, fade)))
    tone *= env

    if spec.am_rate > 0 and spec.am_depth > 0:
        tone *= 1.0 + spec.am_depth * np.sin(2 * np.pi * spec.am_rate * t)

    if spec.noise_level > 0:
        tone_rms = np.sqrt(np.mean(np.square(tone)))
        tone = tone + rng.standard_normal(n) * (spec.noise_level * tone_rms)

    peak = np.max(np.abs(tone))
    if peak > 0:
        tone *= 0.9 / peak
    return Waveform(tone, sample_rate), metadata_for_synth_note(spec)


# Default desk-scale corpus: 4 technique classes x 2 pseudo-instruments x
# 25 pitches x 2 dynamics = 400 one-second notes. The technique classes
# deliberately mirror the classic amplitude/frequency-modulation confusions:
# ordinario (none), tremolo (~6 Hz AM), vibrato (~6 Hz FM), flatterzunge
# (25-35 Hz AM).
_INSTRUMENT_PROFILES = {
    "SyA": dict(n_partials=10, partial_decay=0.9, attack_time=0.015),
    "SyB": dict(n_partials=6, partial_decay=1.7, attack_time=0.05),
}
_DYNAMICS_TWEAKS = {
    "f": dict(decay_add=0.0, noise_level=0.03),
    "p": dict(decay_add=0.7, noise_level=0.012),
}


def _technique_params(technique: str, u: float) -> dict:
    """Modulation parameters for one technique; u in [0, 1) jitters them."""
    if technique == "ordinario":
        return dict(am_rate=0.0, am_depth=0.0, fm_rate=0.0, fm_depth=0.0)
    if technique == "tremolo":
        return dict(am_rate=6.0 + 0.8 * u, am_depth=0.6 + 0.35 * u, fm_rate=0.0, fm_depth=0.0)
    if technique == "vibrato":
        return dict(am_rate=0.0, am_depth=0.0, fm_rate=5.5 + 1.0 * u, fm_depth=0.3 + 0.4 * u)
    if technique == "flatterzunge":
        return dict(am_rate=25.0 + 10.0 * u, am_depth=0.4 + 0.4 * u, fm_rate=0.0, fm_depth=0.0)
    raise ValueError(f"unknown synthetic technique {technique!r}")


def default_corpus_specs(
    seed: int = 42,
    techniques=("ordinario", "tremolo", "vibrato", "flatterzunge"),
    instruments=("SyA", "SyB"),
    midi_pitches=tuple(range(48, 73)),
    dynamics=("p", "f"),
    duration: float = 1.0,
) -> list[tuple[SynthSpec, int]]:
    """Enumerate (spec, note_seed) pairs for the default synthetic corpus."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xC0B9C5]))
    out = []
    for technique in techniques:
        for instrument in instruments:
            profile = _INSTRUMENT_PROFILES[instrument]
            for midi in midi_pitches:
                for dyn in dynamics:
                    u = rng.uniform()
                    tweaks = _DYNAMICS_TWEAKS[dyn]
                    spec = SynthSpec(
                        carrier_freq=midi_to_freq(midi),
                        duration=duration,
                        n_partials=profile["n_partials"],
                        partial_decay=profile["partial_decay"] + tweaks["decay_add"],
                        attack_time=profile["attack_time"],
                        noise_level=tweaks["noise_level"],
                        label=technique,
                        instrument=instrument,
                        dynamics=dyn,
                        **_technique_params(technique, u),
                    )
                    note_seed = int(rng.integers(0, 2**31 - 1))
                    out.append((spec, note_seed))
    return out


def midi_to_freq(midi: int) -> float:
    return 440.0 * 2.0 ** ((midi - 69) / 12.0)


def synthesize_corpus(out_dir, seed: int = 42, sample_rate: int = CANONICAL_RATE,
                      specs=None, n_jobs: int = 1) -> list:
    """Render the synthetic corpus to WAV files plus a metadata sidecar.

    Returns the list of corpus entries (path, metadata) in filename order.
    Parallel across notes; every note is an independent pure render.
    """
    import json
    from pathlib import Path

    from joblib import Parallel, delayed

    from .corpus import render_filename

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if specs is None:
        specs = default_corpus_specs(seed=seed)

    def _render(i, spec, note_seed):
        w, meta = synth_note(spec, sample_rate, note_seed)
        meta = replace(meta, variant=f"s{i:03d}")
        name = render_filename(meta) + ".wav"
        save_wav(w, out_dir / name)
        return name, meta

    results = Parallel(n_jobs=n_jobs)(
        delayed(_render)(i, spec, s) for i, (spec, s) in enumerate(specs)
    )
    results.sort(key=lambda pair: pair[0])
    sidecar = {
        "version": 1,
        "sample_rate": sample_rate,
        "seed": seed,
        "notes": [{"file": name, "metadata": meta.to_dict()} for name, meta in results],
    }
    with open(out_dir / "corpus.json", "w") as fh:
        json.dump(sidecar, fh, indent=1)
    return results
