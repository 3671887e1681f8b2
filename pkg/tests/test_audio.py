import numpy as np
import pytest
from scipy.io import wavfile

from notesim.audio import (SynthSpec, UnreadableAudio, UnsupportedEncoding,
                           Waveform, load_wav, resample, save_wav, synth_note)


def sine(freq, duration=1.0, rate=44100, amp=0.5):
    t = np.arange(int(duration * rate)) / rate
    return Waveform(amp * np.sin(2 * np.pi * freq * t), rate)


class TestWaveform:
    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            Waveform(np.array([]), 44100)

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            Waveform(np.array([0.0, np.nan]), 44100)

    def test_rejects_bad_rate(self):
        with pytest.raises(ValueError):
            Waveform(np.zeros(10), 0)


class TestLoadWav:
    def test_mono_16bit_roundtrip(self, tmp_path):
        w = sine(440.0)
        path = tmp_path / "a.wav"
        save_wav(w, path)
        back = load_wav(path)
        assert back.sample_rate == 44100
        assert back.samples.size == 44100
        assert np.max(np.abs(back.samples - w.samples)) < 1e-3

    def test_stereo_averaged_to_mono(self, tmp_path):
        t = np.arange(1000) / 44100
        c = (0.5 * np.sin(2 * np.pi * 440 * t) * 32767).astype(np.int16)
        stereo = np.stack([c, -c], axis=1)
        path = tmp_path / "s.wav"
        wavfile.write(path, 44100, stereo)
        back = load_wav(path)
        # silence is valid audio, not an error
        assert np.max(np.abs(back.samples)) < 1e-4

    def test_float32_passthrough(self, tmp_path):
        data = np.linspace(-0.5, 0.5, 256, dtype=np.float32)
        path = tmp_path / "f.wav"
        wavfile.write(path, 22050, data)
        back = load_wav(path)
        assert np.allclose(back.samples, data, atol=1e-7)

    def test_truncated_header_is_unreadable(self, tmp_path):
        path = tmp_path / "bad.wav"
        path.write_bytes(b"RIFF\x00\x00")
        with pytest.raises(UnreadableAudio):
            load_wav(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(UnreadableAudio):
            load_wav(tmp_path / "nope.wav")

    def test_unsupported_8bit(self, tmp_path):
        path = tmp_path / "u8.wav"
        wavfile.write(path, 8000, np.full(100, 128, dtype=np.uint8))
        with pytest.raises(UnsupportedEncoding):
            load_wav(path)


class TestResample:
    def test_same_rate_is_identity(self):
        w = sine(440.0)
        assert resample(w, 44100) is w

    def test_length_arithmetic(self):
        w = sine(440.0, duration=1.0, rate=44100)
        out = resample(w, 22050)
        assert out.sample_rate == 22050
        assert out.samples.size == 22050

    def test_spectral_peak_preserved(self):
        w = sine(440.0, rate=44100)
        out = resample(w, 22050)
        spectrum = np.abs(np.fft.rfft(out.samples))
        peak_hz = np.argmax(spectrum) * 22050 / out.samples.size
        bin_hz = 22050 / out.samples.size
        assert abs(peak_hz - 440.0) <= bin_hz

    def test_round_trip_peak(self):
        w = sine(1234.0, rate=22050)
        back = resample(resample(w, 44100), 22050)
        spectrum = np.abs(np.fft.rfft(back.samples[: w.samples.size]))
        peak_hz = np.argmax(spectrum) * 22050 / w.samples.size
        assert abs(peak_hz - 1234.0) <= 22050 / w.samples.size

    def test_dc_gain_unity(self):
        w = Waveform(np.ones(8000), 32000)
        out = resample(w, 16000)
        mid = out.samples[100:-100]
        assert np.allclose(mid, 1.0, atol=1e-6)

    def test_bad_rate(self):
        with pytest.raises(ValueError):
            resample(sine(440.0), 0)


class TestSynthNote:
    def test_pure_tone_peak_at_carrier(self):
        spec = SynthSpec(carrier_freq=440.0, n_partials=1, noise_level=0.0)
        w, meta = synth_note(spec, 22050, seed=3)
        spectrum = np.abs(np.fft.rfft(w.samples))
        peak_hz = np.argmax(spectrum) * 22050 / w.samples.size
        assert abs(peak_hz - 440.0) < 2.0
        assert meta.technique == "ordinario"
        assert meta.pitch == "A4"

    def test_am_envelope_modulation_peak(self):
        from scipy.signal import hilbert

        spec = SynthSpec(carrier_freq=440.0, n_partials=1, am_rate=6.0,
                         am_depth=0.9, noise_level=0.0)
        w, _ = synth_note(spec, 22050, seed=3)
        env = np.abs(hilbert(w.samples))
        env = env - env.mean()
        spectrum = np.abs(np.fft.rfft(env))
        freqs = np.fft.rfftfreq(env.size, 1 / 22050)
        keep = freqs <= 50.0
        peak = freqs[keep][np.argmax(spectrum[keep])]
        assert abs(peak - 6.0) < 0.5

    def test_deterministic(self):
        spec = SynthSpec(carrier_freq=330.0, n_partials=5, noise_level=0.1)
        w1, _ = synth_note(spec, 22050, seed=11)
        w2, _ = synth_note(spec, 22050, seed=11)
        assert np.array_equal(w1.samples, w2.samples)

    def test_seed_changes_noise(self):
        spec = SynthSpec(carrier_freq=330.0, n_partials=5, noise_level=0.1)
        w1, _ = synth_note(spec, 22050, seed=11)
        w2, _ = synth_note(spec, 22050, seed=12)
        assert not np.array_equal(w1.samples, w2.samples)

    def test_never_clips(self):
        spec = SynthSpec(carrier_freq=220.0, n_partials=8, am_rate=6.0,
                         am_depth=1.0, noise_level=0.2)
        w, _ = synth_note(spec, 22050, seed=5)
        assert np.max(np.abs(w.samples)) <= 0.9 + 1e-12
        assert np.isfinite(w.rms())

    def test_aliasing_rejected(self):
        spec = SynthSpec(carrier_freq=4000.0, n_partials=4)
        with pytest.raises(ValueError, match="aliasing"):
            synth_note(spec, 22050, seed=0)

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            SynthSpec(carrier_freq=440.0, am_depth=1.5)
        with pytest.raises(ValueError):
            SynthSpec(carrier_freq=-1.0)
