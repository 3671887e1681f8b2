import numpy as np
import pytest

from notesim.audio import SynthSpec, Waveform, synth_note
from notesim.mfcc import (MfccConfig, hz_to_mel, mel_band_centers,
                          mel_spectrogram, mfcc, poly_dimension,
                          summarize_mean, summarize_poly)

SR = 22050


def tone(freq=440.0, **kw):
    w, _ = synth_note(SynthSpec(carrier_freq=freq, **kw), SR, 3)
    return w


class TestMelSpectrogram:
    def test_zero_in_zero_out(self):
        w = Waveform(np.zeros(SR), SR)
        assert np.allclose(mel_spectrogram(w), 0.0)

    def test_sine_argmax_at_nearest_mel_band(self):
        w = tone(freq=1000.0, n_partials=1)
        mel = mel_spectrogram(w)
        centers = mel_band_centers(40, SR)
        expected = np.argmin(np.abs(hz_to_mel(centers) - hz_to_mel(1000.0)))
        argmax = np.argmax(mel, axis=0)
        # steady-state columns all agree with the expected band
        steady = argmax[len(argmax) // 4:]
        assert np.all(steady == expected)

    def test_homogeneity(self):
        w = tone(n_partials=3)
        doubled = Waveform(2 * w.samples, SR)
        assert np.allclose(mel_spectrogram(doubled), 2 * mel_spectrogram(w),
                           rtol=1e-10, atol=1e-14)

    def test_nonnegative(self):
        mel = mel_spectrogram(tone(n_partials=5, noise_level=0.1))
        assert np.all(mel >= 0)

    def test_too_short_waveform(self):
        with pytest.raises(ValueError):
            mel_spectrogram(Waveform(np.ones(100), SR))


class TestMfcc:
    def test_gain_moves_only_coefficient_zero(self):
        rng = np.random.default_rng(0)
        w = Waveform(rng.standard_normal(SR) * 0.05, SR)
        scaled = Waveform(w.samples * 10.0, SR)
        a = mfcc(w)
        b = mfcc(scaled)
        assert np.max(np.abs(a[1:] - b[1:])) < 1e-6
        offsets = b[0] - a[0]
        assert np.allclose(offsets, offsets[0], atol=1e-6)
        assert abs(offsets[0]) > 1.0

    def test_constant_mel_spectrum_gives_zero_higher_coeffs(self):
        # DCT of a constant log-mel row is zero outside coefficient 0
        from scipy.fft import dct

        row = np.full(40, 3.7)
        coeffs = dct(row, type=2, norm="ortho")
        assert np.allclose(coeffs[1:], 0.0, atol=1e-12)

    def test_shape_and_40_coeff_variant(self):
        w = tone(n_partials=4)
        out13 = mfcc(w, MfccConfig(n_coeffs=13))
        out40 = mfcc(w, MfccConfig(n_coeffs=40))
        assert out13.shape[0] == 13
        assert out40.shape[0] == 40
        assert np.allclose(out13, out40[:13])

    def test_config_validation(self):
        with pytest.raises(ValueError):
            MfccConfig(n_coeffs=41, n_mel_bands=40)


class TestSummaries:
    def test_mean_single_frame_identity(self):
        frame = np.arange(13.0)[:, None]
        assert np.allclose(summarize_mean(frame), np.arange(13.0))

    def test_mean_of_opposite_frames_is_zero(self):
        v = np.arange(13.0)
        frames = np.stack([v, -v], axis=1)
        assert np.allclose(summarize_mean(frames), 0.0)

    def test_mean_constant(self):
        frames = np.full((13, 5), 2.5)
        assert np.allclose(summarize_mean(frames), 2.5)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            summarize_mean(np.zeros((13, 0)))

    def test_poly_dimensions(self):
        assert poly_dimension(13, 2) == 104
        assert poly_dimension(13, 3) == 559
        assert summarize_poly(np.ones((13, 4)), max_degree=2).size == 104
        assert summarize_poly(np.ones((13, 4)), max_degree=3).size == 559

    def test_poly_constant_unit_trajectories(self):
        out = summarize_poly(np.ones((13, 7)), max_degree=3)
        assert np.allclose(out, 1.0)

    def test_poly_zero_trajectories(self):
        out = summarize_poly(np.zeros((13, 7)), max_degree=3)
        assert np.allclose(out, 0.0)

    def test_poly_matches_bruteforce_on_small_case(self):
        rng = np.random.default_rng(1)
        frames = rng.standard_normal((3, 11))
        out = summarize_poly(frames, max_degree=2)
        expected = []
        for i in range(3):
            expected.append(frames[i].mean())
        for i in range(3):
            for j in range(i, 3):
                expected.append((frames[i] * frames[j]).mean())
        assert np.allclose(out, expected)

    def test_time_permutation_invariance(self):
        rng = np.random.default_rng(2)
        frames = rng.standard_normal((13, 50))
        perm = rng.permutation(50)
        assert np.array_equal(summarize_mean(frames), summarize_mean(frames[:, perm]))
        assert np.array_equal(summarize_poly(frames), summarize_poly(frames[:, perm]))

    def test_control_dimension_near_scattering(self):
        # dimensionality control: 400 <= dim <= 600 at the chosen degree
        assert 400 <= poly_dimension(13, 3) <= 600
