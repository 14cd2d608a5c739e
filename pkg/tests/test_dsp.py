"""STFT roundtrips, mixing, mask targets, features, corpus, WAV I/O."""

import math

import numpy as np
import pytest

from kse.dsp import (
    CorpusConfig,
    FeatureStandardizer,
    Spectrogram,
    Waveform,
    apply_mask,
    compute_ibm,
    compute_irm,
    extract_features,
    istft,
    measure_snr,
    mix_at_snr,
    read_wav,
    stft,
    synth_corpus,
    write_wav,
)
from kse.errors import ConfigError, DataError, StorageError

SR = 16000


def tone_burst(n=SR, sr=SR, seed=0):
    rng = np.random.default_rng(seed)
    t = np.arange(n) / sr
    x = 0.3 * np.sin(2 * np.pi * 220 * t) + 0.1 * rng.standard_normal(n)
    return Waveform(x * 0.5, sr)


class TestStft:
    def test_roundtrip_exact(self):
        w = tone_burst()
        for frame_len, hop in [(512, 256), (256, 128), (512, 128)]:
            s = stft(w, frame_len, hop, "sqrt_hann")
            back = istft(s)
            assert len(back) == len(w)
            assert np.max(np.abs(back.samples - w.samples)) <= 1e-6

    def test_roundtrip_nonzero_first_sample(self):
        rng = np.random.default_rng(1)
        w = Waveform(rng.uniform(-0.5, 0.5, 4096), SR)
        assert abs(w.samples[0]) > 1e-3
        back = istft(stft(w))
        assert np.max(np.abs(back.samples - w.samples)) <= 1e-6

    def test_zero_signal_zero_spectrogram(self):
        s = stft(Waveform(np.zeros(2048), SR))
        assert np.all(s.frames == 0)
        assert np.all(istft(s).samples == 0)

    def test_sine_at_exact_bin_concentrates(self):
        frame_len = 512
        k = 32  # bin index
        freq = k * SR / frame_len
        t = np.arange(frame_len * 4) / SR
        w = Waveform(0.5 * np.sin(2 * np.pi * freq * t), SR)
        s = stft(w, frame_len, frame_len, "rect")
        # pick an interior frame fully covered by the sine
        mags = np.abs(s.frames[1]) ** 2
        assert mags[k] / mags.sum() >= 0.99

    def test_linearity(self):
        w = tone_burst(seed=2)
        s = stft(w)
        doubled = Spectrogram(
            frames=2.0 * s.frames,
            frame_len=s.frame_len,
            hop=s.hop,
            sample_rate=s.sample_rate,
            window_id=s.window_id,
            n_samples=s.n_samples,
        )
        np.testing.assert_allclose(
            istft(doubled).samples, 2.0 * istft(s).samples, atol=1e-12
        )

    def test_framing_validation(self):
        w = tone_burst()
        with pytest.raises(ConfigError, match="power of two"):
            stft(w, 500, 250)
        with pytest.raises(ConfigError, match="hop"):
            stft(w, 512, 300)
        with pytest.raises(DataError, match="shorter"):
            stft(Waveform(np.zeros(100), SR), 512, 256)

    def test_non_cola_rejected(self):
        w = tone_burst()
        s = stft(w, 512, 256, "hann")  # hann^2 at 50% overlap is not COLA
        with pytest.raises(ConfigError, match="overlap-add"):
            istft(s)


class TestMixAtSnr:
    def test_equal_power_zero_snr_unit_scale(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal(SR) * 0.1
        speech = Waveform(x, SR)
        noise = Waveform(x.copy(), SR)  # identical power profile
        noisy, used = mix_at_snr(speech, noise, 0.0, seed=0)
        np.testing.assert_allclose(used.samples, speech.samples, rtol=1e-12)

    def test_plus5_equal_power_scale(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal(SR) * 0.1
        speech = Waveform(x, SR)
        noise = Waveform(x.copy(), SR)
        _, used = mix_at_snr(speech, noise, 5.0, seed=0)
        scale = used.samples[100] / speech.samples[100]
        assert scale == pytest.approx(10 ** (-5 / 20), rel=1e-9)

    def test_measured_snr_matches_request(self):
        rng = np.random.default_rng(5)
        speech = tone_burst(seed=5)
        noise = Waveform(rng.standard_normal(3 * SR) * 0.03, SR)
        for snr in (-5.0, 0.0, 5.0):
            noisy, used = mix_at_snr(speech, noise, snr, seed=7)
            assert measure_snr(speech, used) == pytest.approx(snr, abs=1e-6)
            # mixing is linear, sample for sample
            assert np.array_equal(
                noisy.samples, speech.samples + used.samples
            )

    def test_short_noise_cyclically_extended(self):
        speech = tone_burst()
        noise = Waveform(np.sin(np.arange(2000) * 0.1) * 0.1, SR)
        noisy, used = mix_at_snr(speech, noise, 0.0, seed=1)
        assert len(used) == len(speech)

    def test_silent_speech_rejected(self):
        with pytest.raises(DataError, match="silent"):
            mix_at_snr(
                Waveform(np.zeros(SR), SR),
                Waveform(np.ones(SR), SR),
                0.0,
            )

    def test_sample_rate_mismatch(self):
        with pytest.raises(DataError, match="sample rates"):
            mix_at_snr(tone_burst(), Waveform(np.ones(SR), 8000), 0.0)


def small_specs(seed=0):
    rng = np.random.default_rng(seed)
    s = stft(tone_burst(seed=seed))
    n = Spectrogram(
        frames=rng.standard_normal(s.frames.shape)
        + 1j * rng.standard_normal(s.frames.shape),
        frame_len=s.frame_len,
        hop=s.hop,
        sample_rate=s.sample_rate,
        window_id=s.window_id,
        n_samples=s.n_samples,
    )
    return s, n


def const_spec(value, n_frames=6, frame_len=16, hop=8):
    frames = np.full((n_frames, frame_len // 2 + 1), value, dtype=complex)
    return Spectrogram(frames, frame_len, hop, SR, "sqrt_hann")


class TestMasks:
    def test_irm_equal_energy_beta_half(self):
        s = const_spec(1.0)
        n = const_spec(1.0)
        mask = compute_irm(s, n, beta=0.5)
        np.testing.assert_allclose(mask, math.sqrt(0.5))

    def test_irm_zero_noise_is_one_and_both_zero_is_zero(self):
        s = const_spec(1.0)
        z = const_spec(0.0)
        assert np.all(compute_irm(s, z) == 1.0)
        assert np.all(compute_irm(z, z) == 0.0)

    def test_irm_beta1_complement(self):
        s, n = small_specs(6)
        m1 = compute_irm(s, n, beta=1.0)
        m2 = compute_irm(n, s, beta=1.0)
        total = np.abs(s.frames) ** 2 + np.abs(n.frames) ** 2
        np.testing.assert_allclose((m1 + m2)[total > 0], 1.0, rtol=1e-12)

    def test_irm_in_unit_interval(self):
        s, n = small_specs(7)
        mask = compute_irm(s, n, beta=0.5)
        assert np.all(mask >= 0.0) and np.all(mask <= 1.0)

    def test_ibm_cases(self):
        s = const_spec(np.sqrt(10.0))
        n = const_spec(1.0)
        assert np.all(compute_ibm(s, n, lc_db=0.0) == 1.0)  # ratio 10 > 0 dB
        assert np.all(compute_ibm(n, n, lc_db=0.0) == 0.0)  # equality is 0
        z = const_spec(0.0)
        assert np.all(compute_ibm(s, z, lc_db=0.0) == 1.0)  # zero noise
        assert np.all(compute_ibm(z, n, lc_db=0.0) == 0.0)  # zero speech

    def test_ibm_requires_finite_lc(self):
        s, n = small_specs(8)
        with pytest.raises(ConfigError):
            compute_ibm(s, n, lc_db=float("-inf"))

    def test_shape_mismatch(self):
        s = const_spec(1.0, n_frames=6)
        n = const_spec(1.0, n_frames=7)
        with pytest.raises(DataError):
            compute_irm(s, n)


class TestFeatures:
    def test_context_zero_dim(self):
        s, _ = small_specs(9)
        X = extract_features(s, context=0)
        assert X.shape == (s.n_frames, s.n_bins)

    def test_context_stacking_dim_and_edges(self):
        s, _ = small_specs(10)
        X = extract_features(s, context=2)
        assert X.shape == (s.n_frames, s.n_bins * 5)
        X0 = extract_features(s, context=0)
        # first frame replicates itself for the left context slots
        np.testing.assert_array_equal(X[0, : s.n_bins], X0[0])
        np.testing.assert_array_equal(X[0, s.n_bins : 2 * s.n_bins], X0[0])

    def test_constant_spectrogram_features(self):
        s = const_spec(0.5, n_frames=10)
        X = extract_features(s, context=1)
        assert np.all(X == X[0, 0])
        std = FeatureStandardizer.fit(X)
        assert np.all(std.transform(X) == 0.0)

    def test_standardized_train_stats(self):
        s, _ = small_specs(11)
        X = extract_features(s, context=2)
        std = FeatureStandardizer.fit(X)
        Z = std.transform(X.copy())
        keep = std.scale > 0
        assert np.max(np.abs(Z[:, keep].mean(axis=0))) <= 1e-6
        assert np.max(np.abs(Z[:, keep].var(axis=0) - 1.0)) <= 1e-6


class TestApplyMask:
    def test_ones_identity_zeros_silence(self):
        s, _ = small_specs(12)
        ones = apply_mask(s, np.ones(s.frames.shape))
        assert np.array_equal(ones.frames, s.frames)
        zeros = apply_mask(s, np.zeros(s.frames.shape))
        assert np.all(istft(zeros).samples == 0.0)

    def test_oracle_irm_never_amplifies(self):
        s, n = small_specs(13)
        mask = compute_irm(s, n, beta=0.5)
        noisy = Spectrogram(
            frames=s.frames + n.frames,
            frame_len=s.frame_len,
            hop=s.hop,
            sample_rate=s.sample_rate,
            window_id=s.window_id,
        )
        out = apply_mask(noisy, mask)
        assert np.all(np.abs(out.frames) <= np.abs(noisy.frames) + 1e-15)


class TestSynthCorpus:
    def test_deterministic_and_counted(self):
        cfg = CorpusConfig(utterances=5, duration_s=0.5, seed=3)
        a = synth_corpus(cfg)
        b = synth_corpus(cfg)
        assert len(a) == 5
        for (ca, na), (cb, nb) in zip(a, b):
            assert np.array_equal(ca.samples, cb.samples)
            assert np.array_equal(na.samples, nb.samples)

    def test_speech_energy_mostly_below_4khz(self):
        cfg = CorpusConfig(utterances=4, duration_s=1.0, seed=4)
        for clean, _ in synth_corpus(cfg):
            spec = np.abs(np.fft.rfft(clean.samples)) ** 2
            freqs = np.fft.rfftfreq(len(clean), 1.0 / clean.sample_rate)
            frac = spec[freqs < 4000].sum() / spec.sum()
            assert frac >= 0.90

    def test_bad_config(self):
        with pytest.raises(ConfigError):
            CorpusConfig(utterances=0).validate()
        with pytest.raises(ConfigError):
            CorpusConfig(noises=("thunder",)).validate()


class TestWavIO:
    def test_roundtrip_float32(self, tmp_path):
        w = tone_burst(seed=14)
        path = tmp_path / "x.wav"
        write_wav(path, w, fmt="float32")
        back = read_wav(path)
        assert back.sample_rate == w.sample_rate
        np.testing.assert_allclose(back.samples, w.samples, atol=1e-7)

    def test_roundtrip_pcm16(self, tmp_path):
        w = tone_burst(seed=15)
        path = tmp_path / "x16.wav"
        write_wav(path, w, fmt="pcm16")
        back = read_wav(path)
        np.testing.assert_allclose(back.samples, w.samples, atol=1e-4)

    def test_multichannel_rejected(self, tmp_path):
        import scipy.io.wavfile

        path = tmp_path / "stereo.wav"
        scipy.io.wavfile.write(
            path, SR, np.zeros((100, 2), dtype=np.float32)
        )
        with pytest.raises(DataError, match="mono"):
            read_wav(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(StorageError):
            read_wav(tmp_path / "nope.wav")
