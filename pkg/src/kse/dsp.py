"""Signal-domain operations.

STFT analysis/synthesis, SNR-controlled mixing, IRM/IBM target
construction, log-spectral features with temporal context, mask
application, synthetic corpus generation, and WAV I/O.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.io.wavfile
import scipy.signal

from .data import Dataset, UtteranceGroup  # noqa: F401  (re-exported)
from .errors import ConfigError, DataError, StorageError

LOG_EPS = 1e-10

# Non-overlapping block size (samples) for active-frame power estimation.
_SNR_BLOCK = 512
_ACTIVE_FRACTION = 0.01

NOISE_KINDS = ("white", "ssn", "babble")


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).ravel()
        if self.sample_rate <= 0:
            raise DataError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(self.samples)):
            raise DataError("waveform samples must be finite")

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


@dataclass
class Spectrogram:
    """Complex STFT frames, one frame per row, onesided bins."""

    frames: np.ndarray
    frame_len: int
    hop: int
    sample_rate: int
    window_id: str = "sqrt_hann"
    n_samples: Optional[int] = None

    def __post_init__(self):
        if self.frames.ndim != 2 or self.frames.shape[1] != self.n_bins:
            raise DataError(
                f"expected {self.n_bins} bins for frame_len {self.frame_len}, "
                f"got frames of shape {self.frames.shape}"
            )
        if self.hop > self.frame_len:
            raise DataError("hop must not exceed frame_len")

    @property
    def n_bins(self) -> int:
        return self.frame_len // 2 + 1

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    def magnitudes(self) -> np.ndarray:
        return np.abs(self.frames)


def window(window_id: str, frame_len: int) -> np.ndarray:
    """Periodic analysis windows; sqrt_hann is self-paired for COLA."""
    n = np.arange(frame_len)
    if window_id == "sqrt_hann":
        return np.sin(np.pi * n / frame_len)
    if window_id == "hann":
        return np.sin(np.pi * n / frame_len) ** 2
    if window_id == "rect":
        return np.ones(frame_len)
    raise ConfigError(f"unknown window '{window_id}'")


def _check_framing(frame_len: int, hop: int) -> None:
    if frame_len <= 0 or frame_len & (frame_len - 1):
        raise ConfigError(f"frame_len must be a power of two, got {frame_len}")
    if hop <= 0 or frame_len % hop:
        raise ConfigError(f"hop must divide frame_len, got {hop}/{frame_len}")


def stft(
    w: Waveform,
    frame_len: int = 512,
    hop: int = 256,
    window_id: str = "sqrt_hann",
) -> Spectrogram:
    """Windowed FFT per frame, onesided bins.

    The signal is zero-padded by frame_len - hop on the left and to a
    whole number of frames on the right, so every input sample receives
    full overlap-add weight and the istft roundtrip is exact.
    """
    _check_framing(frame_len, hop)
    x = w.samples
    if len(x) < frame_len:
        raise DataError(f"signal of {len(x)} samples is shorter than one frame")
    win = window(window_id, frame_len)
    pad = frame_len - hop
    total = pad + len(x) + pad
    n_frames = math.ceil((total - frame_len) / hop) + 1
    total = frame_len + (n_frames - 1) * hop
    z = np.zeros(total)
    z[pad : pad + len(x)] = x
    frames = np.lib.stride_tricks.sliding_window_view(z, frame_len)[::hop]
    spec = np.fft.rfft(frames * win, axis=1)
    return Spectrogram(
        frames=spec,
        frame_len=frame_len,
        hop=hop,
        sample_rate=w.sample_rate,
        window_id=window_id,
        n_samples=len(x),
    )


def _cola_weights(window_id: str, frame_len: int, hop: int, n_frames: int):
    """OLA sum of analysis*synthesis window; rejects non-COLA pairs."""
    win = window(window_id, frame_len)
    ww = win * win
    total = frame_len + (n_frames - 1) * hop
    den = np.zeros(total)
    for t in range(n_frames):
        den[t * hop : t * hop + frame_len] += ww
    pad = frame_len - hop
    interior = den[pad : total - pad] if total > 2 * pad else den[:0]
    if interior.size:
        lo, hi = interior.min(), interior.max()
        if hi - lo > 1e-8 * max(hi, 1.0):
            raise ConfigError(
                f"window '{window_id}' with hop {hop}/{frame_len} does not "
                "satisfy constant overlap-add; use sqrt_hann at 50% overlap"
            )
    return win, den


def istft(s: Spectrogram) -> Waveform:
    """Overlap-add synthesis with synthesis-window normalization."""
    win, den = _cola_weights(s.window_id, s.frame_len, s.hop, s.n_frames)
    frames = np.fft.irfft(s.frames, n=s.frame_len, axis=1) * win
    total = s.frame_len + (s.n_frames - 1) * s.hop
    y = np.zeros(total)
    for t in range(s.n_frames):
        y[t * s.hop : t * s.hop + s.frame_len] += frames[t]
    good = den > 1e-10
    y[good] /= den[good]
    y[~good] = 0.0
    pad = s.frame_len - s.hop
    if s.n_samples is not None:
        y = y[pad : pad + s.n_samples]
    elif total > 2 * pad:
        y = y[pad : total - pad]
    return Waveform(samples=y, sample_rate=s.sample_rate)


def _active_mask(x: np.ndarray) -> np.ndarray:
    """Sample mask of blocks whose energy exceeds 1% of the peak block."""
    n_blocks = math.ceil(len(x) / _SNR_BLOCK)
    energies = np.zeros(n_blocks)
    for k in range(n_blocks):
        seg = x[k * _SNR_BLOCK : (k + 1) * _SNR_BLOCK]
        energies[k] = float(np.sum(seg * seg))
    peak = energies.max() if n_blocks else 0.0
    mask = np.zeros(len(x), dtype=bool)
    for k in np.nonzero(energies > _ACTIVE_FRACTION * peak)[0]:
        mask[k * _SNR_BLOCK : (k + 1) * _SNR_BLOCK] = True
    return mask


def measure_snr(speech: Waveform, noise: Waveform) -> float:
    """SNR in dB over the speech-active blocks."""
    if len(noise) != len(speech):
        raise DataError(
            f"length mismatch: speech {len(speech)} vs noise {len(noise)}"
        )
    active = _active_mask(speech.samples)
    if not active.any():
        raise DataError("silent speech: zero active power")
    p_speech = float(np.mean(speech.samples[active] ** 2))
    p_noise = float(np.mean(noise.samples[active] ** 2))
    if p_noise == 0.0:
        raise DataError("noise has zero power over the active frames")
    return 10.0 * math.log10(p_speech / p_noise)


def mix_at_snr(
    speech: Waveform,
    noise: Waveform,
    snr_db: float,
    seed: int = 0,
) -> tuple[Waveform, Waveform]:
    """Scale noise so the speech-active SNR hits snr_db exactly.

    The noise enters at a seeded random offset and is cyclically extended
    when shorter than the speech. Returns (noisy, noise_used) with
    noisy = speech + noise_used sample-wise.
    """
    if speech.sample_rate != noise.sample_rate:
        raise DataError(
            f"sample rates differ: {speech.sample_rate} vs {noise.sample_rate}"
        )
    n = len(speech)
    if len(noise) == 0:
        raise DataError("empty noise")
    rng = np.random.default_rng(seed)
    if len(noise) >= n:
        offset = int(rng.integers(0, len(noise) - n + 1))
        seg = noise.samples[offset : offset + n]
    else:
        offset = int(rng.integers(0, len(noise)))
        idx = (offset + np.arange(n)) % len(noise)
        seg = noise.samples[idx]

    active = _active_mask(speech.samples)
    if not active.any():
        raise DataError("silent speech: zero active power")
    p_speech = float(np.mean(speech.samples[active] ** 2))
    if p_speech == 0.0:
        raise DataError("silent speech: zero active power")
    p_noise = float(np.mean(seg[active] ** 2))
    if p_noise == 0.0:
        raise DataError("noise segment has zero power over the active frames")
    scale = math.sqrt(p_speech / (p_noise * 10.0 ** (snr_db / 10.0)))
    noise_used = seg * scale
    return (
        Waveform(samples=speech.samples + noise_used, sample_rate=speech.sample_rate),
        Waveform(samples=noise_used, sample_rate=speech.sample_rate),
    )


def _check_aligned(a: Spectrogram, b: Spectrogram) -> None:
    if a.frames.shape != b.frames.shape:
        raise DataError(
            f"spectrogram shapes differ: {a.frames.shape} vs {b.frames.shape}"
        )


def compute_irm(
    speech_spec: Spectrogram,
    noise_spec: Spectrogram,
    beta: float = 0.5,
) -> np.ndarray:
    """Ideal ratio mask (|S|^2 / (|S|^2 + |N|^2))^beta; 0/0 bins are 0."""
    _check_aligned(speech_spec, noise_spec)
    ps = np.abs(speech_spec.frames) ** 2
    pn = np.abs(noise_spec.frames) ** 2
    denom = ps + pn
    ratio = np.divide(ps, denom, out=np.zeros_like(ps), where=denom > 0)
    return ratio**beta if beta != 1.0 else ratio


def compute_ibm(
    speech_spec: Spectrogram,
    noise_spec: Spectrogram,
    lc_db: float = 0.0,
) -> np.ndarray:
    """Ideal binary mask: 1 where local SNR strictly exceeds lc_db."""
    if not math.isfinite(lc_db):
        raise ConfigError(f"local criterion must be finite, got {lc_db}")
    _check_aligned(speech_spec, noise_spec)
    ps = np.abs(speech_spec.frames) ** 2
    pn = np.abs(noise_spec.frames) ** 2
    thresh = 10.0 ** (lc_db / 10.0)
    one = np.where(pn > 0, ps > thresh * pn, ps > 0)
    return one.astype(np.float64)


@dataclass
class FeatureStandardizer:
    """Per-dimension mean/scale fitted on the training split only."""

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "FeatureStandardizer":
        mean = X.mean(axis=0)
        var = X.var(axis=0)
        # dims with (numerically) zero variance standardize to 0
        scale = np.sqrt(var)
        scale[var <= 1e-24] = 0.0
        return cls(mean=mean, scale=scale)

    def transform(self, X: np.ndarray) -> np.ndarray:
        out = X - self.mean
        nz = self.scale > 0
        out[:, nz] /= self.scale[nz]
        out[:, ~nz] = 0.0
        return out


def extract_features(
    noisy_spec: Spectrogram,
    context: int = 2,
    standardizer: Optional[FeatureStandardizer] = None,
) -> np.ndarray:
    """Per-frame log power of every bin, stacked with +-context frames.

    Edge frames replicate the boundary frame. When a standardizer is
    given the output is standardized with its (training-split) statistics;
    otherwise raw log-power features are returned.
    """
    if context < 0:
        raise ConfigError(f"context must be >= 0, got {context}")
    if noisy_spec.n_frames == 0:
        raise DataError("empty spectrogram")
    logp = np.log(np.abs(noisy_spec.frames) ** 2 + LOG_EPS)
    n = logp.shape[0]
    cols = []
    for off in range(-context, context + 1):
        idx = np.clip(np.arange(n) + off, 0, n - 1)
        cols.append(logp[idx])
    X = np.concatenate(cols, axis=1)
    if standardizer is not None:
        X = standardizer.transform(X)
    return X


def apply_mask(noisy_spec: Spectrogram, mask: np.ndarray) -> Spectrogram:
    """Per-bin gain on the complex frames; phase is untouched."""
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != noisy_spec.frames.shape:
        raise DataError(
            f"mask shape {mask.shape} does not match frames "
            f"{noisy_spec.frames.shape}"
        )
    return Spectrogram(
        frames=noisy_spec.frames * mask,
        frame_len=noisy_spec.frame_len,
        hop=noisy_spec.hop,
        sample_rate=noisy_spec.sample_rate,
        window_id=noisy_spec.window_id,
        n_samples=noisy_spec.n_samples,
    )


# ---------------------------------------------------------------------------
# Synthetic corpus
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CorpusConfig:
    utterances: int = 20
    duration_s: float = 1.5
    sample_rate: int = 16000
    noises: tuple[str, ...] = ("white", "ssn")
    seed: int = 0

    def validate(self) -> None:
        if self.utterances < 1:
            raise ConfigError(f"utterances must be >= 1, got {self.utterances}")
        if self.duration_s <= 0:
            raise ConfigError(f"duration_s must be positive, got {self.duration_s}")
        if self.sample_rate <= 0:
            raise ConfigError(f"sample_rate must be positive, got {self.sample_rate}")
        if not self.noises:
            raise ConfigError("at least one noise kind is required")
        for kind in self.noises:
            if kind not in NOISE_KINDS:
                raise ConfigError(
                    f"unknown noise kind '{kind}' (known: {', '.join(NOISE_KINDS)})"
                )


def synth_speech(n_samples: int, sample_rate: int, rng: np.random.Generator):
    """Harmonic tone complex with a randomized pitch contour, syllabic
    amplitude envelope, and a speech-like spectral tilt (energy below
    4 kHz by construction)."""
    t = np.arange(n_samples) / sample_rate
    duration = n_samples / sample_rate

    # piecewise-linear pitch contour between random anchors
    base = rng.uniform(95.0, 230.0)
    n_anchor = max(3, int(duration / 0.35) + 1)
    anchor_t = np.linspace(0.0, duration, n_anchor)
    anchor_f = base * 2.0 ** rng.uniform(-0.25, 0.25, size=n_anchor)
    f0 = np.interp(t, anchor_t, anchor_f)
    phase = 2.0 * np.pi * np.cumsum(f0) / sample_rate

    max_harm = max(1, int(3800.0 / anchor_f.max()))
    sig = np.zeros(n_samples)
    for k in range(1, max_harm + 1):
        # flat-ish comb: keeps upper harmonics strong enough that the
        # per-bin SNR distribution tracks the global mixing SNR
        amp = k ** -0.5 * rng.uniform(0.6, 1.0)
        sig += amp * np.sin(k * phase + rng.uniform(0, 2 * np.pi))

    # syllabic envelope: raised-cosine bursts separated by short gaps
    env = np.zeros(n_samples)
    pos = rng.uniform(0.0, 0.08)
    while pos < duration:
        width = rng.uniform(0.10, 0.25)
        onset = int(pos * sample_rate)
        length = min(int(width * sample_rate), n_samples - onset)
        if length > 1:
            burst = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(length) / length)
            env[onset : onset + length] = np.maximum(
                env[onset : onset + length], rng.uniform(0.5, 1.0) * burst
            )
        gap = rng.uniform(0.02, 0.06)
        if rng.uniform() < 0.2:
            gap += rng.uniform(0.1, 0.25)
        pos += width + gap
    sig *= env

    # faint breath noise, lowpassed to keep the spectral tilt
    breath = scipy.signal.lfilter([1.0], [1.0, -0.95], rng.standard_normal(n_samples))
    sig += 0.004 * breath * env

    peak = np.max(np.abs(sig))
    if peak > 0:
        sig *= 0.25 / peak
    return sig


def synth_noise(kind: str, n_samples: int, sample_rate: int, rng):
    """Noise generators: white, speech-shaped (fixed one-pole filter),
    and amplitude-modulated babble-like."""
    white = rng.standard_normal(n_samples)
    if kind == "white":
        out = white
    elif kind == "ssn":
        out = scipy.signal.lfilter([1.0], [1.0, -0.9], white)
    elif kind == "babble":
        shaped = scipy.signal.lfilter([1.0], [1.0, -0.9], white)
        mod_src = rng.standard_normal(n_samples)
        # ~4 Hz envelope fluctuation
        alpha = math.exp(-2.0 * math.pi * 4.0 / sample_rate)
        env = scipy.signal.lfilter([1.0 - alpha], [1.0, -alpha], np.abs(mod_src))
        env /= max(np.max(env), 1e-12)
        out = shaped * (0.35 + 0.65 * env)
    else:
        raise ConfigError(f"unknown noise kind '{kind}'")
    rms = math.sqrt(float(np.mean(out**2)))
    return out * (0.05 / rms)


def synth_corpus(cfg: CorpusConfig, seed: Optional[int] = None):
    """Deterministic synthetic corpus: one (clean, noise) pair per
    utterance, noise kinds cycling through cfg.noises. Each utterance is
    generated from seed + utterance_index, so the corpus is reproducible
    and utterances are independent of the total count."""
    cfg.validate()
    base_seed = cfg.seed if seed is None else seed
    sr = cfg.sample_rate
    n = int(round(cfg.duration_s * sr))
    pairs = []
    for i in range(cfg.utterances):
        rng = np.random.default_rng(base_seed + i)
        clean = synth_speech(n, sr, rng)
        kind = cfg.noises[i % len(cfg.noises)]
        # noise runs longer than the speech so mixing can pick an offset
        noise = synth_noise(kind, int(n * 1.5), sr, rng)
        pairs.append(
            (Waveform(clean, sr), Waveform(noise, sr))
        )
    return pairs


# ---------------------------------------------------------------------------
# WAV I/O
# ---------------------------------------------------------------------------


def read_wav(path) -> Waveform:
    """Mono PCM16 or float32 WAV; everything else is rejected."""
    try:
        rate, data = scipy.io.wavfile.read(path)
    except FileNotFoundError:
        raise StorageError(f"no such file: {path}") from None
    except ValueError as exc:
        raise StorageError(f"unreadable WAV {path}: {exc}") from None
    if data.ndim != 1:
        raise DataError(
            f"{path}: expected mono audio, got {data.shape[1]} channels"
        )
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise StorageError(
            f"{path}: unsupported sample format {data.dtype}; "
            "use 16-bit PCM or 32-bit float"
        )
    return Waveform(samples=samples, sample_rate=int(rate))


def write_wav(path, w: Waveform, fmt: str = "float32") -> None:
    if fmt == "float32":
        data = w.samples.astype(np.float32)
    elif fmt == "pcm16":
        clipped = np.clip(w.samples, -1.0, 1.0)
        data = np.round(clipped * 32767.0).astype(np.int16)
    else:
        raise ConfigError(f"unknown WAV format '{fmt}'")
    try:
        scipy.io.wavfile.write(path, w.sample_rate, data)
    except OSError as exc:
        raise StorageError(f"cannot write {path}: {exc}") from None
