"""Evaluation metrics: MSE, per-channel MSE, mask accuracy, and STOI.

STOI follows the canonical short-time objective intelligibility recipe:
10 kHz analysis rate, 25.6 ms frames at 50% overlap, 15 one-third-octave
bands from 150 Hz, 384 ms segments, energy normalization with -15 dB SDR
clipping, 40 dB silent-frame removal, and the mean of band/segment
correlations (negative cells clipped to 0). PESQ is deliberately not
implemented; reports carry an explicit "unavailable" marker instead.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
import scipy.signal

from .dsp import Waveform
from .errors import DataError

_EPS = np.finfo(np.float64).eps

# canonical STOI constants
_FS = 10000
_FRAME = 256
_HOP = 128
_NFFT = 512
_NUM_BANDS = 15
_MIN_FREQ = 150.0
_SEG_FRAMES = 30  # 384 ms at 10 kHz / 128-sample hop
_SDR_CLIP_DB = -15.0
_DYN_RANGE_DB = 40.0


def mse(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean squared error over all frames and channels."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DataError(f"shape mismatch: {pred.shape} vs {target.shape}")
    return float(np.mean((pred - target) ** 2))


def mse_per_channel(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Per-column mean squared error, channel order preserved."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DataError(f"shape mismatch: {pred.shape} vs {target.shape}")
    return np.mean((pred - target) ** 2, axis=0)


def accuracy(pred_binary: np.ndarray, target_binary: np.ndarray) -> float:
    """Fraction of matching entries between two binary matrices."""
    pred_binary = np.asarray(pred_binary)
    target_binary = np.asarray(target_binary)
    if pred_binary.shape != target_binary.shape:
        raise DataError(
            f"shape mismatch: {pred_binary.shape} vs {target_binary.shape}"
        )
    for name, mat in (("pred", pred_binary), ("target", target_binary)):
        if not np.isin(mat, (0, 1)).all():
            raise DataError(f"{name} matrix is not binary")
    return float(np.mean(pred_binary == target_binary))


def _to_samples(x: Union[Waveform, np.ndarray]) -> np.ndarray:
    if isinstance(x, Waveform):
        return x.samples
    return np.asarray(x, dtype=np.float64).ravel()


def _resample(x: np.ndarray, sr: int) -> np.ndarray:
    if sr == _FS:
        return x
    g = math.gcd(int(sr), _FS)
    return scipy.signal.resample_poly(x, _FS // g, sr // g)


def _frame(x: np.ndarray, win: np.ndarray) -> np.ndarray:
    n_frames = 1 + (len(x) - _FRAME) // _HOP
    idx = np.arange(_FRAME)[None, :] + _HOP * np.arange(n_frames)[:, None]
    return x[idx] * win


def _remove_silent_frames(x: np.ndarray, y: np.ndarray):
    """Drop frames more than 40 dB below the loudest clean frame and
    rebuild both signals by overlap-add of the kept frames."""
    win = np.hanning(_FRAME + 2)[1:-1]
    xf = _frame(x, win)
    yf = _frame(y, win)
    energies = 20.0 * np.log10(np.linalg.norm(xf, axis=1) + _EPS)
    keep = energies > energies.max() - _DYN_RANGE_DB
    xf, yf = xf[keep], yf[keep]
    n = xf.shape[0]
    out_len = _FRAME + (n - 1) * _HOP if n else 0
    xs = np.zeros(out_len)
    ys = np.zeros(out_len)
    for t in range(n):
        xs[t * _HOP : t * _HOP + _FRAME] += xf[t]
        ys[t * _HOP : t * _HOP + _FRAME] += yf[t]
    return xs, ys


def _third_octave_matrix() -> np.ndarray:
    f = np.linspace(0, _FS / 2, _NFFT // 2 + 1)
    k = np.arange(_NUM_BANDS)
    f_lo = _MIN_FREQ * 2.0 ** ((2 * k - 1) / 6.0)
    f_hi = _MIN_FREQ * 2.0 ** ((2 * k + 1) / 6.0)
    obm = np.zeros((_NUM_BANDS, len(f)))
    for i in range(_NUM_BANDS):
        lo = int(np.argmin(np.abs(f - f_lo[i])))
        hi = int(np.argmin(np.abs(f - f_hi[i])))
        obm[i, lo:hi] = 1.0
    return obm


def _band_envelopes(x: np.ndarray) -> np.ndarray:
    win = np.hanning(_FRAME + 2)[1:-1]
    frames = _frame(x, win)
    spec = np.abs(np.fft.rfft(frames, n=_NFFT, axis=1)) ** 2
    return np.sqrt(_third_octave_matrix() @ spec.T)  # bands x frames


def stoi(
    clean: Union[Waveform, np.ndarray],
    processed: Union[Waveform, np.ndarray],
    sample_rate: int,
) -> float:
    """Short-time objective intelligibility of `processed` against
    `clean`, in [0, 1]. Inputs are resampled to 10 kHz internally."""
    x = _resample(_to_samples(clean), sample_rate)
    y = _resample(_to_samples(processed), sample_rate)
    if x.shape != y.shape:
        raise DataError(f"length mismatch: {x.shape[0]} vs {y.shape[0]}")
    if not np.any(x):
        raise DataError("zero-energy clean signal")
    min_len = _FRAME + (_SEG_FRAMES - 1) * _HOP
    if len(x) < min_len:
        raise DataError(
            f"input too short for STOI: {len(x)} samples at 10 kHz, "
            f"need >= {min_len}"
        )
    x, y = _remove_silent_frames(x, y)
    if len(x) < min_len:
        raise DataError("input too short for STOI after silence removal")

    xb = _band_envelopes(x)
    yb = _band_envelopes(y)
    n_frames = xb.shape[1]

    clip = 10.0 ** (-_SDR_CLIP_DB / 20.0)
    total = 0.0
    count = 0
    for m in range(_SEG_FRAMES, n_frames + 1):
        xs = xb[:, m - _SEG_FRAMES : m]
        ys = yb[:, m - _SEG_FRAMES : m]
        alpha = np.sqrt(
            np.sum(xs**2, axis=1, keepdims=True)
            / (np.sum(ys**2, axis=1, keepdims=True) + _EPS)
        )
        ys_clip = np.minimum(alpha * ys, xs * (1.0 + clip))
        xc = xs - xs.mean(axis=1, keepdims=True)
        yc = ys_clip - ys_clip.mean(axis=1, keepdims=True)
        num = np.sum(xc * yc, axis=1)
        den = np.linalg.norm(xc, axis=1) * np.linalg.norm(yc, axis=1) + _EPS
        d = num / den
        total += float(np.sum(np.maximum(d, 0.0)))
        count += d.size
    return total / count


@dataclass
class EvalReport:
    """Per-condition evaluation record."""

    mse: float
    mse_per_channel: np.ndarray
    stoi_noisy: float
    stoi_enhanced: float
    accuracy: Optional[float] = None
    pesq: str = "unavailable"
    metadata: dict = field(default_factory=dict)

    def validate(self) -> None:
        if abs(self.mse - float(np.mean(self.mse_per_channel))) > 1e-12:
            raise DataError("mse does not equal the mean of mse_per_channel")
        for name, v in (
            ("stoi_noisy", self.stoi_noisy),
            ("stoi_enhanced", self.stoi_enhanced),
        ):
            if not 0.0 <= v <= 1.0:
                raise DataError(f"{name} out of [0,1]: {v}")
        if self.accuracy is not None and not 0.0 <= self.accuracy <= 1.0:
            raise DataError(f"accuracy out of [0,1]: {self.accuracy}")
