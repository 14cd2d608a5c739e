"""Orchestration and persistence: dataset building, train / autotune /
enhance / evaluate / mix commands, model files, and run reports.

Model files are self-describing binary blobs (magic "EKSM"): feature
parameters, standardization statistics, the channel partition, and one
(kernel params, tune summary, support, alpha) record per subband, all
numeric payloads little-endian float64, with a trailing CRC32 checksum.
Reports are plain text with machine-parsable key=value lines; wall-clock
figures are written as '#'-prefixed comment lines because they are the
one non-reproducible part of a run.
"""
from __future__ import annotations

import json
import math
import os
import struct
import time
import warnings
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.signal

from .autotune import SearchSpace, TuneResult, autotune, make_validator
from .data import Dataset, UtteranceGroup
from .dsp import (
    NOISE_KINDS,
    CorpusConfig,
    FeatureStandardizer,
    Spectrogram,
    Waveform,
    apply_mask,
    compute_ibm,
    compute_irm,
    extract_features,
    istft,
    mix_at_snr,
    read_wav,
    stft,
    synth_noise,
    synth_speech,
    write_wav,
)
from .eigenpro import KernelModel, SolverConfig
from .errors import ConfigError, DataError, StorageError
from .kernel import KernelParams
from .metrics import EvalReport, accuracy, mse, mse_per_channel, stoi
from .subband import (
    ChannelPartition,
    SubbandModel,
    binarize_mask,
    make_partition,
    predict_mask,
    train_subband,
)

MODEL_MAGIC = b"EKSM"
MODEL_VERSION = 1

_SPLIT_FRACTIONS = (0.70, 0.15, 0.15)


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    speech_dir: Optional[Path] = None
    noise_dir: Optional[Path] = None
    noise_settings: tuple[tuple[str, float], ...] = (("white", 0.0),)
    mask_kind: str = "irm"
    irm_beta: float = 0.5
    ibm_lc_rel_db: float = -5.0
    subbands: int = 4
    space: SearchSpace = field(default_factory=SearchSpace)
    solver: SolverConfig = field(default_factory=SolverConfig)
    frame_len: int = 512
    hop: int = 256
    window_id: str = "sqrt_hann"
    context: int = 2
    out_dir: Path = Path("runs/out")
    seed: int = 0
    workers: int = 1

    def validate(self) -> None:
        if not self.noise_settings:
            raise ConfigError("at least one (noise, snr) setting is required")
        if self.mask_kind not in ("irm", "ibm"):
            raise ConfigError(f"mask kind must be irm or ibm, got {self.mask_kind}")
        if self.subbands < 1:
            raise ConfigError(f"subbands must be >= 1, got {self.subbands}")
        if self.speech_dir is not None and not Path(self.speech_dir).is_dir():
            raise ConfigError(f"speech_dir does not exist: {self.speech_dir}")
        if self.noise_dir is not None and not Path(self.noise_dir).is_dir():
            raise ConfigError(f"noise_dir does not exist: {self.noise_dir}")
        for name, _ in self.noise_settings:
            if self.noise_dir is None and name not in NOISE_KINDS:
                raise ConfigError(
                    f"noise '{name}' is not a synthetic kind and no noise_dir "
                    "is configured"
                )
        if self.speech_dir is None:
            self.corpus.validate()
        self.space.validate()

    @property
    def n_bins(self) -> int:
        return self.frame_len // 2 + 1

    @property
    def feature_dim(self) -> int:
        return self.n_bins * (2 * self.context + 1)


def load_config(path) -> RunConfig:
    """Parse a JSON run configuration."""
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None
    try:
        cfg = RunConfig(
            corpus=CorpusConfig(**raw.get("corpus", {})) if "corpus" in raw
            else CorpusConfig(),
            speech_dir=Path(raw["speech_dir"]) if raw.get("speech_dir") else None,
            noise_dir=Path(raw["noise_dir"]) if raw.get("noise_dir") else None,
            noise_settings=tuple(
                (str(n), float(s)) for n, s in raw.get("noise_settings", [["white", 0.0]])
            ),
            mask_kind=raw.get("mask", "irm"),
            irm_beta=float(raw.get("irm_beta", 0.5)),
            ibm_lc_rel_db=float(raw.get("ibm_lc_rel_db", -5.0)),
            subbands=int(raw.get("subbands", 4)),
            space=SearchSpace(**{
                k: tuple(v) if k == "gammas" else v
                for k, v in raw.get("search", {}).items()
            }),
            solver=SolverConfig(**raw.get("solver", {})),
            frame_len=int(raw.get("features", {}).get("frame_len", 512)),
            hop=int(raw.get("features", {}).get("hop", 256)),
            window_id=raw.get("features", {}).get("window", "sqrt_hann"),
            context=int(raw.get("features", {}).get("context", 2)),
            out_dir=Path(raw.get("out_dir", "runs/out")),
            seed=int(raw.get("seed", 0)),
            workers=int(raw.get("workers", 1)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config {path}: {exc}") from None
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# Corpus and dataset assembly
# ---------------------------------------------------------------------------


@dataclass
class MixtureRecord:
    utt: int
    noise: str
    snr_db: float
    clean: Waveform
    noisy: Waveform
    noise_used: Waveform
    noisy_spec: Spectrogram
    features_raw: np.ndarray
    target: np.ndarray


def _mixture_seed(seed: int, utt: int, setting: int) -> int:
    return int(
        np.random.SeedSequence((seed, utt, setting)).generate_state(1)[0]
    )


def _load_cleans(cfg: RunConfig) -> list[Waveform]:
    if cfg.speech_dir is not None:
        files = sorted(Path(cfg.speech_dir).glob("*.wav"))
        if not files:
            raise DataError(f"no WAV files in {cfg.speech_dir}")
        return [read_wav(f) for f in files]
    sr = cfg.corpus.sample_rate
    n = int(round(cfg.corpus.duration_s * sr))
    cleans = []
    for i in range(cfg.corpus.utterances):
        rng = np.random.default_rng(cfg.corpus.seed + i)
        cleans.append(Waveform(synth_speech(n, sr, rng), sr))
    return cleans


def _noise_for(cfg: RunConfig, name: str, n_samples: int, sr: int, seed: int):
    if cfg.noise_dir is not None:
        path = Path(cfg.noise_dir) / f"{name}.wav"
        if path.exists():
            return read_wav(path)
    rng = np.random.default_rng(seed)
    return Waveform(synth_noise(name, int(n_samples * 1.5), sr, rng), sr)


def _target_for(cfg: RunConfig, clean_spec, used_spec, snr_db: float):
    if cfg.mask_kind == "irm":
        return compute_irm(clean_spec, used_spec, beta=cfg.irm_beta)
    return compute_ibm(clean_spec, used_spec, lc_db=snr_db + cfg.ibm_lc_rel_db)


def build_mixtures(cfg: RunConfig) -> list[MixtureRecord]:
    """Mix every utterance with every (noise, snr) setting and compute
    spectrograms, raw features, and mask targets."""
    cfg.validate()
    cleans = _load_cleans(cfg)
    records = []
    for utt, clean in enumerate(cleans):
        for si, (name, snr) in enumerate(cfg.noise_settings):
            seed = _mixture_seed(cfg.seed, utt, si)
            noise = _noise_for(cfg, name, len(clean), clean.sample_rate, seed)
            noisy, used = mix_at_snr(clean, noise, snr, seed=seed)
            noisy_spec = stft(noisy, cfg.frame_len, cfg.hop, cfg.window_id)
            clean_spec = stft(clean, cfg.frame_len, cfg.hop, cfg.window_id)
            used_spec = stft(used, cfg.frame_len, cfg.hop, cfg.window_id)
            records.append(
                MixtureRecord(
                    utt=utt,
                    noise=name,
                    snr_db=snr,
                    clean=clean,
                    noisy=noisy,
                    noise_used=used,
                    noisy_spec=noisy_spec,
                    features_raw=extract_features(noisy_spec, cfg.context),
                    target=_target_for(cfg, clean_spec, used_spec, snr),
                )
            )
    return records


def split_utterances(n_utts: int, seed: int):
    """Seeded 70/15/15 utterance split; no utterance spans two splits."""
    if n_utts < 3:
        raise DataError(f"need at least 3 utterances to split, got {n_utts}")
    order = np.random.default_rng(seed).permutation(n_utts)
    n_val = max(1, int(round(_SPLIT_FRACTIONS[1] * n_utts)))
    n_test = max(1, int(round(_SPLIT_FRACTIONS[2] * n_utts)))
    n_train = n_utts - n_val - n_test
    if n_train < 1:
        raise DataError(f"too few utterances ({n_utts}) for a 70/15/15 split")
    train = np.sort(order[:n_train])
    val = np.sort(order[n_train : n_train + n_val])
    test = np.sort(order[n_train + n_val :])
    return train, val, test


def _assemble(records, utt_ids, cfg, tag, standardizer=None) -> Dataset:
    chosen = [r for r in records if r.utt in set(int(u) for u in utt_ids)]
    X = np.vstack([r.features_raw for r in chosen])
    Y = np.vstack([r.target for r in chosen])
    groups = []
    start = 0
    for r in chosen:
        end = start + r.features_raw.shape[0]
        groups.append(
            UtteranceGroup(utt=r.utt, noise=r.noise, snr_db=r.snr_db,
                           start=start, end=end)
        )
        start = end
    if standardizer is not None:
        X = standardizer.transform(X)
    return Dataset(X=X, Y=Y, mask_kind=cfg.mask_kind, partition=tag, groups=groups)


@dataclass
class BuildResult:
    train: Dataset
    val: Dataset
    test: Dataset
    standardizer: FeatureStandardizer
    records: list[MixtureRecord]
    splits: tuple[np.ndarray, np.ndarray, np.ndarray]


def build_corpus(cfg: RunConfig) -> BuildResult:
    records = build_mixtures(cfg)
    n_utts = max(r.utt for r in records) + 1
    splits = split_utterances(n_utts, cfg.seed)
    raw_train = _assemble(records, splits[0], cfg, "train")
    standardizer = FeatureStandardizer.fit(raw_train.X)
    train = replace(raw_train, X=standardizer.transform(raw_train.X))
    val = _assemble(records, splits[1], cfg, "val", standardizer)
    test = _assemble(records, splits[2], cfg, "test", standardizer)
    return BuildResult(train, val, test, standardizer, records, splits)


def build_dataset(cfg: RunConfig):
    """Generate or load waveforms, mix, featurize, and split 70/15/15 by
    utterance with train-split standardization statistics."""
    built = build_corpus(cfg)
    return built.train, built.val, built.test


# ---------------------------------------------------------------------------
# Model files
# ---------------------------------------------------------------------------


@dataclass
class ModelBundle:
    sample_rate: int
    frame_len: int
    hop: int
    context: int
    window_id: str
    mask_kind: str
    irm_beta: float
    ibm_lc_rel_db: float
    standardizer: FeatureStandardizer
    model: SubbandModel
    tune_summaries: list[tuple[int, float]] = field(default_factory=list)


def _pack_str(buf: bytearray, s: str) -> None:
    raw = s.encode("utf-8")
    buf += struct.pack("<I", len(raw))
    buf += raw


def _pack_array(buf: bytearray, arr: np.ndarray) -> None:
    arr = np.ascontiguousarray(arr, dtype="<f8")
    buf += struct.pack("<II", arr.shape[0], arr.shape[1] if arr.ndim > 1 else 1)
    buf += arr.tobytes()


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        out = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return out

    def take_str(self) -> str:
        (n,) = self.take("<I")
        raw = self.data[self.pos : self.pos + n]
        self.pos += n
        return raw.decode("utf-8")

    def take_array(self) -> np.ndarray:
        rows, cols = self.take("<II")
        count = rows * cols
        arr = np.frombuffer(
            self.data, dtype="<f8", count=count, offset=self.pos
        ).reshape(rows, cols)
        self.pos += count * 8
        return arr.astype(np.float64)


def save_model(path, bundle: ModelBundle) -> None:
    """Serialize a ModelBundle; written atomically (temp file + rename)."""
    buf = bytearray()
    buf += struct.pack(
        "<IIII",
        bundle.sample_rate,
        bundle.frame_len,
        bundle.hop,
        bundle.context,
    )
    _pack_str(buf, bundle.window_id)
    _pack_str(buf, bundle.mask_kind)
    buf += struct.pack("<dd", bundle.irm_beta, bundle.ibm_lc_rel_db)
    _pack_array(buf, bundle.standardizer.mean.reshape(-1, 1))
    _pack_array(buf, bundle.standardizer.scale.reshape(-1, 1))
    part = bundle.model.partition
    buf += struct.pack("<II", part.n_channels, part.n_subbands)
    summaries = bundle.tune_summaries or [(0, float("nan"))] * part.n_subbands
    for i, (start, end) in enumerate(part.bounds):
        model = bundle.model.models[i]
        n_evals, best_loss = summaries[i]
        buf += struct.pack("<II", start, end)
        buf += struct.pack("<dd", model.params.gamma, model.params.sigma)
        buf += struct.pack("<Id", n_evals, best_loss)
        _pack_array(buf, model.support)
        _pack_array(buf, model.alpha)
    blob = MODEL_MAGIC + struct.pack("<I", MODEL_VERSION) + bytes(buf)
    blob += struct.pack("<I", zlib.crc32(bytes(buf)) & 0xFFFFFFFF)

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(blob)
    os.replace(tmp, path)


def load_model(path) -> ModelBundle:
    """Read and checksum-verify a model file."""
    try:
        blob = Path(path).read_bytes()
    except FileNotFoundError:
        raise StorageError(f"no such model file: {path}") from None
    if len(blob) < 12 or blob[:4] != MODEL_MAGIC:
        raise StorageError(f"{path} is not a model file (bad magic)")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != MODEL_VERSION:
        raise StorageError(f"{path}: unsupported model version {version}")
    payload = blob[8:-4]
    (checksum,) = struct.unpack_from("<I", blob, len(blob) - 4)
    if zlib.crc32(payload) & 0xFFFFFFFF != checksum:
        raise StorageError(f"{path}: checksum mismatch, file is corrupt")

    r = _Reader(payload)
    sample_rate, frame_len, hop, context = r.take("<IIII")
    window_id = r.take_str()
    mask_kind = r.take_str()
    irm_beta, ibm_lc_rel_db = r.take("<dd")
    mean = r.take_array().ravel()
    scale = r.take_array().ravel()
    n_channels, n_subbands = r.take("<II")
    bounds = []
    models = []
    tunes = []
    summaries = []
    for _ in range(n_subbands):
        start, end = r.take("<II")
        gamma, sigma = r.take("<dd")
        n_evals, best_loss = r.take("<Id")
        support = r.take_array()
        alpha = r.take_array()
        bounds.append((start, end))
        models.append(
            KernelModel(
                params=KernelParams(gamma=gamma, sigma=sigma),
                support=support,
                alpha=alpha,
            )
        )
        tunes.append(TuneResult(gamma_opt=gamma, sigma_opt=sigma, evaluations=[]))
        summaries.append((n_evals, best_loss))
    partition = ChannelPartition(n_channels=n_channels, bounds=tuple(bounds))
    return ModelBundle(
        sample_rate=sample_rate,
        frame_len=frame_len,
        hop=hop,
        context=context,
        window_id=window_id,
        mask_kind=mask_kind,
        irm_beta=irm_beta,
        ibm_lc_rel_db=ibm_lc_rel_db,
        standardizer=FeatureStandardizer(mean=mean, scale=scale),
        model=SubbandModel(
            partition=partition, models=models, tune_results=tunes
        ),
        tune_summaries=summaries,
    )


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _report_header(cfg: RunConfig, command: str) -> list[str]:
    return [
        f"command={command}",
        f"seed={cfg.seed}",
        f"mask={cfg.mask_kind}",
        f"subbands={cfg.subbands}",
        f"frame_len={cfg.frame_len}",
        f"hop={cfg.hop}",
        f"context={cfg.context}",
        f"noise_settings={';'.join(f'{n}@{s:g}dB' for n, s in cfg.noise_settings)}",
    ]


def cmd_train(cfg: RunConfig):
    """Build the dataset, tune and train per subband, and serialize the
    model plus a run report. Returns (model_path, report_path)."""
    cfg.validate()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    t0 = time.perf_counter()
    built = build_corpus(cfg)
    t_build = time.perf_counter() - t0

    t0 = time.perf_counter()
    sb = train_subband(
        built.train.X,
        built.train.Y,
        built.val.X,
        built.val.Y,
        cfg.subbands,
        cfg.space,
        cfg.solver,
        workers=cfg.workers,
    )
    t_fit = time.perf_counter() - t0

    summaries = [
        (len(t.evaluations), min((v for _, _, v in t.evaluations), default=float("nan")))
        for t in sb.tune_results
    ]
    bundle = ModelBundle(
        sample_rate=built.records[0].clean.sample_rate,
        frame_len=cfg.frame_len,
        hop=cfg.hop,
        context=cfg.context,
        window_id=cfg.window_id,
        mask_kind=cfg.mask_kind,
        irm_beta=cfg.irm_beta,
        ibm_lc_rel_db=cfg.ibm_lc_rel_db,
        standardizer=built.standardizer,
        model=sb,
        tune_summaries=summaries,
    )
    t0 = time.perf_counter()
    model_path = out / "model.eksm"
    save_model(model_path, bundle)
    t_save = time.perf_counter() - t0

    lines = _report_header(cfg, "train")
    lines.append(f"train_frames={built.train.n_frames}")
    lines.append(f"val_frames={built.val.n_frames}")
    lines.append(f"test_frames={built.test.n_frames}")
    for i, ((start, end), tune, history) in enumerate(
        zip(sb.partition.bounds, sb.tune_results, sb.loss_histories)
    ):
        epochs = len(history)
        lines.append(
            f"subband={i} range=[{start},{end}) gamma={tune.gamma_opt:g} "
            f"sigma={tune.sigma_opt:g} tune_evals={len(tune.evaluations)} "
            f"epochs={epochs} best_val={min(history):.6e}"
        )
        lines.append(
            f"subband={i} loss_history="
            + ",".join(f"{v:.6e}" for v in history)
        )
        if epochs > 10:
            warnings.warn(
                f"subband {i} used {epochs} epochs (> 10); desk-scale runs "
                "usually converge faster",
                stacklevel=2,
            )
    lines.append(f"model_file={model_path.name}")
    lines.append(f"# time_build_s={t_build:.2f}")
    lines.append(f"# time_fit_s={t_fit:.2f}")
    lines.append(f"# time_save_s={t_save:.2f}")
    report_path = out / "train_report.txt"
    report_path.write_text("\n".join(lines) + "\n")
    return model_path, report_path


def cmd_autotune(cfg: RunConfig):
    """Per-subband hyper-parameter selection on subsamples only; no full
    training. Returns (tune_results, report_path)."""
    cfg.validate()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    built = build_corpus(cfg)
    partition = make_partition(built.train.Y.shape[1], cfg.subbands)

    lines = _report_header(cfg, "autotune")
    results = []
    for i, (start, end) in enumerate(partition.bounds):
        d_train = Dataset(built.train.X, built.train.Y[:, start:end])
        d_val = Dataset(built.val.X, built.val.Y[:, start:end])
        validator = make_validator(d_train, d_val, cfg.space, cfg.solver)
        tune = autotune(d_train, d_val, cfg.space, cfg.solver, cache=validator)
        results.append(tune)
        lines.append(
            f"subband={i} range=[{start},{end}) gamma_opt={tune.gamma_opt:g} "
            f"sigma_opt={tune.sigma_opt:g} evaluations={len(tune.evaluations)}"
        )
        for gamma, sigma, loss in tune.evaluations:
            hits = validator.hits.get((gamma, sigma), 0)
            lines.append(
                f"subband={i} gamma={gamma:g} sigma={sigma:g} "
                f"loss={loss:.6e} cached_hits={hits}"
            )
    report_path = out / "autotune_report.txt"
    report_path.write_text("\n".join(lines) + "\n")
    return results, report_path


def _resample_to(x: np.ndarray, sr_in: int, sr_out: int) -> np.ndarray:
    g = math.gcd(int(sr_in), int(sr_out))
    return scipy.signal.resample_poly(x, sr_out // g, sr_in // g)


def _mask_for_enhancement(bundle: ModelBundle, feats: np.ndarray) -> np.ndarray:
    mask = predict_mask(bundle.model, feats)
    if bundle.mask_kind == "ibm":
        mask = binarize_mask(mask, 0.5)
    return mask


def cmd_enhance(model_path, wav_in, wav_out):
    """Enhance one WAV file with a trained model; the output has exactly
    the input's length and sample rate."""
    bundle = load_model(model_path)
    w = read_wav(wav_in)
    orig_rate, orig_len = w.sample_rate, len(w)
    if w.sample_rate != bundle.sample_rate:
        warnings.warn(
            f"resampling {wav_in} from {w.sample_rate} Hz to the model's "
            f"{bundle.sample_rate} Hz",
            stacklevel=2,
        )
        w = Waveform(
            _resample_to(w.samples, w.sample_rate, bundle.sample_rate),
            bundle.sample_rate,
        )
    spec = stft(w, bundle.frame_len, bundle.hop, bundle.window_id)
    feats = extract_features(spec, bundle.context, bundle.standardizer)
    if feats.shape[1] != bundle.standardizer.mean.shape[0]:
        raise ConfigError(
            f"model expects {bundle.standardizer.mean.shape[0]}-dim features, "
            f"got {feats.shape[1]}"
        )
    mask = _mask_for_enhancement(bundle, feats)
    enhanced = istft(apply_mask(spec, mask))
    samples = enhanced.samples
    if orig_rate != bundle.sample_rate:
        samples = _resample_to(samples, bundle.sample_rate, orig_rate)
    if len(samples) < orig_len:
        samples = np.pad(samples, (0, orig_len - len(samples)))
    samples = samples[:orig_len]
    write_wav(wav_out, Waveform(samples, orig_rate), fmt="float32")
    return Path(wav_out)


def _check_model_matches(bundle: ModelBundle, cfg: RunConfig) -> None:
    mismatches = []
    if bundle.frame_len != cfg.frame_len or bundle.hop != cfg.hop:
        mismatches.append("frame/hop")
    if bundle.context != cfg.context:
        mismatches.append("context")
    if bundle.mask_kind != cfg.mask_kind:
        mismatches.append("mask kind")
    if bundle.standardizer.mean.shape[0] != cfg.feature_dim:
        mismatches.append("feature dims")
    if mismatches:
        raise ConfigError(
            "config/model mismatch: " + ", ".join(mismatches)
        )


def cmd_evaluate(model_path, cfg: RunConfig, *, oracle: bool = False):
    """Evaluate on the test split: mask MSE, per-channel MSE, STOI of
    noisy and enhanced, and accuracy for IBM masks. With oracle=True the
    target mask itself is used as a pseudo-model (upper bound; no model
    file needed). Returns (reports, summary_path)."""
    cfg.validate()
    bundle = None
    if not oracle:
        bundle = load_model(model_path)
        _check_model_matches(bundle, cfg)

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    built = build_corpus(cfg)
    test_ids = set(int(u) for u in built.splits[2])
    records = [r for r in built.records if r.utt in test_ids]

    utt_lines = []
    by_setting: dict[tuple[str, float], dict] = {}
    for rec in records:
        if oracle:
            mask = rec.target.copy()
        else:
            feats = bundle.standardizer.transform(rec.features_raw)
            mask = predict_mask(bundle.model, feats)
        mask_for_audio = (
            binarize_mask(mask, 0.5) if cfg.mask_kind == "ibm" else mask
        )
        enhanced = istft(apply_mask(rec.noisy_spec, mask_for_audio))
        sr = rec.clean.sample_rate
        rec_mse = mse(mask, rec.target)
        rec_stoi_noisy = stoi(rec.clean, rec.noisy, sr)
        rec_stoi_enh = stoi(rec.clean, enhanced, sr)
        line = (
            f"utt={rec.utt} noise={rec.noise} snr={rec.snr_db:g} "
            f"mse={rec_mse:.6e} stoi_noisy={rec_stoi_noisy:.4f} "
            f"stoi_enh={rec_stoi_enh:.4f}"
        )
        acc = None
        if cfg.mask_kind == "ibm":
            acc = accuracy(binarize_mask(mask, 0.5), rec.target)
            line += f" acc={acc:.4f}"
        utt_lines.append(line)

        key = (rec.noise, rec.snr_db)
        agg = by_setting.setdefault(
            key,
            {
                "frames": 0,
                "channel_sse": np.zeros(rec.target.shape[1]),
                "stoi_noisy": [],
                "stoi_enh": [],
                "matches": 0.0,
                "entries": 0,
            },
        )
        n_frames = rec.target.shape[0]
        agg["frames"] += n_frames
        agg["channel_sse"] += mse_per_channel(mask, rec.target) * n_frames
        agg["stoi_noisy"].append(rec_stoi_noisy)
        agg["stoi_enh"].append(rec_stoi_enh)
        if acc is not None:
            agg["matches"] += acc * mask.size
            agg["entries"] += mask.size

    reports = []
    summary = _report_header(cfg, "evaluate")
    summary.append(f"oracle={oracle}")
    summary.append("pesq=unavailable")
    channel_table = {}
    for (noise, snr), agg in sorted(by_setting.items()):
        per_channel = agg["channel_sse"] / agg["frames"]
        report = EvalReport(
            mse=float(np.mean(per_channel)),
            mse_per_channel=per_channel,
            stoi_noisy=float(np.mean(agg["stoi_noisy"])),
            stoi_enhanced=float(np.mean(agg["stoi_enh"])),
            accuracy=(
                agg["matches"] / agg["entries"] if agg["entries"] else None
            ),
            metadata={
                "noise": noise,
                "snr_db": snr,
                "model": "oracle" if oracle else str(model_path),
            },
        )
        report.validate()
        reports.append(report)
        line = (
            f"setting noise={noise} snr={snr:g} mse={report.mse:.6e} "
            f"stoi_noisy={report.stoi_noisy:.4f} "
            f"stoi_enh={report.stoi_enhanced:.4f}"
        )
        if report.accuracy is not None:
            line += f" acc={report.accuracy:.4f}"
        line += " pesq=unavailable"
        summary.append(line)
        channel_table[f"{noise}@{snr:g}dB"] = per_channel

    (out / "eval_utterances.txt").write_text("\n".join(utt_lines) + "\n")
    summary_path = out / "eval_summary.txt"
    summary_path.write_text("\n".join(summary) + "\n")

    names = list(channel_table)
    header = "channel\t" + "\t".join(names)
    rows = [header]
    n_channels = len(next(iter(channel_table.values())))
    for c in range(n_channels):
        rows.append(
            f"{c}\t" + "\t".join(f"{channel_table[n][c]:.6e}" for n in names)
        )
    (out / "eval_channels.txt").write_text("\n".join(rows) + "\n")
    return reports, summary_path


def cmd_mix(cfg: RunConfig):
    """Write every (clean, noisy, noise) mixture to out_dir/wav plus a
    manifest; useful for inspecting the corpus and as enhance input."""
    cfg.validate()
    out = Path(cfg.out_dir) / "wav"
    out.mkdir(parents=True, exist_ok=True)
    records = build_mixtures(cfg)
    manifest = []
    for rec in records:
        stem = f"utt{rec.utt:03d}_{rec.noise}_{rec.snr_db:+g}dB"
        write_wav(out / f"{stem}_clean.wav", rec.clean)
        write_wav(out / f"{stem}_noisy.wav", rec.noisy)
        write_wav(out / f"{stem}_noise.wav", rec.noise_used)
        manifest.append(
            f"utt={rec.utt} noise={rec.noise} snr={rec.snr_db:g} stem={stem}"
        )
    manifest_path = Path(cfg.out_dir) / "mix_manifest.txt"
    manifest_path.write_text("\n".join(manifest) + "\n")
    return manifest_path
