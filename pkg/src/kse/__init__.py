"""Subband kernel regression for single-channel speech enhancement."""

from .autotune import (
    CrossValidator,
    SearchSpace,
    TuneResult,
    autotune,
    cross_validate,
    search,
)
from .data import Dataset, UtteranceGroup
from .dsp import (
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
    synth_corpus,
    write_wav,
)
from .eigenpro import (
    EigenSystem,
    KernelModel,
    SolverConfig,
    direct_solve,
    estimate_eigensystem,
    predict,
    train,
)
from .errors import (
    ConfigError,
    DataError,
    KseError,
    MemoryBudgetError,
    NumericError,
    StorageError,
)
from .kernel import KernelParams, eval_kernel, kernel_matrix, validate_params
from .metrics import EvalReport, accuracy, mse, mse_per_channel, stoi
from .pipeline import (
    ModelBundle,
    RunConfig,
    build_dataset,
    cmd_autotune,
    cmd_enhance,
    cmd_evaluate,
    cmd_mix,
    cmd_train,
    load_config,
    load_model,
    save_model,
)
from .subband import (
    ChannelPartition,
    SubbandModel,
    binarize_mask,
    make_partition,
    predict_mask,
    train_subband,
)

__version__ = "0.1.0"
