"""Dataset container shared by the tuning, subband, and pipeline layers."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError


@dataclass
class UtteranceGroup:
    """Contiguous frame range [start, end) contributed by one mixture."""

    utt: int
    noise: str
    snr_db: float
    start: int
    end: int


@dataclass
class Dataset:
    """Paired feature matrix and target mask matrix.

    X has one frame per row; Y holds the per-frame mask targets for the
    same rows. `groups` records which mixture produced which frame rows
    (empty for synthetic regression data).
    """

    X: np.ndarray
    Y: np.ndarray
    mask_kind: str = "irm"
    partition: str = ""
    groups: list[UtteranceGroup] = field(default_factory=list)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.Y = np.asarray(self.Y, dtype=np.float64)
        if self.Y.ndim == 1:
            self.Y = self.Y.reshape(-1, 1)
        if self.X.shape[0] != self.Y.shape[0]:
            raise DataError(
                f"X has {self.X.shape[0]} frames but Y has {self.Y.shape[0]}"
            )

    @property
    def n_frames(self) -> int:
        return self.X.shape[0]

    def subset(self, rows: np.ndarray) -> "Dataset":
        """Row subset; group bookkeeping does not survive subsetting."""
        return replace(self, X=self.X[rows], Y=self.Y[rows], groups=[])
