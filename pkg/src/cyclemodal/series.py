"""Uniformly sampled multi-channel records."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ROLES = ("displacement", "acceleration", "modal", "pca-score")


@dataclass(frozen=True)
class TimeSeriesMatrix:
    """``data`` is ``[n_samples, n_channels]`` sampled at ``fs`` Hz.

    ``record_starts`` marks the first row of each concatenated record when
    several independent experiments are stacked (``[0]`` for one record).
    """

    data: np.ndarray
    fs: float
    role: str = "displacement"
    record_starts: tuple = field(default=(0,))

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim == 1:
            data = data[:, None]
        if data.ndim != 2:
            raise ValueError(f"data must be 2-D, got shape {data.shape}")
        if data.shape[0] < 2:
            raise ValueError("a time series needs at least 2 samples")
        if not np.all(np.isfinite(data)):
            bad = int(np.argwhere(~np.isfinite(data))[0, 0])
            raise ValueError(f"non-finite value in row {bad}")
        if not self.fs > 0:
            raise ValueError(f"fs must be positive, got {self.fs}")
        if self.role not in ROLES:
            raise ValueError(f"unknown channel role {self.role!r}")
        starts = tuple(int(s) for s in self.record_starts)
        if not starts or starts[0] != 0 or any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("record_starts must be strictly increasing from 0")
        if starts[-1] >= data.shape[0]:
            raise ValueError("record start beyond end of data")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "fs", float(self.fs))
        object.__setattr__(self, "record_starts", starts)

    @property
    def n_samples(self) -> int:
        return self.data.shape[0]

    @property
    def n_channels(self) -> int:
        return self.data.shape[1]

    @property
    def time(self) -> np.ndarray:
        return np.arange(self.n_samples) / self.fs

    def records(self):
        """Yield each stacked record as a plain array."""
        bounds = list(self.record_starts) + [self.n_samples]
        for a, b in zip(bounds[:-1], bounds[1:]):
            yield self.data[a:b]

    def with_data(self, data, role=None) -> "TimeSeriesMatrix":
        """Same sampling and record layout, new channel values."""
        return TimeSeriesMatrix(np.asarray(data), self.fs, role or self.role, self.record_starts)
