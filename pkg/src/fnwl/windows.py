"""Recordings, sliding-window segmentation and channel standardisation."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError

UNLABELED = -1  # rest periods: kept for filtering, never emitted as a window label


@dataclass
class RawRecording:
    """One subject's multichannel series with per-sample task labels.

    ``channels`` is ``(n_channels, T)``; ``labels`` is ``(T,)`` with values
    in {0..K-1} for task samples and -1 for unlabeled rest samples.
    """

    subject_id: str
    sample_rate_hz: float
    channels: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.channels = np.ascontiguousarray(self.channels, dtype=np.float64)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if self.channels.ndim != 2:
            raise ShapeError(f"channels must be 2-D, got shape {self.channels.shape}")
        if self.labels.shape != (self.channels.shape[1],):
            raise ShapeError(
                f"labels shape {self.labels.shape} does not match series "
                f"length {(self.channels.shape[1],)}"
            )

    @property
    def n_samples(self) -> int:
        return self.channels.shape[1]


@dataclass
class WindowDataset:
    """Fixed-shape labeled windows: ``windows`` is ``(N, channels, length)``."""

    windows: np.ndarray
    labels: np.ndarray
    sample_rate_hz: float
    stride_samples: int | None = None
    subject_ids: np.ndarray | None = None  # lost on binary round-trips

    def __post_init__(self):
        self.windows = np.ascontiguousarray(self.windows, dtype=np.float64)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if self.windows.ndim != 3:
            raise ShapeError(f"windows must be (N, C, L), got {self.windows.shape}")
        if self.labels.shape != (self.windows.shape[0],):
            raise ShapeError(
                f"labels shape {self.labels.shape} does not match window "
                f"count {self.windows.shape[0]}"
            )
        if self.subject_ids is not None:
            self.subject_ids = np.asarray(self.subject_ids)
            if self.subject_ids.shape != (self.windows.shape[0],):
                raise ShapeError(
                    f"subject_ids shape {self.subject_ids.shape} does not "
                    f"match window count {self.windows.shape[0]}"
                )

    def __len__(self) -> int:
        return self.windows.shape[0]

    @property
    def n_channels(self) -> int:
        return self.windows.shape[1]

    @property
    def window_length(self) -> int:
        return self.windows.shape[2]

    def subset(self, indices) -> "WindowDataset":
        indices = np.asarray(indices)
        return WindowDataset(
            windows=self.windows[indices],
            labels=self.labels[indices],
            sample_rate_hz=self.sample_rate_hz,
            stride_samples=self.stride_samples,
            subject_ids=None if self.subject_ids is None else self.subject_ids[indices],
        )

    def flatten(self) -> np.ndarray:
        """Channel-major flattening to ``(N, channels * length)`` rows."""
        return self.windows.reshape(len(self), -1)


def concat_datasets(parts: list[WindowDataset]) -> WindowDataset:
    parts = [p for p in parts if len(p) > 0]
    if not parts:
        raise ValueError("no windows to concatenate")
    have_subjects = all(p.subject_ids is not None for p in parts)
    return WindowDataset(
        windows=np.concatenate([p.windows for p in parts]),
        labels=np.concatenate([p.labels for p in parts]),
        sample_rate_hz=parts[0].sample_rate_hz,
        stride_samples=parts[0].stride_samples,
        subject_ids=np.concatenate([p.subject_ids for p in parts]) if have_subjects else None,
    )


def window_count(total: int, window_len: int, stride: int) -> int:
    """Closed-form window count: floor((T - L) / stride) + 1 for T >= L."""
    if total < window_len:
        return 0
    return (total - window_len) // stride + 1


def _window_label(span: np.ndarray, pure_only: bool) -> int | None:
    """Label for one window span, or None to discard it.

    Pure mode keeps a window only if every sample agrees on a task label.
    Otherwise the majority label wins; on a tie the label at the window's
    final sample is taken. Windows resolving to the unlabeled marker are
    discarded either way.
    """
    first = span[0]
    if (span == first).all():
        return None if first == UNLABELED else int(first)
    if pure_only:
        return None
    shifted = span - UNLABELED  # bincount needs non-negative values
    counts = np.bincount(shifted)
    top = counts.max()
    winners = np.flatnonzero(counts == top)
    label = int(winners[0]) + UNLABELED if len(winners) == 1 else int(span[-1])
    return None if label == UNLABELED else label


def segment_windows(
    recording: RawRecording,
    window_len: int,
    stride: int,
    pure_only: bool = True,
) -> WindowDataset:
    """Cut overlapping windows: window ``i`` covers ``[i*stride, i*stride + L)``.

    Too-short recordings yield an empty dataset rather than an error.
    """
    if window_len < 1:
        raise ValueError(f"window length must be >= 1, got {window_len}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    n = window_count(recording.n_samples, window_len, stride)
    kept_windows = []
    kept_labels = []
    for i in range(n):
        start = i * stride
        label = _window_label(recording.labels[start : start + window_len], pure_only)
        if label is None:
            continue
        kept_windows.append(recording.channels[:, start : start + window_len])
        kept_labels.append(label)
    n_kept = len(kept_labels)
    windows = (
        np.stack(kept_windows)
        if n_kept
        else np.zeros((0, recording.channels.shape[0], window_len))
    )
    return WindowDataset(
        windows=windows,
        labels=np.array(kept_labels, dtype=np.int64),
        sample_rate_hz=recording.sample_rate_hz,
        stride_samples=stride,
        subject_ids=np.array([recording.subject_id] * n_kept, dtype=object),
    )


@dataclass
class ChannelStats:
    """Per-channel first and second moments taken from a training split."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise ShapeError(
                f"mean/std must be matching vectors, got {self.mean.shape} "
                f"and {self.std.shape}"
            )

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelStats":
        return cls(mean=np.array(d["mean"]), std=np.array(d["std"]))


def channel_stats(d: WindowDataset) -> ChannelStats:
    """Population mean/std per channel over every window and sample."""
    mean = d.windows.mean(axis=(0, 2))
    std = d.windows.std(axis=(0, 2))
    return ChannelStats(mean=mean, std=std)


def standardize_channels(d: WindowDataset, stats: ChannelStats) -> WindowDataset:
    """Apply ``(x - mean) / std`` per channel with externally supplied stats.

    Channels whose recorded std is not positive pass through unscaled (mean
    still removed) with a warning, so constant channels cannot blow up.
    """
    if stats.mean.shape != (d.n_channels,):
        raise ShapeError(
            f"stats cover {stats.mean.shape[0]} channels but the dataset "
            f"has {d.n_channels}"
        )
    std = stats.std.copy()
    degenerate = std <= 0.0
    if degenerate.any():
        warnings.warn(
            f"channels {np.flatnonzero(degenerate).tolist()} have non-positive "
            "std; passing them through unscaled",
            stacklevel=2,
        )
        std[degenerate] = 1.0
    windows = (d.windows - stats.mean[None, :, None]) / std[None, :, None]
    return WindowDataset(
        windows=windows,
        labels=d.labels.copy(),
        sample_rate_hz=d.sample_rate_hz,
        stride_samples=d.stride_samples,
        subject_ids=None if d.subject_ids is None else d.subject_ids.copy(),
    )
