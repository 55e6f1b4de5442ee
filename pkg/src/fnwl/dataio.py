"""Raw-recording ingestion, binary window persistence and synthetic data.

Raw CSV schema: header ``subject,t,c1,...,c8,label`` with ``t`` in seconds,
monotonically increasing and uniformly spaced (within 1e-6 s) per subject;
``label`` is 0..3 for task samples or -1 for unlabeled rest rows, which
are kept so the bandpass sees a continuous series but are never windowed.

Window files use magic ``FNWIN``: version byte 0x01, little-endian u32
window count / channel count / window length, f64 sample rate, then one
record per window (u8 label followed by channel-major f32 samples), closed
by a CRC32 of all preceding bytes.
"""

from __future__ import annotations

import csv
import math
import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import FormatError
from .filters import SosFilter, design_butterworth_bandpass, filtfilt
from .windows import RawRecording, WindowDataset

RAW_HEADER = ["subject", "t"] + [f"c{i}" for i in range(1, 9)] + ["label"]
N_RAW_CHANNELS = 8
VALID_LABELS = {-1, 0, 1, 2, 3}
UNIFORMITY_TOL_S = 1e-6

WINDOWS_MAGIC = b"FNWIN"
WINDOWS_VERSION = 1

# synthetic tone spacing: class c emits a (c+1) * 0.3 Hz sinusoid
SYNTH_TONE_STEP_HZ = 0.3
SYNTH_BAND_HZ = (0.1, 1.5)


def read_raw_csv(path) -> list[RawRecording]:
    """Parse a raw CSV into one recording per subject (order of appearance)."""
    path = Path(path)
    rows_by_subject: dict[str, list[tuple[float, list[float], int]]] = {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        if [h.strip() for h in header] != RAW_HEADER:
            missing = [h for h in RAW_HEADER if h not in header]
            detail = f"missing columns {missing}" if missing else f"got {header}"
            raise FormatError(
                f"{path}: header must be exactly {','.join(RAW_HEADER)}; {detail}"
            )
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(RAW_HEADER):
                raise FormatError(
                    f"{path}:{line_no}: expected {len(RAW_HEADER)} fields, "
                    f"got {len(row)}"
                )
            subject = row[0].strip()
            if not subject:
                raise FormatError(f"{path}:{line_no}: empty subject id")
            try:
                t = float(row[1])
                values = [float(v) for v in row[2 : 2 + N_RAW_CHANNELS]]
                label = int(row[-1])
            except ValueError as exc:
                raise FormatError(f"{path}:{line_no}: {exc}") from None
            if label not in VALID_LABELS:
                raise FormatError(
                    f"{path}:{line_no}: label {label} not in {sorted(VALID_LABELS)}"
                )
            if not all(math.isfinite(v) for v in values) or not math.isfinite(t):
                raise FormatError(f"{path}:{line_no}: non-finite value")
            rows_by_subject.setdefault(subject, []).append((t, values, label))

    recordings = []
    for subject, rows in rows_by_subject.items():
        times = np.array([r[0] for r in rows])
        if len(times) < 2:
            raise FormatError(
                f"{path}: subject {subject!r} has {len(times)} sample(s); "
                "cannot infer a sample rate"
            )
        deltas = np.diff(times)
        if (deltas <= 0).any():
            bad = int(np.flatnonzero(deltas <= 0)[0])
            raise FormatError(
                f"{path}: subject {subject!r}: non-increasing t at sample {bad + 1}"
            )
        if float(deltas.max() - deltas.min()) > UNIFORMITY_TOL_S:
            raise FormatError(
                f"{path}: subject {subject!r}: sampling interval varies by "
                f"{deltas.max() - deltas.min():.3g} s (> {UNIFORMITY_TOL_S} s)"
            )
        rate = 1.0 / float(deltas.mean())
        channels = np.array([r[1] for r in rows]).T
        labels = np.array([r[2] for r in rows], dtype=np.int64)
        recordings.append(
            RawRecording(
                subject_id=subject, sample_rate_hz=rate,
                channels=channels, labels=labels,
            )
        )
    return recordings


def write_windows(d: WindowDataset, path) -> None:
    """Serialise a dataset to the FNWIN binary format (f32 payload)."""
    if (d.labels < 0).any() or (d.labels > 255).any():
        raise ValueError("window labels must fit in a byte and be non-negative")
    blob = bytearray()
    blob += WINDOWS_MAGIC
    blob += struct.pack("<B", WINDOWS_VERSION)
    blob += struct.pack(
        "<IIId", len(d), d.n_channels, d.window_length, d.sample_rate_hz
    )
    payload = np.ascontiguousarray(d.windows, dtype="<f4")
    for i in range(len(d)):
        blob += struct.pack("<B", int(d.labels[i]))
        blob += payload[i].tobytes()
    blob += struct.pack("<I", zlib.crc32(bytes(blob)) & 0xFFFFFFFF)
    Path(path).write_bytes(bytes(blob))


def read_windows(path) -> WindowDataset:
    """Read an FNWIN file; CRC and exact length are enforced."""
    path = Path(path)
    blob = path.read_bytes()
    header_len = len(WINDOWS_MAGIC) + 1 + 4 + 4 + 4 + 8
    if len(blob) < header_len + 4:
        raise FormatError(f"{path}: file of {len(blob)} bytes is too small")
    if blob[:5] != WINDOWS_MAGIC:
        raise FormatError(
            f"{path}: bad magic {blob[:5]!r} at offset 0, expected {WINDOWS_MAGIC!r}"
        )
    version = blob[5]
    if version != WINDOWS_VERSION:
        raise FormatError(f"{path}: unsupported version {version} at offset 5")
    n, channels, length, rate = struct.unpack("<IIId", blob[6:6 + 20])
    record = 1 + 4 * channels * length
    expected = header_len + n * record + 4
    if len(blob) != expected:
        raise FormatError(
            f"{path}: file length {len(blob)} does not match the {expected} "
            f"bytes implied by the header (N={n}, C={channels}, L={length})"
        )
    stored_crc = struct.unpack("<I", blob[-4:])[0]
    actual_crc = zlib.crc32(blob[:-4]) & 0xFFFFFFFF
    if stored_crc != actual_crc:
        raise FormatError(
            f"{path}: CRC mismatch at offset {len(blob) - 4}: stored "
            f"{stored_crc:#010x}, computed {actual_crc:#010x}"
        )
    if not math.isfinite(rate) or rate <= 0:
        raise FormatError(f"{path}: invalid sample rate {rate!r}")
    labels = np.empty(n, dtype=np.int64)
    windows = np.empty((n, channels, length))
    pos = header_len
    for i in range(n):
        labels[i] = blob[pos]
        data = np.frombuffer(blob, dtype="<f4", count=channels * length, offset=pos + 1)
        windows[i] = data.reshape(channels, length)
        pos += record
    if not np.isfinite(windows).all():
        raise FormatError(f"{path}: payload contains non-finite samples")
    return WindowDataset(
        windows=windows, labels=labels, sample_rate_hz=rate, stride_samples=None
    )


def synth_band_filter(
    sample_rate_hz: float = 5.2, order: int = 3,
    band: tuple[float, float] = SYNTH_BAND_HZ,
) -> SosFilter:
    return design_butterworth_bandpass(order, band[0], band[1], sample_rate_hz)


def synth_generate(
    classes: int = 4,
    windows_per_class: int = 150,
    window_len: int = 150,
    channels: int = 8,
    seed: int = 0,
    snr_db: float = 10.0,
    sample_rate_hz: float = 5.2,
    band: tuple[float, float] = SYNTH_BAND_HZ,
    order: int = 3,
) -> WindowDataset:
    """Deterministic synthetic stand-in for real recordings.

    A class-``c`` window is a unit-amplitude ``(c + 1) * 0.3`` Hz sinusoid
    with an independent random phase per channel, plus white Gaussian noise
    scaled to ``snr_db`` (relative to the tone power; ``inf`` means no
    noise). Each window is generated with a margin of one window length on
    both sides, run through the zero-phase bandpass used for real data -
    with edges that keep the class tones in band - and cropped back, so the
    data exercises the production filter path without edge transients.

    Draw order per (class, window): ``channels`` phases, then the noise
    block; this makes datasets bit-identical per seed.
    """
    if min(classes, windows_per_class, window_len, channels) < 1:
        raise ValueError("classes, windows_per_class, window_len and channels "
                         "must all be positive")
    top_tone = classes * SYNTH_TONE_STEP_HZ
    if top_tone >= sample_rate_hz / 2.0:
        raise ValueError(
            f"class tone {top_tone} Hz reaches the Nyquist frequency "
            f"{sample_rate_hz / 2.0} Hz; lower `classes` or raise the rate"
        )
    filt = synth_band_filter(sample_rate_hz, order, band)
    pad = window_len
    if window_len + 2 * pad <= filt.pad_len:
        raise ValueError(
            f"window length {window_len} is too short for the order-{order} "
            "zero-phase filter"
        )
    rng = np.random.default_rng(seed)
    sigma = 0.0 if math.isinf(snr_db) else math.sqrt(0.5 / 10.0 ** (snr_db / 10.0))
    t = np.arange(-pad, window_len + pad) / sample_rate_hz
    raw = np.empty((classes * windows_per_class, channels, window_len + 2 * pad))
    labels = np.empty(classes * windows_per_class, dtype=np.int64)
    idx = 0
    for c in range(classes):
        tone = (c + 1) * SYNTH_TONE_STEP_HZ
        for _ in range(windows_per_class):
            phases = rng.uniform(0.0, 2.0 * np.pi, channels)
            block = np.sin(2.0 * np.pi * tone * t[None, :] + phases[:, None])
            if sigma > 0.0:
                block = block + rng.normal(0.0, sigma, block.shape)
            raw[idx] = block
            labels[idx] = c
            idx += 1
    filtered = filtfilt(filt, raw)[:, :, pad : pad + window_len]
    return WindowDataset(
        windows=np.ascontiguousarray(filtered),
        labels=labels,
        sample_rate_hz=sample_rate_hz,
        stride_samples=window_len,
    )
