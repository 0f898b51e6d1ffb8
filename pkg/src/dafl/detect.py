"""Sliding-window presence detection over long recordings.

Windows of 0.6 s slide at a 0.1 s hop; a window is ground-truth positive
when it overlaps an annotated call by at least half its length.  Window
decisions aggregate into 5 s segments that turn positive once at least
``min_slices`` member windows fire, which is what a human reviewer
actually checks.  Review effort is (TP + FP) * segment seconds.

Timing arithmetic runs on an integer microsecond grid so window and
segment counts are exact for any rate or duration at that resolution.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import nncore
from .errors import ContractError, ParseError, ShapeError

_US = 1_000_000


def _us(seconds: float) -> int:
    return round(seconds * _US)


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


@dataclass(frozen=True)
class Annotation:
    start: float
    end: float

    def __post_init__(self) -> None:
        if not 0 <= self.start < self.end:
            raise ContractError(f"annotation [{self.start}, {self.end}) is not a valid interval")


@dataclass
class Stream:
    samples: np.ndarray
    rate: int

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.size == 0:
            raise ContractError("stream must be nonempty")

    @property
    def duration_us(self) -> int:
        return (self.samples.size * _US + self.rate // 2) // self.rate


@dataclass(frozen=True)
class WindowingConfig:
    window: float = 0.6
    hop: float = 0.1
    overlap_threshold: float = 0.5

    def __post_init__(self) -> None:
        if not 0 < self.hop <= self.window:
            raise ContractError("need 0 < hop <= window")
        if not 0 < self.overlap_threshold <= 1:
            raise ContractError("overlap_threshold must be in (0, 1]")


@dataclass(frozen=True)
class SegmentConfig:
    segment: float = 5.0
    min_slices: int = 4

    def __post_init__(self) -> None:
        if self.min_slices < 1:
            raise ContractError("min_slices must be >= 1")


def window_sample_length(cfg: WindowingConfig, rate: int) -> int:
    return (_us(cfg.window) * rate + _US // 2) // _US


def window_count(duration_us: int, cfg: WindowingConfig) -> int:
    """Windows start at every hop multiple before the stream ends:
    count = ceil(duration / hop)."""
    return _ceil_div(duration_us, _us(cfg.hop))


def segment_count(duration_us: int, cfg: SegmentConfig) -> int:
    return _ceil_div(duration_us, _us(cfg.segment))


def slice_windows(stream: Stream, cfg: WindowingConfig) -> np.ndarray:
    """(n_windows, window_samples) matrix, zero-padded past the stream end."""
    n = stream.samples.size
    hop_us = _us(cfg.hop)
    wlen = window_sample_length(cfg, stream.rate)
    count = window_count(stream.duration_us, cfg)
    out = np.zeros((count, wlen))
    for i in range(count):
        start = i * hop_us * stream.rate // _US
        take = min(wlen, n - start)
        if take > 0:
            out[i, :take] = stream.samples[start : start + take]
    return out


def label_windows(
    windows: np.ndarray | int, annotations: Sequence[Annotation], cfg: WindowingConfig
) -> np.ndarray:
    """Ground-truth flags: positive iff some single annotation overlaps
    the window by at least overlap_threshold of the window length."""
    count = windows if isinstance(windows, int) else len(windows)
    flags = np.zeros(count, dtype=bool)
    if not annotations:
        return flags
    window = cfg.window
    for i in range(count):
        start = i * cfg.hop
        end = start + window
        for ann in annotations:
            overlap = min(end, ann.end) - max(start, ann.start)
            if overlap / window >= cfg.overlap_threshold:
                flags[i] = True
                break
    return flags


def aggregate_segments(
    flags: np.ndarray,
    wcfg: WindowingConfig,
    scfg: SegmentConfig,
    duration: float | int,
) -> np.ndarray:
    """Segment flags: each window belongs to the segment containing its
    start; a segment is positive with >= min_slices positive windows.

    ``duration`` is in seconds (float) or microseconds (int).
    """
    duration_us = duration if isinstance(duration, int) else _us(duration)
    hop_us = _us(wcfg.hop)
    seg_us = _us(scfg.segment)
    expected = window_count(duration_us, wcfg)
    flags = np.asarray(flags, dtype=bool)
    if flags.size != expected:
        raise ShapeError(f"expected {expected} window flags, got {flags.size}")
    n_seg = segment_count(duration_us, scfg)
    counts = np.zeros(n_seg, dtype=np.int64)
    for i in np.flatnonzero(flags):
        counts[int(i) * hop_us // seg_us] += 1
    return counts >= scfg.min_slices


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int
    review_seconds: float

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def score_segments(
    predicted: np.ndarray, truth: np.ndarray, segment_seconds: float = 5.0
) -> ConfusionCounts:
    pred = np.asarray(predicted, dtype=bool)
    true = np.asarray(truth, dtype=bool)
    if pred.shape != true.shape:
        raise ShapeError(f"flag shapes differ: {pred.shape} vs {true.shape}")
    tp = int((pred & true).sum())
    fp = int((pred & ~true).sum())
    fn = int((~pred & true).sum())
    tn = int((~pred & ~true).sum())
    return ConfusionCounts(
        tp=tp, fp=fp, fn=fn, tn=tn, review_seconds=(tp + fp) * segment_seconds
    )


def detect_stream(
    net: nncore.NetworkState,
    stream: Stream,
    annotations: Sequence[Annotation],
    wcfg: WindowingConfig | None = None,
    scfg: SegmentConfig | None = None,
    chunk: int = 512,
) -> tuple[ConfusionCounts, list[dict]]:
    """End-to-end pipeline: slice, classify every window with the binary
    net (class 1 = call), aggregate to segments, score against segment
    ground truth (a segment is truly positive when it contains at least
    one ground-truth-positive window)."""
    wcfg = wcfg or WindowingConfig()
    scfg = scfg or SegmentConfig()
    wlen = window_sample_length(wcfg, stream.rate)
    if net.spec.input_length != wlen:
        raise ShapeError(
            f"network input {net.spec.input_length} != window sample length {wlen}"
        )
    windows = slice_windows(stream, wcfg)
    preds = np.zeros(len(windows), dtype=bool)
    for start in range(0, len(windows), chunk):
        logits = nncore.predict_logits(net, windows[start : start + chunk])
        preds[start : start + len(logits)] = logits.argmax(axis=1) == 1
    truth_windows = label_windows(len(windows), annotations, wcfg)
    duration_us = stream.duration_us
    pred_segments = aggregate_segments(preds, wcfg, scfg, duration_us)
    true_segments = aggregate_segments(
        truth_windows, wcfg, SegmentConfig(scfg.segment, 1), duration_us
    )
    counts = score_segments(pred_segments, true_segments, scfg.segment)
    detail = [
        {
            "segment": i,
            "predicted": bool(pred_segments[i]),
            "truth": bool(true_segments[i]),
        }
        for i in range(len(pred_segments))
    ]
    return counts, detail


# ---------------------------------------------------------------------------
# Synthetic streams with planted calls


def synthesize_stream(
    duration_seconds: float,
    rate: int,
    n_calls: int,
    seed: int = 0,
    call_seconds: float = 0.6,
    call_freq: float = 900.0,
    harmonics: int = 3,
    noise_level: float = 0.05,
    call_amplitude: float = 0.6,
) -> tuple[Stream, list[Annotation]]:
    """Background noise with non-overlapping harmonic call bursts planted
    at random offsets; annotations mark the planted intervals."""
    rng = np.random.default_rng(seed)
    n = round(duration_seconds * rate)
    samples = rng.normal(0.0, noise_level, n)
    call_len = round(call_seconds * rate)
    spacing = n // max(n_calls, 1)
    if spacing <= call_len:
        raise ContractError("stream too short for the requested call count")
    annotations = []
    t = np.arange(call_len) / rate
    env = np.sin(np.pi * np.arange(call_len) / call_len)
    for k in range(n_calls):
        offset = k * spacing + int(rng.integers(0, spacing - call_len))
        burst = np.zeros(call_len)
        for h in range(1, harmonics + 1):
            burst += np.sin(2 * np.pi * h * call_freq * t + rng.uniform(0, 2 * np.pi)) / h
        samples[offset : offset + call_len] += call_amplitude * env * burst
        annotations.append(Annotation(start=offset / rate, end=(offset + call_len) / rate))
    peak = np.abs(samples).max()
    if peak > 1.0:
        samples /= peak
    return Stream(samples=samples, rate=rate), annotations


# ---------------------------------------------------------------------------
# Disk format: raw little-endian float64 plus a JSON sidecar


def save_stream(stream: Stream, annotations: Sequence[Annotation], path) -> None:
    path = Path(path)
    path.write_bytes(np.ascontiguousarray(stream.samples, dtype="<f8").tobytes())
    sidecar = {
        "rate": stream.rate,
        "annotations": [{"start": a.start, "end": a.end} for a in annotations],
    }
    path.with_suffix(path.suffix + ".json").write_text(
        json.dumps(sidecar, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def load_stream(path) -> tuple[Stream, list[Annotation]]:
    path = Path(path)
    sidecar_path = path.with_suffix(path.suffix + ".json")
    if not path.exists():
        raise ParseError(f"missing stream file: {path}")
    if not sidecar_path.exists():
        raise ParseError(f"missing sidecar: {sidecar_path}")
    try:
        doc = json.loads(sidecar_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ParseError(f"{sidecar_path}: line {e.lineno} column {e.colno}: {e.msg}") from e
    for fld in ("rate", "annotations"):
        if fld not in doc:
            raise ParseError(f"{sidecar_path}: missing field {fld!r}")
    samples = np.frombuffer(path.read_bytes(), dtype="<f8").copy()
    annotations = [Annotation(start=a["start"], end=a["end"]) for a in doc["annotations"]]
    return Stream(samples=samples, rate=doc["rate"]), annotations


def detection_csv(rows: Sequence[tuple[str, ConfusionCounts, int]]) -> str:
    """Per-file table: (name, counts, true-positive segment count) rows
    plus a total row."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["file", "segments", "call_segments", "tp", "fp", "fn", "tn"])
    totals = [0] * 6
    for name, counts, call_segments in rows:
        writer.writerow(
            [name, counts.total, call_segments, counts.tp, counts.fp, counts.fn, counts.tn]
        )
        for i, v in enumerate(
            (counts.total, call_segments, counts.tp, counts.fp, counts.fn, counts.tn)
        ):
            totals[i] += v
    writer.writerow(["total"] + totals)
    return buf.getvalue()
