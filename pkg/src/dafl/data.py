"""Dataset model, pool splitting, augmentation, and file I/O.

Clips are float64 waveforms in [-1, 1].  A dataset on disk is a
``manifest.json`` listing ``{id, file, rate, label?}`` plus one raw
little-endian float64 file per clip; round-trips are bit-exact.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, ParseError, ShapeError


@dataclass
class AudioClip:
    samples: np.ndarray
    rate: int
    label: int | None
    id: str

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise ContractError(f"clip {self.id}: samples must be a nonempty vector")
        if self.rate <= 0:
            raise ContractError(f"clip {self.id}: rate must be positive")
        peak = float(np.abs(self.samples).max())
        if peak > 1.0 + 1e-12:
            raise ContractError(f"clip {self.id}: samples exceed [-1, 1] (peak {peak})")

    @property
    def duration(self) -> float:
        return self.samples.size / self.rate


@dataclass
class Dataset:
    clips: list[AudioClip]

    def __len__(self) -> int:
        return len(self.clips)

    @property
    def num_classes(self) -> int:
        labels = [c.label for c in self.clips if c.label is not None]
        return max(labels) + 1 if labels else 0

    def by_id(self, clip_id: str) -> AudioClip:
        for c in self.clips:
            if c.id == clip_id:
                return c
        raise KeyError(clip_id)

    def stack(self, indices) -> tuple[np.ndarray, np.ndarray]:
        """(waveform matrix, label vector) for the given indices."""
        idx = list(indices)
        lengths = {self.clips[i].samples.size for i in idx}
        if len(lengths) > 1:
            raise ShapeError(f"clips differ in length: {sorted(lengths)}")
        x = np.stack([self.clips[i].samples for i in idx])
        y = np.array([-1 if self.clips[i].label is None else self.clips[i].label for i in idx])
        return x, y


@dataclass(frozen=True)
class SynthConfig:
    """Harmonic-stack toy dataset: class c sits at base_freq * (1 + c*freq_step)."""

    num_classes: int = 10
    clips_per_class: int = 200
    clip_seconds: float = 1.0
    rate: int = 4000
    base_freq: float = 130.0
    freq_step: float = 0.11
    harmonics: int = 4
    snr_db: float = 6.0
    seed: int = 0

    def __post_init__(self) -> None:
        top = self.base_freq * (1 + (self.num_classes - 1) * self.freq_step) * self.harmonics
        if top >= self.rate / 2:
            raise ContractError(
                f"highest harmonic {top:.1f} Hz violates Nyquist for rate {self.rate}"
            )


def generate_synthetic(cfg: SynthConfig) -> Dataset:
    """Deterministic per seed: random-phase harmonic stacks with an
    amplitude envelope plus Gaussian noise at the configured SNR."""
    rng = np.random.default_rng(cfg.seed)
    n = round(cfg.clip_seconds * cfg.rate)
    t = np.arange(n) / cfg.rate
    tau = np.arange(n) / n
    clips = []
    for c in range(cfg.num_classes):
        fund = cfg.base_freq * (1 + c * cfg.freq_step)
        for j in range(cfg.clips_per_class):
            phases = rng.uniform(0, 2 * np.pi, cfg.harmonics)
            amps = rng.uniform(0.5, 1.0, cfg.harmonics) / np.arange(1, cfg.harmonics + 1)
            shape = rng.uniform(0.5, 2.0)
            sig = np.zeros(n)
            for h in range(cfg.harmonics):
                sig += amps[h] * np.sin(2 * np.pi * (h + 1) * fund * t + phases[h])
            sig *= np.sin(np.pi * tau) ** shape
            if math.isfinite(cfg.snr_db):
                noise_power = float((sig**2).mean()) / 10 ** (cfg.snr_db / 10)
                sig = sig + rng.normal(0.0, math.sqrt(noise_power), n)
            peak = np.abs(sig).max()
            if peak > 0:
                sig = sig / peak
            clips.append(
                AudioClip(samples=sig, rate=cfg.rate, label=c, id=f"synth-{c:02d}-{j:04d}")
            )
    return Dataset(clips)


@dataclass(frozen=True)
class SplitConfig:
    """Per-class reserve-then-split partitioning.

    ``reserve_fraction`` of every class is held out and divided into
    train/val/test by ``fractions`` with floor rounding (the remainder
    joins the test split); everything else enters the unlabeled pool.
    """

    reserve_fraction: float = 0.5
    fractions: tuple[float, float, float] = (0.4, 0.2, 0.4)
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "fractions", tuple(self.fractions))
        if not 0 <= self.reserve_fraction <= 1:
            raise ContractError("reserve_fraction must be in [0, 1]")
        if any(not 0 <= f <= 1 for f in self.fractions):
            raise ContractError("split fractions must be in [0, 1]")
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ContractError(f"split fractions sum to {sum(self.fractions)}, expected 1")


@dataclass
class PoolState:
    """Disjoint index partitions over one dataset.

    ``labeled``/``validation``/``test`` carry labels; entries in ``pool``
    must only be labeled through the annotation oracle.
    """

    dataset: Dataset
    labeled: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    pool: np.ndarray

    def validate(self) -> None:
        parts = [self.labeled, self.validation, self.test, self.pool]
        flat = np.concatenate(parts)
        if len(np.unique(flat)) != len(flat):
            raise ContractError("pool partitions overlap")
        if flat.size and (flat.min() < 0 or flat.max() >= len(self.dataset)):
            raise ContractError("partition index out of range")


def split_pools(dataset: Dataset, cfg: SplitConfig) -> PoolState:
    labels = [c.label for c in dataset.clips]
    if any(l is None for l in labels):
        raise ContractError("split_pools requires a fully labeled dataset")
    classes = sorted(set(labels))
    counts = {c: labels.count(c) for c in classes}
    thin = [c for c, k in counts.items() if k < 4]
    if thin:
        raise ContractError(f"classes with fewer than 4 instances: {thin}")
    rng = np.random.default_rng(cfg.seed)
    tr_frac, va_frac, _ = cfg.fractions
    train, val, test, pool = [], [], [], []
    for c in classes:
        idx = np.flatnonzero(np.array(labels) == c)
        rng.shuffle(idx)
        r = math.floor(cfg.reserve_fraction * idx.size)
        reserve, rest = idx[:r], idx[r:]
        n_tr = math.floor(r * tr_frac)
        n_va = math.floor(r * va_frac)
        train.extend(reserve[:n_tr])
        val.extend(reserve[n_tr : n_tr + n_va])
        test.extend(reserve[n_tr + n_va :])  # floor remainder goes to test
        pool.extend(rest)
    state = PoolState(
        dataset=dataset,
        labeled=np.array(train, dtype=np.int64),
        validation=np.array(val, dtype=np.int64),
        test=np.array(test, dtype=np.int64),
        pool=np.array(pool, dtype=np.int64),
    )
    state.validate()
    return state


# ---------------------------------------------------------------------------
# Augmentation and resampling

AUGMENT_KINDS = ("noise", "time_shift", "time_stretch", "pitch_shift")

# documented magnitude ranges per kind
_RANGES = {
    "noise": (-20.0, 150.0),  # SNR in dB
    "time_shift": (-1.0, 1.0),  # fraction of clip length
    "time_stretch": (0.25, 4.0),  # duration factor
    "pitch_shift": (0.25, 4.0),  # pitch factor
}


def _renormalize(samples: np.ndarray) -> np.ndarray:
    peak = np.abs(samples).max()
    return samples / peak if peak > 1.0 else samples


def augment(clip: AudioClip, kind: str, magnitude: float, seed: int = 0) -> AudioClip:
    """Length-preserving, deterministic-per-seed waveform transforms."""
    if kind not in AUGMENT_KINDS:
        raise ContractError(f"unknown augmentation {kind!r}")
    lo, hi = _RANGES[kind]
    if not lo <= magnitude <= hi:
        raise ContractError(f"{kind}: magnitude {magnitude} outside [{lo}, {hi}]")
    s = clip.samples
    n = s.size
    rng = np.random.default_rng(seed)
    if kind == "noise":
        power = float((s**2).mean()) / 10 ** (magnitude / 10)
        out = s + rng.normal(0.0, math.sqrt(power), n)
    elif kind == "time_shift":
        k = math.floor(magnitude * n)
        out = np.zeros(n)
        if k >= 0:
            out[k:] = s[: n - k]
        else:
            out[: n + k] = s[-k:]
    elif kind == "time_stretch":
        new_n = round(n * magnitude)
        stretched = np.interp(np.arange(new_n) / magnitude, np.arange(n), s)
        out = np.zeros(n)
        out[: min(n, new_n)] = stretched[:n]
    else:  # pitch_shift: resample without duration compensation
        positions = np.arange(n) * magnitude
        out = np.zeros(n)
        valid = positions <= n - 1
        out[valid] = np.interp(positions[valid], np.arange(n), s)
    return AudioClip(
        samples=_renormalize(out),
        rate=clip.rate,
        label=clip.label,
        id=f"{clip.id}-{kind}{seed}",
    )


def resample(clip: AudioClip, new_rate: int) -> AudioClip:
    """Linear-interpolation resampling; duration preserved within one sample."""
    if new_rate <= 0:
        raise ContractError("new_rate must be positive")
    if new_rate == clip.rate:
        return AudioClip(clip.samples.copy(), clip.rate, clip.label, clip.id)
    n = clip.samples.size
    new_n = round(n * new_rate / clip.rate)
    positions = np.arange(new_n) * (clip.rate / new_rate)
    out = np.interp(positions, np.arange(n), clip.samples)
    return AudioClip(out, new_rate, clip.label, clip.id)


# ---------------------------------------------------------------------------
# Disk format


def save_dataset(dataset: Dataset, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for clip in dataset.clips:
        fname = f"{clip.id}.f64"
        entry = {"id": clip.id, "file": fname, "rate": clip.rate}
        if clip.label is not None:
            entry["label"] = clip.label
        entries.append(entry)
        (directory / fname).write_bytes(
            np.ascontiguousarray(clip.samples, dtype="<f8").tobytes()
        )
    manifest = json.dumps({"clips": entries}, sort_keys=True, indent=2) + "\n"
    (directory / "manifest.json").write_text(manifest, encoding="utf-8")


def load_dataset(directory) -> Dataset:
    directory = Path(directory)
    path = directory / "manifest.json"
    if not path.exists():
        raise ParseError(f"missing manifest: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}") from e
    if not isinstance(doc, dict) or "clips" not in doc:
        raise ParseError(f"{path}: missing field 'clips'")
    clips = []
    seen: set[str] = set()
    for i, entry in enumerate(doc["clips"]):
        for fld in ("id", "file", "rate"):
            if fld not in entry:
                raise ParseError(f"{path}: clips[{i}]: missing field {fld!r}")
        cid = entry["id"]
        if cid in seen:
            raise ParseError(f"{path}: duplicate id {cid!r}")
        seen.add(cid)
        fpath = directory / entry["file"]
        if not fpath.exists():
            raise ParseError(f"missing sample file for id {cid!r}: {fpath}")
        samples = np.frombuffer(fpath.read_bytes(), dtype="<f8")
        clips.append(
            AudioClip(
                samples=samples.copy(),
                rate=entry["rate"],
                label=entry.get("label"),
                id=cid,
            )
        )
    return Dataset(clips)
