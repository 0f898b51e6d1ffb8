"""Feature extraction by truncating the network at the last convolution.

The feature of a clip is the global-average-pooled activation of the
last conv layer, so its dimension is fixed by the filter count (5 * C
after the rebuild step) regardless of input length.  The cache carries a
version that must move in lockstep with the network's fine-tune revision.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import nncore
from .data import AudioClip
from .errors import ContractError, ShapeError


@dataclass
class FeatureMatrix:
    ids: list[str]
    values: np.ndarray
    version: int = 0

    @property
    def dims(self) -> int:
        return self.values.shape[1]

    def rows_for(self, ids: Sequence[str]) -> np.ndarray:
        index = {cid: i for i, cid in enumerate(self.ids)}
        return self.values[[index[c] for c in ids]]


def extract_features(
    net: nncore.NetworkState,
    clips: Sequence[AudioClip],
    version: int = 0,
    chunk: int = 256,
) -> FeatureMatrix:
    """One feature row per clip; deterministic and chunk-size independent."""
    ids = [c.id for c in clips]
    if not clips:
        d = nncore.forward(net, np.zeros((1, net.spec.input_length)))[1].penultimate.shape[1]
        return FeatureMatrix(ids=[], values=np.zeros((0, d)), version=version)
    for c in clips:
        if c.samples.size != net.spec.input_length:
            raise ShapeError(
                f"clip {c.id}: length {c.samples.size} != network input {net.spec.input_length}"
            )
    x = np.stack([c.samples for c in clips])
    rows = []
    for start in range(0, x.shape[0], chunk):
        _, trace = nncore.forward(net, x[start : start + chunk])
        rows.append(trace.penultimate)
    return FeatureMatrix(ids=ids, values=np.concatenate(rows, axis=0), version=version)


def refresh_features(
    cache: FeatureMatrix, net: nncore.NetworkState, clips: Sequence[AudioClip]
) -> FeatureMatrix:
    """Full re-extraction after a fine-tune round; version increments by one."""
    if net.revision <= cache.version:
        raise ContractError(
            f"network revision {net.revision} is not newer than cache version {cache.version}"
        )
    return extract_features(net, clips, version=cache.version + 1)


def save_features_csv(matrix: FeatureMatrix, path) -> None:
    header = "id," + ",".join(f"f{i}" for i in range(matrix.dims)) + ",version"
    lines = [header]
    for cid, row in zip(matrix.ids, matrix.values):
        lines.append(cid + "," + ",".join(repr(float(v)) for v in row) + f",{matrix.version}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
