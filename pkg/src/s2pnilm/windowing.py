"""Normalisation constants and midpoint-aligned sliding windows."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError

DEFAULT_WINDOW = 599


@dataclass(frozen=True)
class NormalizationParams:
    mean: float
    std: float

    def __post_init__(self):
        if not (np.isfinite(self.mean) and np.isfinite(self.std)) or self.std <= 0:
            raise ConfigError(f"invalid normalisation constants mean={self.mean} std={self.std}")

    def to_dict(self):
        return {"mean": float(self.mean), "std": float(self.std)}


def _load_defaults():
    path = Path(__file__).with_name("data") / "normalization.json"
    raw = json.loads(path.read_text(encoding="utf-8"))
    return {k: NormalizationParams(float(v["mean"]), float(v["std"])) for k, v in raw.items()}


#: Per-channel constants; ``aggregate`` is the mains channel.
DEFAULT_NORMALIZATION = _load_defaults()

_ALIASES = {
    "mains": "aggregate",
    "washing_machine": "washingmachine",
    "washing machine": "washingmachine",
    "dish_washer": "dishwasher",
    "dish washer": "dishwasher",
}


def load_norm_config(path=None):
    """Channel role -> NormalizationParams; entries in ``path`` override the defaults."""
    table = dict(DEFAULT_NORMALIZATION)
    if path is None:
        return table
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        for name, entry in raw.items():
            table[_ALIASES.get(name.lower(), name)] = NormalizationParams(float(entry["mean"]), float(entry["std"]))
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ConfigError(f"cannot read normalisation config {path}: {exc}") from None
    return table


def params_for(channel, table=None):
    table = DEFAULT_NORMALIZATION if table is None else table
    key = channel if channel in table else _ALIASES.get(channel.lower(), channel.lower())
    try:
        return table[key]
    except KeyError:
        raise ConfigError(f"no normalisation constants for channel {channel!r}") from None


def _values(series):
    return np.asarray(getattr(series, "values", series), dtype=np.float64)


def normalize(series, params):
    """``(x - mean) / std`` elementwise, in float64."""
    return (_values(series) - params.mean) / params.std


def denormalize(values, params, clamp=False):
    out = np.asarray(values, dtype=np.float64) * params.std + params.mean
    if clamp:
        np.maximum(out, 0.0, out=out)
    return out


def pad_and_window(seq, window):
    """All stride-1 windows of ``seq`` after zero padding, one per sample.

    Pads ``window // 2`` zeros in front and ``window - 1 - window // 2`` behind
    (equal for odd windows), so row ``t`` is centred on ``seq[t]`` at column
    ``window // 2``. The result is a read-only view of shape ``[T, window]``.
    """
    seq = np.asarray(seq)
    if seq.ndim != 1 or seq.size < 1:
        raise ValueError("need a non-empty 1-D sequence")
    if window < 1:
        raise ValueError("window must be >= 1")
    half = window // 2
    padded = np.zeros(seq.size + window - 1, dtype=seq.dtype)
    padded[half:half + seq.size] = seq
    return sliding_window_view(padded, window)


@dataclass(frozen=True, eq=False)
class WindowBatch:
    """Normalised mains windows paired with normalised appliance midpoints."""

    inputs: np.ndarray
    targets: np.ndarray
    window_length: int

    def __post_init__(self):
        if self.inputs.ndim != 2 or self.inputs.shape[1] != self.window_length:
            raise ValueError("inputs must be [n_windows, window_length]")
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise ValueError("inputs and targets must have the same number of rows")

    def __len__(self):
        return self.targets.shape[0]

    def take(self, idx):
        """Materialise rows ``idx`` as ``(inputs [n, W], targets [n])``."""
        return np.ascontiguousarray(self.inputs[idx]), self.targets[idx]

    def head(self, n):
        return WindowBatch(self.inputs[:n], self.targets[:n], self.window_length)

    @classmethod
    def concat(cls, batches):
        batches = list(batches)
        if len(batches) == 1:
            return batches[0]
        return ConcatWindows(batches)


class ConcatWindows:
    """Several window sources indexed as one, without copying the windows."""

    def __init__(self, batches):
        if not batches:
            raise ValueError("no window sources given")
        self.window_length = batches[0].window_length
        if any(b.window_length != self.window_length for b in batches):
            raise ValueError("window lengths differ")
        self.batches = list(batches)
        self.offsets = np.cumsum([0] + [len(b) for b in batches])

    def __len__(self):
        return int(self.offsets[-1])

    @property
    def targets(self):
        return np.concatenate([b.targets for b in self.batches])

    def take(self, idx):
        idx = np.arange(len(self))[idx] if isinstance(idx, slice) else np.asarray(idx)
        part = np.searchsorted(self.offsets, idx, side="right") - 1
        x = np.empty((idx.size, self.window_length), dtype=self.batches[0].inputs.dtype)
        y = np.empty(idx.size, dtype=self.batches[0].targets.dtype)
        for j in np.unique(part):
            sel = part == j
            local = idx[sel] - self.offsets[j]
            x[sel] = self.batches[j].inputs[local]
            y[sel] = self.batches[j].targets[local]
        return x, y

    def head(self, n):
        out, left = [], n
        for b in self.batches:
            if left <= 0:
                break
            out.append(b.head(min(left, len(b))))
            left -= len(out[-1])
        return WindowBatch.concat(out)


def make_training_pairs(pair, window, mains_params, appliance_params, dtype=np.float32):
    """One (window, midpoint) training pair per sample of ``pair``."""
    x = normalize(pair.mains, mains_params).astype(dtype)
    y = normalize(pair.appliance, appliance_params).astype(dtype)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite values after normalisation")
    return WindowBatch(pad_and_window(x, window), y, window)
