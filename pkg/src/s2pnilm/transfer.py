"""Checkpoints, layer freezing, and the two transfer workflows.

Checkpoint layout (format version "1"), a directory holding:

``manifest.json``
    UTF-8 JSON: format version, appliance label, window length, sampling
    period, normalisation constants, a layer table (kind, sizes, trainable
    flag, parameter file name and shapes) and training provenance.
``layer_NN.f32``
    For every conv1d/dense layer ``NN`` (zero-padded layer index): the weight
    array then the bias array, raw little-endian float32, row-major.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import neuralnet as nn
from .errors import CheckpointError, ConfigError, DataError, PlanError, SelectorError, SpecError
from .seq2point import Seq2PointModel, TrainConfig, predict, train
from .windowing import NormalizationParams, WindowBatch, make_training_pairs

log = logging.getLogger(__name__)

FORMAT_VERSION = "1"
MANIFEST = "manifest.json"
_LE_F32 = np.dtype("<f4")


def _layer_file(i):
    return f"layer_{i:02d}.f32"


def manifest_for(model):
    layers = []
    for i, (s, p) in enumerate(zip(model.specs, model.params)):
        entry = {"index": i, **s.to_dict()}
        if p:
            entry["file"] = _layer_file(i)
            entry["weight_shape"] = list(p["weight"].shape)
            entry["bias_shape"] = list(p["bias"].shape)
        layers.append(entry)
    return {
        "format_version": FORMAT_VERSION,
        "appliance": model.appliance,
        "window_length": model.window_length,
        "period": model.period,
        "dtype": "float32-le",
        "normalization": {
            "mains": model.mains_params.to_dict(),
            "appliance": model.appliance_params.to_dict(),
        },
        "layers": layers,
        "provenance": model.provenance,
    }


def save_checkpoint(model, path):
    """Write ``model`` to directory ``path`` (created if needed)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for i, p in enumerate(model.params):
        if not p:
            continue
        blob = (np.ascontiguousarray(p["weight"], dtype=_LE_F32).tobytes()
                + np.ascontiguousarray(p["bias"], dtype=_LE_F32).tobytes())
        (path / _layer_file(i)).write_bytes(blob)
    text = json.dumps(manifest_for(model), indent=2, sort_keys=True) + "\n"
    tmp = path / (MANIFEST + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path / MANIFEST)


def _norm(d, what):
    try:
        return NormalizationParams(float(d["mean"]), float(d["std"]))
    except (KeyError, TypeError, ValueError, ConfigError) as exc:
        raise CheckpointError(f"bad {what} normalisation entry: {exc}") from None


def load_checkpoint(path):
    """Read a checkpoint directory; any inconsistency raises CheckpointError."""
    path = Path(path)
    try:
        manifest = json.loads((path / MANIFEST).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise CheckpointError(f"{path}: no {MANIFEST}") from None
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt manifest ({exc})") from None
    if not isinstance(manifest, dict):
        raise CheckpointError(f"{path}: manifest is not an object")
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version!r}")

    try:
        window = int(manifest["window_length"])
        layer_table = manifest["layers"]
        norm = manifest["normalization"]
        specs = [nn.LayerSpec.from_dict(d) for d in layer_table]
        if not isinstance(norm, dict):
            raise TypeError("normalization must be an object")
    except (KeyError, TypeError, ValueError, SpecError) as exc:
        raise CheckpointError(f"{path}: malformed manifest ({exc})") from None

    params = []
    for i, entry in enumerate(layer_table):
        if not specs[i].has_params:
            params.append({})
            continue
        try:
            wshape = tuple(int(v) for v in entry["weight_shape"])
            bshape = tuple(int(v) for v in entry["bias_shape"])
            fname = entry["file"]
        except (KeyError, TypeError, ValueError) as exc:
            raise CheckpointError(f"layer {i}: malformed parameter entry ({exc})") from None
        if any(v < 0 for v in wshape + bshape):
            raise CheckpointError(f"layer {i}: negative shape")
        fpath = path / fname
        try:
            blob = fpath.read_bytes()
        except OSError as exc:
            raise CheckpointError(f"layer {i}: cannot read {fname} ({exc})") from None
        nw, nb = math.prod(wshape), math.prod(bshape)
        expected = (nw + nb) * _LE_F32.itemsize
        if len(blob) != expected:
            raise CheckpointError(
                f"layer {i} ({fname}): {len(blob)} bytes on disk, manifest shapes need {expected}")
        flat = np.frombuffer(blob, dtype=_LE_F32).astype(np.float32)
        params.append({"weight": flat[:nw].reshape(wshape).copy(),
                       "bias": flat[nw:].reshape(bshape).copy()})
    try:
        return Seq2PointModel(
            specs, params, window,
            _norm(norm.get("mains", {}), "mains"),
            _norm(norm.get("appliance", {}), "appliance"),
            str(manifest.get("appliance", "appliance")),
            int(manifest.get("period", 8)),
            dict(manifest.get("provenance") or {}),
        )
    except SpecError as exc:
        raise CheckpointError(f"{path}: manifest inconsistent with layer shapes ({exc})") from None


def _as_model(source):
    return source if isinstance(source, Seq2PointModel) else load_checkpoint(source)


# -- freezing -------------------------------------------------------------------

def layer_names(specs):
    """Names usable in selectors: ``conv1``..``convN``, ``dense1``.. in stack order."""
    names, counts = {}, {}
    for i, s in enumerate(specs):
        if s.has_params:
            stem = "conv" if s.kind == "conv1d" else "dense"
            counts[stem] = counts.get(stem, 0) + 1
            names[f"{stem}{counts[stem]}"] = i
    return names


def select_layers(specs, selector):
    """Resolve a selector to layer indices.

    ``None``/empty selects nothing; ``"conv-stack"`` every conv1d layer,
    ``"dense-head"`` every dense layer, ``"all"`` every parameterised layer;
    otherwise an iterable of layer names (see :func:`layer_names`) or indices.
    """
    if not selector:
        return []
    if isinstance(selector, str):
        if selector == "conv-stack":
            return [i for i, s in enumerate(specs) if s.kind == "conv1d"]
        if selector == "dense-head":
            return [i for i, s in enumerate(specs) if s.kind == "dense"]
        if selector == "all":
            return [i for i, s in enumerate(specs) if s.has_params]
        selector = [selector]
    names = layer_names(specs)
    out = []
    for item in selector:
        if isinstance(item, (int, np.integer)):
            if not 0 <= item < len(specs) or not specs[item].has_params:
                raise SelectorError(f"no parameterised layer at index {item}")
            out.append(int(item))
        elif item in names:
            out.append(names[item])
        else:
            raise SelectorError(f"unknown layer {item!r}; known: {sorted(names)}")
    return sorted(set(out))


def freeze(model, selector):
    """Copy of ``model`` with the selected layers marked non-trainable."""
    idx = set(select_layers(model.specs, selector))
    specs = [replace(s, trainable=False) if i in idx else s for i, s in enumerate(model.specs)]
    return model.replace(specs=specs)


def unfreeze(model, selector="all"):
    idx = set(select_layers(model.specs, selector))
    specs = [replace(s, trainable=True) if i in idx else s for i, s in enumerate(model.specs)]
    return model.replace(specs=specs)


# -- workflows ----------------------------------------------------------------

MODES = ("atl", "ctl-direct", "ctl-finetune")


@dataclass(frozen=True)
class TransferPlan:
    mode: str
    source: object
    freeze: object = "conv-stack"
    subset_fraction: float = 0.1
    config: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.mode not in MODES:
            raise PlanError(f"unknown transfer mode {self.mode!r}")
        if not 0.0 < self.subset_fraction <= 1.0:
            raise PlanError("subset fraction must be in (0, 1]")
        if self.mode in ("atl", "ctl-finetune") and self.freeze != "conv-stack":
            log.warning("%s with freeze=%r departs from the frozen-conv scheme",
                        self.mode, self.freeze)


def atl_transfer(source, train_batches, val_batches, config, appliance_params,
                 appliance="appliance", seed=None, freeze_selector="conv-stack"):
    """Appliance transfer: keep the source conv stack frozen, train a fresh dense head.

    The head is re-initialised from ``seed`` (default ``config.seed``).
    """
    src = _as_model(source)
    if train_batches.window_length != src.window_length:
        raise PlanError(
            f"target windows have length {train_batches.window_length}, "
            f"source model expects {src.window_length}")
    seed = config.seed if seed is None else seed
    fresh = nn.init_params(src.specs, seed, src.input_shape)
    keep = set(src.conv_indices())
    params = [src.params[i] if i in keep else fresh[i] for i in range(len(src.specs))]
    specs = [replace(s, trainable=True) for s in src.specs]
    model = Seq2PointModel(specs, params, src.window_length, src.mains_params,
                           appliance_params, appliance, src.period,
                           {"transfer": "atl", "source_appliance": src.appliance})
    model = freeze(model, freeze_selector)
    return train(model, train_batches, val_batches, config)


def ctl_apply(source, mains):
    """Direct cross-domain application: predict with the source model unchanged."""
    src = _as_model(source)
    if mains.period != src.period:
        raise PlanError(f"target period {mains.period}s differs from source period {src.period}s")
    return predict(src, mains)


def leading_subset(pairs, fraction):
    """Chronological prefix holding ``ceil(fraction * total)`` samples."""
    if not 0.0 < fraction <= 1.0:
        raise PlanError("subset fraction must be in (0, 1]")
    total = sum(len(p) for p in pairs)
    left = math.ceil(fraction * total)
    out = []
    for p in pairs:
        if left <= 0:
            break
        take = min(left, len(p))
        out.append(p.slice(0, take))
        left -= take
    return out


def ctl_finetune(source, target_pairs, fraction, config, validation_pairs=None,
                 tune_conv=False):
    """Fine-tune the source dense head on the leading ``fraction`` of the target data.

    The conv stack stays frozen unless ``tune_conv`` is set. Without
    ``validation_pairs`` the subset itself is monitored for early stopping.
    """
    src = _as_model(source)
    pairs = list(target_pairs)
    if pairs and pairs[0].mains.period != src.period:
        raise PlanError(f"target period {pairs[0].mains.period}s differs from source {src.period}s")
    subset = leading_subset(pairs, fraction)
    if not subset or sum(len(p) for p in subset) == 0:
        raise DataError("fine-tuning subset is empty")
    W = src.window_length

    def windows(ps):
        return WindowBatch.concat(
            [make_training_pairs(p, W, src.mains_params, src.appliance_params) for p in ps])

    train_src = windows(subset)
    val_src = windows(validation_pairs) if validation_pairs else train_src
    model = unfreeze(src, "all")
    if not tune_conv:
        model = freeze(model, "conv-stack")
    prov = dict(src.provenance)
    prov.update(transfer="ctl-finetune", subset_fraction=fraction)
    model = model.replace(provenance=prov)
    return train(model, train_src, val_src, config)
