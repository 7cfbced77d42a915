"""Sequence-to-point model: assembly, training with early stopping, inference,
feature extraction and a synthetic household generator."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import neuralnet as nn
from .errors import DataError, SpecError
from .powerdata import DEFAULT_PERIOD, AlignedPair, PowerSeries
from .windowing import (
    NormalizationParams,
    WindowBatch,
    denormalize,
    normalize,
    pad_and_window,
)

log = logging.getLogger(__name__)

EVAL_CHUNK = 4096


@dataclass(eq=False)
class Seq2PointModel:
    specs: list
    params: list
    window_length: int
    mains_params: NormalizationParams
    appliance_params: NormalizationParams
    appliance: str = "appliance"
    period: int = DEFAULT_PERIOD
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        shapes = nn.infer_shapes(self.specs, self.input_shape)
        if shapes[-1] != (1,):
            raise SpecError(f"final layer must output one value, got {shapes[-1]}")
        expected = nn.param_shapes(self.specs, self.input_shape)
        if len(self.params) != len(self.specs):
            raise SpecError("parameter list length does not match the layer list")
        for i, (exp, got) in enumerate(zip(expected, self.params)):
            if {k: tuple(v) for k, v in exp.items()} != {k: a.shape for k, a in got.items()}:
                raise SpecError(f"layer {i}: parameter shapes do not match the layer spec")

    @property
    def input_shape(self):
        return (self.window_length, 1)

    def replace(self, **kw):
        return replace(self, **kw)

    def conv_indices(self):
        return [i for i, s in enumerate(self.specs) if s.kind == "conv1d"]

    def dense_indices(self):
        return [i for i, s in enumerate(self.specs) if s.kind == "dense"]


def build_model(window, mains_params, appliance_params, arch=None, seed=0,
                appliance="appliance", period=DEFAULT_PERIOD, dtype=np.float32):
    """Seeded, fully trainable model; ``arch`` defaults to the seq2point stack."""
    specs = list(nn.seq2point_stack() if arch is None else arch)
    specs = [replace(s, trainable=True) for s in specs]
    params = nn.init_params(specs, seed, (window, 1), dtype=dtype)
    return Seq2PointModel(specs, params, int(window), mains_params, appliance_params,
                          appliance, int(period))


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 50
    batch_size: int = 1000
    min_epochs: int = 5
    patience: int = 5
    seed: int = 0
    shuffle: bool = True
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if not self.max_epochs >= self.min_epochs >= 0:
            raise ValueError("need max_epochs >= min_epochs >= 0")
        if self.patience < 1 or self.batch_size < 1:
            raise ValueError("patience and batch_size must be >= 1")


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    stopped_epoch: int = 0
    best_epoch: int = 0
    # wall-clock seconds of the optimisation pass per epoch; not exported
    epoch_seconds: list = field(default_factory=list)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_loss", "val_loss"])
            for e, (tl, vl) in enumerate(zip(self.train_loss, self.val_loss), start=1):
                w.writerow([e, repr(float(tl)), repr(float(vl))])


class EarlyStopping:
    """Patience-based stopping on a monitored loss; ties keep the earlier epoch."""

    def __init__(self, patience, min_epochs):
        self.patience = patience
        self.min_epochs = min_epochs
        self.best = np.inf
        self.best_epoch = 0
        self.wait = 0

    def update(self, epoch, loss):
        """Record ``loss`` for ``epoch``; returns ``(improved, should_stop)``."""
        improved = loss < self.best
        if improved:
            self.best, self.best_epoch, self.wait = loss, epoch, 0
        else:
            self.wait += 1
        return improved, epoch >= self.min_epochs and self.wait >= self.patience


def evaluate_loss(specs, params, batch, chunk=EVAL_CHUNK):
    """MSE in normalised units over a whole window source."""
    n = len(batch)
    total = 0.0
    for s in range(0, n, chunk):
        x, y = batch.take(slice(s, min(s + chunk, n)))
        out = nn.forward(specs, params, x)[:, 0]
        d = out.astype(np.float64) - y
        total += float(d @ d)
    return total / n


def train(model, train_batches, validation, config, callback=None):
    """Mini-batch Adam with early stopping; returns the best-epoch model.

    ``validation`` is a window source, or a callable ``(specs, params) -> loss``
    for custom monitoring. ``callback(epoch, params, train_loss, val_loss)``
    runs after each epoch.
    """
    if len(train_batches) == 0:
        raise DataError("empty training source")
    if callable(validation):
        val_fn = validation
    else:
        if len(validation) == 0:
            raise DataError("empty validation source")
        def val_fn(specs, params):
            return evaluate_loss(specs, params, validation)

    specs = model.specs
    params = model.params
    history = TrainHistory()
    if config.max_epochs == 0:
        return model.replace(params=nn.copy_params(params)), history

    rng = np.random.default_rng(config.seed)
    state = nn.AdamState(config.learning_rate, config.beta1, config.beta2, config.epsilon)
    stopper = EarlyStopping(config.patience, config.min_epochs)
    best = params
    n = len(train_batches)
    bs = config.batch_size
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n) if config.shuffle else np.arange(n)
        tic = time.perf_counter()
        total = 0.0
        for s in range(0, n, bs):
            idx = order[s:s + bs]
            x, y = train_batches.take(idx)
            loss, grads = nn.compute_gradients(params, specs, x, y)
            params, state = nn.adam_step(params, grads, state, specs)
            total += loss * idx.size
        history.epoch_seconds.append(time.perf_counter() - tic)
        train_loss = total / n
        val_loss = float(val_fn(specs, params))
        history.train_loss.append(train_loss)
        history.val_loss.append(val_loss)
        improved, stop = stopper.update(epoch, val_loss)
        if improved:
            best = params
        log.info("epoch %d train %.6f val %.6f%s", epoch, train_loss, val_loss,
                 " *" if improved else "")
        if callback is not None:
            callback(epoch, params, train_loss, val_loss)
        history.stopped_epoch = epoch
        if stop:
            break
    history.best_epoch = stopper.best_epoch
    provenance = dict(model.provenance)
    provenance.update(seed=config.seed, epochs_run=history.stopped_epoch,
                      best_epoch=history.best_epoch, batch_size=bs,
                      learning_rate=config.learning_rate)
    return model.replace(params=nn.copy_params(best), provenance=provenance), history


# -- inference ----------------------------------------------------------------

def _windows_for(model, mains):
    if len(mains) == 0:
        raise DataError("empty mains series")
    dtype = nn._param_dtype(model.params)
    x = normalize(mains, model.mains_params).astype(dtype)
    return pad_and_window(x, model.window_length)


def predict_normalized(model, windows, chunk=EVAL_CHUNK):
    """Raw network outputs (normalised units) for a ``[n, W]`` window array."""
    n = windows.shape[0]
    out = np.empty(n, dtype=nn._param_dtype(model.params))
    for s in range(0, n, chunk):
        e = min(s + chunk, n)
        out[s:e] = nn.forward(model.specs, model.params, np.ascontiguousarray(windows[s:e]))[:, 0]
    return out


def predict(model, mains):
    """Appliance power estimate, one value per mains sample, clamped at 0 W."""
    if mains.period != model.period:
        log.warning("mains period %ss differs from model period %ss", mains.period, model.period)
    raw = predict_normalized(model, _windows_for(model, mains))
    watts = denormalize(raw, model.appliance_params, clamp=True)
    return PowerSeries(mains.timestamps, watts, mains.period, model.appliance)


def _feature_stop(model):
    convs = model.conv_indices()
    if not convs:
        raise SpecError("model has no convolutional layer")
    stop = convs[-1] + 1
    if stop < len(model.specs) and model.specs[stop].kind == "relu":
        stop += 1
    return stop


def extract_features(model, windows):
    """Post-activation output of the last conv layer, ``[n, L, C_last]``."""
    windows = np.asarray(windows)
    if windows.ndim == 1:
        windows = windows[None]
    return nn.forward(model.specs, model.params, windows, stop=_feature_stop(model))


def head_forward(model, features):
    """Finish the forward pass from :func:`extract_features` output."""
    return nn.forward(model.specs, model.params, features, start=_feature_stop(model))[:, 0]


def mains_windows(model, mains, start=0, stop=None):
    """Normalised, padded windows of ``mains`` for sample range ``start:stop``."""
    return _windows_for(model, mains)[start:stop]


# -- synthetic households -------------------------------------------------------

@dataclass(frozen=True)
class ApplianceSpec:
    """A seeded ON/OFF appliance.

    ON runs last ``mean_on_duration`` samples on average and the appliance is
    ON for ``duty_cycle`` of the time. ``pattern`` optionally modulates the ON
    power (multipliers cycled every ``pattern_block`` samples), giving a
    multi-state appliance such as a washing machine.
    """

    name: str
    on_power: float
    mean_on_duration: float
    duty_cycle: float
    pattern: tuple | None = None
    pattern_block: int = 1

    def __post_init__(self):
        if not 0.0 <= self.duty_cycle <= 1.0:
            raise ValueError("duty_cycle must be in [0, 1]")
        if self.on_power < 0 or self.mean_on_duration < 1:
            raise ValueError("on_power must be >= 0 and mean_on_duration >= 1")

    def scaled(self, factor):
        return replace(self, on_power=self.on_power * factor)


def _two_state(spec, length, rng):
    state = np.zeros(length, dtype=bool)
    if spec.duty_cycle >= 1.0:
        state[:] = True
    elif spec.duty_cycle > 0.0:
        mean_on = float(spec.mean_on_duration)
        mean_off = mean_on * (1.0 - spec.duty_cycle) / spec.duty_cycle
        on = rng.random() < spec.duty_cycle
        pos = 0
        while pos < length:
            mean = mean_on if on else mean_off
            run = int(rng.geometric(min(1.0, 1.0 / mean)))
            if on:
                state[pos:pos + run] = True
            pos += run
            on = not on
    power = state.astype(np.float64) * spec.on_power
    if spec.pattern:
        # position within the current ON run
        idx = np.arange(length)
        starts = np.where(state & ~np.concatenate(([False], state[:-1])), idx, 0)
        offset = idx - np.maximum.accumulate(starts)
        mult = np.asarray(spec.pattern, dtype=np.float64)
        power *= mult[(offset // max(1, spec.pattern_block)) % mult.size]
    return power


def synthesize_household(appliances, noise_std, length, seed, period=DEFAULT_PERIOD, start=0):
    """Mains as the sum of seeded appliance traces plus Gaussian noise, clamped at 0.

    Returns ``(mains, {name: appliance series})``.
    """
    if length < 1:
        raise ValueError("length must be >= 1")
    ss = np.random.SeedSequence(seed)
    children = ss.spawn(len(appliances) + 1)
    ts = start + np.arange(length, dtype=np.int64) * period
    total = np.zeros(length)
    parts = {}
    for spec, child in zip(appliances, children[:-1]):
        power = _two_state(spec, length, np.random.default_rng(child))
        total += power
        parts[spec.name] = PowerSeries(ts, power, period, spec.name)
    if noise_std > 0:
        total = total + np.random.default_rng(children[-1]).normal(0.0, noise_std, length)
    mains = PowerSeries(ts, np.maximum(total, 0.0), period, "mains")
    return mains, parts


def household_pair(mains, parts, target):
    return AlignedPair(mains, parts[target])


def split_pair(pair, fractions=(0.7, 0.1, 0.2)):
    """Chronological train/validation/test cut of one aligned pair."""
    n = len(pair)
    a = int(round(n * fractions[0]))
    b = a + int(round(n * fractions[1]))
    return pair.slice(0, a), pair.slice(a, b), pair.slice(b, n)


__all__ = [
    "ApplianceSpec", "EarlyStopping", "Seq2PointModel", "TrainConfig", "TrainHistory",
    "WindowBatch", "build_model", "evaluate_loss", "extract_features", "head_forward",
    "mains_windows", "predict", "predict_normalized", "split_pair", "synthesize_household",
    "train",
]
