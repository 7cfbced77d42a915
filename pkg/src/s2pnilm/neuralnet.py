"""A small, closed-layer-set neural network engine.

Layers are described by :class:`LayerSpec`; parameters live separately as a
list with one dict per layer (``{"weight", "bias"}`` for conv1d/dense, empty
otherwise). Shapes:

* conv1d weight ``[kernel_length, in_channels, filters]``, bias ``[filters]``
* dense weight ``[in_features, units]``, bias ``[units]``

Activations are batched: ``[N, L, C]`` through the conv stack, ``[N, F]``
after flatten. Training runs in float32; casting parameters and inputs to
float64 gives the exact-arithmetic mode used by gradient checks.

Training minimises mean squared error. Maximising the Gaussian log-likelihood
of the midpoint targets under additive white noise is the same problem up to
constants.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .errors import ShapeError, SpecError

KINDS = ("conv1d", "dense", "relu", "flatten")
PARAM_KINDS = ("conv1d", "dense")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    filters: int = 0
    kernel_length: int = 0
    stride: int = 1
    padding: str = "same"
    units: int = 0
    in_features: int | None = None
    trainable: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpecError(f"unknown layer kind {self.kind!r}")
        if self.kind == "conv1d":
            if self.filters < 1 or self.kernel_length < 1:
                raise SpecError("conv1d needs filters >= 1 and kernel_length >= 1")
            if self.stride != 1:
                raise SpecError("only stride 1 is supported")
            if self.padding not in ("same", "valid"):
                raise SpecError(f"unknown padding {self.padding!r}")
        if self.kind == "dense" and self.units < 1:
            raise SpecError("dense needs units >= 1")

    @classmethod
    def conv1d(cls, filters, kernel_length, padding="same", trainable=True):
        return cls("conv1d", filters=filters, kernel_length=kernel_length,
                   padding=padding, trainable=trainable)

    @classmethod
    def dense(cls, units, in_features=None, trainable=True):
        return cls("dense", units=units, in_features=in_features, trainable=trainable)

    @classmethod
    def relu(cls):
        return cls("relu")

    @classmethod
    def flatten(cls):
        return cls("flatten")

    @property
    def has_params(self):
        return self.kind in PARAM_KINDS

    def to_dict(self):
        d = {"kind": self.kind, "trainable": self.trainable}
        if self.kind == "conv1d":
            d.update(filters=self.filters, kernel_length=self.kernel_length,
                     stride=self.stride, padding=self.padding)
        elif self.kind == "dense":
            d.update(units=self.units)
        return d

    @classmethod
    def from_dict(cls, d):
        kind = d.get("kind")
        try:
            if kind == "conv1d":
                return cls("conv1d", filters=int(d["filters"]), kernel_length=int(d["kernel_length"]),
                           stride=int(d.get("stride", 1)), padding=d.get("padding", "same"),
                           trainable=bool(d.get("trainable", True)))
            if kind == "dense":
                return cls("dense", units=int(d["units"]), trainable=bool(d.get("trainable", True)))
        except KeyError as exc:
            raise SpecError(f"layer {d!r} is missing {exc}") from None
        return cls(kind, trainable=bool(d.get("trainable", True)))


def seq2point_stack(conv=((30, 10), (30, 8), (40, 6), (50, 5), (50, 5)), hidden=1024):
    """conv1d+ReLU blocks, flatten, dense(hidden)+ReLU, dense(1).

    The default sizes are those of the published seq2point network.
    """
    specs = []
    for filters, k in conv:
        specs += [LayerSpec.conv1d(filters, k), LayerSpec.relu()]
    specs.append(LayerSpec.flatten())
    if hidden:
        specs += [LayerSpec.dense(hidden), LayerSpec.relu()]
    specs.append(LayerSpec.dense(1))
    return specs


def same_pad_left(kernel_length):
    return (kernel_length - 1) // 2


def infer_shapes(specs, input_shape):
    """Per-sample output shape of every layer; raises SpecError on mismatch."""
    shape = tuple(input_shape)
    shapes = []
    for i, s in enumerate(specs):
        if s.kind == "conv1d":
            if len(shape) != 2:
                raise SpecError(f"layer {i}: conv1d needs [L, C] input, got {shape}")
            length = shape[0] if s.padding == "same" else shape[0] - s.kernel_length + 1
            if length < 1:
                raise SpecError(f"layer {i}: kernel {s.kernel_length} longer than input {shape[0]}")
            shape = (length, s.filters)
        elif s.kind == "dense":
            if len(shape) != 1:
                raise SpecError(f"layer {i}: dense needs flat input, got {shape}")
            if s.in_features is not None and s.in_features != shape[0]:
                raise SpecError(
                    f"layer {i}: dense expects {s.in_features} inputs but receives {shape[0]}")
            shape = (s.units,)
        elif s.kind == "flatten":
            shape = (int(np.prod(shape)),)
        shapes.append(shape)
    return shapes


def param_shapes(specs, input_shape):
    shapes = infer_shapes(specs, input_shape)
    out = []
    prev = tuple(input_shape)
    for s, shp in zip(specs, shapes):
        if s.kind == "conv1d":
            out.append({"weight": (s.kernel_length, prev[1], s.filters), "bias": (s.filters,)})
        elif s.kind == "dense":
            out.append({"weight": (prev[0], s.units), "bias": (s.units,)})
        else:
            out.append({})
        prev = shp
    return out


def init_params(specs, seed, input_shape, dtype=np.float32):
    """Seeded initialisation: weights ~ N(0, 1/fan_in), zero biases."""
    rng = np.random.default_rng(seed)
    params = []
    for shp in param_shapes(specs, input_shape):
        if not shp:
            params.append({})
            continue
        w_shape = shp["weight"]
        fan_in = int(np.prod(w_shape[:-1]))
        w = rng.standard_normal(w_shape) / np.sqrt(fan_in)
        params.append({"weight": w.astype(dtype), "bias": np.zeros(shp["bias"], dtype=dtype)})
    return params


def count_params(params):
    return sum(a.size for p in params for a in p.values())


def copy_params(params):
    return [{k: a.copy() for k, a in p.items()} for p in params]


def cast_params(params, dtype):
    return [{k: a.astype(dtype) for k, a in p.items()} for p in params]


def params_equal(a, b):
    """Bit-exact comparison of two parameter lists."""
    if len(a) != len(b):
        return False
    for pa, pb in zip(a, b):
        if pa.keys() != pb.keys():
            return False
        for k in pa:
            x, y = pa[k], pb[k]
            if x.shape != y.shape or x.dtype != y.dtype or x.tobytes() != y.tobytes():
                return False
    return True


# -- single-layer operations -------------------------------------------------

def conv1d_forward(x, weight, bias, padding="same"):
    """Conv (correlation) over ``[L, C_in]`` or batched ``[N, L, C_in]`` input."""
    x = np.asarray(x)
    single = x.ndim == 2
    if single:
        x = x[None]
    if x.ndim != 3:
        raise ShapeError(f"conv1d input must be [L, C] or [N, L, C], got {x.shape}")
    k, cin, _ = weight.shape
    if x.shape[2] != cin:
        raise ShapeError(f"conv1d expects {cin} input channels, got {x.shape[2]}")
    if padding == "same":
        pad, l_out = same_pad_left(k), x.shape[1]
    else:
        pad, l_out = 0, x.shape[1] - k + 1
    if l_out < 1:
        raise ShapeError("kernel longer than input")
    out = kernels.conv1d_forward(x.astype(weight.dtype, copy=False), weight, bias, pad, l_out)
    return out[0] if single else out


def dense_forward(x, weight, bias):
    x = np.asarray(x)
    if x.shape[-1] != weight.shape[0]:
        raise ShapeError(f"dense expects {weight.shape[0]} inputs, got {x.shape[-1]}")
    return x @ weight + bias


def relu(x):
    return np.maximum(x, 0)


def mse_loss(predictions, targets):
    p = np.asarray(predictions).reshape(-1)
    t = np.asarray(targets).reshape(-1)
    if p.shape != t.shape:
        raise ShapeError(f"predictions {p.shape} and targets {t.shape} differ in length")
    if p.size == 0:
        raise ShapeError("mse of empty input")
    d = p.astype(np.float64) - t
    return float(np.mean(d * d))


# -- whole-stack passes -------------------------------------------------------

def _as_input(x, dtype):
    x = np.asarray(x, dtype=dtype)
    if x.ndim == 2:
        x = x[:, :, None]
    return x


def forward(specs, params, x, start=0, stop=None, tape=None):
    """Run layers ``start:stop`` on a batch. ``tape`` (a list) collects layer inputs."""
    stop = len(specs) if stop is None else stop
    dtype = _param_dtype(params)
    h = _as_input(x, dtype) if start == 0 else np.asarray(x, dtype=dtype)
    for i in range(start, stop):
        s, p = specs[i], params[i]
        if tape is not None:
            tape.append(h)
        if s.kind == "conv1d":
            if h.ndim != 3 or h.shape[2] != p["weight"].shape[1]:
                raise ShapeError(f"layer {i}: bad conv1d input shape {h.shape}")
            k = s.kernel_length
            pad, l_out = ((same_pad_left(k), h.shape[1]) if s.padding == "same"
                          else (0, h.shape[1] - k + 1))
            h = kernels.conv1d_forward(h, p["weight"], p["bias"], pad, l_out)
        elif s.kind == "dense":
            if h.ndim != 2:
                raise ShapeError(f"layer {i}: dense needs flat input, got {h.shape}")
            h = dense_forward(h, p["weight"], p["bias"])
        elif s.kind == "relu":
            h = np.maximum(h, 0)
        else:
            h = h.reshape(h.shape[0], -1)
    return h


def _param_dtype(params):
    for p in params:
        if p:
            return p["weight"].dtype
    return np.float64


def lowest_trainable(specs):
    for i, s in enumerate(specs):
        if s.has_params and s.trainable:
            return i
    return None


def compute_gradients(params, specs, inputs, targets):
    """MSE loss over the batch and its gradient w.r.t. every parameter.

    Frozen layers get all-zero gradients; back-propagation stops at the
    lowest trainable layer, so a frozen conv stack costs no backward pass.
    Returns ``(loss, grads)``.
    """
    targets = np.asarray(targets)
    n = targets.shape[0]
    if n == 0:
        raise ShapeError("empty batch")
    tape = []
    out = forward(specs, params, inputs, tape=tape)
    if out.shape != (n, 1):
        raise ShapeError(f"network output {out.shape} does not match {n} targets")
    dtype = out.dtype
    diff = out[:, 0] - targets.astype(dtype)
    loss = float(np.mean(diff.astype(np.float64) ** 2))

    grads = [{k: np.zeros_like(a) for k, a in p.items()} for p in params]
    lowest = lowest_trainable(specs)
    if lowest is None:
        return loss, grads

    dh = (diff * dtype.type(2.0 / n))[:, None]
    for i in range(len(specs) - 1, lowest - 1, -1):
        s, p, h = specs[i], params[i], tape[i]
        need_dx = i > lowest
        if s.kind == "dense":
            if s.trainable:
                grads[i]["weight"] = h.T @ dh
                grads[i]["bias"] = dh.sum(axis=0)
            dh = dh @ p["weight"].T if need_dx else None
        elif s.kind == "conv1d":
            pad = same_pad_left(s.kernel_length) if s.padding == "same" else 0
            dx, dw, db = kernels.conv1d_backward(h, p["weight"], dh, pad, need_dx=need_dx)
            if s.trainable:
                grads[i]["weight"], grads[i]["bias"] = dw, db
            dh = dx
        elif s.kind == "relu":
            dh = dh * (h > 0)
        else:
            dh = dh.reshape(h.shape)
    return loss, grads


# -- optimiser ---------------------------------------------------------------

@dataclass
class AdamState:
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(params, grads, state, specs=None):
    """One bias-corrected Adam update.

    Layers whose spec is frozen are passed through untouched (same array
    objects). Returns ``(new_params, new_state)``; inputs are not modified.
    """
    if len(grads) != len(params):
        raise ShapeError("gradient list does not match parameters")
    m = state.m or [{k: np.zeros_like(a) for k, a in p.items()} for p in params]
    v = state.v or [{k: np.zeros_like(a) for k, a in p.items()} for p in params]
    t = state.t + 1
    b1, b2, lr, eps = state.beta1, state.beta2, state.learning_rate, state.epsilon
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    new_params, new_m, new_v = [], [], []
    for i, (p, g) in enumerate(zip(params, grads)):
        if not p or (specs is not None and not specs[i].trainable):
            new_params.append(p)
            new_m.append(m[i])
            new_v.append(v[i])
            continue
        np_, nm, nv = {}, {}, {}
        for k, a in p.items():
            gk = g[k]
            if gk.shape != a.shape:
                raise ShapeError(f"layer {i} {k}: gradient {gk.shape} vs parameter {a.shape}")
            dt = a.dtype.type
            mk = dt(b1) * m[i][k] + dt(1.0 - b1) * gk
            vk = dt(b2) * v[i][k] + dt(1.0 - b2) * (gk * gk)
            step = (mk / dt(c1)) / (np.sqrt(vk / dt(c2)) + dt(eps))
            np_[k] = a - dt(lr) * step
            nm[k], nv[k] = mk, vk
        new_params.append(np_)
        new_m.append(nm)
        new_v.append(nv)
    return new_params, replace(state, t=t, m=new_m, v=new_v)


def freeze_specs(specs, indices):
    idx = set(indices)
    return [replace(s, trainable=False) if i in idx else s for i, s in enumerate(specs)]
