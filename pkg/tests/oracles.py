"""Independent reference implementations used as test oracles.

Nothing here calls into the package's kernels or backprop; loops are written
out directly so they can be trusted by inspection.
"""

import math

import numpy as np


def conv1d_loops(x, w, b, padding="same"):
    """Direct summation over ``x [L, C_in]`` with ``w [K, C_in, C_out]``."""
    length, cin = x.shape
    k, _, cout = w.shape
    if padding == "same":
        pad = (k - 1) // 2
        l_out = length
    else:
        pad = 0
        l_out = length - k + 1
    out = np.zeros((l_out, cout))
    for t in range(l_out):
        for o in range(cout):
            s = float(b[o])
            for j in range(k):
                src = t + j - pad
                if 0 <= src < length:
                    for c in range(cin):
                        s += float(x[src, c]) * float(w[j, c, o])
            out[t, o] = s
    return out


def mae_loop(p, t):
    return sum(abs(a - b) for a, b in zip(p, t)) / len(t)


def sae_loop(p, t):
    r = sum(t)
    rh = sum(p)
    return abs(rh - r) / r


def nde_loop(p, t):
    num = sum((b - a) ** 2 for a, b in zip(p, t))
    den = sum(b * b for b in t)
    return num / den


def epd_loop(p, t, timestamps, period):
    """Per-UTC-day energy error, partial first/last days dropped."""
    days = {}
    for a, b, ts in zip(p, t, timestamps):
        d = int(ts) // 86400
        e = days.setdefault(d, [0.0, 0.0])
        e[0] += a * period / 3600.0
        e[1] += b * period / 3600.0
    keys = sorted(days)
    if int(timestamps[0]) - keys[0] * 86400 >= period:
        keys = keys[1:]
    if keys and (keys[-1] + 1) * 86400 - int(timestamps[-1]) > period:
        keys = keys[:-1]
    return sum(abs(days[d][0] - days[d][1]) for d in keys) / len(keys)


def reference_forward(specs, params, window):
    """Forward one window ``[W]`` through the stack with plain loops for conv."""
    h = np.asarray(window, dtype=np.float64)[:, None]
    for s, p in zip(specs, params):
        if s.kind == "conv1d":
            h = conv1d_loops(h, p["weight"], p["bias"], s.padding)
        elif s.kind == "relu":
            h = np.where(h > 0, h, 0.0)
        elif s.kind == "flatten":
            h = h.reshape(-1)
        else:
            h = np.array([sum(h[i] * p["weight"][i, u] for i in range(h.size)) + p["bias"][u]
                          for u in range(p["weight"].shape[1])])
    return h


def mse_of(specs, params, inputs, targets, forward_fn):
    preds = np.array([forward_fn(specs, params, x)[0] for x in inputs])
    return float(np.mean((preds - targets) ** 2))


def central_differences(loss_fn, params, h=1e-4):
    """Numerical gradient of ``loss_fn(params)`` for every parameter entry."""
    grads = []
    for layer in params:
        g = {}
        for name, arr in layer.items():
            out = np.zeros_like(arr, dtype=np.float64)
            flat = arr.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                up = loss_fn(params)
                flat[i] = orig - h
                down = loss_fn(params)
                flat[i] = orig
                out.reshape(-1)[i] = (up - down) / (2 * h)
            g[name] = out
        grads.append(g)
    return grads


def relative_error(a, n, floor=1e-8):
    return abs(a - n) / max(abs(a), abs(n), floor)


def forward_fill(ts, vals, grid):
    """Last observation at or before each grid point (None before the first)."""
    out = []
    j = -1
    for g in grid:
        while j + 1 < len(ts) and ts[j + 1] <= g:
            j += 1
        out.append(vals[j] if j >= 0 else None)
    return out


def isclose(a, b, rel):
    return math.isclose(a, b, rel_tol=rel, abs_tol=rel * 1e-3)


def numpy_forward(specs, params, windows):
    """Batched forward pass built from shifted slices; no im2col, no package kernels."""
    h = np.asarray(windows, dtype=np.float64)[:, :, None]
    for s, p in zip(specs, params):
        if s.kind == "conv1d":
            w, b = p["weight"], p["bias"]
            k = w.shape[0]
            if s.padding == "same":
                left = (k - 1) // 2
                h = np.pad(h, ((0, 0), (left, k - 1 - left), (0, 0)))
            l_out = h.shape[1] - k + 1
            out = np.zeros((h.shape[0], l_out, w.shape[2])) + b
            for j in range(k):
                out += h[:, j:j + l_out, :] @ w[j]
            h = out
        elif s.kind == "relu":
            h = np.where(h > 0, h, 0.0)
        elif s.kind == "flatten":
            h = h.reshape(h.shape[0], -1)
        else:
            h = h @ p["weight"] + p["bias"]
    return h


def relu_inputs(specs, params, windows):
    """Pre-activation arrays feeding every ReLU, for kink-distance checks."""
    h = np.asarray(windows, dtype=np.float64)
    found = []
    for i, s in enumerate(specs):
        if s.kind == "relu":
            found.append(numpy_forward(specs[:i], params[:i], h))
    return found


def random_gradient_case(seed, kink_margin=1e-3):
    """A random 2-conv + 1-dense net (W <= 31) and batch (<= 8 windows).

    Draws are repeated until every ReLU input is at least ``kink_margin``
    from zero; central differences are meaningless across a kink.
    Returns ``(specs, params, inputs, targets, draws)``.
    """
    from s2pnilm import neuralnet as nn

    rng = np.random.default_rng(seed)
    draws = 0
    while True:
        draws += 1
        window = int(rng.integers(5, 32))
        n = int(rng.integers(1, 9))
        specs = [
            nn.LayerSpec.conv1d(int(rng.integers(1, 4)), int(rng.integers(1, 6))),
            nn.LayerSpec.relu(),
            nn.LayerSpec.conv1d(int(rng.integers(1, 4)), int(rng.integers(1, 6)),
                                padding=str(rng.choice(["same", "valid"]))),
            nn.LayerSpec.relu(),
            nn.LayerSpec.flatten(),
            nn.LayerSpec.dense(1),
        ]
        params = nn.init_params(specs, int(rng.integers(2 ** 31)), (window, 1), dtype=np.float64)
        for p in params:
            if p:
                p["bias"][:] = rng.normal(scale=0.1, size=p["bias"].shape)
        x = rng.normal(size=(n, window))
        y = rng.normal(size=n)
        if all(np.abs(z).min() >= kink_margin for z in relu_inputs(specs, params, x)):
            return specs, params, x, y, draws


def max_gradient_error(specs, params, x, y, grads, h=1e-4):
    def loss(pp):
        return float(np.mean((numpy_forward(specs, pp, x)[:, 0] - y) ** 2))

    numeric = central_differences(loss, params, h)
    worst = 0.0
    for ga, gn in zip(grads, numeric):
        for k in gn:
            for a, b in zip(np.ravel(ga[k]), np.ravel(gn[k])):
                worst = max(worst, relative_error(float(a), float(b)))
    return worst
