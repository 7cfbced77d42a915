import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from s2pnilm.errors import ConfigError
from s2pnilm.powerdata import AlignedPair, PowerSeries
from s2pnilm.windowing import (
    DEFAULT_NORMALIZATION,
    NormalizationParams,
    WindowBatch,
    denormalize,
    load_norm_config,
    make_training_pairs,
    normalize,
    pad_and_window,
    params_for,
)


def test_default_constants():
    expected = {"aggregate": (522, 814), "kettle": (700, 1000), "microwave": (500, 800),
                "fridge": (200, 400), "dishwasher": (700, 1000), "washingmachine": (400, 700)}
    assert {k: (v.mean, v.std) for k, v in DEFAULT_NORMALIZATION.items()} == expected


def test_normalize_examples():
    assert normalize(np.array([1336.0]), params_for("aggregate"))[0] == 1.0
    assert normalize(np.array([522.0]), params_for("mains"))[0] == 0.0
    assert normalize(np.array([700.0, 1700.0]), params_for("kettle")).tolist() == [0.0, 1.0]


def test_denormalize_examples():
    assert denormalize([-1.0], params_for("fridge"), clamp=True).tolist() == [0.0]
    assert denormalize([-1.0], params_for("fridge")).tolist() == [-200.0]
    assert denormalize([0.5], params_for("microwave")).tolist() == [900.0]


def test_params_aliases_and_unknown():
    assert params_for("washing machine") == params_for("washingmachine")
    with pytest.raises(ConfigError):
        params_for("toaster")
    with pytest.raises(ConfigError):
        NormalizationParams(0.0, 0.0)


def test_norm_config_overrides(tmp_path):
    path = tmp_path / "norm.json"
    path.write_text(json.dumps({"kettle": {"mean": 1.0, "std": 2.0}, "toaster": {"mean": 3, "std": 4},
                                "mains": {"mean": 5, "std": 6}}))
    table = load_norm_config(path)
    assert params_for("aggregate", table) == NormalizationParams(5.0, 6.0)
    assert table["kettle"] == NormalizationParams(1.0, 2.0)
    assert table["fridge"] == DEFAULT_NORMALIZATION["fridge"]
    assert params_for("toaster", table).std == 4
    path.write_text("{")
    with pytest.raises(ConfigError):
        load_norm_config(path)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 5000), min_size=1, max_size=50),
       st.sampled_from(sorted(DEFAULT_NORMALIZATION)))
def test_round_trip(values, channel):
    p = params_for(channel)
    x = np.array(values)
    np.testing.assert_allclose(denormalize(normalize(x, p), p), x, rtol=1e-6, atol=1e-9)


def test_window_count_and_padding_default_length():
    w = pad_and_window(np.arange(1, 1001, dtype=float), 599)
    assert w.shape == (1000, 599)
    assert np.all(w[0, :299] == 0) and w[0, 299] == 1
    assert np.all(w[-1, 300:] == 0) and w[-1, 299] == 1000


def test_window_small_cases():
    assert pad_and_window(np.array([7.0]), 3).tolist() == [[0.0, 7.0, 0.0]]
    x = np.array([1.0, 2.0, 3.0])
    assert pad_and_window(x, 1).tolist() == [[1.0], [2.0], [3.0]]
    with pytest.raises(ValueError):
        pad_and_window(np.array([]), 3)
    with pytest.raises(ValueError):
        pad_and_window(x, 0)


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 120), st.integers(1, 64))
def test_window_law(t, w):
    seq = np.arange(1, t + 1, dtype=float)
    win = pad_and_window(seq, w)
    assert win.shape == (t, w)
    assert np.array_equal(win[:, w // 2], seq)
    # each row is the padded sequence starting at its own offset
    padded = np.concatenate([np.zeros(w // 2), seq, np.zeros(w - 1 - w // 2)])
    for i in (0, t // 2, t - 1):
        assert np.array_equal(win[i], padded[i:i + w])


def _pair(mains, app):
    ts = np.arange(len(mains)) * 8
    return AlignedPair(PowerSeries(ts, mains), PowerSeries(ts, app))


def test_training_pairs_constant_series():
    # padding is applied after normalisation, so the margin reads 0 like the mean
    mp, ap = params_for("aggregate"), params_for("kettle")
    batch = make_training_pairs(_pair([522.0] * 5, [700.0] * 5), 3, mp, ap)
    assert len(batch) == 5
    assert np.all(batch.inputs == 0)
    assert np.all(batch.targets == 0)


def test_training_pairs_margin_is_normalised_zero():
    mp, ap = params_for("aggregate"), params_for("kettle")
    batch = make_training_pairs(_pair([1336.0] * 5, [700.0] * 5), 3, mp, ap)
    assert batch.inputs[0].tolist() == [0.0, 1.0, 1.0]
    assert batch.inputs[2].tolist() == [1.0, 1.0, 1.0]
    assert batch.inputs[4].tolist() == [1.0, 1.0, 0.0]


def test_training_pairs_full_window_midpoint():
    mp, ap = params_for("aggregate"), params_for("kettle")
    app = np.linspace(0, 2000, 7)
    batch = make_training_pairs(_pair(np.full(7, 600.0), app), 7, mp, ap)
    assert batch.targets[3] == pytest.approx((app[3] - 700) / 1000)
    assert np.allclose(batch.inputs[3], (600 - 522) / 814)


def test_window_batch_concat_take():
    a = WindowBatch(np.arange(6.0).reshape(3, 2), np.arange(3.0), 2)
    b = WindowBatch(np.arange(6.0, 10.0).reshape(2, 2), np.arange(3.0, 5.0), 2)
    both = WindowBatch.concat([a, b])
    assert len(both) == 5
    x, y = both.take(np.array([4, 0, 3]))
    assert y.tolist() == [4.0, 0.0, 3.0]
    assert x[0].tolist() == [8.0, 9.0]
    assert both.head(4).targets.tolist() == [0, 1, 2, 3]
    assert WindowBatch.concat([a]) is a
    with pytest.raises(ValueError):
        WindowBatch(np.zeros((2, 3)), np.zeros(2), 2)
