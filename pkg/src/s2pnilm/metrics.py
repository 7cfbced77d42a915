"""Disaggregation metrics (MAE, SAE, EpD, NDE), report aggregation and energy shares."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DegenerateShareError, ShapeError, UndefinedMetricError

SECONDS_PER_DAY = 86400
METRICS = ("MAE", "SAE", "EpD", "NDE")
INVALID = "invalid"


def _pair(pred, truth):
    p = np.asarray(getattr(pred, "values", pred), dtype=np.float64).reshape(-1)
    t = np.asarray(getattr(truth, "values", truth), dtype=np.float64).reshape(-1)
    if p.shape != t.shape:
        raise ShapeError(f"prediction length {p.size} != truth length {t.size}")
    if p.size == 0:
        raise ShapeError("empty sequences")
    return p, t


def mae(pred, truth):
    """Mean absolute error in watts."""
    p, t = _pair(pred, truth)
    return float(np.mean(np.abs(p - t)))


def sae(pred, truth):
    """Relative error of total energy, ``|r_hat - r| / r``."""
    p, t = _pair(pred, truth)
    r = float(np.sum(t))
    if r == 0:
        raise UndefinedMetricError("SAE undefined: total true energy is zero")
    return abs(float(np.sum(p)) - r) / r


def nde(pred, truth):
    """Squared error normalised by the energy of the truth signal."""
    p, t = _pair(pred, truth)
    denom = float(t @ t)
    if denom == 0:
        raise UndefinedMetricError("NDE undefined: truth is identically zero")
    d = t - p
    return float(d @ d) / denom


def daily_energy(values, timestamps, period):
    """Wh per UTC day as ``(days, energy)``, dropping partial first/last days."""
    values = np.asarray(values, dtype=np.float64)
    ts = np.asarray(timestamps, dtype=np.int64)
    if ts.size == 0:
        raise DataError("no samples")
    day = ts // SECONDS_PER_DAY
    days, inverse = np.unique(day, return_inverse=True)
    energy = np.bincount(inverse, weights=values * (period / 3600.0), minlength=days.size)
    keep = np.ones(days.size, dtype=bool)
    if ts[0] - days[0] * SECONDS_PER_DAY >= period:
        keep[0] = False
    if (days[-1] + 1) * SECONDS_PER_DAY - ts[-1] > period:
        keep[-1] = False
    return days[keep], energy[keep]


def epd(pred, truth, period=None, timestamps=None):
    """Mean absolute per-day energy error in Wh over complete UTC days.

    ``pred``/``truth`` are PowerSeries, or arrays with ``timestamps`` given.
    """
    p, t = _pair(pred, truth)
    if timestamps is None:
        timestamps = getattr(truth, "timestamps", None)
        if timestamps is None:
            raise DataError("EpD needs timestamps")
    if period is None:
        period = truth.period
    _, e_true = daily_energy(t, timestamps, period)
    _, e_pred = daily_energy(p, timestamps, period)
    if e_true.size == 0:
        raise DataError("EpD needs at least one complete day")
    return float(np.mean(np.abs(e_pred - e_true)))


_FUNCS = {"MAE": mae, "SAE": sae, "NDE": nde}


@dataclass
class MetricsReport:
    """Per-appliance metric rows plus mean and population-std rows.

    A cell is None when its metric is undefined for that appliance; such cells
    are left out of the aggregate rows and counted in ``invalid``.
    """

    rows: dict
    overall: dict = field(default_factory=dict)
    std: dict = field(default_factory=dict)
    invalid: dict = field(default_factory=dict)

    def to_csv(self, path):
        def fmt(v):
            return INVALID if v is None else repr(float(v))

        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["appliance", *METRICS])
            for name in sorted(self.rows):
                w.writerow([name, *(fmt(self.rows[name][m]) for m in METRICS)])
            w.writerow(["overall_mean", *(fmt(self.overall[m]) for m in METRICS)])
            w.writerow(["overall_std", *(fmt(self.std[m]) for m in METRICS)])
            if any(self.invalid.values()):
                w.writerow(["# invalid cells excluded", *(self.invalid[m] for m in METRICS)])


def epd_segments(segments, period=None):
    """EpD pooled over the complete days of several ``(pred, truth)`` segments."""
    errors = []
    for pred, truth in segments:
        p, t = _pair(pred, truth)
        per = truth.period if period is None else period
        _, e_true = daily_energy(t, truth.timestamps, per)
        _, e_pred = daily_energy(p, truth.timestamps, per)
        errors.append(np.abs(e_pred - e_true))
    errors = np.concatenate(errors) if errors else np.empty(0)
    if errors.size == 0:
        raise DataError("EpD needs at least one complete day")
    return float(np.mean(errors))


def _row(segments, period):
    pred = np.concatenate([_pair(p, t)[0] for p, t in segments])
    truth = np.concatenate([_pair(p, t)[1] for p, t in segments])
    row = {}
    for m in METRICS:
        try:
            if m == "EpD":
                row[m] = epd_segments(segments, period)
            else:
                row[m] = _FUNCS[m](pred, truth)
        except (UndefinedMetricError, DataError):
            row[m] = None
    return row


def compute_report(pairs, period=None):
    """Metric rows per appliance, plus mean and population std rows.

    ``pairs`` maps appliance name to a ``(prediction, truth)`` pair of
    PowerSeries, or to a list of such pairs (e.g. one per house or segment).
    """
    if not pairs:
        raise DataError("report needs at least one appliance")
    rows = {}
    for name in sorted(pairs):
        entry = pairs[name]
        segments = [entry] if isinstance(entry, tuple) else list(entry)
        rows[name] = _row(segments, period)
    return aggregate_rows(rows)


def aggregate_rows(rows):
    overall, std, invalid = {}, {}, {}
    for m in METRICS:
        vals = np.array([r[m] for r in rows.values() if r[m] is not None], dtype=np.float64)
        invalid[m] = len(rows) - vals.size
        if vals.size:
            overall[m] = float(np.mean(vals))
            std[m] = float(np.std(vals))
        else:
            overall[m] = std[m] = None
    return MetricsReport(rows, overall, std, invalid)


@dataclass
class EnergyShare:
    names: list
    predicted_wh: np.ndarray
    actual_wh: np.ndarray
    predicted_share: np.ndarray
    actual_share: np.ndarray

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["appliance", "actual_wh", "predicted_wh", "actual_share", "predicted_share"])
            for i, n in enumerate(self.names):
                w.writerow([n, repr(float(self.actual_wh[i])), repr(float(self.predicted_wh[i])),
                            repr(float(self.actual_share[i])), repr(float(self.predicted_share[i]))])


def _shares(energy):
    total = float(np.sum(energy))
    return energy / total if total > 0 else np.zeros_like(energy)


def energy_share(predictions, truths, period=None):
    """Total Wh and normalised shares for predicted and actual consumption."""
    names = sorted(truths)
    if not names:
        raise DataError("energy share needs at least one appliance")
    pred_wh, true_wh = [], []
    for n in names:
        preds = predictions[n] if isinstance(predictions[n], list) else [predictions[n]]
        trues = truths[n] if isinstance(truths[n], list) else [truths[n]]
        pw = tw = 0.0
        for pr, tr in zip(preds, trues):
            p, t = _pair(pr, tr)
            per = period if period is not None else tr.period
            pw += float(np.sum(p)) * per / 3600.0
            tw += float(np.sum(t)) * per / 3600.0
        pred_wh.append(pw)
        true_wh.append(tw)
    pred_wh = np.array(pred_wh)
    true_wh = np.array(true_wh)
    if pred_wh.sum() <= 0 and true_wh.sum() <= 0:
        raise DegenerateShareError("all energy totals are zero")
    return EnergyShare(names, pred_wh, true_wh, _shares(pred_wh), _shares(true_wh))
