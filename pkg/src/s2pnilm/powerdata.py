"""Channel ingestion: parse CSV channel files, resample, split on gaps, align.

All timestamps are integer UNIX seconds. Down-sampling uses forward fill
(zero-order hold), so every output value is a reading that appeared in the
input.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    EmptyInputError,
    LayoutError,
    NoOverlapError,
    UnsupportedUpsampleError,
)

log = logging.getLogger(__name__)

DEFAULT_PERIOD = 8
DEFAULT_MAX_GAP = 3600


@dataclass(frozen=True, eq=False)
class PowerSeries:
    """Active power readings of one channel (mains or an appliance)."""

    timestamps: np.ndarray
    values: np.ndarray
    period: int = DEFAULT_PERIOD
    channel: str = "mains"

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.int64)
        vals = np.asarray(self.values, dtype=np.float64)
        if ts.ndim != 1 or vals.ndim != 1 or ts.shape != vals.shape:
            raise ValueError("timestamps and values must be 1-D and of equal length")
        if ts.size > 1 and np.any(np.diff(ts) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        if not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise ValueError("power values must be finite and non-negative")
        if int(self.period) <= 0:
            raise ValueError("period must be positive")
        ts.flags.writeable = False
        vals.flags.writeable = False
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "period", int(self.period))

    def __len__(self):
        return self.timestamps.size

    def __eq__(self, other):
        if not isinstance(other, PowerSeries):
            return NotImplemented
        return (
            self.period == other.period
            and self.channel == other.channel
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.values, other.values)
        )

    def slice(self, start, stop):
        return PowerSeries(self.timestamps[start:stop], self.values[start:stop],
                           self.period, self.channel)

    def with_values(self, values, channel=None):
        return PowerSeries(self.timestamps, values, self.period,
                           self.channel if channel is None else channel)


@dataclass(frozen=True)
class AlignedPair:
    mains: PowerSeries
    appliance: PowerSeries

    def __post_init__(self):
        if self.mains.period != self.appliance.period:
            raise ValueError("mains and appliance periods differ")
        if not np.array_equal(self.mains.timestamps, self.appliance.timestamps):
            raise ValueError("mains and appliance timestamps differ")

    def __len__(self):
        return len(self.mains)

    def slice(self, start, stop):
        return AlignedPair(self.mains.slice(start, stop), self.appliance.slice(start, stop))


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple = ()
    validation: tuple = ()
    test: tuple = ()

    def __post_init__(self):
        for name in ("train", "validation", "test"):
            object.__setattr__(self, name, tuple(str(h) for h in getattr(self, name)))
        a, b, c = set(self.train), set(self.validation), set(self.test)
        if a & b or a & c or b & c:
            raise ConfigError("train/validation/test house lists must be disjoint")

    def excluding(self, houses):
        drop = {str(h) for h in houses}
        return DatasetSplit(
            tuple(h for h in self.train if h not in drop),
            tuple(h for h in self.validation if h not in drop),
            tuple(h for h in self.test if h not in drop),
        )


@dataclass(frozen=True)
class ChannelLayout:
    """Column description of a channel file.

    ``columns`` names every CSV column in order; when it is None the first
    row of the file is taken as the header.
    """

    timestamp: str
    power: tuple
    columns: tuple | None = None
    time_format: str = "unix"
    period: int = DEFAULT_PERIOD

    def __post_init__(self):
        object.__setattr__(self, "power", tuple(self.power))
        if self.columns is not None:
            object.__setattr__(self, "columns", tuple(self.columns))
        if not self.power:
            raise LayoutError("layout needs at least one power column")
        if self.time_format not in ("unix", "datetime"):
            raise LayoutError(f"unknown time format {self.time_format!r}")

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(
                timestamp=d["timestamp"],
                power=tuple(d["power"]),
                columns=tuple(d["columns"]) if d.get("columns") else None,
                time_format=d.get("time_format", "unix"),
                period=int(d.get("period", DEFAULT_PERIOD)),
            )
        except KeyError as exc:
            raise LayoutError(f"layout is missing key {exc}") from None


def _parse_time(text, fmt):
    if fmt == "unix":
        return int(float(text))
    dt = datetime.strptime(text.strip(), "%Y-%m-%d %H:%M:%S")
    return int(dt.replace(tzinfo=timezone.utc).timestamp())


def parse_channel_file(raw, layout, report=None):
    """Parse a comma-separated channel stream into one series per power column.

    ``raw`` may be bytes, str or a binary/text file object. Unparseable rows
    (bad numbers, wrong field count, negative or non-finite power) are
    skipped; their count is written to ``report["skipped_rows"]`` when a dict
    is passed. Duplicate timestamps keep the last row.
    """
    if isinstance(raw, bytes):
        text = raw.decode("utf-8")
    elif isinstance(raw, str):
        text = raw
    else:
        data = raw.read()
        text = data.decode("utf-8") if isinstance(data, bytes) else data

    rows = csv.reader(io.StringIO(text))
    columns = layout.columns
    if columns is None:
        header = next(rows, None)
        if header is None:
            raise EmptyInputError("channel stream is empty")
        columns = tuple(h.strip() for h in header)

    wanted = (layout.timestamp,) + layout.power
    for name in wanted:
        if name not in columns:
            raise LayoutError(f"column {name!r} not present in layout {list(columns)}")
    ts_idx = columns.index(layout.timestamp)
    p_idx = [columns.index(p) for p in layout.power]

    stamps = []
    values = []
    skipped = 0
    for row in rows:
        if not row or all(not f.strip() for f in row):
            continue
        try:
            if len(row) < len(columns):
                raise ValueError("short row")
            t = _parse_time(row[ts_idx], layout.time_format)
            vals = [float(row[i]) for i in p_idx]
            if not all(np.isfinite(v) and v >= 0 for v in vals):
                raise ValueError("invalid power")
        except ValueError:
            skipped += 1
            continue
        stamps.append(t)
        values.append(vals)

    if report is not None:
        report["skipped_rows"] = skipped
    if skipped:
        log.warning("skipped %d unparseable rows", skipped)
    if not stamps:
        raise EmptyInputError("no parseable rows in channel stream")

    ts = np.asarray(stamps, dtype=np.int64)
    vals = np.asarray(values, dtype=np.float64)
    # stable sort, then keep the last occurrence of each timestamp
    order = np.argsort(ts, kind="stable")
    ts, vals = ts[order], vals[order]
    keep = np.ones(ts.size, dtype=bool)
    keep[:-1] = ts[1:] != ts[:-1]
    ts, vals = ts[keep], vals[keep]
    return [PowerSeries(ts, vals[:, j], layout.period, name)
            for j, name in enumerate(layout.power)]


def resample(series, target_period, max_gap=DEFAULT_MAX_GAP, origin=None):
    """Down-sample onto a regular grid by forward fill.

    The grid is ``origin + k * target_period`` restricted to the span of the
    series (``origin`` defaults to the first timestamp). A grid point lying
    inside an observation gap longer than ``max_gap`` is dropped, leaving the
    gap for :func:`split_on_gaps` to cut.
    """
    target_period = int(target_period)
    if len(series) == 0:
        raise EmptyInputError("cannot resample an empty series")
    if target_period < series.period:
        raise UnsupportedUpsampleError(
            f"target period {target_period}s is finer than source period {series.period}s")
    ts = series.timestamps
    t0 = int(ts[0]) if origin is None else int(origin)
    first = t0 + -(-(int(ts[0]) - t0) // target_period) * target_period
    if first > ts[-1]:
        return PowerSeries(ts[:0], series.values[:0], target_period, series.channel)
    grid = np.arange(first, int(ts[-1]) + 1, target_period, dtype=np.int64)

    prev = np.searchsorted(ts, grid, side="right") - 1
    exact = ts[prev] == grid
    nxt = np.minimum(prev + 1, ts.size - 1)
    bridged = (ts[nxt] - ts[prev]) <= max_gap
    keep = exact | bridged
    return PowerSeries(grid[keep], series.values[prev[keep]], target_period, series.channel)


def split_on_gaps(series, max_gap=DEFAULT_MAX_GAP):
    """Cut the series where consecutive timestamps differ by more than ``max_gap``.

    Within each segment, smaller gaps are forward-filled onto the period grid
    anchored at the segment start.
    """
    if max_gap <= series.period:
        raise ConfigError("max_gap must exceed the series period")
    if len(series) == 0:
        return []
    cuts = np.flatnonzero(np.diff(series.timestamps) > max_gap) + 1
    bounds = [0, *cuts.tolist(), len(series)]
    segments = []
    for a, b in zip(bounds[:-1], bounds[1:]):
        seg = series.slice(a, b)
        if b - a > 1 and np.any(np.diff(seg.timestamps) != seg.period):
            seg = resample(seg, seg.period, max_gap=max_gap)
        segments.append(seg)
    return segments


def align(mains, appliance):
    """Restrict both series to their common timestamps."""
    if mains.period != appliance.period:
        raise ConfigError(
            f"period mismatch: mains {mains.period}s vs appliance {appliance.period}s")
    common, im, ia = np.intersect1d(mains.timestamps, appliance.timestamps,
                                    assume_unique=True, return_indices=True)
    if common.size == 0:
        raise NoOverlapError("mains and appliance share no timestamps")
    return AlignedPair(
        PowerSeries(common, mains.values[im], mains.period, mains.channel),
        PowerSeries(common, appliance.values[ia], appliance.period, appliance.channel),
    )


@dataclass(frozen=True)
class DatasetConfig:
    """Where the per-house files live and which houses serve which split."""

    root: Path
    houses: dict
    layout: ChannelLayout
    splits: dict = field(default_factory=dict)
    exclude: tuple = ()
    period: int = DEFAULT_PERIOD
    max_gap: int = DEFAULT_MAX_GAP
    mains_column: str = "mains"

    def split_for(self, appliance):
        try:
            split = self.splits[appliance]
        except KeyError:
            raise ConfigError(f"no split configured for appliance {appliance!r}") from None
        return split.excluding(self.exclude)

    def house_layout(self, house):
        entry = self.houses[str(house)]
        if isinstance(entry, dict) and "layout" in entry:
            return ChannelLayout.from_dict(entry["layout"])
        return self.layout

    def house_path(self, house):
        try:
            entry = self.houses[str(house)]
        except KeyError:
            raise ConfigError(f"house {house!r} not listed in dataset config") from None
        name = entry["file"] if isinstance(entry, dict) else entry
        return self.root / name


def load_split_table(path_or_dict):
    """Read ``{appliance: {"train": [...], "validation": [...], "test": [...]}}``."""
    if isinstance(path_or_dict, dict):
        table = path_or_dict
    else:
        table = json.loads(Path(path_or_dict).read_text(encoding="utf-8"))
    out = {}
    for name, entry in table.items():
        try:
            out[name] = DatasetSplit(entry["train"], entry["validation"], entry["test"])
        except KeyError as exc:
            raise ConfigError(f"split for {name!r} is missing {exc}") from None
    return out


def default_refit_splits():
    """House splits shipped with the package (REFIT distribution)."""
    path = Path(__file__).with_name("data") / "refit_splits.json"
    data = json.loads(path.read_text(encoding="utf-8"))
    return load_split_table(data["appliances"]), tuple(str(h) for h in data["exclude"])


def load_dataset_config(path):
    path = Path(path)
    try:
        cfg = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read dataset config {path}: {exc}") from None
    try:
        layout = ChannelLayout.from_dict(cfg["layout"])
        houses = {str(k): v for k, v in cfg["houses"].items()}
    except KeyError as exc:
        raise ConfigError(f"dataset config is missing {exc}") from None
    if "splits" in cfg:
        splits = load_split_table(cfg["splits"])
        exclude = tuple(str(h) for h in cfg.get("exclude", ()))
    else:
        splits, exclude = default_refit_splits()
        exclude = tuple(str(h) for h in cfg.get("exclude", exclude))
    return DatasetConfig(
        root=path.parent,
        houses=houses,
        layout=layout,
        splits=splits,
        exclude=exclude,
        period=int(cfg.get("period", DEFAULT_PERIOD)),
        max_gap=int(cfg.get("max_gap", DEFAULT_MAX_GAP)),
        mains_column=cfg.get("mains_column", "mains"),
    )


def load_house_pairs(config, house, appliance, period=None, max_gap=None):
    """Parse, resample, split and align one house; returns a list of AlignedPair."""
    period = config.period if period is None else period
    max_gap = config.max_gap if max_gap is None else max_gap
    layout = config.house_layout(house)
    if appliance not in layout.power or config.mains_column not in layout.power:
        raise LayoutError(
            f"house {house}: layout must list power columns {config.mains_column!r} and {appliance!r}")
    path = config.house_path(house)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    series = {s.channel: s for s in parse_channel_file(raw, layout)}
    mains = series[config.mains_column]
    app = series[appliance]
    origin = int(mains.timestamps[0])
    mains = resample(mains, period, max_gap, origin=origin)
    app = resample(app, period, max_gap, origin=origin)
    pairs = []
    for seg in split_on_gaps(mains, max_gap):
        try:
            pair = align(seg, app)
        except NoOverlapError:
            continue
        # alignment can reopen holes where the appliance channel had a large gap
        for sub in split_on_gaps(pair.mains, max_gap):
            pairs.append(align(sub, pair.appliance))
    return pairs
