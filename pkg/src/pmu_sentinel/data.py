"""PMU datasets: in-memory types, a phasor-based synthetic generator and CSV I/O.

A dataset holds, for every station, three equally long channels sampled on a
uniform grid (30 samples/s by default): voltage magnitude, voltage angle in
degrees and frequency in hertz.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._validation import check_int
from .exceptions import IntegrityError, ParameterError, ParseError, SchemaError

DEFAULT_SAMPLE_RATE = 30.0
CSV_HEADER = ("timestamp", "station", "vmag", "vangle", "freq")


class ChannelKind(str, enum.Enum):
    VOLTAGE_MAGNITUDE = "vmag"
    VOLTAGE_ANGLE = "vangle"
    FREQUENCY = "freq"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        aliases = {
            "voltage_magnitude": cls.VOLTAGE_MAGNITUDE,
            "magnitude": cls.VOLTAGE_MAGNITUDE,
            "voltage_angle": cls.VOLTAGE_ANGLE,
            "angle": cls.VOLTAGE_ANGLE,
            "frequency": cls.FREQUENCY,
        }
        key = str(value).strip().lower()
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise ParameterError(f"unknown channel kind {value!r}") from None


CHANNEL_ORDER = (ChannelKind.VOLTAGE_MAGNITUDE, ChannelKind.VOLTAGE_ANGLE, ChannelKind.FREQUENCY)


def _frozen(values):
    arr = np.array(values, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PmuChannel:
    """One measured quantity of one station.

    ``values`` is stored as a read-only float64 array. Missing entries are
    represented as NaN and reported by :func:`validate`; they are never
    silently dropped.
    """

    station_id: str
    kind: ChannelKind
    values: np.ndarray
    sample_rate: float = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        object.__setattr__(self, "kind", ChannelKind.parse(self.kind))
        object.__setattr__(self, "values", _frozen(self.values))
        object.__setattr__(self, "station_id", str(self.station_id))
        object.__setattr__(self, "sample_rate", float(self.sample_rate))

    def __len__(self):
        return self.values.shape[0]

    def __eq__(self, other):
        if not isinstance(other, PmuChannel):
            return NotImplemented
        return (
            self.station_id == other.station_id
            and self.kind == other.kind
            and self.sample_rate == other.sample_rate
            and self.values.shape == other.values.shape
            and np.array_equal(self.values, other.values, equal_nan=True)
        )

    def with_values(self, values):
        return PmuChannel(self.station_id, self.kind, values, self.sample_rate)


@dataclass(frozen=True, eq=False)
class PmuDataset:
    """A multi-station table of PMU channels on a shared uniform time grid."""

    channels: tuple
    start_time: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        object.__setattr__(self, "start_time", float(self.start_time))

    @property
    def stations(self):
        seen = []
        for ch in self.channels:
            if ch.station_id not in seen:
                seen.append(ch.station_id)
        return tuple(sorted(seen))

    @property
    def station_count(self):
        return len(self.stations)

    @property
    def sample_rate(self):
        return self.channels[0].sample_rate if self.channels else DEFAULT_SAMPLE_RATE

    def __len__(self):
        return len(self.channels[0]) if self.channels else 0

    def timestamps(self):
        return self.start_time + np.arange(len(self)) / self.sample_rate

    def channel(self, station_id, kind) -> PmuChannel:
        kind = ChannelKind.parse(kind)
        for ch in self.channels:
            if ch.station_id == str(station_id) and ch.kind == kind:
                return ch
        raise ParameterError(f"no channel {kind.value!r} for station {station_id!r}")

    def replace_channel(self, station_id, kind, values) -> "PmuDataset":
        target = self.channel(station_id, kind)
        new = tuple(ch.with_values(values) if ch is target else ch for ch in self.channels)
        return PmuDataset(new, self.start_time)

    def __eq__(self, other):
        if not isinstance(other, PmuDataset):
            return NotImplemented
        if self.start_time != other.start_time or len(self.channels) != len(other.channels):
            return False
        key = lambda ch: (ch.station_id, ch.kind.value)
        return all(a == b for a, b in zip(sorted(self.channels, key=key), sorted(other.channels, key=key)))


@dataclass(frozen=True)
class SynthConfig:
    """Parameters of the synthetic PMU generator.

    The phasor follows ``U = (U_m / sqrt(2)) * exp(j * delta(t))`` where the
    angle ``delta(t)`` starts at ``initial_phase`` and drifts with the
    off-nominal frequency deviation (a constant offset plus a slow sinusoidal
    swing). ``load_step_schedule`` holds ``(time_s, magnitude_delta)`` pairs;
    each delta is added to the magnitude from its time onward.
    """

    amplitude_peak: float = 7200.0 * math.sqrt(2.0)
    nominal_frequency: float = 60.0
    initial_phase: float = 0.0
    duration: float = 60.0
    noise_floor_sigma: float = 1.0
    seed: int = 0
    load_step_schedule: tuple = ()
    sample_rate: float = DEFAULT_SAMPLE_RATE
    station_count: int = 1
    frequency_offset: float = 0.01
    swing_amplitude: float = 0.005
    swing_period: float = 20.0
    angle_noise_sigma: float = 0.0
    frequency_noise_sigma: float = 0.0
    station_phase_spacing: float = -7.5
    start_time: float = 1_400_000_000.0

    def __post_init__(self):
        steps = tuple((float(t), float(d)) for t, d in self.load_step_schedule)
        object.__setattr__(self, "load_step_schedule", steps)
        if not self.duration > 0:
            raise ParameterError(f"duration must be > 0, got {self.duration}")
        if not self.sample_rate > 0:
            raise ParameterError(f"sample_rate must be > 0, got {self.sample_rate}")
        for name in ("noise_floor_sigma", "angle_noise_sigma", "frequency_noise_sigma"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.swing_period <= 0:
            raise ParameterError("swing_period must be > 0")
        check_int(self.station_count, "station_count", minimum=1)

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        if "load_step_schedule" in data:
            data["load_step_schedule"] = tuple(tuple(p) for p in data["load_step_schedule"])
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ParameterError(f"unknown synth config keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self):
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        out["load_step_schedule"] = [list(p) for p in self.load_step_schedule]
        return out

    @property
    def n_samples(self):
        return int(round(self.duration * self.sample_rate))


def _phase_drift_deg(config: SynthConfig, t):
    """Accumulated angle (degrees) from integrating the frequency deviation."""
    t = np.asarray(t, dtype=np.float64)
    omega_s = 2.0 * np.pi / config.swing_period
    integral = config.frequency_offset * t + config.swing_amplitude * (1.0 - np.cos(omega_s * t)) / omega_s
    return 360.0 * integral


def _frequency_deviation(config: SynthConfig, t):
    t = np.asarray(t, dtype=np.float64)
    return config.frequency_offset + config.swing_amplitude * np.sin(2.0 * np.pi * t / config.swing_period)


def synth_phasor(config: SynthConfig, t: float):
    """Real and imaginary parts of the RMS-scaled synchrophasor at time ``t``."""
    rms = config.amplitude_peak / math.sqrt(2.0)
    delta = math.radians(config.initial_phase + float(_phase_drift_deg(config, t)))
    return rms * math.cos(delta), rms * math.sin(delta)


def wrap_angle(deg):
    """Wrap degrees into (-180, 180]."""
    wrapped = np.mod(np.asarray(deg, dtype=np.float64) + 180.0, 360.0) - 180.0
    return np.where(wrapped == -180.0, 180.0, wrapped)


def _load_offsets(config: SynthConfig, t):
    offsets = np.zeros_like(t)
    for step_time, delta in config.load_step_schedule:
        offsets[t >= step_time] += delta
    return offsets


def generate_synthetic(config: SynthConfig) -> PmuDataset:
    """Sample a noisy multi-station PMU stream from the phasor model.

    Magnitude is ``|U|`` plus load steps plus Gaussian noise of
    ``noise_floor_sigma``; the angle channel is stored wrapped to
    (-180, 180] like a real PMU reports it.
    """
    n = config.n_samples
    if n < 1:
        raise ParameterError("duration * sample_rate must give at least one sample")
    t = np.arange(n) / config.sample_rate
    rng = np.random.default_rng(config.seed)
    rms = config.amplitude_peak / math.sqrt(2.0)
    drift = _phase_drift_deg(config, t)
    freq_dev = _frequency_deviation(config, t)
    loads = _load_offsets(config, t)

    channels = []
    for i in range(config.station_count):
        station = f"S{i + 1}"
        phase0 = config.initial_phase + i * config.station_phase_spacing
        delta = phase0 + drift
        re = rms * np.cos(np.radians(delta))
        im = rms * np.sin(np.radians(delta))
        vmag = np.hypot(re, im) + loads
        angle = np.degrees(np.arctan2(im, re))
        if config.noise_floor_sigma > 0:
            vmag = vmag + rng.normal(0.0, config.noise_floor_sigma, n)
        if config.angle_noise_sigma > 0:
            angle = angle + rng.normal(0.0, config.angle_noise_sigma, n)
        freq = config.nominal_frequency + freq_dev
        if config.frequency_noise_sigma > 0:
            freq = freq + rng.normal(0.0, config.frequency_noise_sigma, n)
        channels += [
            PmuChannel(station, ChannelKind.VOLTAGE_MAGNITUDE, vmag, config.sample_rate),
            PmuChannel(station, ChannelKind.VOLTAGE_ANGLE, wrap_angle(angle), config.sample_rate),
            PmuChannel(station, ChannelKind.FREQUENCY, freq, config.sample_rate),
        ]
    return PmuDataset(tuple(channels), start_time=round(config.start_time, 3))


def validate(dataset: PmuDataset) -> list:
    """Return a list of human-readable invariant violations (empty if valid)."""
    problems = []
    if not dataset.channels:
        return ["dataset has no channels"]
    ref_len = len(dataset.channels[0])
    ref_rate = dataset.channels[0].sample_rate
    by_station = {}
    for ch in dataset.channels:
        label = f"{ch.station_id}/{ch.kind.value}"
        by_station.setdefault(ch.station_id, []).append(ch.kind)
        if not ch.sample_rate > 0:
            problems.append(f"{label}: sample_rate must be > 0, got {ch.sample_rate}")
        if ch.sample_rate != ref_rate:
            problems.append(f"{label}: sample_rate {ch.sample_rate} differs from {ref_rate}")
        if len(ch) != ref_len:
            problems.append(f"{label}: length mismatch, {len(ch)} != {ref_len}")
        for idx in np.flatnonzero(~np.isfinite(ch.values)):
            problems.append(f"{label}: missing or non-finite value at index {int(idx)}")
    for station, kinds in sorted(by_station.items()):
        if sorted(k.value for k in kinds) != sorted(k.value for k in CHANNEL_ORDER):
            problems.append(
                f"{station}: expected exactly one each of vmag/vangle/freq, got {[k.value for k in kinds]}"
            )
    return problems


def _format_float(x):
    return repr(float(x))


def save_csv(dataset: PmuDataset, path) -> None:
    """Write ``dataset`` with one row per (timestamp, station)."""
    problems = validate(dataset)
    if problems:
        raise IntegrityError("refusing to save invalid dataset: " + problems[0])
    ts = dataset.timestamps()
    stations = dataset.stations
    cols = {
        s: [dataset.channel(s, k).values for k in CHANNEL_ORDER]
        for s in stations
    }
    buf = io.StringIO()
    buf.write(",".join(CSV_HEADER) + "\n")
    for i in range(len(dataset)):
        stamp = f"{ts[i]:.3f}"
        for s in stations:
            vmag, vang, freq = (c[i] for c in cols[s])
            buf.write(f"{stamp},{s},{_format_float(vmag)},{_format_float(vang)},{_format_float(freq)}\n")
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="")


def _parse_cell(text, row, column):
    if text.strip() == "":
        raise IntegrityError(f"missing value at row {row}, column {column!r}", row=row, column=column)
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"non-numeric cell {text!r} at row {row}, column {column!r}", row=row, column=column) from None
    if not math.isfinite(value):
        raise IntegrityError(f"non-finite value at row {row}, column {column!r}", row=row, column=column)
    return value


def load_csv(path, sample_rate=None) -> PmuDataset:
    """Read a dataset written in the flat ``timestamp,station,vmag,vangle,freq`` layout.

    Rows are numbered from 1 for the header, so the first data row is row 2.
    The sample rate is inferred from the timestamp spacing unless given.
    """
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        if tuple(h.strip() for h in header) != CSV_HEADER:
            raise SchemaError(f"{path}: expected header {','.join(CSV_HEADER)!r}, got {','.join(header)!r}")

        stamps = []
        per_station = {}
        station_order = []
        for rownum, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise SchemaError(f"{path}: row {rownum} has {len(row)} fields, expected {len(CSV_HEADER)}")
            ts = _parse_cell(row[0], rownum, "timestamp")
            station = row[1].strip()
            if station == "":
                raise IntegrityError(f"missing value at row {rownum}, column 'station'", row=rownum, column="station")
            vals = [_parse_cell(row[j], rownum, CSV_HEADER[j]) for j in (2, 3, 4)]
            if station not in per_station:
                per_station[station] = ([], [], [], [])
                station_order.append(station)
            bucket = per_station[station]
            bucket[0].append(ts)
            for j in range(3):
                bucket[j + 1].append(vals[j])
            stamps.append(ts)

    if not per_station:
        raise IntegrityError(f"{path}: no data rows")
    stations = sorted(per_station)
    lengths = {s: len(per_station[s][0]) for s in stations}
    if len(set(lengths.values())) != 1:
        raise IntegrityError(f"{path}: stations have unequal row counts {lengths}")
    ref_ts = np.asarray(per_station[stations[0]][0])
    for s in stations[1:]:
        if not np.array_equal(np.asarray(per_station[s][0]), ref_ts):
            raise IntegrityError(f"{path}: station {s} timestamps differ from station {stations[0]}")
    if np.any(np.diff(ref_ts) <= 0):
        raise IntegrityError(f"{path}: timestamps must be strictly increasing per station")

    if sample_rate is None:
        if ref_ts.size >= 2:
            step = float(np.median(np.diff(ref_ts)))
            sample_rate = float(round(1.0 / step))
        else:
            sample_rate = DEFAULT_SAMPLE_RATE
    start = float(ref_ts[0])
    expected = np.round(start + np.arange(ref_ts.size) / sample_rate, 3)
    off_grid = np.flatnonzero(np.abs(expected - ref_ts) > 1.5e-3)
    if off_grid.size:
        raise IntegrityError(
            f"{path}: timestamp at sample {int(off_grid[0])} is off the uniform {sample_rate:g} Hz grid"
        )

    channels = []
    for s in stations:
        _, vmag, vang, freq = per_station[s]
        channels += [
            PmuChannel(s, ChannelKind.VOLTAGE_MAGNITUDE, vmag, sample_rate),
            PmuChannel(s, ChannelKind.VOLTAGE_ANGLE, vang, sample_rate),
            PmuChannel(s, ChannelKind.FREQUENCY, freq, sample_rate),
        ]
    return PmuDataset(tuple(channels), start_time=start)


def select_series(dataset: PmuDataset, station, kind) -> np.ndarray:
    """Copy of one channel's values as a writable array."""
    return np.array(dataset.channel(station, kind).values)
