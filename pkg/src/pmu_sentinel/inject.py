"""False-data-injection simulation: additive Gaussian bursts with ground-truth labels."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._validation import as_series, check_int
from .data import ChannelKind, PmuDataset
from .exceptions import ParameterError, PlacementError
from .preprocess import noise_floor

MIN_EPISODE = 30  # 1 s at 30 Hz
MAX_EPISODE = 60  # 2 s at 30 Hz
DEFAULT_SIGMA_MULTIPLIER = 5.0
MAX_ANOMALY_FRACTION = 0.05


@dataclass(frozen=True, eq=False)
class AnomalyMask:
    """Per-sample anomaly flags plus the half-open episodes that produced them."""

    flags: np.ndarray
    episodes: tuple

    def __post_init__(self):
        flags = np.array(self.flags, dtype=bool, copy=True)
        flags.setflags(write=False)
        episodes = tuple(sorted((int(s), int(e)) for s, e in self.episodes))
        object.__setattr__(self, "flags", flags)
        object.__setattr__(self, "episodes", episodes)

    @classmethod
    def from_episodes(cls, length, episodes):
        flags = np.zeros(length, dtype=bool)
        for s, e in episodes:
            flags[s:e] = True
        return cls(flags, episodes)

    def __len__(self):
        return self.flags.shape[0]

    def __eq__(self, other):
        if not isinstance(other, AnomalyMask):
            return NotImplemented
        return self.episodes == other.episodes and np.array_equal(self.flags, other.flags)

    def is_consistent(self):
        """True when episodes are sorted, disjoint, in range and match ``flags``."""
        prev_end = 0
        for s, e in self.episodes:
            if s < prev_end or e <= s or e > len(self):
                return False
            prev_end = e
        return np.array_equal(self.flags, AnomalyMask.from_episodes(len(self), self.episodes).flags)

    def slice(self, start, stop):
        """Mask restricted to ``[start, stop)`` with episodes clipped and re-indexed."""
        eps = []
        for s, e in self.episodes:
            lo, hi = max(s, start), min(e, stop)
            if lo < hi:
                eps.append((lo - start, hi - start))
        return AnomalyMask(self.flags[start:stop], eps)

    def save(self, csv_path, episodes_path=None):
        """Write ``index,flag`` rows and an ``episodes`` JSON sidecar."""
        csv_path = Path(csv_path)
        if episodes_path is None:
            episodes_path = csv_path.with_name(csv_path.stem + "_episodes.json")
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            fh.write("index,flag\n")
            for i, f in enumerate(self.flags):
                fh.write(f"{i},{int(f)}\n")
        payload = {"length": len(self), "episodes": [{"start": s, "end": e} for s, e in self.episodes]}
        Path(episodes_path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, csv_path, episodes_path=None):
        csv_path = Path(csv_path)
        if episodes_path is None:
            episodes_path = csv_path.with_name(csv_path.stem + "_episodes.json")
        with open(csv_path, encoding="utf-8", newline="") as fh:
            rows = list(csv.DictReader(fh))
        flags = np.array([int(r["flag"]) for r in rows], dtype=bool)
        payload = json.loads(Path(episodes_path).read_text(encoding="utf-8"))
        return cls(flags, [(e["start"], e["end"]) for e in payload["episodes"]])


def _place_episodes(n, count, rng, region, min_len, max_len, max_fraction):
    lo, hi = region
    if not (0 <= lo < hi <= n):
        raise ParameterError(f"injection region {region} outside series of length {n}")
    lengths = rng.integers(min_len, max_len + 1, size=count)
    if max_fraction is not None and lengths.sum() > max_fraction * n:
        raise PlacementError(
            f"{count} episodes totalling {int(lengths.sum())} samples exceed "
            f"{max_fraction:.0%} of the {n}-sample series"
        )
    free = np.ones(n, dtype=bool)
    free[:lo] = False
    free[hi:] = False
    episodes = []
    for length in lengths:
        length = int(length)
        # start s is valid iff free[s:s+length] is all True
        if hi - lo < length:
            raise PlacementError(f"episode of {length} samples does not fit in region {region}")
        run = np.convolve(free.astype(np.int64), np.ones(length, dtype=np.int64), mode="valid")
        starts = np.flatnonzero(run == length)
        if starts.size == 0:
            raise PlacementError(
                f"no room for episode {len(episodes) + 1} of {count} ({length} samples) without overlap"
            )
        s = int(starts[rng.integers(starts.size)])
        free[s : s + length] = False
        episodes.append((s, s + length))
    return sorted(episodes)


def inject_series(
    values,
    count,
    sigma,
    seed=None,
    region=None,
    min_len=MIN_EPISODE,
    max_len=MAX_EPISODE,
    max_fraction=MAX_ANOMALY_FRACTION,
):
    """Add ``count`` disjoint Gaussian bursts to a 1-D series.

    Each burst lasts a uniformly drawn number of samples in
    ``[min_len, max_len]``; its start is uniform over every position where it
    fits without touching an earlier burst. ``region`` optionally restricts
    placement to ``[start, stop)``.

    Returns the modified copy and its :class:`AnomalyMask`.
    """
    x = as_series(values)
    count = check_int(count, "count", minimum=0)
    sigma = float(sigma)
    if not sigma >= 0:
        raise ParameterError(f"sigma must be >= 0, got {sigma}")
    rng = np.random.default_rng(seed)
    n = x.size
    if count == 0:
        return x.copy(), AnomalyMask(np.zeros(n, dtype=bool), ())
    episodes = _place_episodes(n, count, rng, region or (0, n), min_len, max_len, max_fraction)
    out = x.copy()
    for s, e in episodes:
        out[s:e] += rng.normal(0.0, sigma, e - s)
    return out, AnomalyMask.from_episodes(n, episodes)


def default_sigma(series, multiplier=DEFAULT_SIGMA_MULTIPLIER):
    """Burst standard deviation: ``multiplier`` times the series' noise floor."""
    return multiplier * noise_floor(series)


def inject_gaussian(dataset: PmuDataset, channel_selector, count, sigma=None, seed=None, **kwargs):
    """Inject Gaussian bursts into one channel of ``dataset``.

    ``channel_selector`` is a ``(station_id, kind)`` pair. When ``sigma`` is
    None it defaults to five times the channel's noise floor.
    """
    station, kind = channel_selector
    channel = dataset.channel(station, ChannelKind.parse(kind))
    if sigma is None:
        sigma = default_sigma(channel.values)
    values, mask = inject_series(channel.values, count, sigma, seed=seed, **kwargs)
    if count == 0:
        return dataset, mask
    return dataset.replace_channel(station, kind, values), mask
