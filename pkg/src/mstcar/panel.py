"""Count panels: deaths and populations on a (region, group, time) index.

Internally every panel array uses the axis order ``[region, time, group]``
so that one region's block, raveled, is the canonical time-outer /
group-inner vector used by the covariance layer.  The text format stays in
the natural ``region,group,time,deaths,population`` row layout.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class PanelFormatError(ValueError):
    """Raised for malformed or inconsistent count-panel input."""


@dataclass(frozen=True)
class PanelIndex:
    """Axis labels for a dense (region, group, time) panel."""

    region_labels: tuple[str, ...]
    group_labels: tuple[str, ...]
    time_labels: tuple[str, ...]

    def __post_init__(self):
        for name, labels in (("region", self.region_labels),
                             ("group", self.group_labels),
                             ("time", self.time_labels)):
            if len(labels) == 0:
                raise ValueError(f"{name} labels must be nonempty")
            if len(set(labels)) != len(labels):
                raise ValueError(f"{name} labels must be unique")

    @property
    def n_regions(self) -> int:
        return len(self.region_labels)

    @property
    def n_groups(self) -> int:
        return len(self.group_labels)

    @property
    def n_times(self) -> int:
        return len(self.time_labels)

    @property
    def shape(self) -> tuple[int, int, int]:
        """Array shape in internal [region, time, group] order."""
        return (self.n_regions, self.n_times, self.n_groups)


@dataclass(frozen=True)
class CountPanel:
    """Dense death counts and populations, indexed [region, time, group]."""

    index: PanelIndex
    deaths: np.ndarray
    populations: np.ndarray

    def __post_init__(self):
        deaths = np.asarray(self.deaths)
        pops = np.asarray(self.populations)
        shape = self.index.shape
        if deaths.shape != shape or pops.shape != shape:
            raise ValueError(f"panel arrays must have shape {shape}")
        if np.any(deaths < 0) or np.any(pops < 0):
            raise ValueError("deaths and populations must be nonnegative")
        if np.any(deaths > pops):
            bad = np.argwhere(deaths > pops)[0]
            raise ValueError(
                f"deaths exceed population at region={self.index.region_labels[bad[0]]} "
                f"time={self.index.time_labels[bad[1]]} group={self.index.group_labels[bad[2]]}"
            )

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.index.shape

    def layer_totals(self) -> tuple[np.ndarray, np.ndarray]:
        """Total deaths and population per (time, group) layer."""
        return self.deaths.sum(axis=0), self.populations.sum(axis=0)


def load_count_panel(source: Iterable[str], index: PanelIndex) -> CountPanel:
    """Read delimited rows ``region,group,time,deaths,population``.

    Every cell of the index must appear exactly once; duplicates, missing
    cells, negative entries and deaths > population are rejected with the
    offending coordinates in the message.
    """
    region_pos = {lab: i for i, lab in enumerate(index.region_labels)}
    group_pos = {lab: i for i, lab in enumerate(index.group_labels)}
    time_pos = {lab: i for i, lab in enumerate(index.time_labels)}

    deaths = np.zeros(index.shape, dtype=np.int64)
    pops = np.zeros(index.shape, dtype=np.int64)
    seen = np.zeros(index.shape, dtype=bool)

    rows = iter(source)
    header = None
    for lineno, raw in enumerate(rows, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if header is None:
            expected = ["region", "group", "time", "deaths", "population"]
            if [p.lower() for p in parts] != expected:
                raise PanelFormatError(
                    f"line {lineno}: expected header {','.join(expected)!r}, got {line!r}"
                )
            header = parts
            continue
        if len(parts) != 5:
            raise PanelFormatError(f"line {lineno}: expected 5 fields, got {len(parts)}")
        region, group, time, deaths_s, pop_s = parts
        cell = f"region={region} group={group} time={time}"
        if region not in region_pos:
            raise PanelFormatError(f"line {lineno}: unknown region label {region!r}")
        if group not in group_pos:
            raise PanelFormatError(f"line {lineno}: unknown group label {group!r}")
        if time not in time_pos:
            raise PanelFormatError(f"line {lineno}: unknown time label {time!r}")
        try:
            y, n = int(deaths_s), int(pop_s)
        except ValueError as exc:
            raise PanelFormatError(f"line {lineno}: non-integer count at {cell}") from exc
        if y < 0 or n < 0:
            raise PanelFormatError(f"line {lineno}: negative value at {cell}")
        if y > n:
            raise PanelFormatError(
                f"line {lineno}: deaths {y} exceed population {n} at {cell}"
            )
        loc = (region_pos[region], time_pos[time], group_pos[group])
        if seen[loc]:
            raise PanelFormatError(f"line {lineno}: duplicate cell at {cell}")
        seen[loc] = True
        deaths[loc] = y
        pops[loc] = n

    if header is None:
        raise PanelFormatError("count panel is empty")
    if not seen.all():
        i, t, k = np.argwhere(~seen)[0]
        raise PanelFormatError(
            f"missing cell: region={index.region_labels[i]} "
            f"group={index.group_labels[k]} time={index.time_labels[t]}"
        )
    return CountPanel(index, deaths, pops)


def dump_count_panel(panel: CountPanel) -> str:
    """Serialize a panel to the text format accepted by load_count_panel."""
    out = io.StringIO()
    out.write("region,group,time,deaths,population\n")
    idx = panel.index
    for i, region in enumerate(idx.region_labels):
        for k, group in enumerate(idx.group_labels):
            for t, time in enumerate(idx.time_labels):
                out.write(
                    f"{region},{group},{time},{panel.deaths[i, t, k]},{panel.populations[i, t, k]}\n"
                )
    return out.getvalue()


def panel_index(regions: Sequence[str], groups: Sequence[str], times: Sequence[str]) -> PanelIndex:
    return PanelIndex(tuple(regions), tuple(groups), tuple(times))


def infer_panel_index(source: Iterable[str]) -> PanelIndex:
    """Build the index from a panel file, labels in first-appearance order."""
    regions: dict[str, None] = {}
    groups: dict[str, None] = {}
    times: dict[str, None] = {}
    header_seen = False
    for raw in source:
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if not header_seen:
            header_seen = True
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 5:
            raise PanelFormatError(f"expected 5 fields, got {len(parts)}: {line!r}")
        regions.setdefault(parts[0])
        groups.setdefault(parts[1])
        times.setdefault(parts[2])
    if not header_seen or not regions:
        raise PanelFormatError("count panel is empty")
    return PanelIndex(tuple(regions), tuple(groups), tuple(times))
