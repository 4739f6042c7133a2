"""Time-stamped measure snapshots plus long-format scalar diagnostics."""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidArgumentError
from .measures import Measure, save_measure_csv

#: observer(t, rho, mu) -> {channel: value}
Observer = Callable[[float, Measure, Measure], Dict[str, float]]


@dataclass
class Snapshot:
    time: float
    rho: Measure
    mu: Measure


@dataclass
class Trajectory:
    snapshots: List[Snapshot] = field(default_factory=list)
    diagnostics: Dict[str, List[Tuple[float, float]]] = field(default_factory=lambda: defaultdict(list))
    meta: dict = field(default_factory=dict)

    def record(self, name: str, t: float, value: float) -> None:
        self.diagnostics[name].append((float(t), float(value)))

    def add_snapshot(self, t: float, rho: Measure, mu: Measure,
                     observers: Sequence[Observer] = ()) -> None:
        self.snapshots.append(Snapshot(float(t), rho, mu))
        for obs in observers:
            for k, v in obs(t, rho, mu).items():
                self.record(k, t, v)

    def series(self, name: str):
        pts = self.diagnostics.get(name, [])
        if not pts:
            return np.zeros(0), np.zeros(0)
        arr = np.asarray(pts, dtype=float)
        return arr[:, 0], arr[:, 1]

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.snapshots])

    @property
    def final(self) -> Optional[Snapshot]:
        return self.snapshots[-1] if self.snapshots else None

    def channels(self) -> List[str]:
        return sorted(self.diagnostics)

    def write_csv(self, out_dir, snapshots: bool = True) -> Path:
        """Write ``diagnostics.csv`` and one CSV per species per snapshot."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        diag = out / "diagnostics.csv"
        rows = sorted(
            ((t, name, v) for name, pts in self.diagnostics.items() for t, v in pts),
            key=lambda r: (r[0], r[1]),
        )
        with diag.open("w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["time", "name", "value"])
            for t, name, v in rows:
                wr.writerow([repr(t), name, repr(v)])
        if snapshots:
            snap_dir = out / "snapshots"
            snap_dir.mkdir(exist_ok=True)
            for k, s in enumerate(self.snapshots):
                save_measure_csv(s.rho, snap_dir / f"rho_{k:04d}.csv")
                save_measure_csv(s.mu, snap_dir / f"mu_{k:04d}.csv")
            with (snap_dir / "times.csv").open("w", newline="") as fh:
                wr = csv.writer(fh)
                wr.writerow(["index", "time"])
                for k, s in enumerate(self.snapshots):
                    wr.writerow([k, repr(s.time)])
        return diag


def read_diagnostics(path) -> Dict[str, Tuple[np.ndarray, np.ndarray]]:
    """Load a long-format diagnostics CSV into ``{channel: (t, v)}``."""
    acc: Dict[str, List[Tuple[float, float]]] = defaultdict(list)
    with Path(path).open() as fh:
        rd = csv.DictReader(fh)
        for row in rd:
            acc[row["name"]].append((float(row["time"]), float(row["value"])))
    out = {}
    for k, pts in acc.items():
        arr = np.asarray(sorted(pts))
        out[k] = (arr[:, 0], arr[:, 1])
    return out


def step_schedule(t0: float, t_end: float, dt: float, snapshot_every: Optional[float]):
    """Number of steps and the snapshot stride in steps."""
    n_steps = int(round((t_end - t0) / dt))
    if n_steps < 1 or abs(n_steps * dt - (t_end - t0)) > 1e-9 * max(1.0, t_end):
        raise InvalidArgumentError(f"horizon {t_end - t0} is not a whole number of steps of {dt}")
    if snapshot_every is None:
        stride = max(1, n_steps // 100)
    else:
        stride = int(round(snapshot_every / dt))
        if stride < 1 or abs(stride * dt - snapshot_every) > 1e-9 * max(1.0, snapshot_every):
            raise InvalidArgumentError(f"snapshot_every {snapshot_every} is not a multiple of dt {dt}")
    return n_steps, stride
