"""Time-indexed scalar diagnostics and their CSV round trip.

The on-disk format is a plain CSV with header ``t,<name1>,<name2>,...`` and
one row per record point.  Values are written with ``repr`` so a parse of
the file reproduces the binary doubles exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class ObservableSeries:
    """Named scalar observables sampled along a simulation."""

    times: np.ndarray
    columns: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.float64)
        object.__setattr__(self, "times", t)
        cols = {}
        for name, vals in self.columns.items():
            v = np.asarray(vals, dtype=np.float64)
            if v.shape != t.shape:
                raise ValueError(
                    f"column {name!r} has {v.shape[0] if v.ndim else 0} rows, "
                    f"expected {t.shape[0]}"
                )
            cols[name] = v
        object.__setattr__(self, "columns", cols)

    def __len__(self) -> int:
        return self.times.shape[0]

    @property
    def names(self) -> list[str]:
        return list(self.columns)

    def column(self, name: str) -> np.ndarray:
        return self.columns[name]

    def to_csv(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="\n") as fh:
            fh.write(",".join(["t", *self.columns]) + "\n")
            cols = list(self.columns.values())
            for i, t in enumerate(self.times):
                row = [repr(float(t))] + [repr(float(c[i])) for c in cols]
                fh.write(",".join(row) + "\n")

    @classmethod
    def from_csv(cls, path: str | Path) -> "ObservableSeries":
        with open(path, "r") as fh:
            header = fh.readline().strip().split(",")
            if not header or header[0] != "t":
                raise ValueError(f"{path}: expected header starting with 't'")
            names = header[1:]
            rows = [line.strip().split(",") for line in fh if line.strip()]
        data = np.array([[float(v) for v in row] for row in rows], dtype=np.float64)
        data = data.reshape(-1, 1 + len(names))
        return cls(
            times=data[:, 0],
            columns={name: data[:, 1 + j] for j, name in enumerate(names)},
        )
