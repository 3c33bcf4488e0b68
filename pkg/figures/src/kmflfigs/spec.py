"""Figure descriptors: what to read, which style, where to write.

A figure spec is a small YAML file::

    kind: traces            # traces | nfit | comparison
    inputs:                 # harness CSVs, schema "t,<name>,..."
      - runs/series_N32_run0.csv
      - runs/series_N32_run1.csv
    output: traces.png
    manifest: runs/manifest.json   # optional; its name is embedded in the PNG
    column: loss                   # traces/comparison; "loss+kinetic" sums columns
    log_x: false
    log_y: true
    labels: [with momentum, without momentum]   # comparison only
    title: null

``nfit`` takes a single input, the harness ``tail_fit.csv``
(columns ``N,mean,std,c_const,c_slope``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

KINDS = ("traces", "nfit", "comparison")
FIXED_DPI = 150


class FigureError(ValueError):
    """Bad figure spec or unreadable input."""


@dataclass(frozen=True)
class FigureSpec:
    kind: str
    inputs: tuple[Path, ...]
    output: Path
    manifest: Path | None = None
    column: str = "loss"
    log_x: bool = False
    log_y: bool = False
    labels: tuple[str, ...] | None = None
    title: str | None = None
    dpi: int = FIXED_DPI

    def __post_init__(self):
        if self.kind not in KINDS:
            raise FigureError(f"unknown figure kind {self.kind!r}; expected one of {KINDS}")
        if not self.inputs:
            raise FigureError("figure spec lists no inputs")
        for path in self.inputs:
            if not Path(path).exists():
                raise FigureError(f"input does not exist: {path}")
        if self.manifest is not None and not Path(self.manifest).exists():
            raise FigureError(f"manifest does not exist: {self.manifest}")
        if self.kind == "comparison" and len(self.inputs) != 2:
            raise FigureError(f"comparison needs exactly 2 inputs, got {len(self.inputs)}")
        if self.kind == "nfit" and len(self.inputs) != 1:
            raise FigureError(f"nfit needs exactly 1 input, got {len(self.inputs)}")


def load_spec(path: str | Path) -> FigureSpec:
    p = Path(path)
    if not p.exists():
        raise FigureError(f"spec file not found: {p}")
    try:
        raw = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise FigureError(f"spec file {p} is not valid YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise FigureError(f"spec file {p} must contain a mapping")
    known = {"kind", "inputs", "output", "manifest", "column", "log_x", "log_y",
             "labels", "title", "dpi"}
    unknown = set(raw) - known
    if unknown:
        raise FigureError(f"unknown spec keys: {sorted(unknown)}")
    base = p.parent

    def resolve(value):
        q = Path(value)
        return q if q.is_absolute() else base / q

    inputs = raw.get("inputs", [])
    if isinstance(inputs, (str, Path)):
        inputs = [inputs]
    return FigureSpec(
        kind=raw.get("kind", ""),
        inputs=tuple(resolve(v) for v in inputs),
        output=resolve(raw.get("output", "figure.png")),
        manifest=resolve(raw["manifest"]) if raw.get("manifest") else None,
        column=raw.get("column", "loss"),
        log_x=bool(raw.get("log_x", False)),
        log_y=bool(raw.get("log_y", False)),
        labels=tuple(raw["labels"]) if raw.get("labels") else None,
        title=raw.get("title"),
        dpi=int(raw.get("dpi", FIXED_DPI)),
    )
