"""Result records and atomic output files."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


def _clean(value):
    """Convert numpy scalars/arrays and non-finite floats into plain JSON values."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return _clean(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return v if math.isfinite(v) else repr(v)
    return value


@dataclass
class Verdict:
    name: str
    passed: bool
    value: float | None = None
    tolerance: str = ""
    detail: str = ""

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed), "value": self.value,
                "tolerance": self.tolerance, "detail": self.detail}


@dataclass
class ResultRecord:
    experiment: str
    seed: int
    inputs_digest: str
    metrics: dict
    verdicts: list[Verdict]
    rows: list[dict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.verdicts) and all(v.passed for v in self.verdicts)

    def to_dict(self) -> dict:
        return _clean({
            "experiment": self.experiment,
            "seed": self.seed,
            "inputs_digest": self.inputs_digest,
            "metrics": self.metrics,
            "verdicts": [v.to_dict() for v in self.verdicts],
            "passed": self.passed,
        })

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def rows_csv(self) -> str:
        rows = _clean(self.rows)
        if not rows:
            return ""
        keys = sorted({k for r in rows for k in r})
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: json.dumps(v) if isinstance(v, (list, dict)) else v for k, v in r.items()})
        return buf.getvalue()

    def rows_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in _clean(self.rows))


def atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_record(record: ResultRecord, outdir, fmt: str = "jsonl") -> Path:
    """Write {outdir}/{tag}/{seed}/record.json and the metric rows as CSV or JSONL."""
    base = Path(outdir) / record.experiment / str(record.seed)
    atomic_write(base / "record.json", record.to_json())
    if fmt == "csv":
        atomic_write(base / "rows.csv", record.rows_csv())
    elif fmt == "jsonl":
        atomic_write(base / "rows.jsonl", record.rows_jsonl())
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return base
