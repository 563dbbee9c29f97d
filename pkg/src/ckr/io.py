"""File formats: dataset CSV, run manifests, reports.

Every artifact starts with ``# manifest: {json}`` comment lines describing the
run that wrote it. Floats are written with 17 significant digits so a file
read back reproduces the binary64 values exactly.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .kernels import Dataset

SEED_ENV = "CKR_SEED"
MANIFEST_PREFIX = "# manifest: "


def fmt(v) -> str:
    """17 significant digits for floats, plain text otherwise."""
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if v is None:
        return ""
    return str(v)


def blob_hash(data: bytes) -> str:
    """Git-style content hash: sha1 over ``blob <len>\\0`` + data."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def file_hash(path) -> str:
    return blob_hash(Path(path).read_bytes())


def default_seed(fallback: int = 0) -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return fallback
    try:
        return int(raw)
    except ValueError as exc:
        raise ValueError(f"{SEED_ENV} must be an integer, got {raw!r}") from exc


def _timestamp() -> str | None:
    # only a reproducible build timestamp is recorded; wall-clock time would break determinism
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if not epoch:
        return None
    import datetime as dt
    return dt.datetime.fromtimestamp(int(epoch), dt.timezone.utc).isoformat()


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int | None = None
    inputs: dict = field(default_factory=dict)    # path -> blob hash
    outputs: list = field(default_factory=list)
    timestamp: str | None = field(default_factory=_timestamp)

    @classmethod
    def for_inputs(cls, command: str, config: dict, seed=None, inputs=(), outputs=()) -> "RunManifest":
        return cls(command, config, seed, {str(p): file_hash(p) for p in inputs}, [str(o) for o in outputs])

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["timestamp"] is None:
            d.pop("timestamp")
        return d

    def header(self) -> str:
        return MANIFEST_PREFIX + json.dumps(self.to_dict(), sort_keys=True) + "\n"


def read_manifest(path) -> dict | None:
    with open(path, encoding="utf-8") as f:
        first = f.readline()
    if first.startswith(MANIFEST_PREFIX):
        return json.loads(first[len(MANIFEST_PREFIX):])
    if first.lstrip().startswith("{"):
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return doc.get("manifest")
    return None


# -- datasets ----------------------------------------------------------------

def dataset_to_csv(data: Dataset, manifest: RunManifest | None = None) -> str:
    buf = io.StringIO()
    if manifest is not None:
        buf.write(manifest.header())
    w = csv.writer(buf, lineterminator="\n")
    head = [f"x{j}" for j in range(data.n)]
    if data.labels is not None:
        head.append("y")
    w.writerow(head)
    for i in range(data.m):
        row = [fmt(v) for v in data.points[i]]
        if data.labels is not None:
            row.append(fmt(data.labels[i]))
        w.writerow(row)
    return buf.getvalue()


def parse_dataset(text: str) -> Dataset:
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    if not lines:
        raise ValueError("dataset file is empty")
    rows = list(csv.reader(lines))
    head = [h.strip() for h in rows[0]]
    has_y = head[-1] == "y"
    xcols = head[:-1] if has_y else head
    if xcols != [f"x{j}" for j in range(len(xcols))] or not xcols:
        raise ValueError("dataset header must be x0,...,x{n-1}[,y]")
    body = rows[1:]
    if not body:
        raise ValueError("dataset has no rows")
    try:
        A = np.array([[float(v) for v in r] for r in body], dtype=float)
    except ValueError as exc:
        raise ValueError(f"non-numeric value in dataset: {exc}") from exc
    if A.shape[1] != len(head):
        raise ValueError("ragged dataset rows")
    if has_y:
        return Dataset(A[:, :-1], A[:, -1])
    return Dataset(A)


def read_dataset(path) -> Dataset:
    return parse_dataset(Path(path).read_text(encoding="utf-8"))


def write_text(path, text: str) -> None:
    p = Path(path)
    if p.parent and not p.parent.exists():
        p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text, encoding="utf-8")


# -- tables -----------------------------------------------------------------

def table_to_csv(columns: list[str], rows: list[dict], manifest: RunManifest | None = None) -> str:
    buf = io.StringIO()
    if manifest is not None:
        buf.write(manifest.header())
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def read_table(path) -> list[dict]:
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines()
             if ln and not ln.startswith("#")]
    return list(csv.DictReader(lines))


def to_json(obj, manifest: RunManifest | None = None) -> str:
    """Deterministic JSON; floats round-trip through repr."""
    if manifest is not None:
        obj = dict(obj, manifest=manifest.to_dict())
    return json.dumps(_plain(obj), sort_keys=True, indent=1, allow_nan=True) + "\n"


def _plain(o):
    if isinstance(o, dict):
        return {str(k): _plain(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_plain(v) for v in o]
    if isinstance(o, np.ndarray):
        return [_plain(v) for v in o.tolist()]
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    return o
