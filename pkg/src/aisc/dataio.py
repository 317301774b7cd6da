"""Loading and saving of embeddings, images, detection logs, and verdict matrices.

All formats are bit-exact round-trippable: floats are serialized with their
shortest exact repr and parsed back as 64-bit, PNG images are 8-bit RGB with
no color transform, and record order is preserved everywhere.
"""
from __future__ import annotations

import csv
import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

N_DRIVING_MODELS = 2
N_DRIVING_SCENES = 5
N_DRIVING_FRAMES = 240
N_FACE_MODELS = 3


@dataclass(frozen=True)
class SampleRecord:
    """One identified embedding, optionally tagged with its forgery-method label."""

    id: str
    vec: np.ndarray
    label: str | None = None

    def __post_init__(self) -> None:
        vec = np.array(self.vec, dtype=np.float64)  # private copy, callers keep their buffer
        if vec.ndim != 1 or vec.size == 0:
            raise ValueError(f"record {self.id!r}: vec must be a non-empty 1-D vector")
        if not np.all(np.isfinite(vec)):
            raise ValueError(f"record {self.id!r}: vec contains a non-finite value")
        vec.setflags(write=False)
        object.__setattr__(self, "vec", vec)


@dataclass
class SampleSet:
    """An ordered collection of same-dimension records (a probe or gallery set)."""

    records: list[SampleRecord]
    dim: int = 0

    def __post_init__(self) -> None:
        if not self.records:
            raise ValueError("empty set")
        dims = {r.vec.size for r in self.records}
        if len(dims) != 1:
            raise ValueError(f"dimension mismatch across records: {sorted(dims)}")
        d = dims.pop()
        if self.dim == 0:
            self.dim = d
        elif self.dim != d:
            raise ValueError(f"declared dim {self.dim} != record dim {d}")
        ids = [r.id for r in self.records]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ValueError(f"duplicate id(s): {dupes}")

    def __len__(self) -> int:
        return len(self.records)

    @property
    def ids(self) -> list[str]:
        return [r.id for r in self.records]

    @property
    def labels(self) -> list[str | None]:
        return [r.label for r in self.records]

    def matrix(self) -> np.ndarray:
        """Records stacked row-wise as an (N, D) float64 array."""
        return np.stack([r.vec for r in self.records])

    def by_id(self, sample_id: str) -> SampleRecord:
        for r in self.records:
            if r.id == sample_id:
                return r
        raise KeyError(sample_id)


@dataclass
class ImageBuffer:
    """8-bit RGB raster stored row-major as an (H, W, 3) uint8 array."""

    array: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.array)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"image must be (H, W, 3), got shape {arr.shape}")
        if arr.dtype != np.uint8:
            raise ValueError(f"image must be uint8, got {arr.dtype}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("image must have positive dimensions")
        self.array = arr

    @property
    def width(self) -> int:
        return self.array.shape[1]

    @property
    def height(self) -> int:
        return self.array.shape[0]

    @property
    def channels(self) -> int:
        return 3

    @classmethod
    def zeros(cls, width: int, height: int) -> "ImageBuffer":
        return cls(np.zeros((height, width, 3), dtype=np.uint8))

    def as_float(self) -> np.ndarray:
        """Pixels scaled to [0, 1] float64."""
        return self.array.astype(np.float64) / 255.0


@dataclass
class DetectionLog:
    """Per-frame target-class counts on the full 2-model x 5-scene x 240-frame grid."""

    counts: np.ndarray  # shape (2, 5, 240), int64

    def __post_init__(self) -> None:
        arr = np.asarray(self.counts, dtype=np.int64)
        expected = (N_DRIVING_MODELS, N_DRIVING_SCENES, N_DRIVING_FRAMES)
        if arr.shape != expected:
            raise ValueError(f"detection grid must be {expected}, got {arr.shape}")
        if np.any(arr < 0):
            raise ValueError("detection counts must be non-negative")
        self.counts = arr


@dataclass
class VerdictMatrix:
    """3 x N boolean verdicts: model i accepted face pair j as the same identity."""

    verdicts: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.verdicts, dtype=bool)
        if arr.ndim != 2 or arr.shape[0] != N_FACE_MODELS:
            raise ValueError(f"verdicts must be ({N_FACE_MODELS}, N), got shape {arr.shape}")
        if arr.shape[1] < 1:
            raise ValueError("verdict matrix needs at least one pair")
        self.verdicts = arr


# ---------------------------------------------------------------------------
# embeddings


def _parse_float(token: str, *, context: str) -> float:
    try:
        value = float(token)
    except ValueError as exc:
        raise ValueError(f"{context}: cannot parse {token!r} as a number") from exc
    if not math.isfinite(value):
        raise ValueError(f"{context}: non-finite value {token!r}")
    return value


def load_samples(path: str | Path, format: str | None = None) -> SampleSet:
    """Load a SampleSet from JSONL (canonical) or CSV (interop).

    Format is inferred from the suffix when not given. Record order is
    preserved; labels stay None where missing.
    """
    path = Path(path)
    if format is None:
        format = "csv" if path.suffix.lower() == ".csv" else "jsonl"
    if format not in ("jsonl", "csv"):
        raise ValueError(f"unknown embedding format {format!r}")
    text = path.read_text(encoding="utf-8")
    records = _parse_jsonl_samples(text) if format == "jsonl" else _parse_csv_samples(text)
    if not records:
        raise ValueError(f"{path}: empty set")
    return SampleSet(records)


def _parse_jsonl_samples(text: str) -> list[SampleRecord]:
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"line {lineno}: invalid JSON: {exc}") from exc
        if not isinstance(obj, dict) or "id" not in obj or "vec" not in obj:
            raise ValueError(f"line {lineno}: expected object with 'id' and 'vec'")
        rid = str(obj["id"])
        label = obj.get("label")
        if label is not None:
            label = str(label)
        vec = obj["vec"]
        if not isinstance(vec, list) or not vec:
            raise ValueError(f"record {rid!r}: 'vec' must be a non-empty array")
        values = [_parse_float(str(v), context=f"record {rid!r}") for v in vec]
        records.append(SampleRecord(id=rid, vec=np.array(values), label=label))
    return records


def _parse_csv_samples(text: str) -> list[SampleRecord]:
    rows = list(csv.reader(text.splitlines()))
    if not rows:
        return []
    header = rows[0]
    if len(header) < 3 or header[0] != "id" or header[1] != "label":
        raise ValueError("CSV header must be id,label,v0..v{D-1}")
    dim = len(header) - 2
    records = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != dim + 2:
            raise ValueError(f"line {lineno}: expected {dim + 2} fields, got {len(row)}")
        rid = row[0]
        label = row[1] if row[1] != "" else None
        values = [_parse_float(tok, context=f"record {rid!r}") for tok in row[2:]]
        records.append(SampleRecord(id=rid, vec=np.array(values), label=label))
    return records


def save_samples(samples: SampleSet, path: str | Path, format: str | None = None) -> None:
    """Write a SampleSet as JSONL or CSV, losslessly (floats via shortest repr)."""
    path = Path(path)
    if format is None:
        format = "csv" if path.suffix.lower() == ".csv" else "jsonl"
    if format == "jsonl":
        with path.open("w", encoding="utf-8") as fh:
            for r in samples.records:
                fh.write(json.dumps({"id": r.id, "label": r.label, "vec": [float(v) for v in r.vec]}) + "\n")
    elif format == "csv":
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id", "label"] + [f"v{i}" for i in range(samples.dim)])
            for r in samples.records:
                writer.writerow([r.id, r.label if r.label is not None else ""] + [repr(float(v)) for v in r.vec])
    else:
        raise ValueError(f"unknown embedding format {format!r}")


# ---------------------------------------------------------------------------
# PNG images


def _png_header_info(path: Path) -> tuple[int, int]:
    """(bit_depth, color_type) from the PNG IHDR chunk."""
    with path.open("rb") as fh:
        head = fh.read(26)
    if len(head) < 26 or head[:8] != b"\x89PNG\r\n\x1a\n" or head[12:16] != b"IHDR":
        raise ValueError(f"{path}: not a PNG file")
    bit_depth, color_type = struct.unpack(">BB", head[24:26])
    return bit_depth, color_type


def load_png_rgb(path: str | Path) -> ImageBuffer:
    """Load an 8-bit RGB PNG with exact pixel values (no color transform)."""
    path = Path(path)
    bit_depth, color_type = _png_header_info(path)
    if bit_depth != 8:
        raise ValueError(f"{path}: unsupported bit depth {bit_depth} (need 8)")
    if color_type != 2:  # 2 = truecolor RGB, no alpha
        raise ValueError(f"{path}: unsupported channel layout (color type {color_type}, need RGB)")
    with Image.open(path) as img:
        arr = np.asarray(img, dtype=np.uint8)
    return ImageBuffer(arr)


def save_png_rgb(image: ImageBuffer, path: str | Path) -> None:
    Image.fromarray(image.array, mode="RGB").save(Path(path), format="PNG")


# ---------------------------------------------------------------------------
# detection logs


def load_detection_log(path: str | Path) -> DetectionLog:
    """Load a JSONL detection log and validate the complete 2x5x240 grid."""
    path = Path(path)
    counts = np.full((N_DRIVING_MODELS, N_DRIVING_SCENES, N_DRIVING_FRAMES), -1, dtype=np.int64)
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"line {lineno}: invalid JSON: {exc}") from exc
        fields = []
        for key in ("model", "scene", "frame", "count"):
            value = obj.get(key) if isinstance(obj, dict) else None
            if not isinstance(value, int) or isinstance(value, bool):
                raise ValueError(f"line {lineno}: need integer fields model, scene, frame, count")
            fields.append(value)
        model, scene, frame, count = fields
        if not (1 <= model <= N_DRIVING_MODELS and 1 <= scene <= N_DRIVING_SCENES and 1 <= frame <= N_DRIVING_FRAMES):
            raise ValueError(f"line {lineno}: index out of range: model={model} scene={scene} frame={frame}")
        if count < 0:
            raise ValueError(f"line {lineno}: negative count")
        if counts[model - 1, scene - 1, frame - 1] >= 0:
            raise ValueError(f"line {lineno}: duplicate cell (model={model}, scene={scene}, frame={frame})")
        counts[model - 1, scene - 1, frame - 1] = count
    missing = np.argwhere(counts < 0)
    if missing.size:
        cells = [f"(model={m + 1}, scene={s + 1}, frame={f + 1})" for m, s, f in missing[:10]]
        more = "" if len(missing) <= 10 else f" and {len(missing) - 10} more"
        raise ValueError(f"incomplete grid, missing {len(missing)} cell(s): {', '.join(cells)}{more}")
    return DetectionLog(counts)


def save_detection_log(log: DetectionLog, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for m in range(N_DRIVING_MODELS):
            for s in range(N_DRIVING_SCENES):
                for f in range(N_DRIVING_FRAMES):
                    fh.write(
                        json.dumps(
                            {"model": m + 1, "scene": s + 1, "frame": f + 1, "count": int(log.counts[m, s, f])}
                        )
                        + "\n"
                    )


# ---------------------------------------------------------------------------
# verdict matrices


def load_verdict_matrix(path: str | Path) -> VerdictMatrix:
    """Load a CSV of 0/1 values, one row per face-verification model."""
    rows = []
    for lineno, row in enumerate(csv.reader(Path(path).read_text(encoding="utf-8").splitlines()), start=1):
        if not row:
            continue
        values = []
        for tok in row:
            tok = tok.strip()
            if tok not in ("0", "1"):
                raise ValueError(f"line {lineno}: verdicts must be 0 or 1, got {tok!r}")
            values.append(tok == "1")
        rows.append(values)
    if len(rows) != N_FACE_MODELS:
        raise ValueError(f"expected {N_FACE_MODELS} verdict rows, got {len(rows)}")
    if len({len(r) for r in rows}) != 1:
        raise ValueError("verdict rows have unequal lengths")
    return VerdictMatrix(np.array(rows, dtype=bool))


def save_verdict_matrix(matrix: VerdictMatrix, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        for row in matrix.verdicts:
            writer.writerow([int(v) for v in row])
