"""Core domain types, dataset manifest, and scanpath file I/O.

File formats:
  * Manifest: JSON object with keys "stimuli" (array of {"id", "image"}),
    "scanpaths" (array of paths), optional "embeddings" (directory path).
    Relative paths resolve against the manifest's own directory.
  * Scanpath CSV, UTF-8, header required:
    subject_id,group,stimulus_id,index,x,y,start_ms,duration_ms[,aoi_label]
  * Stimulus images: binary PGM (P5, maxval 255) or PNG converted to
    grayscale by luminance.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import (
    DuplicateKey,
    EmptyScanpath,
    MissingFile,
    OrderError,
    ParseError,
)


class Group(Enum):
    EXPERT = "expert"
    STUDENT = "student"
    UNKNOWN = "unknown"

    @classmethod
    def parse(cls, text: str) -> "Group":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ParseError(f"unknown group label {text!r}") from None


@dataclass(frozen=True)
class Fixation:
    """One gaze fixation: a dwell at (x, y) on the stimulus."""

    index: int
    x: float
    y: float
    start_ms: float
    duration_ms: float

    def __post_init__(self):
        if not (np.isfinite(self.x) and np.isfinite(self.y)):
            raise ParseError(f"fixation {self.index}: non-finite coordinates")
        if self.x < 0 or self.y < 0:
            raise ParseError(f"fixation {self.index}: negative coordinates")
        if not (np.isfinite(self.duration_ms) and self.duration_ms > 0):
            raise ParseError(f"fixation {self.index}: duration_ms must be > 0")


@dataclass(frozen=True)
class Scanpath:
    """Ordered fixations by one subject on one stimulus.

    aoi_labels, when present, holds one semantic area-of-interest label per
    fixation and feeds the symbolic alignment baseline.
    """

    subject_id: str
    group: Group
    stimulus_id: str
    fixations: tuple[Fixation, ...]
    aoi_labels: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.aoi_labels is not None and len(self.aoi_labels) != len(self.fixations):
            raise ParseError(
                f"{self.key}: {len(self.aoi_labels)} aoi labels for "
                f"{len(self.fixations)} fixations"
            )
        prev_start = None
        for pos, f in enumerate(self.fixations):
            if f.index != pos:
                raise OrderError(
                    f"{self.key}: fixation indices not consecutive from 0 "
                    f"(found {f.index} at position {pos})"
                )
            if prev_start is not None and f.start_ms < prev_start:
                raise OrderError(f"{self.key}: start_ms decreases at index {f.index}")
            prev_start = f.start_ms

    @property
    def key(self) -> str:
        return f"{self.subject_id}@{self.stimulus_id}"

    def __len__(self) -> int:
        return len(self.fixations)


@dataclass(frozen=True)
class StimulusImage:
    """8-bit grayscale stimulus, pixels row-major (height x width)."""

    stimulus_id: str
    width: int
    height: int
    pixels: np.ndarray
    source_format: str = "pgm"

    def __post_init__(self):
        if self.pixels.shape != (self.height, self.width):
            raise ParseError(
                f"stimulus {self.stimulus_id}: pixel buffer shape "
                f"{self.pixels.shape} != ({self.height}, {self.width})"
            )
        if self.pixels.dtype != np.uint8:
            raise ParseError(f"stimulus {self.stimulus_id}: pixels must be uint8")


def truncate_to_window(sp: Scanpath, window_ms: float) -> Scanpath:
    """Keep the prefix of fixations whose onset is before window_ms.

    A fixation straddling the boundary is kept whole; only the onset time
    decides. Raises EmptyScanpath when nothing starts inside the window.
    """
    if window_ms <= 0:
        raise ParseError("window_ms must be > 0")
    kept = tuple(f for f in sp.fixations if f.start_ms < window_ms)
    if not kept:
        raise EmptyScanpath(f"{sp.key}: no fixation starts before {window_ms} ms")
    if len(kept) == len(sp.fixations):
        return sp
    labels = sp.aoi_labels[: len(kept)] if sp.aoi_labels is not None else None
    return replace(sp, fixations=kept, aoi_labels=labels)


# ---------------------------------------------------------------------------
# Scanpath CSV

_CSV_COLUMNS = [
    "subject_id",
    "group",
    "stimulus_id",
    "index",
    "x",
    "y",
    "start_ms",
    "duration_ms",
]


def load_scanpaths(path: str | Path) -> list[Scanpath]:
    """Parse one scanpath CSV into scanpaths grouped by (subject, stimulus).

    Rows may appear in any order; fixations are sorted by index and the
    consecutive-from-0 invariant is enforced. Scanpaths are returned sorted
    by (subject_id, stimulus_id).
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFile(str(path))
    rows: dict[tuple[str, str], list[tuple[Fixation, str]]] = {}
    groups: dict[tuple[str, str], Group] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file, header required") from None
        header = [h.strip() for h in header]
        has_aoi = header == _CSV_COLUMNS + ["aoi_label"]
        if not has_aoi and header != _CSV_COLUMNS:
            raise ParseError(f"{path}: unexpected header {header}")
        width = len(header)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise ParseError(f"{path}:{lineno}: expected {width} fields, got {len(row)}")
            try:
                fix = Fixation(
                    index=int(row[3]),
                    x=float(row[4]),
                    y=float(row[5]),
                    start_ms=float(row[6]),
                    duration_ms=float(row[7]),
                )
            except ParseError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
            key = (row[0], row[2])
            group = Group.parse(row[1])
            if key in groups and groups[key] is not group:
                raise ParseError(f"{path}:{lineno}: conflicting group for {key}")
            groups[key] = group
            label = row[8] if has_aoi else ""
            rows.setdefault(key, []).append((fix, label))
    if not rows:
        raise EmptyScanpath(f"{path}: no fixation rows")

    out = []
    for key in sorted(rows):
        entries = sorted(rows[key], key=lambda e: e[0].index)
        seen = [e[0].index for e in entries]
        if len(set(seen)) != len(seen):
            raise OrderError(f"{path}: duplicate fixation index in {key[0]}@{key[1]}")
        fixations = tuple(e[0] for e in entries)
        labels = tuple(e[1] for e in entries)
        aoi = labels if any(labels) else None
        out.append(
            Scanpath(
                subject_id=key[0],
                group=groups[key],
                stimulus_id=key[1],
                fixations=fixations,
                aoi_labels=aoi,
            )
        )
    return out


def write_scanpaths(path: str | Path, scanpaths: list[Scanpath]) -> None:
    """Write scanpaths to CSV; the aoi_label column appears iff any has labels."""
    has_aoi = any(sp.aoi_labels is not None for sp in scanpaths)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CSV_COLUMNS + (["aoi_label"] if has_aoi else []))
        for sp in scanpaths:
            for i, f in enumerate(sp.fixations):
                row = [
                    sp.subject_id,
                    sp.group.value,
                    sp.stimulus_id,
                    f.index,
                    _fmt_num(f.x),
                    _fmt_num(f.y),
                    _fmt_num(f.start_ms),
                    _fmt_num(f.duration_ms),
                ]
                if has_aoi:
                    row.append(sp.aoi_labels[i] if sp.aoi_labels is not None else "")
                writer.writerow(row)


def _fmt_num(v: float) -> str:
    # integers stay integers; everything else round-trips at 9 significant digits
    if float(v).is_integer():
        return str(int(v))
    return format(float(v), ".9g")


# ---------------------------------------------------------------------------
# Stimulus images


def load_stimulus_image(stimulus_id: str, path: str | Path) -> StimulusImage:
    """Load a PGM (P5) or PNG stimulus as 8-bit grayscale."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(str(path))
    data = path.read_bytes()
    if data[:2] == b"P5":
        pixels, width, height = _parse_pgm(data, str(path))
        fmt = "pgm"
    else:
        try:
            from PIL import Image
        except ImportError:  # pragma: no cover
            raise ParseError(f"{path}: not a P5 PGM and Pillow unavailable") from None
        try:
            with Image.open(path) as im:
                # ITU-R 601 luminance for color inputs
                gray = im.convert("L")
                width, height = gray.size
                pixels = np.asarray(gray, dtype=np.uint8)
        except Exception as exc:
            raise ParseError(f"{path}: {exc}") from None
        fmt = "png"
    return StimulusImage(
        stimulus_id=stimulus_id,
        width=width,
        height=height,
        pixels=pixels,
        source_format=fmt,
    )


def _parse_pgm(data: bytes, name: str) -> tuple[np.ndarray, int, int]:
    # header is "P5", width, height, maxval as whitespace-separated tokens,
    # with '#' comments allowed, followed by a single whitespace byte
    pos = 2
    tokens = []
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        m = re.match(rb"\d+", data[pos:])
        if not m:
            raise ParseError(f"{name}: malformed PGM header")
        tokens.append(int(m.group()))
        pos += m.end()
    pos += 1  # single whitespace after maxval
    width, height, maxval = tokens
    if maxval != 255:
        raise ParseError(f"{name}: only maxval 255 PGM supported, got {maxval}")
    body = data[pos : pos + width * height]
    if len(body) != width * height:
        raise ParseError(f"{name}: PGM body has {len(body)} bytes, expected {width * height}")
    pixels = np.frombuffer(body, dtype=np.uint8).reshape(height, width)
    return pixels, width, height


def write_pgm(path: str | Path, pixels: np.ndarray) -> None:
    """Write a uint8 array (height x width) as binary PGM."""
    if pixels.dtype != np.uint8 or pixels.ndim != 2:
        raise ParseError("write_pgm needs a 2-D uint8 array")
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


# ---------------------------------------------------------------------------
# Manifest


@dataclass(frozen=True)
class DatasetManifest:
    """Validated dataset description: stimuli, scanpath files, embeddings dir."""

    stimuli: tuple[tuple[str, Path], ...]
    scanpath_files: tuple[Path, ...]
    embedding_dir: Path | None = None
    root: Path = field(default_factory=Path)

    def stimulus_path(self, stimulus_id: str) -> Path:
        for sid, p in self.stimuli:
            if sid == stimulus_id:
                return p
        raise MissingFile(f"stimulus {stimulus_id!r} not in manifest")

    def load_stimulus(self, stimulus_id: str) -> StimulusImage:
        return load_stimulus_image(stimulus_id, self.stimulus_path(stimulus_id))

    def load_all_scanpaths(self) -> list[Scanpath]:
        """All scanpaths from all files, sorted by (subject_id, stimulus_id)."""
        out = []
        for f in self.scanpath_files:
            out.extend(load_scanpaths(f))
        out.sort(key=lambda sp: (sp.subject_id, sp.stimulus_id))
        return out


def load_manifest(path: str | Path) -> DatasetManifest:
    """Load and validate a manifest JSON file.

    Validation loads every referenced scanpath file to enforce that each
    (subject, stimulus) pair appears exactly once across the dataset and
    that every referenced stimulus id has exactly one image entry.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFile(str(path))
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None
    if not isinstance(raw, dict) or "stimuli" not in raw or "scanpaths" not in raw:
        raise ParseError(f"{path}: manifest needs 'stimuli' and 'scanpaths' keys")
    root = path.parent

    stimuli = []
    seen_ids = set()
    for entry in raw["stimuli"]:
        if not isinstance(entry, dict) or "id" not in entry or "image" not in entry:
            raise ParseError(f"{path}: stimulus entries need 'id' and 'image'")
        sid = str(entry["id"])
        if sid in seen_ids:
            raise DuplicateKey(f"stimulus id {sid!r} listed twice")
        seen_ids.add(sid)
        img = root / entry["image"]
        if not img.is_file():
            raise MissingFile(str(img))
        stimuli.append((sid, img))

    files = []
    for rel in raw["scanpaths"]:
        f = root / rel
        if not f.is_file():
            raise MissingFile(str(f))
        files.append(f)

    embedding_dir = None
    if raw.get("embeddings"):
        embedding_dir = root / raw["embeddings"]
        if not embedding_dir.is_dir():
            raise MissingFile(str(embedding_dir))

    seen_pairs: dict[tuple[str, str], Path] = {}
    subject_groups: dict[str, Group] = {}
    for f in files:
        for sp in load_scanpaths(f):
            pair = (sp.subject_id, sp.stimulus_id)
            if pair in seen_pairs:
                raise DuplicateKey(
                    f"({sp.subject_id}, {sp.stimulus_id}) appears in both "
                    f"{seen_pairs[pair].name} and {f.name}"
                )
            seen_pairs[pair] = f
            if sp.stimulus_id not in seen_ids:
                raise MissingFile(
                    f"scanpath {sp.key} references unknown stimulus {sp.stimulus_id!r}"
                )
            prev = subject_groups.get(sp.subject_id)
            if prev is not None and prev is not sp.group:
                raise ParseError(f"subject {sp.subject_id!r} has conflicting group labels")
            subject_groups[sp.subject_id] = sp.group

    return DatasetManifest(
        stimuli=tuple(stimuli),
        scanpath_files=tuple(files),
        embedding_dir=embedding_dir,
        root=root,
    )
