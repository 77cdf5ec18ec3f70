"""Minimal readers for the analysis pipeline's file formats.

This tool talks to the scanpath engine purely through its on-disk
interfaces (manifest JSON, scanpath CSV, PGM/PNG stimuli, .dsem output),
so the formats are parsed here independently.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class DatasetError(Exception):
    pass


@dataclass(frozen=True)
class FixationRow:
    index: int
    x: float
    y: float


@dataclass(frozen=True)
class ScanpathRows:
    subject_id: str
    stimulus_id: str
    fixations: tuple[FixationRow, ...]


@dataclass(frozen=True)
class Manifest:
    stimuli: tuple[tuple[str, Path], ...]
    scanpath_files: tuple[Path, ...]
    root: Path


def load_manifest(path: str | Path) -> Manifest:
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"manifest not found: {path}")
    raw = json.loads(path.read_text(encoding="utf-8"))
    root = path.parent
    stimuli = []
    for entry in raw["stimuli"]:
        img = root / entry["image"]
        if not img.is_file():
            raise DatasetError(f"stimulus image not found: {img}")
        stimuli.append((str(entry["id"]), img))
    files = []
    for rel in raw["scanpaths"]:
        f = root / rel
        if not f.is_file():
            raise DatasetError(f"scanpath file not found: {f}")
        files.append(f)
    return Manifest(stimuli=tuple(stimuli), scanpath_files=tuple(files), root=root)


def load_scanpaths(path: Path) -> list[ScanpathRows]:
    grouped: dict[tuple[str, str], list[FixationRow]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        cols = {name: i for i, name in enumerate(h.strip() for h in header)}
        for name in ("subject_id", "stimulus_id", "index", "x", "y"):
            if name not in cols:
                raise DatasetError(f"{path}: missing column {name!r}")
        for row in reader:
            if not row:
                continue
            key = (row[cols["subject_id"]], row[cols["stimulus_id"]])
            grouped.setdefault(key, []).append(
                FixationRow(
                    index=int(row[cols["index"]]),
                    x=float(row[cols["x"]]),
                    y=float(row[cols["y"]]),
                )
            )
    out = []
    for (subject, stimulus), rows in sorted(grouped.items()):
        rows.sort(key=lambda r: r.index)
        if [r.index for r in rows] != list(range(len(rows))):
            raise DatasetError(f"{path}: {subject}@{stimulus} indices not consecutive")
        out.append(ScanpathRows(subject_id=subject, stimulus_id=stimulus,
                                fixations=tuple(rows)))
    return out


def load_gray_image(path: Path) -> np.ndarray:
    data = path.read_bytes()
    if data[:2] == b"P5":
        return _parse_pgm(data, str(path))
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.uint8)


def _parse_pgm(data: bytes, name: str) -> np.ndarray:
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
            raise DatasetError(f"{name}: malformed PGM header")
        tokens.append(int(m.group()))
        pos += m.end()
    pos += 1
    width, height, maxval = tokens
    if maxval != 255:
        raise DatasetError(f"{name}: only maxval 255 PGM supported")
    body = data[pos : pos + width * height]
    if len(body) != width * height:
        raise DatasetError(f"{name}: truncated PGM body")
    return np.frombuffer(body, dtype=np.uint8).reshape(height, width)
