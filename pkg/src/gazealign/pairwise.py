"""All-pairs similarity over a dataset and per-subject aggregation.

Parallel scheduling is deterministic by construction: the unordered pair
list is fixed (row-major over sorted keys), partitioned statically across
workers, and every result lands in a preassigned slot before a final
single-threaded mirroring pass. Matrices therefore come out bit-identical
for any worker count.

Matrix entries are stored as float32 so that the 9-significant-digit CSV
serialization round-trips exactly.
"""

from __future__ import annotations

import json
import multiprocessing
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .align import ScoringParams, local_align
from .embed import EmbeddedScanpath
from .errors import DuplicateKey, NoSharedStimuli, ParseError
from .model import Group, write_pgm


class MatrixLevel(Enum):
    SCANPATH = "scanpath"
    SUBJECT = "subject"


@dataclass(frozen=True)
class SimilarityMatrix:
    """Symmetric normalized-similarity matrix over scanpaths or subjects."""

    keys: tuple[str, ...]
    values: np.ndarray
    level: MatrixLevel
    c: float
    metric: str

    def __post_init__(self):
        n = len(self.keys)
        if self.values.shape != (n, n):
            raise ParseError(f"matrix shape {self.values.shape} for {n} keys")
        if self.values.dtype != np.float32:
            raise ParseError("matrix values must be float32")

    def index_of(self, key: str) -> int:
        return self.keys.index(key)


# worker state for fork-based pools, set in the parent before forking
_POOL_STATE: dict = {}


def _pair_scores(chunk: list[tuple[int, int]]) -> list[float]:
    scanpaths = _POOL_STATE["scanpaths"]
    params = _POOL_STATE["params"]
    out = []
    for i, j in chunk:
        try:
            out.append(local_align(scanpaths[i], scanpaths[j], params).normalized)
        except Exception as exc:
            raise type(exc)(
                f"aligning {scanpaths[i].key} vs {scanpaths[j].key}: {exc}"
            ) from None
    return out


def all_pairs(
    scanpaths: list[EmbeddedScanpath],
    params: ScoringParams,
    workers: int = 1,
) -> SimilarityMatrix:
    """Scanpath-level similarity matrix; every unordered pair aligned once.

    Keys are sorted subject@stimulus ids, the diagonal is c by the
    self-similarity identity, and alignment errors carry the pair's keys.
    """
    order = sorted(range(len(scanpaths)), key=lambda i: scanpaths[i].key)
    sps = [scanpaths[i] for i in order]
    keys = tuple(sp.key for sp in sps)
    if len(set(keys)) != len(keys):
        raise DuplicateKey("duplicate scanpath keys in all_pairs input")
    n = len(sps)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]

    global _POOL_STATE
    _POOL_STATE = {"scanpaths": sps, "params": params}
    try:
        if workers <= 1 or not pairs:
            flat = _pair_scores(pairs)
        else:
            chunks = [pairs[k::workers] for k in range(workers)]
            ctx = multiprocessing.get_context("fork")
            with ctx.Pool(processes=workers) as pool:
                results = pool.map(_pair_scores, chunks)
            flat = [0.0] * len(pairs)
            for k, chunk in enumerate(chunks):
                for slot, (i, j) in enumerate(chunk):
                    flat[_pair_slot(i, j, n)] = results[k][slot]
    finally:
        _POOL_STATE = {}

    values = np.zeros((n, n), dtype=np.float64)
    for (i, j), score in zip(pairs, flat):
        values[i, j] = score
        values[j, i] = score
    np.fill_diagonal(values, params.c)
    return SimilarityMatrix(
        keys=keys,
        values=values.astype(np.float32),
        level=MatrixLevel.SCANPATH,
        c=params.c,
        metric=params.metric.value,
    )


def _pair_slot(i: int, j: int, n: int) -> int:
    # row-major position of unordered pair (i, j), i < j, in the pair list
    return i * n - i * (i + 1) // 2 + (j - i - 1)


def split_key(key: str) -> tuple[str, str]:
    subject, sep, stimulus = key.rpartition("@")
    if not sep or not subject:
        raise ParseError(f"scanpath key {key!r} is not subject@stimulus")
    return subject, stimulus


def aggregate_by_subject(m: SimilarityMatrix) -> SimilarityMatrix:
    """Average same-stimulus similarities into one entry per subject pair.

    Only stimuli both subjects viewed contribute; cross-stimulus scanpath
    pairs never enter the mean. The diagonal is c by definition (a subject's
    per-image self-similarities are each c).
    """
    if m.level is not MatrixLevel.SCANPATH:
        raise ParseError("aggregate_by_subject needs a scanpath-level matrix")
    by_subject: dict[str, dict[str, int]] = {}
    for idx, key in enumerate(m.keys):
        subject, stimulus = split_key(key)
        by_subject.setdefault(subject, {})[stimulus] = idx
    subjects = sorted(by_subject)
    n = len(subjects)
    values = np.zeros((n, n), dtype=np.float64)
    for p in range(n):
        values[p, p] = m.c
        stim_p = by_subject[subjects[p]]
        for q in range(p + 1, n):
            stim_q = by_subject[subjects[q]]
            shared = sorted(set(stim_p) & set(stim_q))
            if not shared:
                raise NoSharedStimuli(
                    f"subjects {subjects[p]!r} and {subjects[q]!r} share no stimulus"
                )
            total = 0.0
            for s in shared:
                total += float(m.values[stim_p[s], stim_q[s]])
            mean = total / len(shared)
            values[p, q] = mean
            values[q, p] = mean
    return SimilarityMatrix(
        keys=tuple(subjects),
        values=values.astype(np.float32),
        level=MatrixLevel.SUBJECT,
        c=m.c,
        metric=m.metric,
    )


# ---------------------------------------------------------------------------
# Export / import


def export_matrix(
    m: SimilarityMatrix,
    csv_path: str | Path,
    heatmap_path: str | Path | None = None,
) -> None:
    """Write the matrix as CSV (keys as header row/column) plus sidecar JSON.

    The optional PGM heatmap maps off-diagonal values linearly to [0, 255]
    and renders diagonal cells at the off-diagonal maximum; this rescale is
    display-only, the CSV always carries true values.
    """
    csv_path = Path(csv_path)
    lines = ["key," + ",".join(m.keys)]
    for i, key in enumerate(m.keys):
        cells = ",".join(format(float(v), ".9g") for v in m.values[i])
        lines.append(f"{key},{cells}")
    csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    sidecar = {
        "level": m.level.value,
        "c": float(m.c),
        "metric": m.metric,
        "keys": list(m.keys),
    }
    csv_path.with_suffix(".json").write_text(
        json.dumps(sidecar, indent=2) + "\n", encoding="utf-8"
    )
    if heatmap_path is not None:
        write_pgm(Path(heatmap_path), heatmap_pixels(m))


def heatmap_pixels(m: SimilarityMatrix) -> np.ndarray:
    """Display-rescaled uint8 rendering of the matrix."""
    n = len(m.keys)
    vals = m.values.astype(np.float64)
    off = ~np.eye(n, dtype=bool)
    if off.any():
        lo = float(vals[off].min())
        hi = float(vals[off].max())
    else:
        lo = hi = float(m.c)
    span = hi - lo
    if span <= 0:
        gray = np.full((n, n), 128, dtype=np.uint8)
        return gray
    pix = np.clip((vals - lo) / span, 0.0, 1.0)
    pix[np.eye(n, dtype=bool)] = 1.0  # diagonal at the off-diagonal maximum
    return np.round(pix * 255.0).astype(np.uint8)


def load_matrix_csv(csv_path: str | Path) -> SimilarityMatrix:
    """Reload an exported matrix CSV together with its JSON sidecar."""
    csv_path = Path(csv_path)
    sidecar_path = csv_path.with_suffix(".json")
    if not sidecar_path.is_file():
        raise ParseError(f"{csv_path}: missing sidecar {sidecar_path.name}")
    sidecar = json.loads(sidecar_path.read_text(encoding="utf-8"))
    text = csv_path.read_text(encoding="utf-8").strip().splitlines()
    header = text[0].split(",")
    if header[0] != "key":
        raise ParseError(f"{csv_path}: expected 'key' header cell")
    keys = tuple(header[1:])
    if list(keys) != list(sidecar["keys"]):
        raise ParseError(f"{csv_path}: sidecar keys disagree with CSV header")
    n = len(keys)
    values = np.zeros((n, n), dtype=np.float32)
    if len(text) != n + 1:
        raise ParseError(f"{csv_path}: expected {n} data rows")
    for i, line in enumerate(text[1:]):
        cells = line.split(",")
        if cells[0] != keys[i]:
            raise ParseError(f"{csv_path}: row {i} key {cells[0]!r} != {keys[i]!r}")
        values[i] = [np.float32(v) for v in cells[1:]]
    return SimilarityMatrix(
        keys=keys,
        values=values,
        level=MatrixLevel(sidecar["level"]),
        c=float(sidecar["c"]),
        metric=str(sidecar["metric"]),
    )


def subject_groups(scanpaths: list[EmbeddedScanpath]) -> dict[str, Group]:
    """Subject id -> group map, validating consistency."""
    out: dict[str, Group] = {}
    for sp in scanpaths:
        prev = out.get(sp.subject_id)
        if prev is not None and prev is not sp.group:
            raise ParseError(f"subject {sp.subject_id!r} has conflicting group labels")
        out[sp.subject_id] = sp.group
    return out
