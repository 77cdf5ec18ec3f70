"""Per-fixation feature vectors: the symbols consumed by the aligner.

Two providers exist behind one contract (deterministic patch -> vector):

  * BuiltinDescriptorProvider: a 384-dim handcrafted descriptor
    (16x16 block-mean intensities + 8-bin gradient-orientation histograms
    on a 4x4 cell grid) that keeps the whole pipeline testable without any
    deep-learning runtime;
  * PrecomputedProvider: reads .dsem interchange files produced offline
    (the reference exporter emits 25,088-dim deep features).

.dsem layout, little-endian: magic 'DSEM', u32 version=1, u32 D,
u32 n, then n rows x D float32 values, row i = embedding of fixation i.
Filename convention: <subject_id>_<stimulus_id>.dsem.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadPatchSize,
    CorruptFile,
    HeaderMismatch,
    MissingEmbedding,
    MixedDim,
)
from .model import DatasetManifest, Group, Scanpath
from .patch import Patch, PatchConfig, extract_scanpath_patches

BUILTIN_DIM = 384
_BLOCK_GRID = 16
_CELL_GRID = 4
_N_BINS = 8

DSEM_MAGIC = b"DSEM"
DSEM_VERSION = 1


@dataclass(frozen=True)
class EmbeddedScanpath:
    """A scanpath as an (n, dim) float32 matrix of fixation features."""

    subject_id: str
    group: Group
    stimulus_id: str
    vectors: np.ndarray

    def __post_init__(self):
        if self.vectors.ndim != 2:
            raise CorruptFile(f"{self.key}: vectors must be 2-D")
        if self.vectors.dtype != np.float32:
            raise CorruptFile(f"{self.key}: vectors must be float32")
        if not np.isfinite(self.vectors).all():
            raise CorruptFile(f"{self.key}: non-finite feature values")

    @property
    def key(self) -> str:
        return f"{self.subject_id}@{self.stimulus_id}"

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return self.vectors.shape[0]


def _grid_bounds(extent: int, cells: int) -> np.ndarray:
    # integer partition: cell k covers [floor(k*extent/cells), floor((k+1)*extent/cells))
    return np.array([(k * extent) // cells for k in range(cells + 1)], dtype=np.intp)


def builtin_embed(p: Patch) -> np.ndarray:
    """384-dim descriptor of one grayscale patch, all components in [0, 255].

    First 256 components: mean intensity of each block in a 16x16 grid.
    Last 128: per-cell gradient-orientation histograms on a 4x4 grid, 8
    unsigned-orientation bins over [0, 180) degrees, magnitude weighted,
    each cell scaled so its bins sum to 255 (zero-gradient cells stay zero).
    Gradients are central differences inside the patch and one-sided at the
    edges (numpy.gradient convention).
    """
    px = p.pixels
    if px.ndim != 2 or px.shape[0] != px.shape[1]:
        raise BadPatchSize(f"patch must be square, got {px.shape}")
    side = px.shape[0]
    if side < _BLOCK_GRID:
        raise BadPatchSize(f"patch side {side} smaller than the {_BLOCK_GRID}-block grid")

    # block means via exact integer sums
    b = _grid_bounds(side, _BLOCK_GRID)
    counts = np.diff(b)
    row_sums = np.add.reduceat(px.astype(np.int64), b[:-1], axis=0)
    block_sums = np.add.reduceat(row_sums, b[:-1], axis=1)
    means = block_sums / (counts[:, None] * counts[None, :])

    # unsigned gradient-orientation histograms
    gy, gx = np.gradient(px.astype(np.float64))
    mag = np.hypot(gx, gy)
    theta = np.mod(np.arctan2(gy, gx), np.pi)
    bin_width = np.pi / _N_BINS
    bins = np.minimum((theta // bin_width).astype(np.intp), _N_BINS - 1)

    c = _grid_bounds(side, _CELL_GRID)
    hists = np.zeros((_CELL_GRID, _CELL_GRID, _N_BINS), dtype=np.float64)
    for cy in range(_CELL_GRID):
        for cx in range(_CELL_GRID):
            sl = (slice(c[cy], c[cy + 1]), slice(c[cx], c[cx + 1]))
            # bincount accumulates in raster order, matching a scalar loop;
            # fsum keeps the cell total independent of reduction order
            h = np.bincount(bins[sl].ravel(), weights=mag[sl].ravel(), minlength=_N_BINS)
            total = math.fsum(h)
            if total > 0:
                h = h * 255.0 / total
            hists[cy, cx] = h

    return np.concatenate([means.ravel(), hists.ravel()]).astype(np.float32)


class BuiltinDescriptorProvider:
    """Deterministic handcrafted descriptor, no external dependencies."""

    name = "builtin"
    dim = BUILTIN_DIM

    def embed_patch(self, p: Patch) -> np.ndarray:
        return builtin_embed(p)


# ---------------------------------------------------------------------------
# .dsem interchange files


def dsem_filename(subject_id: str, stimulus_id: str) -> str:
    return f"{subject_id}_{stimulus_id}.dsem"


def write_dsem(path: str | Path, vectors: np.ndarray) -> None:
    """Write an (n, D) float32 matrix in .dsem layout."""
    arr = np.ascontiguousarray(vectors, dtype=np.float32)
    n, dim = arr.shape
    with open(path, "wb") as fh:
        fh.write(DSEM_MAGIC)
        fh.write(struct.pack("<III", DSEM_VERSION, dim, n))
        fh.write(arr.astype("<f4").tobytes())


def read_dsem(path: str | Path) -> np.ndarray:
    """Read a .dsem file, validating magic, version, and body size."""
    path = Path(path)
    data = path.read_bytes()
    if len(data) < 16:
        raise CorruptFile(f"{path}: shorter than the 16-byte header")
    if data[:4] != DSEM_MAGIC:
        raise CorruptFile(f"{path}: bad magic {data[:4]!r}")
    version, dim, n = struct.unpack("<III", data[4:16])
    if version != DSEM_VERSION:
        raise CorruptFile(f"{path}: unsupported version {version}")
    expected = 16 + 4 * dim * n
    if len(data) != expected:
        raise CorruptFile(f"{path}: {len(data)} bytes, expected {expected}")
    vectors = np.frombuffer(data[16:], dtype="<f4").reshape(n, dim)
    if not np.isfinite(vectors).all():
        raise CorruptFile(f"{path}: non-finite feature values")
    return np.ascontiguousarray(vectors)


def load_embeddings(dir_path: str | Path, sp: Scanpath) -> EmbeddedScanpath:
    """Load the precomputed embedding for one scanpath from a directory."""
    path = Path(dir_path) / dsem_filename(sp.subject_id, sp.stimulus_id)
    if not path.is_file():
        raise MissingEmbedding(str(path))
    vectors = read_dsem(path)
    if vectors.shape[0] != len(sp):
        raise HeaderMismatch(
            f"{path}: {vectors.shape[0]} rows for {len(sp)} fixations"
        )
    return EmbeddedScanpath(
        subject_id=sp.subject_id,
        group=sp.group,
        stimulus_id=sp.stimulus_id,
        vectors=vectors,
    )


class PrecomputedProvider:
    """Serves embeddings from .dsem files; dim is read from the files."""

    name = "dsem"

    def __init__(self, dir_path: str | Path):
        self.dir = Path(dir_path)

    def embed_scanpath(self, sp: Scanpath) -> EmbeddedScanpath:
        return load_embeddings(self.dir, sp)


# ---------------------------------------------------------------------------
# Dataset embedding


def embed_scanpath(img, sp: Scanpath, provider, cfg: PatchConfig) -> EmbeddedScanpath:
    """Embed one scanpath with a per-patch provider."""
    patches = extract_scanpath_patches(img, sp, cfg)
    vectors = np.stack([provider.embed_patch(p) for p in patches]).astype(np.float32)
    return EmbeddedScanpath(
        subject_id=sp.subject_id,
        group=sp.group,
        stimulus_id=sp.stimulus_id,
        vectors=vectors,
    )


def embed_dataset(
    manifest: DatasetManifest,
    provider,
    cfg: PatchConfig | None = None,
    window_ms: float | None = None,
) -> list[EmbeddedScanpath]:
    """One EmbeddedScanpath per dataset scanpath, all sharing one dim.

    Stimulus images are loaded once each. With a PrecomputedProvider only
    the .dsem files are touched. Output order follows the manifest's sorted
    (subject_id, stimulus_id) order.
    """
    from .model import truncate_to_window

    cfg = cfg or PatchConfig()
    scanpaths = manifest.load_all_scanpaths()
    if window_ms is not None:
        scanpaths = [truncate_to_window(sp, window_ms) for sp in scanpaths]
    out: list[EmbeddedScanpath] = []
    if hasattr(provider, "embed_scanpath"):
        for sp in scanpaths:
            out.append(provider.embed_scanpath(sp))
    else:
        images = {}
        for sp in scanpaths:
            if sp.stimulus_id not in images:
                images[sp.stimulus_id] = manifest.load_stimulus(sp.stimulus_id)
            out.append(embed_scanpath(images[sp.stimulus_id], sp, provider, cfg))
    dims = {e.dim for e in out}
    if len(dims) > 1:
        raise MixedDim(f"dataset mixes embedding dimensions {sorted(dims)}")
    return out
