"""Feature-distance local alignment of embedded scanpaths.

The scoring matrix M has shape (n+1) x (m+1) for scanpaths A (n fixations,
rows) and B (m fixations, columns), first row and column zero, and

    M[i][j] = max(M[i-1][j-1] + c - dist(A[i-1], B[j-1]),
                  M[i-1][j]   - gap,
                  M[i][j-1]   - gap,
                  0)

The raw similarity is max(M); the normalized similarity divides by the
shorter scanpath's fixation count. Patch distances are precomputed as an
n x m matrix before the recurrence, so each DP cell is O(1) and the matrix
can be reused across parameter sweeps.

Step-label convention (the direction names are ambiguous in common usage,
so this package fixes one): GapInA(b) skips over B[b] while A waits, i.e.
a gap is inserted into A; GapInB(a) skips over A[a]. Backtrace ties break
Match > GapInB > GapInA, the argmax tie breaks at the smallest (i, j) in
row-major order, and the trace stops at the first zero cell.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DimMismatch, EmptyScanpath, TooFewScanpaths, ZeroVector
from .embed import EmbeddedScanpath


class Metric(Enum):
    L1 = "l1"
    L2 = "l2"
    COSINE = "cosine"


_CDIST_NAME = {Metric.L1: "cityblock", Metric.L2: "euclidean", Metric.COSINE: "cosine"}


@dataclass(frozen=True)
class ScoringParams:
    """Match constant c, gap penalty, and the patch-distance metric."""

    c: float
    gap: float
    metric: Metric = Metric.L1

    def __post_init__(self):
        if self.c < 0:
            raise ValueError("c must be >= 0")
        if self.gap < 0:
            raise ValueError("gap must be >= 0")


@dataclass(frozen=True)
class MatchStep:
    a: int
    b: int


@dataclass(frozen=True)
class GapInA:
    b: int


@dataclass(frozen=True)
class GapInB:
    a: int


Step = MatchStep | GapInA | GapInB


@dataclass(frozen=True)
class ScoreMatrix:
    values: np.ndarray
    argmax_cell: tuple[int, int]


@dataclass(frozen=True)
class AlignmentResult:
    score: float
    normalized: float
    argmax_cell: tuple[int, int]
    path: tuple[Step, ...]
    matrix: ScoreMatrix | None = field(default=None, compare=False)


def distance_matrix(u: np.ndarray, v: np.ndarray, metric: Metric) -> np.ndarray:
    """All pairwise feature distances between two vector stacks.

    Accumulation is 64-bit and sequential over components (scipy cdist),
    so results are identical for any worker count and batch shape.
    """
    u = np.atleast_2d(np.asarray(u))
    v = np.atleast_2d(np.asarray(v))
    if u.shape[1] != v.shape[1]:
        raise DimMismatch(f"dim {u.shape[1]} vs {v.shape[1]}")
    if metric is Metric.COSINE:
        # cdist would emit NaNs for zero vectors; fail loudly instead
        if not (u.astype(np.float64) ** 2).sum(axis=1).all() or not (
            (v.astype(np.float64) ** 2).sum(axis=1).all()
        ):
            raise ZeroVector("cosine distance undefined for all-zero vectors")
    return cdist(u, v, _CDIST_NAME[metric])


def feature_distance(u: np.ndarray, v: np.ndarray, metric: Metric = Metric.L1) -> float:
    """Distance between two feature vectors under the chosen metric."""
    u = np.asarray(u)
    v = np.asarray(v)
    if u.ndim != 1 or v.ndim != 1:
        raise DimMismatch("feature_distance expects 1-D vectors")
    return float(distance_matrix(u[None, :], v[None, :], metric)[0, 0])


_MOVE_STOP, _MOVE_MATCH, _MOVE_GAP_B, _MOVE_GAP_A = 0, 1, 2, 3


def align_from_distances(
    dist: np.ndarray,
    c: float,
    gap: float,
    keep_matrix: bool = False,
) -> AlignmentResult:
    """Run the recurrence over a precomputed n x m distance matrix."""
    n, m = dist.shape
    if n == 0 or m == 0:
        raise EmptyScanpath("alignment needs non-empty scanpaths")
    # plain-list DP: row-major fill, float64 throughout
    d = dist.astype(np.float64, copy=False).tolist()
    prev = [0.0] * (m + 1)
    rows = [prev]
    moves = [bytearray(m + 1) for _ in range(n + 1)]
    best = 0.0
    best_cell = (0, 0)
    for i in range(1, n + 1):
        di = d[i - 1]
        cur = [0.0] * (m + 1)
        mv = moves[i]
        for j in range(1, m + 1):
            match = prev[j - 1] + (c - di[j - 1])
            skip_a = prev[j] - gap  # vertical: A[i-1] unmatched, gap in B
            skip_b = cur[j - 1] - gap  # horizontal: B[j-1] unmatched, gap in A
            if match >= skip_a and match >= skip_b and match > 0.0:
                cur[j] = match
                mv[j] = _MOVE_MATCH
            elif skip_a >= skip_b and skip_a > 0.0:
                cur[j] = skip_a
                mv[j] = _MOVE_GAP_B
            elif skip_b > 0.0:
                cur[j] = skip_b
                mv[j] = _MOVE_GAP_A
            if cur[j] > best:
                best = cur[j]
                best_cell = (i, j)
        rows.append(cur)
        prev = cur

    path: list[Step] = []
    i, j = best_cell
    while rows[i][j] > 0.0:
        move = moves[i][j]
        if move == _MOVE_MATCH:
            path.append(MatchStep(a=i - 1, b=j - 1))
            i -= 1
            j -= 1
        elif move == _MOVE_GAP_B:
            path.append(GapInB(a=i - 1))
            i -= 1
        else:
            path.append(GapInA(b=j - 1))
            j -= 1
    path.reverse()

    matrix = None
    if keep_matrix:
        matrix = ScoreMatrix(values=np.array(rows, dtype=np.float64), argmax_cell=best_cell)
    return AlignmentResult(
        score=best,
        normalized=best / min(n, m),
        argmax_cell=best_cell,
        path=tuple(path),
        matrix=matrix,
    )


def local_align(
    a: EmbeddedScanpath,
    b: EmbeddedScanpath,
    params: ScoringParams,
    keep_matrix: bool = False,
) -> AlignmentResult:
    """Best local alignment of two embedded scanpaths."""
    if len(a) == 0 or len(b) == 0:
        raise EmptyScanpath("alignment needs non-empty scanpaths")
    if a.dim != b.dim:
        raise DimMismatch(f"{a.key} dim {a.dim} vs {b.key} dim {b.dim}")
    dist = distance_matrix(a.vectors, b.vectors, params.metric)
    return align_from_distances(dist, params.c, params.gap, keep_matrix=keep_matrix)


def replay_path(path: tuple[Step, ...], dist: np.ndarray, c: float, gap: float) -> float:
    """Re-accumulate a backtraced path's score; must reproduce the raw score."""
    score = 0.0
    for step in path:
        if isinstance(step, MatchStep):
            score += c - dist[step.a, step.b]
        else:
            score -= gap
    return score


def calibrate_c(
    scanpaths: list[EmbeddedScanpath], metric: Metric = Metric.L1
) -> float:
    """Mean feature distance across all cross-scanpath fixation pairs.

    All scanpaths must share one stimulus; every unordered scanpath pair
    contributes every (fixation of one, fixation of the other) distance to
    one flat mean. Same-scanpath pairs never enter.
    """
    if len(scanpaths) < 2:
        raise TooFewScanpaths("calibration needs at least two scanpaths")
    stimulus_ids = {sp.stimulus_id for sp in scanpaths}
    if len(stimulus_ids) > 1:
        raise TooFewScanpaths(
            f"calibration scanpaths span several stimuli: {sorted(stimulus_ids)}"
        )
    total = 0.0
    count = 0
    ordered = sorted(scanpaths, key=lambda sp: sp.key)
    for idx, p in enumerate(ordered):
        for q in ordered[idx + 1 :]:
            dist = distance_matrix(p.vectors, q.vectors, metric)
            total += float(dist.sum(dtype=np.float64))
            count += dist.size
    return total / count


def default_gap(c: float) -> float:
    """Default gap penalty: twice the match constant."""
    if c < 0:
        raise ValueError("c must be >= 0")
    return 2.0 * c


# ---------------------------------------------------------------------------
# Symbolic baseline on hand-labeled AOI sequences

SYMBOLIC_MATCH = 1.0
SYMBOLIC_MISMATCH = -1.0
SYMBOLIC_GAP = 2.0


def symbolic_align(
    a: tuple[str, ...] | list[str],
    b: tuple[str, ...] | list[str],
    keep_matrix: bool = False,
) -> AlignmentResult:
    """Classic local alignment of AOI label sequences: +1 / -1 / -2.

    Implemented through the same recurrence by expressing the +1/-1 match
    score as c - dist with c = 1 and dist 0 (same label) or 2 (different).
    """
    if len(a) == 0 or len(b) == 0:
        raise EmptyScanpath("alignment needs non-empty label sequences")
    dist = np.fromiter(
        (0.0 if x == y else 2.0 for x in a for y in b),
        dtype=np.float64,
        count=len(a) * len(b),
    ).reshape(len(a), len(b))
    return align_from_distances(
        dist, c=SYMBOLIC_MATCH, gap=SYMBOLIC_GAP, keep_matrix=keep_matrix
    )
