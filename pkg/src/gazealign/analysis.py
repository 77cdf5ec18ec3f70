"""Expertise analysis on similarity matrices.

Covers: similarity-to-distance inversion, Ward agglomerative clustering
with a two-cluster expertise readout, leave-one-subject-and-one-image-out
k-nearest-neighbor classification with Cohen's kappa, and archetype
ranking by reverse top-n membership.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadMatrix,
    DegenerateClustering,
    DegenerateMarginals,
    ParseError,
    TooFewCandidates,
)
from .model import Group
from .pairwise import MatrixLevel, SimilarityMatrix, split_key


class MonotonicityWarning(UserWarning):
    """Ward merge heights decreased; the input distances are not Euclidean."""


@dataclass(frozen=True)
class Merge:
    cluster_a: int
    cluster_b: int
    distance: float
    size: int


@dataclass(frozen=True)
class Dendrogram:
    """Agglomerative merge list; node ids are leaves 0..n-1, merges n+step."""

    merges: tuple[Merge, ...]
    leaf_keys: tuple[str, ...]

    def linkage_array(self) -> np.ndarray:
        """(n-1) x 4 array [id_a, id_b, height, size], scipy node numbering."""
        return np.array(
            [[m.cluster_a, m.cluster_b, m.distance, m.size] for m in self.merges],
            dtype=np.float64,
        )


@dataclass(frozen=True)
class ClusterReport:
    assignments: dict[str, int]
    confusion: np.ndarray  # rows true (student, expert), cols label (student, expert)
    tpr_student: float
    tpr_expert: float
    accuracy: float


@dataclass(frozen=True)
class StimulusScore:
    tpr_expert: float
    tpr_student: float
    accuracy: float
    kappa: float | None


@dataclass(frozen=True)
class ClassificationReport:
    tpr_expert: float
    tpr_student: float
    accuracy: float
    kappa: float
    confusion: np.ndarray
    per_stimulus: dict[str, StimulusScore]
    predictions: dict[str, str]
    neighbors: dict[str, tuple[str, ...]]


def similarity_to_distance(m: SimilarityMatrix) -> np.ndarray:
    """Invert similarities to distances: d = c - s, zero diagonal."""
    d = np.asarray(m.c, dtype=np.float64) - m.values.astype(np.float64)
    np.fill_diagonal(d, 0.0)
    return d


def ward_cluster(
    d: np.ndarray, keys: list[str] | tuple[str, ...], k: int
) -> tuple[Dendrogram, dict[str, int]]:
    """Agglomerate with Ward linkage; cut the last k-1 merges for k clusters.

    The Lance-Williams recurrence runs on squared distances with Ward
    coefficients; reported merge heights are square roots of the updated
    values. Merge ties break at the lexicographically smallest pair of
    cluster keys (a cluster's key is its smallest member key). Non-monotone
    merge heights are reported as a MonotonicityWarning, never reordered.
    """
    d = np.asarray(d, dtype=np.float64)
    n = d.shape[0]
    if d.shape != (n, n) or n != len(keys):
        raise BadMatrix(f"distance matrix shape {d.shape} for {len(keys)} keys")
    if (d < 0).any():
        raise BadMatrix("negative distances")
    if not np.array_equal(d, d.T):
        raise BadMatrix("asymmetric distance matrix")
    if np.diagonal(d).any():
        raise BadMatrix("nonzero diagonal")
    if not 1 <= k <= n:
        raise BadMatrix(f"cannot cut {n} leaves into {k} clusters")

    sq = d.astype(np.float64) ** 2
    active: dict[int, dict] = {
        i: {"node": i, "size": 1, "min_key": keys[i]} for i in range(n)
    }
    merges: list[Merge] = []
    next_node = n
    prev_height = None
    for step in range(n - 1):
        ids = sorted(active, key=lambda i: active[i]["min_key"])
        best = None
        for ai in range(len(ids)):
            for bi in range(ai + 1, len(ids)):
                a, b = ids[ai], ids[bi]
                cand = (sq[a, b], active[a]["min_key"], active[b]["min_key"])
                if best is None or cand < best[0]:
                    best = (cand, a, b)
        _, a, b = best
        height = float(np.sqrt(sq[a, b]))
        if prev_height is not None and height < prev_height:
            warnings.warn(
                f"merge height decreased at step {step} "
                f"({height:.6g} < {prev_height:.6g})",
                MonotonicityWarning,
                stacklevel=2,
            )
        prev_height = height
        na, nb = active[a]["size"], active[b]["size"]
        node_a, node_b = active[a]["node"], active[b]["node"]
        merges.append(
            Merge(cluster_a=node_a, cluster_b=node_b, distance=height, size=na + nb)
        )
        sab = sq[a, b]
        for x in active:
            if x in (a, b):
                continue
            nx = active[x]["size"]
            tot = na + nb + nx
            new = ((na + nx) / tot) * sq[a, x] + ((nb + nx) / tot) * sq[b, x] - (nx / tot) * sab
            sq[a, x] = new
            sq[x, a] = new
        active[a] = {
            "node": next_node,
            "size": na + nb,
            "min_key": min(active[a]["min_key"], active[b]["min_key"]),
        }
        next_node += 1
        del active[b]

    dendrogram = Dendrogram(merges=tuple(merges), leaf_keys=tuple(keys))
    assignments = cut_assignments(dendrogram, k)
    return dendrogram, assignments


def cut_assignments(dendrogram: Dendrogram, k: int) -> dict[str, int]:
    """Cluster index per leaf key after undoing the last k-1 merges.

    Clusters are numbered 0..k-1 in order of their smallest member key.
    """
    keys = dendrogram.leaf_keys
    n = len(keys)
    if not 1 <= k <= n:
        raise BadMatrix(f"cannot cut {n} leaves into {k} clusters")
    members = {i: [i] for i in range(n)}
    for step, m in enumerate(dendrogram.merges[: n - k]):
        members[n + step] = members.pop(m.cluster_a) + members.pop(m.cluster_b)
    clusters = sorted(
        members.values(), key=lambda leaves: min(keys[i] for i in leaves)
    )
    out: dict[str, int] = {}
    for idx, leaves in enumerate(clusters):
        for i in leaves:
            out[keys[i]] = idx
    return out


def cluster_expertise_report(
    assignments: dict[str, int], groups: dict[str, Group]
) -> ClusterReport:
    """Label each of two clusters by its majority true group and score it.

    A tied cluster takes Expert if it contains the lexicographically
    smallest key, else Student. TPRs divide each group's correctly placed
    members by the group's size; accuracy is overall.
    """
    ids = sorted(set(assignments.values()))
    if len(ids) != 2:
        raise DegenerateClustering(f"expected 2 clusters, got {len(ids)}")
    for key in assignments:
        if groups.get(key) not in (Group.EXPERT, Group.STUDENT):
            raise ParseError(f"entity {key!r} lacks a known group")

    counts = {
        cid: {Group.STUDENT: 0, Group.EXPERT: 0} for cid in ids
    }
    for key, cid in assignments.items():
        counts[cid][groups[key]] += 1
    smallest_key = min(assignments)
    labels: dict[int, Group] = {}
    for cid in ids:
        s, e = counts[cid][Group.STUDENT], counts[cid][Group.EXPERT]
        if e > s:
            labels[cid] = Group.EXPERT
        elif s > e:
            labels[cid] = Group.STUDENT
        else:
            labels[cid] = (
                Group.EXPERT if assignments[smallest_key] == cid else Group.STUDENT
            )

    order = (Group.STUDENT, Group.EXPERT)
    confusion = np.zeros((2, 2), dtype=np.int64)
    for key, cid in assignments.items():
        confusion[order.index(groups[key]), order.index(labels[cid])] += 1
    n_student = confusion[0].sum()
    n_expert = confusion[1].sum()
    total = confusion.sum()
    return ClusterReport(
        assignments=dict(sorted(assignments.items())),
        confusion=confusion,
        tpr_student=float(confusion[0, 0] / n_student) if n_student else 0.0,
        tpr_expert=float(confusion[1, 1] / n_expert) if n_expert else 0.0,
        accuracy=float((confusion[0, 0] + confusion[1, 1]) / total),
    )


def cohen_kappa(confusion: np.ndarray) -> float:
    """Chance-corrected agreement of a square confusion matrix."""
    m = np.asarray(confusion, dtype=np.float64)
    total = m.sum()
    if total <= 0:
        raise DegenerateMarginals("empty confusion matrix")
    p_o = np.trace(m) / total
    p_e = float((m.sum(axis=1) * m.sum(axis=0)).sum()) / (total * total)
    if p_e >= 1.0:
        raise DegenerateMarginals("expected agreement is 1, kappa undefined")
    return float((p_o - p_e) / (1.0 - p_e))


def knn_loo_classify(
    m: SimilarityMatrix, groups: dict[str, Group], k: int = 3
) -> ClassificationReport:
    """Leave-one-subject-and-one-image-out k-NN over alignment similarity.

    A held-out scanpath subject@stimulus may only draw neighbors from
    scanpaths sharing neither its subject nor its stimulus. Votes are
    unweighted; similarity ties break at the smaller key. Per-stimulus
    kappa is None when a stimulus' confusion table has degenerate
    marginals; the overall table must be non-degenerate.
    """
    if m.level is not MatrixLevel.SCANPATH:
        raise ParseError("knn_loo_classify needs a scanpath-level matrix")
    if k < 1 or k % 2 == 0:
        raise ParseError("k must be odd and positive")
    parsed = [split_key(key) for key in m.keys]
    for key in m.keys:
        subject = split_key(key)[0]
        if groups.get(subject) not in (Group.EXPERT, Group.STUDENT):
            raise ParseError(f"subject {subject!r} lacks a known group")

    order = (Group.STUDENT, Group.EXPERT)
    confusion = np.zeros((2, 2), dtype=np.int64)
    by_stimulus: dict[str, np.ndarray] = {}
    predictions: dict[str, str] = {}
    neighbor_map: dict[str, tuple[str, ...]] = {}
    for idx, key in enumerate(m.keys):
        subject, stimulus = parsed[idx]
        candidates = [
            j
            for j in range(len(m.keys))
            if parsed[j][0] != subject and parsed[j][1] != stimulus
        ]
        if len(candidates) < k:
            raise TooFewCandidates(
                f"{key}: {len(candidates)} candidates for k={k}"
            )
        candidates.sort(key=lambda j: (-float(m.values[idx, j]), m.keys[j]))
        chosen = candidates[:k]
        votes = [groups[parsed[j][0]] for j in chosen]
        predicted = max(order, key=lambda g: votes.count(g))
        predictions[key] = predicted.value
        neighbor_map[key] = tuple(m.keys[j] for j in chosen)
        row = order.index(groups[subject])
        col = order.index(predicted)
        confusion[row, col] += 1
        by_stimulus.setdefault(stimulus, np.zeros((2, 2), dtype=np.int64))[row, col] += 1

    per_stimulus: dict[str, StimulusScore] = {}
    for stimulus in sorted(by_stimulus):
        cm = by_stimulus[stimulus]
        try:
            kap = cohen_kappa(cm)
        except DegenerateMarginals:
            kap = None
        per_stimulus[stimulus] = StimulusScore(
            tpr_expert=_safe_rate(cm[1, 1], cm[1].sum()),
            tpr_student=_safe_rate(cm[0, 0], cm[0].sum()),
            accuracy=float((cm[0, 0] + cm[1, 1]) / cm.sum()),
            kappa=kap,
        )
    return ClassificationReport(
        tpr_expert=_safe_rate(confusion[1, 1], confusion[1].sum()),
        tpr_student=_safe_rate(confusion[0, 0], confusion[0].sum()),
        accuracy=float((confusion[0, 0] + confusion[1, 1]) / confusion.sum()),
        kappa=cohen_kappa(confusion),
        confusion=confusion,
        per_stimulus=per_stimulus,
        predictions=predictions,
        neighbors=neighbor_map,
    )


def _safe_rate(hits: int, total: int) -> float:
    return float(hits / total) if total else 0.0


def knn_predict(
    m: SimilarityMatrix, groups: dict[str, Group], targets: list[str], k: int = 3
) -> dict[str, str]:
    """Label target scanpaths from labeled neighbors (no self, subject, or
    stimulus exclusion beyond the target's own subject)."""
    parsed = [split_key(key) for key in m.keys]
    out: dict[str, str] = {}
    order = (Group.STUDENT, Group.EXPERT)
    for key in targets:
        idx = m.keys.index(key)
        subject = parsed[idx][0]
        candidates = [
            j
            for j in range(len(m.keys))
            if parsed[j][0] != subject
            and groups.get(parsed[j][0]) in (Group.EXPERT, Group.STUDENT)
        ]
        if len(candidates) < k:
            raise TooFewCandidates(f"{key}: {len(candidates)} candidates for k={k}")
        candidates.sort(key=lambda j: (-float(m.values[idx, j]), m.keys[j]))
        votes = [groups[parsed[j][0]] for j in candidates[:k]]
        out[key] = max(order, key=lambda g: votes.count(g)).value
    return out


def archetype_ranking(
    m: SimilarityMatrix, top_n: int = 3
) -> list[tuple[str, int]]:
    """Rank scanpaths by how often they appear in others' top-n lists.

    frequency(p) counts scanpaths q whose top_n most-similar others
    (ties at the smaller key) include p. Output sorts by frequency
    descending, then key ascending.
    """
    if m.level is not MatrixLevel.SCANPATH:
        raise ParseError("archetype_ranking needs a scanpath-level matrix")
    n = len(m.keys)
    freq = {key: 0 for key in m.keys}
    for q in range(n):
        others = [j for j in range(n) if j != q]
        others.sort(key=lambda j: (-float(m.values[q, j]), m.keys[j]))
        for j in others[:top_n]:
            freq[m.keys[j]] += 1
    return sorted(freq.items(), key=lambda kv: (-kv[1], kv[0]))
