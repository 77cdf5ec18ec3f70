import numpy as np
import pytest

import gazealign.align as align_mod
from gazealign.align import Metric, ScoringParams
from gazealign.errors import NoSharedStimuli
from gazealign.model import Group
from gazealign.pairwise import (
    MatrixLevel,
    SimilarityMatrix,
    aggregate_by_subject,
    all_pairs,
    export_matrix,
    heatmap_pixels,
    load_matrix_csv,
)

from conftest import make_embedded

PARAMS = ScoringParams(c=20.0, gap=40.0, metric=Metric.L1)


def random_scanpaths(rng, n, stimuli=("i1",), dim=4):
    out = []
    for k in range(n):
        stim = stimuli[k % len(stimuli)]
        vecs = rng.integers(0, 9, size=(int(rng.integers(2, 6)), dim))
        out.append(make_embedded(f"s{k:02d}", stim, vecs,
                                 group=Group.EXPERT if k % 2 else Group.STUDENT))
    return out


class TestAllPairs:
    def test_counts_and_diagonal(self, monkeypatch):
        rng = np.random.default_rng(0)
        sps = random_scanpaths(rng, 3)
        calls = []
        real = align_mod.local_align

        def counting(a, b, params, **kw):
            calls.append((a.key, b.key))
            return real(a, b, params, **kw)

        monkeypatch.setattr("gazealign.pairwise.local_align", counting)
        m = all_pairs(sps, PARAMS)
        assert len(calls) == 3  # one per unordered pair, diagonal assigned
        assert (np.diag(m.values) == np.float32(PARAMS.c)).all()
        assert np.array_equal(m.values, m.values.T)

    def test_identical_copies_all_c(self):
        vecs = np.arange(12, dtype=np.float32).reshape(3, 4)
        sps = [make_embedded(f"s{k}", "i1", vecs) for k in range(4)]
        m = all_pairs(sps, PARAMS)
        assert (m.values == np.float32(PARAMS.c)).all()

    def test_worker_counts_identical(self):
        rng = np.random.default_rng(1)
        sps = random_scanpaths(rng, 20, stimuli=("i1", "i2"))
        m1 = all_pairs(sps, PARAMS, workers=1)
        m8 = all_pairs(sps, PARAMS, workers=8)
        assert m1.keys == m8.keys
        assert m1.values.tobytes() == m8.values.tobytes()

    def test_input_order_invariant(self):
        rng = np.random.default_rng(2)
        sps = random_scanpaths(rng, 8)
        m1 = all_pairs(sps, PARAMS)
        m2 = all_pairs(list(reversed(sps)), PARAMS)
        assert m1.keys == m2.keys
        assert m1.values.tobytes() == m2.values.tobytes()

    def test_bounds(self):
        rng = np.random.default_rng(3)
        sps = random_scanpaths(rng, 10)
        m = all_pairs(sps, PARAMS)
        assert (m.values >= 0).all() and (m.values <= np.float32(PARAMS.c)).all()


class TestAggregate:
    def _matrix(self, entries, keys, c=20.0):
        n = len(keys)
        values = np.full((n, n), np.nan, dtype=np.float64)
        for (p, q), v in entries.items():
            values[p, q] = v
            values[q, p] = v
        np.fill_diagonal(values, c)
        return SimilarityMatrix(keys=tuple(keys), values=values.astype(np.float32),
                                level=MatrixLevel.SCANPATH, c=c, metric="l1")

    def test_mean_of_shared(self):
        keys = ["a@i1", "a@i2", "b@i1", "b@i2"]
        m = self._matrix({(0, 2): 4.0, (1, 3): 6.0, (0, 1): 9.0, (0, 3): 9.0,
                          (1, 2): 9.0, (2, 3): 9.0}, keys)
        agg = aggregate_by_subject(m)
        assert agg.keys == ("a", "b")
        assert agg.level is MatrixLevel.SUBJECT
        assert agg.values[0, 1] == np.float32(5.0)
        assert agg.values[0, 0] == np.float32(20.0)

    def test_single_shared_stimulus(self):
        keys = ["a@i1", "a@i2", "b@i1"]
        m = self._matrix({(0, 2): 7.0, (0, 1): 1.0, (1, 2): 1.0}, keys)
        agg = aggregate_by_subject(m)
        assert agg.values[0, 1] == np.float32(7.0)

    def test_disjoint_stimuli(self):
        keys = ["a@i1", "b@i2"]
        m = self._matrix({(0, 1): 3.0}, keys)
        with pytest.raises(NoSharedStimuli):
            aggregate_by_subject(m)

    def test_aggregated_within_min_max(self):
        rng = np.random.default_rng(5)
        sps = []
        for s in range(4):
            for stim in ("i1", "i2", "i3"):
                vecs = rng.integers(0, 9, size=(int(rng.integers(2, 6)), 4))
                sps.append(make_embedded(f"s{s}", stim, vecs))
        m = all_pairs(sps, PARAMS)
        agg = aggregate_by_subject(m)
        subj_stims = {}
        for key in m.keys:
            s, i = key.split("@")
            subj_stims.setdefault(s, {})[i] = m.keys.index(key)
        for p, sp in enumerate(agg.keys):
            for q in range(p + 1, len(agg.keys)):
                shared = set(subj_stims[sp]) & set(subj_stims[agg.keys[q]])
                vals = [
                    float(m.values[subj_stims[sp][i], subj_stims[agg.keys[q]][i]])
                    for i in shared
                ]
                assert min(vals) - 1e-6 <= float(agg.values[p, q]) <= max(vals) + 1e-6
                assert 0.0 <= float(agg.values[p, q]) <= PARAMS.c


class TestExport:
    def test_csv_cells(self, tmp_path):
        m = SimilarityMatrix(keys=("a", "b"),
                             values=np.array([[10.0, 4.0], [4.0, 10.0]], np.float32),
                             level=MatrixLevel.SUBJECT, c=10.0, metric="l1")
        export_matrix(m, tmp_path / "m.csv")
        lines = (tmp_path / "m.csv").read_text().splitlines()
        assert lines[0] == "key,a,b"
        assert lines[1] == "a,10,4"
        assert lines[2] == "b,4,10"

    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(6)
        sps = random_scanpaths(rng, 6, stimuli=("i1", "i2"))
        m = all_pairs(sps, PARAMS)
        export_matrix(m, tmp_path / "m.csv", tmp_path / "m.pgm")
        loaded = load_matrix_csv(tmp_path / "m.csv")
        assert loaded.keys == m.keys
        assert loaded.level is m.level
        assert loaded.c == m.c
        assert np.array_equal(loaded.values, m.values)

    def test_heatmap_constant_offdiagonal(self):
        values = np.full((3, 3), 4.0, np.float32)
        np.fill_diagonal(values, 10.0)
        m = SimilarityMatrix(keys=("a", "b", "c"), values=values,
                             level=MatrixLevel.SUBJECT, c=10.0, metric="l1")
        pix = heatmap_pixels(m)
        assert (pix == 128).all()

    def test_heatmap_linear_map(self):
        values = np.array([[10.0, 0.0, 5.0],
                           [0.0, 10.0, 10.0],
                           [5.0, 10.0, 10.0]], np.float32)
        m = SimilarityMatrix(keys=("a", "b", "c"), values=values,
                             level=MatrixLevel.SUBJECT, c=10.0, metric="l1")
        pix = heatmap_pixels(m)
        assert pix[0, 1] == 0
        assert pix[1, 2] == 255
        assert pix[0, 2] == 128
        assert (np.diag(pix) == 255).all()
