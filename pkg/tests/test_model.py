import json

import numpy as np
import pytest

from gazealign.errors import (
    DuplicateKey,
    EmptyScanpath,
    MissingFile,
    OrderError,
    ParseError,
)
from gazealign.model import (
    Fixation,
    Group,
    Scanpath,
    load_manifest,
    load_scanpaths,
    load_stimulus_image,
    truncate_to_window,
    write_pgm,
    write_scanpaths,
)

from conftest import make_fixations, make_scanpath

HEADER = "subject_id,group,stimulus_id,index,x,y,start_ms,duration_ms"


def write_csv(path, rows, header=HEADER):
    path.write_text("\n".join([header] + rows) + "\n", encoding="utf-8")


class TestLoadScanpaths:
    def test_basic_parse(self, tmp_path):
        f = tmp_path / "a.csv"
        write_csv(f, [
            "s1,student,i1,0,10,20,0,200",
            "s1,student,i1,1,30,40,250,200",
            "s1,student,i1,2,50,60,500,200",
        ])
        sps = load_scanpaths(f)
        assert len(sps) == 1
        sp = sps[0]
        assert sp.subject_id == "s1" and sp.stimulus_id == "i1"
        assert sp.group is Group.STUDENT
        assert len(sp) == 3
        assert [f.x for f in sp.fixations] == [10, 30, 50]

    def test_rows_sorted_by_index(self, tmp_path):
        f = tmp_path / "a.csv"
        write_csv(f, [
            "s1,expert,i1,2,50,60,500,200",
            "s1,expert,i1,0,10,20,0,200",
            "s1,expert,i1,1,30,40,250,200",
        ])
        sp = load_scanpaths(f)[0]
        assert [fx.index for fx in sp.fixations] == [0, 1, 2]
        assert [fx.x for fx in sp.fixations] == [10, 30, 50]

    def test_zero_duration_rejected(self, tmp_path):
        f = tmp_path / "a.csv"
        write_csv(f, ["s1,student,i1,0,10,20,0,0"])
        with pytest.raises(ParseError):
            load_scanpaths(f)

    def test_gap_in_indices_rejected(self, tmp_path):
        f = tmp_path / "a.csv"
        write_csv(f, [
            "s1,student,i1,0,10,20,0,200",
            "s1,student,i1,2,30,40,500,200",
        ])
        with pytest.raises(OrderError):
            load_scanpaths(f)

    def test_bad_group_rejected(self, tmp_path):
        f = tmp_path / "a.csv"
        write_csv(f, ["s1,novice,i1,0,10,20,0,200"])
        with pytest.raises(ParseError):
            load_scanpaths(f)

    def test_header_only_is_empty(self, tmp_path):
        f = tmp_path / "a.csv"
        write_csv(f, [])
        with pytest.raises(EmptyScanpath):
            load_scanpaths(f)

    def test_aoi_column(self, tmp_path):
        f = tmp_path / "a.csv"
        write_csv(f, [
            "s1,student,i1,0,10,20,0,200,jaw",
            "s1,student,i1,1,30,40,250,200,tooth",
        ], header=HEADER + ",aoi_label")
        sp = load_scanpaths(f)[0]
        assert sp.aoi_labels == ("jaw", "tooth")


class TestRoundTrip:
    def test_write_then_load_identity(self, tmp_path):
        sps = [
            make_scanpath("s1", Group.STUDENT, "i1", [(10.5, 20.25), (30, 40)]),
            make_scanpath("e1", Group.EXPERT, "i2", [(5, 5)], labels=["a"]),
            make_scanpath("u1", Group.UNKNOWN, "i1", [(7, 9), (1, 2), (3.125, 4)]),
        ]
        f = tmp_path / "out.csv"
        write_scanpaths(f, sps)
        loaded = load_scanpaths(f)
        by_key = {sp.key: sp for sp in loaded}
        for sp in sps:
            got = by_key[sp.key]
            assert got.group is sp.group
            assert got.aoi_labels == sp.aoi_labels
            assert len(got) == len(sp)
            for a, b in zip(got.fixations, sp.fixations):
                assert (a.index, a.x, a.y, a.start_ms, a.duration_ms) == (
                    b.index, b.x, b.y, b.start_ms, b.duration_ms)


class TestTruncate:
    def test_boundary_fixations(self):
        sp = Scanpath("s1", Group.STUDENT, "i1", (
            Fixation(index=0, x=1, y=1, start_ms=0, duration_ms=500),
            Fixation(index=1, x=2, y=2, start_ms=44000, duration_ms=500),
            Fixation(index=2, x=3, y=3, start_ms=46000, duration_ms=500),
        ))
        out = truncate_to_window(sp, 45000)
        assert len(out) == 2

    def test_window_larger_than_scanpath(self):
        sp = make_scanpath(coords=[(1, 1), (2, 2)])
        assert truncate_to_window(sp, 10_000_000) is sp

    def test_empty_window(self):
        sp = Scanpath("s1", Group.STUDENT, "i1", make_fixations([(1, 1)], start0=5.0))
        with pytest.raises(EmptyScanpath):
            truncate_to_window(sp, 1.0)

    def test_idempotent(self):
        sp = make_scanpath(coords=[(1, 1), (2, 2), (3, 3), (4, 4)])
        once = truncate_to_window(sp, 600)
        twice = truncate_to_window(once, 600)
        assert once == twice

    def test_truncates_aoi_labels_too(self):
        sp = make_scanpath(coords=[(1, 1), (2, 2), (3, 3)], labels=["a", "b", "c"])
        out = truncate_to_window(sp, 300)
        assert out.aoi_labels == ("a", "b")[: len(out)]


class TestStimulusIO:
    def test_pgm_round_trip(self, tmp_path):
        rng = np.random.default_rng(7)
        pixels = rng.integers(0, 256, size=(40, 60), dtype=np.uint8)
        p = tmp_path / "img.pgm"
        write_pgm(p, pixels)
        img = load_stimulus_image("x", p)
        assert img.width == 60 and img.height == 40
        assert img.source_format == "pgm"
        assert np.array_equal(img.pixels, pixels)

    def test_pgm_comment_header(self, tmp_path):
        p = tmp_path / "img.pgm"
        p.write_bytes(b"P5\n# a comment\n4 2\n255\n" + bytes(range(8)))
        img = load_stimulus_image("x", p)
        assert img.width == 4 and img.height == 2

    def test_png_luminance(self, tmp_path):
        from PIL import Image

        arr = np.zeros((10, 10, 3), dtype=np.uint8)
        arr[:, :, 1] = 200  # green only
        p = tmp_path / "img.png"
        Image.fromarray(arr).save(p)
        img = load_stimulus_image("x", p)
        assert img.source_format == "png"
        # ITU-R 601: 0.587 * 200, rounded
        assert int(img.pixels[0, 0]) == int(200 * 587 // 1000)

    def test_truncated_pgm(self, tmp_path):
        p = tmp_path / "img.pgm"
        p.write_bytes(b"P5\n4 4\n255\n" + bytes(5))
        with pytest.raises(ParseError):
            load_stimulus_image("x", p)


class TestManifest:
    def _dataset(self, tmp_path, n_stimuli=2, files=None):
        for i in range(n_stimuli):
            write_pgm(tmp_path / f"img{i + 1}.pgm", np.zeros((120, 160), np.uint8))
        files = files or {
            "a.csv": ["s1,student,img1,0,10,20,0,200", "s1,student,img2,0,10,20,0,200"],
            "b.csv": ["e1,expert,img1,0,10,20,0,200", "e1,expert,img2,0,10,20,0,200"],
        }
        for name, rows in files.items():
            write_csv(tmp_path / name, rows)
        manifest = {
            "stimuli": [{"id": f"img{i + 1}", "image": f"img{i + 1}.pgm"} for i in range(n_stimuli)],
            "scanpaths": sorted(files),
        }
        mp = tmp_path / "manifest.json"
        mp.write_text(json.dumps(manifest))
        return mp

    def test_load_counts(self, tmp_path):
        m = load_manifest(self._dataset(tmp_path))
        assert len(m.stimuli) == 2
        assert len(m.scanpath_files) == 2
        assert len(m.load_all_scanpaths()) == 4

    def test_missing_image(self, tmp_path):
        mp = self._dataset(tmp_path)
        (tmp_path / "img1.pgm").unlink()
        with pytest.raises(MissingFile):
            load_manifest(mp)

    def test_duplicate_pair_across_files(self, tmp_path):
        mp = self._dataset(tmp_path, files={
            "a.csv": ["s1,student,img1,0,10,20,0,200"],
            "b.csv": ["s1,student,img1,0,11,21,0,200"],
        })
        with pytest.raises(DuplicateKey):
            load_manifest(mp)

    def test_unknown_stimulus_reference(self, tmp_path):
        mp = self._dataset(tmp_path, files={
            "a.csv": ["s1,student,img9,0,10,20,0,200"],
        })
        with pytest.raises(MissingFile):
            load_manifest(mp)

    def test_conflicting_subject_groups(self, tmp_path):
        mp = self._dataset(tmp_path, files={
            "a.csv": ["s1,student,img1,0,10,20,0,200"],
            "b.csv": ["s1,expert,img2,0,10,20,0,200"],
        })
        with pytest.raises(ParseError):
            load_manifest(mp)
