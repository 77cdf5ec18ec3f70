import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

from gazealign.cli import main

SYNTH_ARGS = [
    "synth", "--seed", "42", "--experts", "3", "--students", "4",
    "--stimuli", "2", "--prototypes", "3", "--image-width", "480",
    "--image-height", "320", "--len-expert-min", "5", "--len-expert-max", "7",
    "--len-student-min", "6", "--len-student-max", "9",
    "--jitter", "2.0", "--swap-prob", "0.05",
]

RUN_ARTIFACTS = [
    "similarity_scanpath.csv", "similarity_scanpath.json", "similarity_scanpath.pgm",
    "similarity_scanpath.png", "similarity_subject.csv", "similarity_subject.json",
    "similarity_subject.pgm", "similarity_subject.png", "dendrogram.csv",
    "dendrogram.png", "cluster_report.json", "knn_report.json",
    "archetypes.csv", "archetypes.png", "run.json",
]


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    assert main(SYNTH_ARGS + ["--out", str(root)]) == 0
    return root / "manifest.json"


def run_pipeline(manifest, out, extra=()):
    return main([
        "run", "--manifest", str(manifest), "--provider", "builtin",
        "--c", "calibrate", "--out", str(out), *extra,
    ])


def tree_digest(root, skip=()):
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file() and p.name not in skip:
            h.update(p.relative_to(root).as_posix().encode())
            h.update(p.read_bytes())
    return h.hexdigest()


class TestRun:
    def test_all_artifacts_present(self, dataset, tmp_path):
        out = tmp_path / "out"
        assert run_pipeline(dataset, out) == 0
        for name in RUN_ARTIFACTS:
            assert (out / name).is_file(), name
        assert any((out / "embeddings").glob("*.dsem"))

    def test_run_json_records_calibration(self, dataset, tmp_path):
        out = tmp_path / "out"
        assert run_pipeline(dataset, out, extra=["--gap", "auto"]) == 0
        record = json.loads((out / "run.json").read_text())
        assert record["c"]["source"] == "calibrated"
        assert record["c"]["stimulus"] == "img01"
        assert record["c"]["value"] > 0
        assert record["gap"]["value"] == pytest.approx(2 * record["c"]["value"])
        assert record["seed"] is None

    def test_explicit_calibration_stimulus(self, dataset, tmp_path):
        ret = main([
            "run", "--manifest", str(dataset), "--provider", "builtin",
            "--c", "calibrate:img02", "--out", str(tmp_path / "out2"),
        ])
        assert ret == 0
        record = json.loads((tmp_path / "out2" / "run.json").read_text())
        assert record["c"]["stimulus"] == "img02"

    def test_rerun_byte_identical(self, dataset, tmp_path):
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        assert run_pipeline(dataset, out1) == 0
        assert run_pipeline(dataset, out2) == 0
        assert tree_digest(out1) == tree_digest(out2)

    def test_workers_byte_identical_matrices(self, dataset, tmp_path):
        out1, out8 = tmp_path / "w1", tmp_path / "w8"
        assert run_pipeline(dataset, out1, extra=["--workers", "1"]) == 0
        assert run_pipeline(dataset, out8, extra=["--workers", "8"]) == 0
        for name in ("similarity_scanpath.csv", "similarity_subject.csv"):
            assert (out1 / name).read_bytes() == (out8 / name).read_bytes()

    def test_reports_are_sane(self, dataset, tmp_path):
        out = tmp_path / "out"
        assert run_pipeline(dataset, out) == 0
        cluster = json.loads((out / "cluster_report.json").read_text())
        assert set(cluster) >= {"assignments", "confusion", "tpr_student",
                                "tpr_expert", "accuracy"}
        knn = json.loads((out / "knn_report.json").read_text())
        assert set(knn) >= {"tpr_expert", "tpr_student", "accuracy", "kappa",
                            "per_stimulus", "predictions"}
        assert 0.0 <= knn["accuracy"] <= 1.0
        assert -1.0 <= knn["kappa"] <= 1.0
        assert set(knn["per_stimulus"]) == {"img01", "img02"}


class TestComposition:
    def test_subcommands_match_run(self, dataset, tmp_path):
        run_out = tmp_path / "via_run"
        assert run_pipeline(dataset, run_out) == 0

        out = tmp_path / "via_steps"
        out.mkdir()
        m = str(dataset)
        assert main(["embed", "--manifest", m, "--out", str(out / "embeddings")]) == 0
        # downstream stages read the exported embeddings like `run` does;
        # the staged manifest sits next to the original so relative paths hold
        staged_manifest = json.loads(dataset.read_text())
        staged_manifest["embeddings"] = str(out / "embeddings")
        staged_path = dataset.parent / "manifest_dsem.json"
        staged_path.write_text(json.dumps(staged_manifest))
        sm = str(staged_path)
        assert main(["simmatrix", "--manifest", sm, "--provider", "dsem",
                     "--c", "calibrate", "--out", str(out)]) == 0
        assert main(["aggregate", "--manifest", sm, "--out", str(out)]) == 0
        assert main(["cluster", "--manifest", sm, "--out", str(out)]) == 0
        assert main(["classify", "--manifest", sm, "--out", str(out)]) == 0
        assert main(["archetypes", "--manifest", sm, "--out", str(out)]) == 0

        for name in RUN_ARTIFACTS:
            if name == "run.json":
                continue
            assert (out / name).read_bytes() == (run_out / name).read_bytes(), name

    def test_calibrate_subcommand(self, dataset, capsys):
        assert main(["calibrate", "--manifest", str(dataset)]) == 0
        payload = json.loads(capsys.readouterr().out.strip())
        assert payload["stimulus"] == "img01"
        assert payload["gap_auto"] == pytest.approx(2 * payload["c"])

    def test_align_subcommand(self, dataset, tmp_path, capsys):
        out = json.loads(dataset.read_text())
        ret = main(["align", "--manifest", str(dataset), "--a", "e01@img01",
                    "--b", "e02@img01", "--c", "calibrate",
                    "--matrix-csv", str(tmp_path / "m.csv")])
        assert ret == 0
        payload = json.loads(capsys.readouterr().out.strip())
        assert payload["score"] >= payload["normalized"] >= 0
        assert payload["path"]
        rows = (tmp_path / "m.csv").read_text().strip().splitlines()
        assert float(rows[0].split(",")[0]) == 0.0

    def test_symbolic_align_subcommand(self, dataset, capsys):
        ret = main(["align", "--manifest", str(dataset), "--a", "e01@img01",
                    "--b", "e02@img01", "--symbolic"])
        assert ret == 0
        payload = json.loads(capsys.readouterr().out.strip())
        assert payload["c"] == 1.0 and payload["gap"] == 2.0
        assert 0.0 <= payload["normalized"] <= 1.0


class TestErrors:
    def test_missing_c_is_config_error(self, dataset, tmp_path, capsys):
        ret = main(["run", "--manifest", str(dataset), "--out", str(tmp_path / "o")])
        assert ret == 2
        err = json.loads(capsys.readouterr().err.strip())
        assert err["error"] == "ConfigError"

    def test_bad_metric_is_config_error(self, dataset, tmp_path):
        ret = main(["run", "--manifest", str(dataset), "--c", "1", "--metric", "manhattan",
                    "--out", str(tmp_path / "o")])
        assert ret == 2

    def test_missing_manifest_is_data_error(self, tmp_path, capsys):
        ret = main(["run", "--manifest", str(tmp_path / "nope.json"), "--c", "1",
                    "--out", str(tmp_path / "o")])
        assert ret == 3
        err = json.loads(capsys.readouterr().err.strip())
        assert err["error"] == "MissingFile"

    def test_dsem_provider_without_dir(self, dataset, tmp_path):
        ret = main(["run", "--manifest", str(dataset), "--provider", "dsem",
                    "--c", "1", "--out", str(tmp_path / "o")])
        assert ret == 2


class TestConsoleScript:
    def test_entry_point(self):
        proc = subprocess.run([sys.executable, "-m", "gazealign.cli", "--version"],
                              capture_output=True, text=True)
        assert proc.returncode == 0
        assert "gazealign" in proc.stdout
