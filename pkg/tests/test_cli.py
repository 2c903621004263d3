"""End-to-end command-line flows: synth -> eda -> train -> evaluate -> predict,
plus the exit-code contract."""

import json
import zipfile

import numpy as np
import pytest

from emikit.cli import main
from emikit.data import read_labels_csv

SMALL_RUN = """
seed = 11

[model]
hidden_dim = 16
motion_hidden_dim = 8

[training]
batch_size = 8
epochs = 2
motion_epochs = 2
fusion_epochs = 2
patience = 5
"""

SMALL_CORPUS = """
n_samples = 24
seq_median = 8.0
seq_sigma = 0.3
test_fraction = 0.125
"""


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    spec_path = root / "corpus.toml"
    spec_path.write_text(SMALL_CORPUS, encoding="utf-8")
    corpus_dir = root / "corpus"
    code = main(["synth", "--config", str(spec_path), "--seed", "5",
                 "--out", str(corpus_dir)])
    assert code == 0
    return corpus_dir / "manifest.jsonl"


@pytest.fixture(scope="module")
def trained_run(tmp_path_factory, corpus):
    root = tmp_path_factory.mktemp("run")
    cfg = root / "run.toml"
    cfg.write_text(SMALL_RUN, encoding="utf-8")
    out = root / "out"
    code = main(["train", "--config", str(cfg), "--manifest", str(corpus),
                 "--out", str(out)])
    assert code == 0
    return cfg, out


class TestSynth:
    def test_writes_manifest_and_plant(self, corpus):
        assert corpus.exists()
        assert (corpus.parent / "planted.json").exists()
        assert (corpus.parent / "labels.csv").exists()

    def test_default_spec_without_config(self, tmp_path, capsys):
        code = main(["synth", "--out", str(tmp_path / "c"),
                     "--config", str(tmp_path / "missing.toml")])
        assert code == 2  # unreadable spec file is a config error
        assert "error:" in capsys.readouterr().err

    def test_bad_spec_key_is_config_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.toml"
        bad.write_text("n_samples = 8\nflavor = 3\n", encoding="utf-8")
        code = main(["synth", "--config", str(bad), "--out", str(tmp_path / "c")])
        assert code == 2
        assert "flavor" in capsys.readouterr().err

    def test_synthetic_table_form_accepted(self, tmp_path):
        spec = tmp_path / "spec.toml"
        spec.write_text("[synthetic]\nn_samples = 8\nseq_median = 4.0\n",
                        encoding="utf-8")
        code = main(["synth", "--config", str(spec), "--out", str(tmp_path / "c")])
        assert code == 0
        manifest = (tmp_path / "c" / "manifest.jsonl").read_text().splitlines()
        assert len(manifest) == 8


class TestEda:
    def test_writes_all_four_reports(self, corpus, tmp_path, capsys):
        out = tmp_path / "reports"
        code = main(["eda", "--manifest", str(corpus), "--out", str(out)])
        assert code == 0
        for name in ("summary.txt", "summary.csv", "shift.txt", "shift.csv"):
            assert (out / name).exists(), name
        stdout = capsys.readouterr().out
        assert "train" in stdout and "KS" in stdout

    def test_missing_manifest_is_data_error(self, tmp_path, capsys):
        code = main(["eda", "--manifest", str(tmp_path / "nope.jsonl"),
                     "--out", str(tmp_path / "r")])
        assert code == 3
        assert "error:" in capsys.readouterr().err


class TestTrain:
    def test_full_run_writes_five_checkpoints(self, trained_run):
        _, out = trained_run
        ckpts = sorted(p.name for p in (out / "checkpoints").glob("*.zip"))
        assert ckpts == ["audio.zip", "fusion.zip", "motion.zip",
                         "text.zip", "vision.zip"]

    def test_config_snapshot_and_log(self, trained_run):
        _, out = trained_run
        assert (out / "config.toml").exists()
        rows = [json.loads(line)
                for line in (out / "train_log.jsonl").read_text().splitlines()]
        stages = {r["stage"] for r in rows}
        assert stages == {"text", "audio", "vision", "motion", "fusion"}
        assert all(r["epoch"] >= 1 for r in rows)

    def test_checkpoints_carry_config_hash_and_meta(self, trained_run):
        _, out = trained_run
        with zipfile.ZipFile(out / "checkpoints" / "fusion.zip") as zf:
            index = json.loads(zf.read("index.json"))
        assert len(index["config_hash"]) == 16
        assert "best_val_r" in index["meta"]

    def test_single_stage_run(self, corpus, tmp_path):
        cfg = tmp_path / "run.toml"
        cfg.write_text(SMALL_RUN, encoding="utf-8")
        out = tmp_path / "out"
        code = main(["train", "--config", str(cfg), "--manifest", str(corpus),
                     "--out", str(out), "--stage", "text"])
        assert code == 0
        ckpts = [p.name for p in (out / "checkpoints").glob("*.zip")]
        assert ckpts == ["text.zip"]

    def test_fusion_stage_resumes_from_saved_checkpoints(self, trained_run, corpus):
        cfg, out = trained_run
        code = main(["train", "--config", str(cfg), "--manifest", str(corpus),
                     "--out", str(out), "--stage", "fusion"])
        assert code == 0

    def test_fusion_without_stage1_is_data_error(self, corpus, tmp_path, capsys):
        cfg = tmp_path / "run.toml"
        cfg.write_text(SMALL_RUN, encoding="utf-8")
        code = main(["train", "--config", str(cfg), "--manifest", str(corpus),
                     "--out", str(tmp_path / "fresh"), "--stage", "fusion"])
        assert code == 3
        assert "stage-1 checkpoint" in capsys.readouterr().err

    def test_unknown_stage_is_config_error(self, corpus, tmp_path, capsys):
        code = main(["train", "--manifest", str(corpus),
                     "--out", str(tmp_path / "o"), "--stage", "texture"])
        assert code == 2
        assert "texture" in capsys.readouterr().err

    def test_missing_manifest_flag_is_config_error(self, tmp_path, capsys):
        code = main(["train", "--out", str(tmp_path / "o")])
        assert code == 2
        assert "manifest" in capsys.readouterr().err

    def test_modalities_override_restricts_stages(self, corpus, tmp_path):
        cfg = tmp_path / "run.toml"
        cfg.write_text(SMALL_RUN, encoding="utf-8")
        out = tmp_path / "out"
        code = main(["train", "--config", str(cfg), "--manifest", str(corpus),
                     "--out", str(out), "--modalities", "audio,vision"])
        assert code == 0
        ckpts = sorted(p.name for p in (out / "checkpoints").glob("*.zip"))
        assert ckpts == ["audio.zip", "fusion.zip", "vision.zip"]
        with zipfile.ZipFile(out / "checkpoints" / "fusion.zip") as zf:
            index = json.loads(zf.read("index.json"))
        assert index["modalities"] == ["audio", "vision"]


class TestEvaluate:
    def test_prints_per_dimension_table(self, trained_run, corpus, capsys):
        _, out = trained_run
        code = main(["evaluate", str(out / "checkpoints" / "fusion.zip"),
                     "--manifest", str(corpus)])
        assert code == 0
        stdout = capsys.readouterr().out
        assert "Admiration" in stdout and "Joy" in stdout
        assert "average r̄" in stdout

    def test_json_report(self, trained_run, corpus, tmp_path):
        _, out = trained_run
        report_path = tmp_path / "report.json"
        code = main(["evaluate", str(out / "checkpoints" / "fusion.zip"),
                     "--manifest", str(corpus), "--split", "valid",
                     "--out", str(report_path)])
        assert code == 0
        doc = json.loads(report_path.read_text())
        assert doc["split"] == "valid"
        assert set(doc["pearson"]) == {"Admiration", "Amusement", "Determination",
                                       "EmpathicPain", "Excitement", "Joy"}
        assert len(doc["checkpoint_config_hash"]) == 16

    def test_unimodal_checkpoint_evaluates(self, trained_run, corpus):
        _, out = trained_run
        code = main(["evaluate", str(out / "checkpoints" / "audio.zip"),
                     "--manifest", str(corpus)])
        assert code == 0

    def test_unlabeled_split_is_data_error(self, trained_run, corpus, capsys):
        _, out = trained_run
        code = main(["evaluate", str(out / "checkpoints" / "fusion.zip"),
                     "--manifest", str(corpus), "--split", "test"])
        assert code == 3
        assert "label" in capsys.readouterr().err

    def test_missing_checkpoint_is_data_error(self, corpus, tmp_path, capsys):
        code = main(["evaluate", str(tmp_path / "none.zip"),
                     "--manifest", str(corpus)])
        assert code == 3


class TestPredict:
    def test_csv_layout_and_clamping(self, trained_run, corpus, tmp_path):
        _, out = trained_run
        pred_path = tmp_path / "preds.csv"
        code = main(["predict", str(out / "checkpoints" / "fusion.zip"),
                     "--manifest", str(corpus), "--split", "test",
                     "--out", str(pred_path)])
        assert code == 0
        table = read_labels_csv(pred_path)
        assert len(table) == 3  # round(24 * 0.125)
        values = np.stack(list(table.values()))
        assert values.min() >= 0.0 and values.max() <= 1.0

    def test_rows_follow_manifest_order(self, trained_run, corpus, tmp_path):
        _, out = trained_run
        pred_path = tmp_path / "preds.csv"
        main(["predict", str(out / "checkpoints" / "fusion.zip"),
              "--manifest", str(corpus), "--split", "valid",
              "--out", str(pred_path)])
        got = list(read_labels_csv(pred_path))
        manifest_rows = [json.loads(line)
                         for line in corpus.read_text().splitlines()]
        expected = [r["id"] for r in manifest_rows if r["split"] == "valid"]
        assert got == expected

    def test_predictions_are_run_deterministic(self, trained_run, corpus, tmp_path):
        _, out = trained_run
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for path in (a, b):
            main(["predict", str(out / "checkpoints" / "fusion.zip"),
                  "--manifest", str(corpus), "--split", "valid",
                  "--out", str(path)])
        assert a.read_bytes() == b.read_bytes()
