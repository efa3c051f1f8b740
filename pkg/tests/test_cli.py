"""End-to-end command-line flows on tiny configurations."""

import hashlib
import json

import numpy as np
import pytest
from PIL import Image

from coar_zsl.cli import main


def run(argv):
    return main([str(a) for a in argv])


SYNTH = ["synth", "--seen", 4, "--unseen", 2, "--K", 4, "--per-class", 4,
         "--image-size", 16, "--noise-std", 0.02, "--seed", 3]

TRAIN_FAST = ["--epochs", 2, "--episodes-per-epoch", 2, "--n-way", 2,
              "--k-shot", 2, "--hidden", 16, "--t-peak", "auto", "--seed", 1]


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert run(SYNTH + ["--out", root / "data"]) == 0
    assert run(["train", "--data", root / "data", "--out", root / "run",
                "--backbone", "cnn"] + TRAIN_FAST) == 0
    return root


def manifest_hash(path):
    return hashlib.sha256((path / "manifest.json").read_bytes()).hexdigest()


class TestSynth:
    def test_writes_dataset_directory(self, workdir):
        manifest = json.loads((workdir / "data" / "manifest.json").read_text())
        assert manifest["num_classes"] == 6
        assert len(manifest["samples"]) == 24
        assert (workdir / "data" / "class_semantics.csv").exists()

    def test_idempotent_manifest_hash(self, workdir, tmp_path):
        assert run(SYNTH + ["--out", tmp_path / "again"]) == 0
        assert manifest_hash(tmp_path / "again") == manifest_hash(workdir / "data")

    def test_subset_exhaustion_exit_code(self, tmp_path):
        code = run(["synth", "--seen", 20, "--unseen", 5, "--K", 2,
                    "--per-class", 1, "--out", tmp_path / "bad"])
        assert code == 2


class TestTrain:
    def test_run_directory_contents(self, workdir):
        run_dir = workdir / "run"
        assert (run_dir / "config.json").exists()
        assert (run_dir / "log.jsonl").exists()
        for epoch in range(3):
            assert (run_dir / f"ckpt_epoch_{epoch}").is_dir()

    def test_missing_dataset_exit_code(self, tmp_path):
        code = run(["train", "--data", tmp_path / "nope", "--out",
                    tmp_path / "r"] + TRAIN_FAST)
        assert code == 2

    def test_ablation_flags_accepted(self, workdir, tmp_path):
        code = run(["train", "--data", workdir / "data", "--out",
                    tmp_path / "abl", "--lambda-attp", 0, "--lambda-attf", 0,
                    "--lambda-sem", 0] + TRAIN_FAST)
        assert code == 0
        entry = json.loads(
            (tmp_path / "abl" / "log.jsonl").read_text().splitlines()[0])
        assert entry["L_attp"] == 0.0 and entry["L_attf"] == 0.0

    def test_no_hard_selection_flag(self, workdir, tmp_path):
        code = run(["train", "--data", workdir / "data", "--out",
                    tmp_path / "wohs", "--no-hard-selection"] + TRAIN_FAST)
        assert code == 0
        config = json.loads((tmp_path / "wohs" / "config.json").read_text())
        assert config["train"]["loss"]["hard_selection"] is False

    def test_config_file_with_flag_override(self, workdir, tmp_path):
        cfg_file = tmp_path / "c.json"
        cfg_file.write_text(json.dumps({"epochs": 1, "n_way": 2, "k_shot": 1,
                                        "hidden_size": 16, "tau": 0.6}))
        code = run(["train", "--data", workdir / "data", "--out",
                    tmp_path / "cfg", "--config", cfg_file,
                    "--episodes-per-epoch", 1, "--t-peak", "auto",
                    "--epochs", 2])
        assert code == 0
        saved = json.loads((tmp_path / "cfg" / "config.json").read_text())
        assert saved["train"]["epochs"] == 2  # flag beats file
        assert saved["train"]["loss"]["tau"] == 0.6  # file beats default

    def test_unknown_config_key_rejected(self, workdir, tmp_path):
        cfg_file = tmp_path / "bad.json"
        cfg_file.write_text(json.dumps({"learning_rate_typo": 1}))
        code = run(["train", "--data", workdir / "data", "--out",
                    tmp_path / "bad", "--config", cfg_file] + TRAIN_FAST)
        assert code == 2

    def test_resume_from_checkpoint(self, workdir, tmp_path):
        code = run(["train", "--data", workdir / "data", "--out",
                    tmp_path / "more", "--resume",
                    workdir / "run" / "ckpt_epoch_2", "--epochs", 3])
        assert code == 0
        assert (tmp_path / "more" / "ckpt_epoch_3").is_dir()


class TestEval:
    def test_both_modes_and_consistency(self, workdir, tmp_path):
        out = tmp_path / "metrics.json"
        code = run(["eval", "--ckpt", workdir / "run" / "ckpt_epoch_2",
                    "--data", workdir / "data", "--mode", "both",
                    "--out", out])
        assert code == 0
        payload = json.loads(out.read_text())
        assert set(payload) >= {"zsl", "gzsl", "checkpoint", "config_hash"}
        g = payload["gzsl"]
        expected = (0.0 if g["Acc_U"] == g["Acc_S"] == 0
                    else 2 * g["Acc_U"] * g["Acc_S"] / (g["Acc_U"] + g["Acc_S"]))
        assert abs(g["Acc_H"] - expected) < 1e-9
        assert payload["zsl"]["T1"] is not None

    def test_zsl_uses_unseen_only_prototypes(self, workdir, tmp_path):
        from coar_zsl.dataset import read_dataset
        from coar_zsl.evaluation import build_eval_prototypes, evaluate
        from coar_zsl.trainer import load_model
        model, _ = load_model(workdir / "run" / "ckpt_epoch_2")
        ds = read_dataset(workdir / "data")
        report = evaluate(model, ds, "zsl")
        cp = build_eval_prototypes(model, ds, sorted(ds.unseen_classes))
        assert cp.shape[0] == len(ds.unseen_classes)
        out = tmp_path / "m.json"
        assert run(["eval", "--ckpt", workdir / "run" / "ckpt_epoch_2",
                    "--data", workdir / "data", "--mode", "zsl",
                    "--out", out]) == 0
        assert abs(json.loads(out.read_text())["zsl"]["T1"] - report.t1) < 1e-12

    def test_missing_checkpoint_exit_code(self, workdir, tmp_path):
        code = run(["eval", "--ckpt", tmp_path / "nothing",
                    "--data", workdir / "data"])
        assert code == 2


class TestExportAttention:
    def test_pngs_and_peaks(self, workdir, tmp_path):
        out = tmp_path / "attn"
        code = run(["export-attention", "--ckpt", workdir / "run" / "ckpt_epoch_2",
                    "--data", workdir / "data", "--index", 0, "--out", out])
        assert code == 0
        pngs = sorted(out.glob("image00000_attr*.png"))
        assert len(pngs) == 4  # K channels
        img = Image.open(pngs[0])
        assert img.size == (16, 16)
        arr = np.asarray(img)
        assert arr.dtype == np.uint8

        peaks = json.loads((out / "image00000_peaks.json").read_text())
        assert len(peaks["peaks"]) == 4

        # peaks must equal an independently recomputed forward pass
        from coar_zsl.dataset import read_dataset
        from coar_zsl.trainer import load_model
        model, _ = load_model(workdir / "run" / "ckpt_epoch_2")
        ds = read_dataset(workdir / "data")
        bundle = model.extract(ds.samples[0].image.astype(np.float64)[None],
                               grad=False)
        raw_max = bundle.attention.data[0].max(axis=(0, 1))
        np.testing.assert_allclose(peaks["peaks"], raw_max, atol=1e-12)

    def test_index_out_of_range_exit_code(self, workdir, tmp_path):
        code = run(["export-attention", "--ckpt", workdir / "run" / "ckpt_epoch_2",
                    "--data", workdir / "data", "--index", 10 ** 6,
                    "--out", tmp_path / "x"])
        assert code == 2

    def test_png_is_minmax_rescaled(self, workdir, tmp_path):
        out = tmp_path / "scale"
        run(["export-attention", "--ckpt", workdir / "run" / "ckpt_epoch_2",
             "--data", workdir / "data", "--index", 1, "--out", out])
        arr = np.asarray(Image.open(sorted(out.glob("*.png"))[0]))
        assert arr.min() == 0 and arr.max() == 255


def test_version_flag():
    with pytest.raises(SystemExit) as exc:
        run(["--version"])
    assert exc.value.code == 0
