import json
import subprocess
import sys

import numpy as np
import pytest
import torch
from PIL import Image

from rnnmbp.cli import build_parser, main
from rnnmbp.config import DatasetSpec, ModelConfig
from rnnmbp.data import load_dataset
from rnnmbp.metrics import dataset_baseline, parse_report
from rnnmbp.model import build_variant, count_parameters, save_model
from rnnmbp.train import load_checkpoint

from conftest import randomize

TINY_FLAGS = ["--channels", "4", "--reduction", "2"]


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def toy_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("toy")
    assert main(["synthesize", "--out", str(root), "--train-scenes", "2", "--test-scenes", "2", "--frames", "3",
                 "--height", "16", "--width", "16"]) == 0
    return root


def test_help_documents_every_flag():
    parser = build_parser()
    subparsers = next(a for a in parser._actions if a.dest == "command").choices
    for name, sub in [("rnnmbp", parser)] + list(subparsers.items()):
        for action in sub._actions:
            if action.option_strings and action.dest != "help":
                assert action.help, f"{name} {action.option_strings} has no help text"
                assert any(o in sub.format_help() for o in action.option_strings)


def test_help_exits_zero():
    proc = subprocess.run([sys.executable, "-m", "rnnmbp.cli", "train", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "--total-steps" in proc.stdout


def test_missing_subcommand_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2


# --- synthesize ------------------------------------------------------------------

def test_synthesize_is_reproducible_and_loadable(tmp_path, capsys):
    args = ["--train-scenes", "1", "--test-scenes", "1", "--frames", "2", "--height", "16", "--width", "16",
            "--seed", "4"]
    assert run(capsys, "synthesize", "--out", str(tmp_path / "a"), *args)[0] == 0
    assert run(capsys, "synthesize", "--out", str(tmp_path / "b"), *args)[0] == 0
    for split in ("train", "test"):
        a = load_dataset(DatasetSpec(tmp_path / "a", split))
        b = load_dataset(DatasetSpec(tmp_path / "b", split))
        assert np.array_equal(a[0].blurry, b[0].blurry) and np.array_equal(a[0].sharp, b[0].sharp)
    meta = json.loads((tmp_path / "a" / "train" / "scene_000" / "meta.json").read_text())
    assert meta["exposure_frames"] == 7 and meta["gamma"] == 2.2


def test_synthesize_refuses_non_empty_output(tmp_path, capsys):
    (tmp_path / "keep.txt").write_text("x")
    code, out, err = run(capsys, "synthesize", "--out", str(tmp_path), "--train-scenes", "1")
    assert code == 2 and "--force" in err and out == ""
    code, _, _ = run(capsys, "synthesize", "--out", str(tmp_path), "--force", "--train-scenes", "1",
                     "--test-scenes", "1", "--frames", "1", "--height", "8", "--width", "8")
    assert code == 0 and (tmp_path / "keep.txt").exists()


@pytest.mark.parametrize("flags", [["--window", "4"], ["--gamma", "0"], ["--height", "10"]])
def test_synthesize_validation_errors(tmp_path, capsys, flags):
    assert run(capsys, "synthesize", "--out", str(tmp_path / "o"), *flags)[0] == 2


def test_synthesize_from_sharp_source(tmp_path, capsys):
    scene = tmp_path / "src" / "train" / "clip"
    scene.mkdir(parents=True)
    for i in range(6):
        Image.fromarray(np.full((8, 8, 3), 40 * i, dtype=np.uint8)).save(scene / f"{i:05d}.png")
    code, out, _ = run(capsys, "synthesize", "--out", str(tmp_path / "out"), "--source", str(tmp_path / "src"),
                       "--window", "3", "--gamma", "1")
    assert code == 0 and json.loads(out)["scenes"] == 1
    (pair,) = load_dataset(DatasetSpec(tmp_path / "out", "train"))
    assert len(pair) == 2
    assert pair.sharp[:, 0, 0, 0].tolist() == pytest.approx([40 / 255, 160 / 255])
    assert pair.blurry[:, 0, 0, 0].tolist() == pytest.approx([40 / 255, 160 / 255], abs=0.5 / 255)


def test_synthesize_missing_source(tmp_path, capsys):
    assert run(capsys, "synthesize", "--out", str(tmp_path / "o"), "--source", str(tmp_path / "nope"))[0] == 2


# --- train -----------------------------------------------------------------------

def _train_args(toy_root, run_dir, *extra):
    return ["train", "--data", str(toy_root), "--run-dir", str(run_dir), *TINY_FLAGS, "--batch-size", "1",
            "--seq-len", "2", "--patch", "8", "--checkpoint-every", "2", "--deterministic", *extra]


def test_train_zero_steps_writes_init_checkpoint(tmp_path, capsys, toy_root):
    code, out, _ = run(capsys, *_train_args(toy_root, tmp_path / "r", "--total-steps", "0"))
    assert code == 0
    rec = load_checkpoint(json.loads(out)["checkpoint"])
    assert rec.step == 0 and rec.model_config == ModelConfig(4, 2)
    assert (tmp_path / "r" / "config.ini").exists()


def test_train_baseline_variant(tmp_path, capsys, toy_root):
    code, out, _ = run(capsys, *_train_args(toy_root, tmp_path / "r", "--total-steps", "2", "--variant", "baseline"))
    assert code == 0
    rec = load_checkpoint(json.loads(out)["checkpoint"])
    assert rec.step == 2 and rec.model_config.variant == "baseline"


def test_train_resume_equals_uninterrupted(tmp_path, capsys, toy_root, monkeypatch):
    full = _train_args(toy_root, tmp_path / "full", "--total-steps", "5")
    assert run(capsys, *full)[0] == 0
    # Interrupt the second run after step 3 by failing inside the optimizer loop.
    import rnnmbp.train.engine as engine
    real_step = engine.train_step
    calls = {"n": 0}

    def flaky(*a, **k):
        calls["n"] += 1
        if calls["n"] == 4:
            raise KeyboardInterrupt
        return real_step(*a, **k)

    monkeypatch.setattr(engine, "train_step", flaky)
    with pytest.raises(KeyboardInterrupt):
        main(_train_args(toy_root, tmp_path / "split", "--total-steps", "5"))
    monkeypatch.setattr(engine, "train_step", real_step)
    code, out, _ = run(capsys, *_train_args(toy_root, tmp_path / "split", "--total-steps", "5", "--resume"))
    assert code == 0
    a = load_checkpoint(tmp_path / "full" / "checkpoints" / "step_00000005.ckpt")
    b = load_checkpoint(json.loads(out)["checkpoint"])
    for k, v in a.params.items():
        assert torch.equal(b.params[k], v), k


def test_train_config_file_and_override(tmp_path, capsys, toy_root):
    cfg = tmp_path / "run.ini"
    cfg.write_text(f"[model]\nbase_channels = 8\ncab_reduction = 2\n[train]\ntotal_steps = 3\nseed = 5\n"
                   f"[data]\nroot = {toy_root}\n[run]\ndir = {tmp_path / 'r'}\n")
    code, out, _ = run(capsys, "train", "--config", str(cfg), "--channels", "4", "--dump-config")
    assert code == 0
    assert "base_channels = 4" in out and "total_steps = 3" in out and "seed = 5" in out
    assert not (tmp_path / "r").exists()


def test_train_lists_every_config_error(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[model]\nbase_channels = 0\nbogus = 1\n[train]\nbatch_size = 0\n[extra]\nx = 1\n")
    code, out, err = run(capsys, "train", "--config", str(cfg))
    assert code == 2 and out == ""
    for fragment in ("base_channels", "bogus", "batch_size", "extra"):
        assert fragment in err


def test_train_requires_data_and_run_dir(capsys):
    code, _, err = run(capsys, "train", "--total-steps", "1")
    assert code == 2 and "data root" in err and "run directory" in err


def test_train_missing_dataset_is_exit_2(tmp_path, capsys):
    assert run(capsys, "train", "--data", str(tmp_path / "nope"), "--run-dir", str(tmp_path / "r"))[0] == 2


def test_deterministic_env_var(tmp_path, capsys, toy_root, monkeypatch):
    monkeypatch.setenv("MBP_DETERMINISTIC", "1")
    args = _train_args(toy_root, tmp_path / "r", "--total-steps", "0")
    args.remove("--deterministic")
    code, out, _ = run(capsys, *args, "--dump-config")
    assert code == 0 and "deterministic = True" in out


# --- eval / infer ----------------------------------------------------------------------

@pytest.fixture(scope="module")
def identity_ckpt(tmp_path_factory):
    path = tmp_path_factory.mktemp("ckpt") / "identity.mbp"
    save_model(path, build_variant(ModelConfig(4, 2)))
    return path


@pytest.fixture(scope="module")
def random_ckpt(tmp_path_factory):
    path = tmp_path_factory.mktemp("ckpt") / "random.mbp"
    save_model(path, randomize(build_variant(ModelConfig(4, 2)), scale=0.05).float())
    return path


def test_eval_identity_checkpoint_matches_dataset_psnr(tmp_path, capsys, toy_root, identity_ckpt):
    code, out, _ = run(capsys, "eval", "--checkpoint", str(identity_ckpt), "--data", str(toy_root),
                       "--out", str(tmp_path / "ev"), "--dump-frames")
    assert code == 0
    report = parse_report((tmp_path / "ev" / "report.csv").read_text(), "csv")
    assert parse_report(out, "text") == report
    base = dataset_baseline(load_dataset(DatasetSpec(toy_root, "test")))
    assert report.aggregate["psnr"] == pytest.approx(base["psnr"], abs=1e-9)
    assert (tmp_path / "ev" / "report.json").exists()
    assert sorted(p.name for p in (tmp_path / "ev" / "output" / "scene_000").iterdir())[0] == "00000000.png"


def test_eval_from_training_checkpoint(tmp_path, capsys, toy_root):
    _, out, _ = run(capsys, *_train_args(toy_root, tmp_path / "r", "--total-steps", "1"))
    ckpt = json.loads(out)["checkpoint"]
    assert run(capsys, "eval", "--checkpoint", ckpt, "--data", str(toy_root), "--out", str(tmp_path / "ev"))[0] == 0


def test_eval_missing_checkpoint(tmp_path, capsys, toy_root):
    code, out, err = run(capsys, "eval", "--checkpoint", str(tmp_path / "none.mbp"), "--data", str(toy_root),
                         "--out", str(tmp_path / "ev"))
    assert code == 2 and "not found" in err and out == ""


def test_eval_corrupt_checkpoint(tmp_path, capsys, toy_root):
    bad = tmp_path / "bad.mbp"
    bad.write_bytes(b"not a checkpoint")
    assert run(capsys, "eval", "--checkpoint", str(bad), "--data", str(toy_root), "--out", str(tmp_path / "e"))[0] == 2


def _frame_dir(path, n=3, h=13, w=18, seed=0):
    path.mkdir(parents=True)
    r = np.random.default_rng(seed)
    for i in range(n):
        Image.fromarray(r.integers(0, 256, (h, w, 3), dtype=np.uint8)).save(path / f"f{i:03d}.png")
    return path


def test_infer_same_count_padded_and_deterministic(tmp_path, capsys, random_ckpt):
    src = _frame_dir(tmp_path / "in")
    outs = []
    for name in ("o1", "o2"):
        code, out, _ = run(capsys, "infer", "--checkpoint", str(random_ckpt), "--input", str(src),
                           "--output", str(tmp_path / name))
        assert code == 0 and json.loads(out)["frames"] == 3
        files = sorted((tmp_path / name).iterdir())
        assert [f.name for f in files] == ["f000.png", "f001.png", "f002.png"]
        outs.append([np.asarray(Image.open(f)) for f in files])
    assert outs[0][0].shape == (13, 18, 3)
    for a, b in zip(*outs):
        assert np.array_equal(a, b)


def test_infer_identity_round_trips_frames(tmp_path, capsys, identity_ckpt):
    src = _frame_dir(tmp_path / "in", n=2)
    assert run(capsys, "infer", "--checkpoint", str(identity_ckpt), "--input", str(src),
               "--output", str(tmp_path / "o"))[0] == 0
    for f in sorted(src.iterdir()):
        assert np.array_equal(np.asarray(Image.open(f)), np.asarray(Image.open(tmp_path / "o" / f.name)))


def test_infer_tiled(tmp_path, capsys, identity_ckpt):
    src = _frame_dir(tmp_path / "in", n=2, h=70, w=90)
    code, out, _ = run(capsys, "infer", "--checkpoint", str(identity_ckpt), "--input", str(src),
                       "--output", str(tmp_path / "o"), "--max-pixels", "2000", "--tile", "40")
    assert code == 0 and json.loads(out)["tiled"] is True


def test_infer_input_errors(tmp_path, capsys, identity_ckpt):
    (tmp_path / "empty").mkdir()
    assert run(capsys, "infer", "--checkpoint", str(identity_ckpt), "--input", str(tmp_path / "empty"),
               "--output", str(tmp_path / "o"))[0] == 2
    mixed = _frame_dir(tmp_path / "mixed", n=1)
    Image.fromarray(np.zeros((5, 5, 3), dtype=np.uint8)).save(mixed / "z.png")
    code, _, err = run(capsys, "infer", "--checkpoint", str(identity_ckpt), "--input", str(mixed),
                       "--output", str(tmp_path / "o"))
    assert code == 2 and "differing sizes" in err


# --- params ------------------------------------------------------------------------

def test_params_default_is_near_published(capsys):
    code, out, _ = run(capsys, "params", "--json")
    rec = json.loads(out)
    assert code == 0 and rec["variant"] == "rnn_mbp" and rec["published"] == 16_370_000
    assert abs(rec["relative_deviation"]) <= 0.20


def test_params_tiny_matches_enumeration(capsys):
    code, out, _ = run(capsys, "params", "--json", "--channels", "2", "--reduction", "2", "--level-multipliers",
                       "1 1 1")
    assert code == 0 and json.loads(out)["params"] == count_parameters(ModelConfig(2, 2, level_multipliers=(1, 1, 1)))
    code, out, _ = run(capsys, "params", "--channels", "4", "--reduction", "2")
    assert code == 0 and out.startswith("rnn_mbp: ")


def test_params_unknown_variant_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["params", "--variant", "transformer"])
    assert exc.value.code == 2


def test_params_bad_config_exit_2(capsys):
    code, _, err = run(capsys, "params", "--channels", "30", "--reduction", "16")
    assert code == 2 and "reduction" in err


def test_runtime_failure_is_exit_1(tmp_path, capsys, identity_ckpt, monkeypatch):
    import rnnmbp.metrics as metrics

    def boom(*a, **k):
        raise RuntimeError("simulated failure")

    monkeypatch.setattr(metrics, "restore_sequence", boom)
    src = _frame_dir(tmp_path / "in", n=1)
    code, _, err = run(capsys, "infer", "--checkpoint", str(identity_ckpt), "--input", str(src),
                       "--output", str(tmp_path / "o"))
    assert code == 1 and "simulated failure" in err
