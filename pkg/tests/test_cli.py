"""End-to-end tests for the command-line interface."""

import json

import numpy as np
import pytest

from stereoqa.audio_io import save_wav
from stereoqa.checkpoint import save_checkpoint
from stereoqa.cli import main
from stereoqa.gammatone import read_gtsg
from stereoqa.model import build_model, mono_config

from conftest import make_noise, reduced_config


@pytest.fixture(scope="module")
def reduced_ckpt(tmp_path_factory):
    """Untrained reduced checkpoint for plumbing tests."""
    path = tmp_path_factory.mktemp("cli") / "reduced.ckpt"
    model = build_model(reduced_config(), seed=0)
    model.set_normalization(np.full(32, -50.0), np.full(32, 20.0))
    save_checkpoint(model, path)
    return path


@pytest.fixture(scope="module")
def wav_pair(tmp_path_factory):
    root = tmp_path_factory.mktemp("wavs")
    ref = root / "ref.wav"
    cod = root / "cod.wav"
    save_wav(ref, make_noise(0.7, seed=0))
    save_wav(cod, make_noise(0.7, seed=1))
    return ref, cod


class TestScore:
    def test_prints_one_decimal(self, reduced_ckpt, wav_pair, capsys):
        ref, cod = wav_pair
        assert main(["score", str(ref), str(cod), "-m", str(reduced_ckpt)]) == 0
        out = capsys.readouterr().out.strip()
        value = float(out)
        assert 0.0 <= value <= 100.0
        assert "." in out and len(out.split(".")[1]) == 1

    def test_json_single_line(self, reduced_ckpt, wav_pair, capsys):
        ref, cod = wav_pair
        assert main(["score", str(ref), str(cod), "-m", str(reduced_ckpt), "--json"]) == 0
        out = capsys.readouterr().out.strip()
        assert "\n" not in out
        payload = json.loads(out)
        assert set(payload) == {"score", "raw_score", "frames", "model_version"}
        assert payload["frames"] == 35  # 0.7 s => ceil(33600/960)
        assert payload["model_version"] == 1

    def test_mono_without_flag_is_usage_error(self, reduced_ckpt, tmp_path, capsys):
        mono = tmp_path / "m.wav"
        save_wav(mono, make_noise(0.4, seed=2, channels=1))
        code = main(["score", str(mono), str(mono), "-m", str(reduced_ckpt)])
        assert code == 2
        assert "dual-mono" in capsys.readouterr().err

    def test_mono_with_flag(self, reduced_ckpt, tmp_path, capsys):
        mono = tmp_path / "m.wav"
        save_wav(mono, make_noise(0.4, seed=2, channels=1))
        assert main(["score", str(mono), str(mono), "-m", str(reduced_ckpt), "--dual-mono"]) == 0

    def test_missing_file_is_operational_error(self, reduced_ckpt, capsys):
        code = main(["score", "absent.wav", "absent.wav", "-m", str(reduced_ckpt)])
        assert code == 1
        assert "error" in capsys.readouterr().err

    def test_trained_model_self_similarity(self, trained_desk, desk_split, capsys):
        # a coded signal identical to its reference should score near the top
        _, held_rows = desk_split
        ref = next(r.ref_path for r in held_rows if r.codec == "reference")
        code = main(["score", ref, ref, "-m", str(trained_desk["checkpoint"])])
        assert code == 0
        assert float(capsys.readouterr().out.strip()) >= 95.0


class TestTrain:
    def test_train_writes_checkpoint_and_history(self, tiny_dataset, tmp_path, capsys):
        manifest, _ = tiny_dataset
        cfg = tmp_path / "train.json"
        cfg.write_text(json.dumps(
            {"epochs_per_fold": 1, "folds": 2, "batch_size": 4, "seed": 1}
        ))
        out = tmp_path / "model.ckpt"
        code = main(["train", str(manifest), "--config", str(cfg), "--out", str(out)])
        assert code == 0
        assert out.exists()
        history = out.with_suffix(".history.csv")
        assert history.exists()
        lines = history.read_text().strip().splitlines()
        epoch_rows = [l for l in lines[1:] if l.split(",")[4] != ""]
        assert len(epoch_rows) == 2  # folds * epochs_per_fold

    def test_train_with_mono_init(self, tiny_dataset, tmp_path):
        manifest, _ = tiny_dataset
        mono_path = tmp_path / "mono.ckpt"
        save_checkpoint(build_model(mono_config(), seed=3), mono_path)
        cfg = tmp_path / "train.json"
        cfg.write_text(json.dumps(
            {"epochs_per_fold": 1, "folds": 1, "batch_size": 4, "seed": 1, "lr_swap": False}
        ))
        out = tmp_path / "model.ckpt"
        code = main([
            "train", str(manifest), "--config", str(cfg), "--out", str(out),
            "--init-from-mono", str(mono_path), "--transfer-mode", "mono-preserving",
        ])
        assert code == 0
        assert out.exists()

    def test_missing_manifest(self, tmp_path, capsys):
        code = main(["train", str(tmp_path / "nope.jsonl"), "--out", str(tmp_path / "m.ckpt")])
        assert code == 1


class TestEval:
    def test_eval_report(self, reduced_ckpt, tiny_dataset, tmp_path, capsys):
        manifest, rows = tiny_dataset
        json_out = tmp_path / "report.json"
        csv_out = tmp_path / "rows.csv"
        code = main([
            "eval", str(manifest), "-m", str(reduced_ckpt),
            "--json-out", str(json_out), "--csv-out", str(csv_out), "--threads", "2",
        ])
        assert code == 0
        out = capsys.readouterr().out
        assert "overall" in out
        assert "anchor3500" in out
        report = json.loads(json_out.read_text())
        assert {"n", "rp", "rs", "mse", "per_group"} == set(report)
        assert report["n"] == len(rows)
        assert len(csv_out.read_text().strip().splitlines()) == len(rows) + 1


class TestGen:
    def test_gen_deterministic(self, tmp_path, capsys):
        from stereoqa.synthetic import make_demo_sources

        make_demo_sources(tmp_path / "src", count=1, duration_s=0.3, seed=4)
        assert main(["gen", str(tmp_path / "src"), str(tmp_path / "a"), "--seed", "7"]) == 0
        assert main(["gen", str(tmp_path / "src"), str(tmp_path / "b"), "--seed", "7"]) == 0
        a = (tmp_path / "a" / "dataset.jsonl").read_bytes()
        b = (tmp_path / "b" / "dataset.jsonl").read_bytes()
        assert a == b

    def test_gen_empty_source(self, tmp_path):
        (tmp_path / "src").mkdir()
        assert main(["gen", str(tmp_path / "src"), str(tmp_path / "out")]) == 1


class TestSpectrogram:
    def test_header_and_shape(self, tmp_path, capsys):
        wav = tmp_path / "x.wav"
        save_wav(wav, make_noise(1.0, seed=5, channels=1))
        out = tmp_path / "x.gtsg"
        assert main(["spectrogram", str(wav), str(out)]) == 0
        matrix = read_gtsg(out)
        assert matrix.shape == (32, 50)

    def test_stereo_uses_mid(self, tmp_path):
        wav = tmp_path / "x.wav"
        save_wav(wav, make_noise(0.5, seed=6, channels=2))
        out = tmp_path / "x.gtsg"
        assert main(["spectrogram", str(wav), str(out)]) == 0
        assert read_gtsg(out).shape == (32, 25)

    def test_missing_file(self, tmp_path):
        assert main(["spectrogram", str(tmp_path / "nope.wav"), str(tmp_path / "o.gtsg")]) == 1


class TestHelp:
    @pytest.mark.parametrize(
        "cmd", ["score", "train", "eval", "gen", "spectrogram"]
    )
    def test_subcommand_help_exits_zero(self, cmd, capsys):
        with pytest.raises(SystemExit) as exc:
            main([cmd, "--help"])
        assert exc.value.code == 0
        assert "usage" in capsys.readouterr().out

    def test_no_command_is_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2
