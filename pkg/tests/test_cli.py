import json
import subprocess
import sys

import numpy as np
import pytest

from setok import tensor_io
from setok.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def gen_fixture(capsys, out_dir, blobs=3, seed=0, h=12, w=12, d=8):
    code, out, _ = run_cli(
        capsys, "gen-fixture", "--out-dir", str(out_dir), "--blobs", str(blobs),
        "--h", str(h), "--w", str(w), "--d", str(d), "--seed", str(seed),
    )
    assert code == 0
    return json.loads(out)


def test_gen_fixture_writes_files(tmp_path, capsys):
    summary = gen_fixture(capsys, tmp_path / "f")
    assert (tmp_path / "f" / "grid.setk").exists()
    assert (tmp_path / "f" / "ref.setk").exists()
    assert summary["blobs"] == 3
    assert summary["min_sep"] >= 10.0 * (1 - 1e-9)


def test_gen_fixture_deterministic_bytes(tmp_path, capsys):
    gen_fixture(capsys, tmp_path / "a", seed=5)
    gen_fixture(capsys, tmp_path / "b", seed=5)
    for name in ("grid.setk", "ref.setk", "meta.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_gen_fixture_single_blob_reference(tmp_path, capsys):
    gen_fixture(capsys, tmp_path / "f", blobs=1, h=4, w=4, d=2, seed=1)
    ref = tensor_io.read_array(tmp_path / "f" / "ref.setk")
    assert ref.shape == (4, 4, 1)
    assert (ref == 1.0).all()


def test_tokenize_on_fixture(tmp_path, capsys):
    gen_fixture(capsys, tmp_path / "f", blobs=3, seed=2)
    code, out, _ = run_cli(
        capsys, "tokenize", "--input", str(tmp_path / "f" / "grid.setk"),
        "--out-dir", str(tmp_path / "o"), "--ppm",
    )
    assert code == 0
    summary = json.loads(out)
    assert summary["k"] == 3
    masks = tensor_io.load_mask_stack(tmp_path / "o" / "masks.setk")
    assert masks.k_clusters == 3
    tokens = tensor_io.read_array(tmp_path / "o" / "tokens.setk")
    assert tokens.shape == (masks.k, 8)
    assert (tmp_path / "o" / "masks.ppm").read_bytes().startswith(b"P6\n12 12\n255\n")


def test_tokenize_soft_sums_in_file(tmp_path, capsys):
    gen_fixture(capsys, tmp_path / "f", blobs=2, seed=3)
    code, out, _ = run_cli(
        capsys, "tokenize", "--input", str(tmp_path / "f" / "grid.setk"),
        "--out-dir", str(tmp_path / "o"), "--mode", "soft",
    )
    assert code == 0
    masks = tensor_io.read_array(tmp_path / "o" / "masks.setk").astype(np.float64)
    assert np.abs(masks.sum(axis=0) - 1.0).max() <= 1e-6


def test_tokenize_deterministic_output_bytes(tmp_path, capsys):
    gen_fixture(capsys, tmp_path / "f", blobs=3, seed=4)
    outs = []
    for name in ("o1", "o2"):
        code, out, _ = run_cli(
            capsys, "tokenize", "--input", str(tmp_path / "f" / "grid.setk"),
            "--out-dir", str(tmp_path / name), "--ppm",
        )
        assert code == 0
        outs.append(json.loads(out))
    for fname in ("masks.setk", "masks.meta.jsonl", "tokens.setk",
                  "tokens.sources.json", "masks.ppm"):
        assert (tmp_path / "o1" / fname).read_bytes() == (tmp_path / "o2" / fname).read_bytes()
    for summary in outs:
        summary.pop("wall_ms")
        summary.pop("outputs")
    assert outs[0] == outs[1]


def test_merge_command_matches_tokenize(tmp_path, capsys):
    gen_fixture(capsys, tmp_path / "f", blobs=2, seed=6)
    run_cli(capsys, "tokenize", "--input", str(tmp_path / "f" / "grid.setk"),
            "--out-dir", str(tmp_path / "t"))
    code, out, _ = run_cli(
        capsys, "merge", "--input", str(tmp_path / "f" / "grid.setk"),
        "--masks", str(tmp_path / "t" / "masks.setk"),
        "--out-dir", str(tmp_path / "m"),
    )
    assert code == 0
    a = (tmp_path / "t" / "tokens.setk").read_bytes()
    b = (tmp_path / "m" / "tokens.setk").read_bytes()
    assert a == b


def test_tokenize_with_weight_bundle(tmp_path, capsys):
    from setok import merger

    merger.save_weights(merger.seeded_weights(8, seed=3), tmp_path / "bundle")
    gen_fixture(capsys, tmp_path / "f", blobs=2, seed=8)
    code, out, _ = run_cli(
        capsys, "tokenize", "--input", str(tmp_path / "f" / "grid.setk"),
        "--out-dir", str(tmp_path / "o"), "--weights", str(tmp_path / "bundle"),
    )
    assert code == 0
    tokens = tensor_io.read_array(tmp_path / "o" / "tokens.setk")
    assert tokens.shape[1] == 8
    # a different bundle changes the pooled tokens
    merger.save_weights(merger.seeded_weights(8, seed=4), tmp_path / "bundle2")
    run_cli(capsys, "tokenize", "--input", str(tmp_path / "f" / "grid.setk"),
            "--out-dir", str(tmp_path / "o2"), "--weights", str(tmp_path / "bundle2"))
    other = tensor_io.read_array(tmp_path / "o2" / "tokens.setk")
    assert not (tokens == other).all()


def test_metrics_identical_masks(tmp_path, capsys):
    gen_fixture(capsys, tmp_path / "f", blobs=3, seed=7)
    run_cli(capsys, "tokenize", "--input", str(tmp_path / "f" / "grid.setk"),
            "--out-dir", str(tmp_path / "o"))
    code, out, _ = run_cli(
        capsys, "metrics", "--input", str(tmp_path / "o" / "masks.setk"),
        "--ref", str(tmp_path / "f" / "ref.setk"),
    )
    assert code == 0
    report = json.loads(out)
    assert report["miou"] == 1.0
    assert report["dice"] == pytest.approx(0.0, abs=1e-9)
    assert report["kl"] == pytest.approx(0.0, abs=1e-9)
    assert report["k_pred"] == 3 and report["k_ref"] == 3


def test_bench_command(tmp_path, capsys):
    for i in range(3):
        gen_fixture(capsys, tmp_path / "fixtures" / f"f{i}", blobs=2 + i, seed=10 + i)
    spec = json.dumps([
        {"kind": "dynamic_hard"},
        {"kind": "fixed", "k": 4},
    ])
    code, out, err = run_cli(
        capsys, "bench", "--input", str(tmp_path / "fixtures"),
        "--out-dir", str(tmp_path / "bench"), "--spec", spec, "--merge", "mean",
    )
    assert code == 0
    summary = json.loads(out)
    assert summary["n_grids"] == 3
    csv_text = (tmp_path / "bench" / "bench.csv").read_text()
    lines = csv_text.strip().split("\n")
    assert lines[0] == "mechanism,avg_k,min_k,max_k,wall_ms_mean,miou,dice"
    assert len(lines) == 3
    fixed_row = lines[2].split(",")
    assert fixed_row[2] == fixed_row[3] == "4"
    assert "seed score" in err  # thresholding statement in the report header


def test_bench_deterministic_except_timing(tmp_path, capsys):
    for i in range(2):
        gen_fixture(capsys, tmp_path / "fixtures" / f"f{i}", blobs=2 + i, seed=20 + i)
    spec = json.dumps({"kind": "dynamic_hard"})
    csvs = []
    for name in ("b1", "b2"):
        code, _, _ = run_cli(
            capsys, "bench", "--input", str(tmp_path / "fixtures"),
            "--out-dir", str(tmp_path / name), "--spec", spec, "--merge", "mean",
        )
        assert code == 0
        csvs.append((tmp_path / name / "bench.csv").read_text())

    def strip_timing(text):
        rows = [line.split(",") for line in text.strip().split("\n")]
        return [r[:4] + r[5:] for r in rows]

    assert strip_timing(csvs[0]) == strip_timing(csvs[1])


def test_missing_required_flag_is_usage_error(capsys):
    code = main(["tokenize", "--out-dir", "/tmp/x"])
    assert code == 2


def test_unknown_flag_is_usage_error(tmp_path, capsys):
    code = main(["gen-fixture", "--out-dir", str(tmp_path), "--blobs", "1",
                 "--frobnicate", "1"])
    assert code == 2


def test_missing_input_file_is_data_error(tmp_path, capsys):
    code = main(["tokenize", "--input", str(tmp_path / "nope.setk"),
                 "--out-dir", str(tmp_path / "o")])
    assert code == 3


def test_corrupt_input_is_data_error(tmp_path, capsys):
    bad = tmp_path / "bad.setk"
    bad.write_bytes(b"XXXX" + b"\x00" * 20)
    code = main(["tokenize", "--input", str(bad), "--out-dir", str(tmp_path / "o")])
    assert code == 3
    err = capsys.readouterr().err
    assert "tokenize" in err


def test_console_entry_point(tmp_path):
    result = subprocess.run(
        [sys.executable, "-m", "setok", "gen-fixture", "--out-dir", str(tmp_path),
         "--blobs", "2", "--seed", "1"],
        capture_output=True, text=True,
    )
    assert result.returncode == 0
    summary = json.loads(result.stdout)
    assert summary["command"] == "gen-fixture"


def test_help_exits_zero():
    result = subprocess.run(
        [sys.executable, "-m", "setok", "--help"], capture_output=True, text=True
    )
    assert result.returncode == 0
    assert "tokenize" in result.stdout
