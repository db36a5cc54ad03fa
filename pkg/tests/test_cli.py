import csv
import json
import os
from importlib import resources

import pytest

from lamlab import cli

MODEL = {"horizontal": {"builtin": "disagreement", "nspin": 2}, "lambda": 2.0, "l": 2, "rbar": 1.5, "beta": 0.4}


def bundled(name):
    return str(resources.files("lamlab") / "data" / name)


def write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(doc if isinstance(doc, str) else json.dumps(doc, indent=2))
    return str(p)


def test_ground_states_bundled(tmp_path):
    assert cli.run(["ground-states", "--config", bundled("ising_ground_states.json"), "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "ground_states.json").read_text())
    assert sorted(doc["ground_states"]) == [[0], [1]]
    assert doc["peierls_c"] == "1/2"
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert set(man["outputs"]) == {"ground_states.json"}


def test_exact_z_bundled(tmp_path):
    assert cli.run(["exact-z", "--config", bundled("exact_z_tiny.json"), "--out", str(tmp_path)]) == 0
    with open(tmp_path / "exact_z.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3 * 2 * 2 * 2
    assert max(float(r["residual"]) for r in rows) <= 1e-9


def test_unknown_command_is_usage_error(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.run(["frobnicate", "--config", "x", "--out", str(tmp_path)])
    assert exc.value.code == cli.EXIT_USAGE


def test_malformed_json_reports_position(tmp_path, capsys):
    path = write(tmp_path, '{\n  "schema": "lamlab.transfer/1",\n  "widths": [4,,]\n}')
    assert cli.run(["transfer", "--config", path, "--out", str(tmp_path / "o")]) == cli.EXIT_VALIDATION
    assert f"{path}:3:" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_unknown_key_points_at_key(tmp_path, capsys):
    text = json.dumps({"schema": "lamlab.transfer/1", "model": MODEL, "widths": [4], "bogus": 1}, indent=2)
    path = write(tmp_path, text)
    assert cli.run(["transfer", "--config", path, "--out", str(tmp_path)]) == cli.EXIT_VALIDATION
    line = text.splitlines().index('  "bogus": 1') + 1
    assert f"{path}:{line}:" in capsys.readouterr().err


def test_schema_type_error(tmp_path, capsys):
    path = write(tmp_path, {"schema": "lamlab.transfer/1", "model": MODEL, "widths": ["four"]})
    assert cli.run(["transfer", "--config", path, "--out", str(tmp_path)]) == cli.EXIT_VALIDATION
    assert "widths/0" in capsys.readouterr().err


def test_capacity_exit_code(tmp_path, capsys):
    path = write(tmp_path, {"schema": "lamlab.transfer/1", "model": MODEL, "widths": [40]})
    assert cli.run(["transfer", "--config", path, "--out", str(tmp_path)]) == cli.EXIT_CAPACITY
    assert "cap" in capsys.readouterr().err


def test_manifest_digest_ignores_key_order(tmp_path):
    a = {"schema": "lamlab.transfer/1", "model": MODEL, "widths": [3]}
    b = {"widths": [3], "model": dict(reversed(list(MODEL.items()))), "schema": "lamlab.transfer/1"}
    digests = []
    for k, doc in enumerate((a, b)):
        out = tmp_path / f"o{k}"
        assert cli.run(["transfer", "--config", write(tmp_path, doc, f"{k}.json"), "--out", str(out)]) == 0
        man = json.loads((out / "manifest.json").read_text())
        digests.append((man["config_digest"], man["outputs"]["transfer.csv"]))
        assert man["tool_version"] and man["environment"]["rng"] == "numpy.random.Philox"
    assert digests[0] == digests[1]


def test_csv_is_lf_and_plain_numbers(tmp_path):
    path = write(tmp_path, {"schema": "lamlab.transfer/1", "model": MODEL, "widths": [3], "lambda": [0, 1]})
    assert cli.run(["transfer", "--config", path, "--out", str(tmp_path)]) == 0
    raw = (tmp_path / "transfer.csv").read_bytes()
    assert b"\r" not in raw and b"np." not in raw
    rows = list(csv.reader(raw.decode().splitlines()))
    assert rows[0] == ["width", "beta", "lambda", "free_energy", "energy"]
    assert all(float(x) == float(x) for x in rows[1][1:])


def test_atomic_write_leaves_no_temporaries(tmp_path):
    target = tmp_path / "sub" / "f.txt"
    cli.atomic_write(target, "one\n")
    cli.atomic_write(target, "two\n")
    assert target.read_text() == "two\n"
    assert os.listdir(target.parent) == ["f.txt"]


def test_atomic_write_keeps_old_file_on_failure(tmp_path):
    target = tmp_path / "f.txt"
    cli.atomic_write(target, "old")
    with pytest.raises(TypeError):
        cli.atomic_write(target, object())
    assert target.read_text() == "old"
    assert os.listdir(tmp_path) == ["f.txt"]


def test_coarse_grain_cache(tmp_path, monkeypatch):
    cache = tmp_path / "cache"
    monkeypatch.setenv("LAMLAB_CACHE", str(cache))
    path = write(tmp_path, {"schema": "lamlab.coarse-grain/1",
                            "hamiltonian": {"builtin": "disagreement", "nspin": 2}, "block_size": 3})
    assert cli.run(["coarse-grain", "--config", path, "--out", str(tmp_path / "a")]) == 0
    files = list(cache.iterdir())
    assert len(files) == 1 and files[0].name.startswith("blockmodel-")
    assert cli.run(["coarse-grain", "--config", path, "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "block_model.json").read_text() == (tmp_path / "b" / "block_model.json").read_text()


def test_sample_seed_override_is_reproducible(tmp_path):
    doc = {"schema": "lamlab.sample/1", "model": MODEL,
           "chain": {"shape": [6, 4], "q": 0, "sweeps": 40, "thermalization": 10, "stride": 5, "seed": 1}}
    path = write(tmp_path, doc)
    texts = []
    for k, seed in enumerate((7, 7, 8)):
        out = tmp_path / f"o{k}"
        assert cli.run(["sample", "--config", path, "--out", str(out), "--seed", str(seed)]) == 0
        texts.append((out / "measurements.csv").read_text())
        assert json.loads((out / "manifest.json").read_text())["seeds"] == [seed]
    assert texts[0] == texts[1] != texts[2]


def test_scan_outputs(tmp_path):
    doc = {"schema": "lamlab.scan/1", "model": MODEL, "lambda_grid": [0, 6], "shape": [8, 8],
           "seeds": [1, 2], "sweeps": 100, "thermalization": 20, "stride": 20}
    assert cli.run(["scan", "--config", write(tmp_path, doc), "--out", str(tmp_path), "--threads", "2"]) == 0
    with open(tmp_path / "scan.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2 * 2 * 2 * 4
    with open(tmp_path / "chains.csv", newline="") as fh:
        assert len(list(csv.DictReader(fh))) == 8
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert [d["lambda"] for d in summary["dependence"]] == [0.0, 6.0]
