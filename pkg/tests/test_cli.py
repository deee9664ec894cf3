import io
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pytest

import cpcf.continual
from cpcf.cli import (
    CSV_HEADER,
    EXIT_ABORT,
    EXIT_CONFIG,
    EXIT_DATA,
    ExperimentConfig,
    blob_corpus,
    load_config,
    main,
    read_runlog,
)
from cpcf.data import read_blobs_csv
from cpcf.errors import CsvFormatError, NumericalAbort

REPO_DATA = Path(__file__).resolve().parents[1] / "data"
SVG = "{http://www.w3.org/2000/svg}"

# small and fast; still the full 6-task layout
QUICK = ["--dataset", "blobs", "--lr", "1e-3", "--base-epochs", "2", "--incr-epochs", "2",
         "--blob-per-class", "60", "--blob-test-per-class", "15", "--hidden", "32,16", "--fisher-samples", "200"]


def run_cli(*args):
    return main([str(a) for a in args])


def data_lines(path):
    return [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")][1:]


def only_csv(d):
    (path,) = [p for p in Path(d).glob("*.csv") if not p.name.endswith(".omega.csv")]
    return path


def test_run_is_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert run_cli("run", *QUICK, "--seed", 3, "--output-dir", tmp_path / name) == 0
    a, b = only_csv(tmp_path / "a"), only_csv(tmp_path / "b")
    assert a.name == b.name and a.read_bytes() == b.read_bytes()
    assert (tmp_path / "a" / a.name.replace(".csv", ".omega.csv")).read_bytes() == \
        (tmp_path / "b" / b.name.replace(".csv", ".omega.csv")).read_bytes()


def test_csv_layout(tmp_path):
    assert run_cli("run", *QUICK, "--output-dir", tmp_path) == 0
    lines = only_csv(tmp_path).read_text().splitlines()
    assert lines[0] == "# cpcf runlog"
    header_at = lines.index(CSV_HEADER)
    echo = dict(ln[2:].split("=", 1) for ln in lines[1:header_at])
    assert echo["input_dim"] == "20" and echo["lam"] == "20000.0" and echo["hidden"] == "32,16"
    rows = [ln.split(",") for ln in lines[header_at + 1:]]
    assert len(rows) == 1 + 5 * 2
    base = rows[0]
    assert base[4:6] == ["0", "2"] and base[6] == "" and base[8] == "" and base[9] == ""
    assert all(len(r) == 14 and r[6] and r[8] for r in rows[1:])
    # 10 significant digits at most
    assert all(len(v.replace(".", "").lstrip("0")) <= 10 for r in rows for v in r[6:10] if v)


def test_rerun_from_echo_block(tmp_path):
    assert run_cli("run", *QUICK, "--method", "ewc_multi", "--lambda", "5", "--output-dir", tmp_path / "a") == 0
    first = only_csv(tmp_path / "a")
    assert run_cli("run", "--config", first, "--output-dir", tmp_path / "b") == 0
    assert only_csv(tmp_path / "b").read_bytes() == first.read_bytes()


def test_config_file_and_overrides(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("# comment\ndataset = blobs\nlambda=7\nseed=1,2\nalpha=0.05\n")
    c = load_config(str(cfg), {"alpha": "0.2"})
    assert (c.dataset, c.lam, c.seed, c.alpha) == ("blobs", 7.0, (1, 2), (0.2,))
    assert len(c.cells()) == 2
    cfg.write_text("colour=blue\n")
    assert run_cli("run", "--config", cfg) == EXIT_CONFIG
    assert run_cli("run", "--alpha", "abc") == EXIT_CONFIG
    assert run_cli("run", "--calib-ratio", "1.5") == EXIT_CONFIG


def test_defaults_match_reference_curriculum():
    c = ExperimentConfig()
    assert (c.alpha, c.calib_ratio, c.lr, c.base_epochs, c.incr_epochs) == ((0.1,), (0.1,), (2e-5,), 8, 3)


def test_mnist_default_row_count(tmp_path):
    assert run_cli("run", "--data-dir", REPO_DATA, "--output-dir", tmp_path) == 0
    path = only_csv(tmp_path)
    assert len(data_lines(path)) == 16
    assert "# input_dim=784" in path.read_text()


def test_data_dir_from_environment(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("CPCF_DATA_DIR", str(tmp_path / "nowhere"))
    assert run_cli("run", "--output-dir", tmp_path) == EXIT_DATA
    err = capsys.readouterr().err
    assert str(tmp_path / "nowhere" / "mnist" / "train-images-idx3-ubyte") in err


def cifar_fixture(root):
    d = root / "cifar10"
    d.mkdir(parents=True)
    rng = np.random.default_rng(0)

    def batch(per_class):
        labels = np.repeat(np.arange(10), per_class)
        return b"".join(bytes([int(c)]) + rng.integers(0, 256, 3072, dtype=np.uint8).tobytes() for c in labels)

    for i in range(1, 6):
        (d / f"data_batch_{i}.bin").write_bytes(batch(2))
    (d / "test_batch.bin").write_bytes(batch(2))


def test_cifar_records_input_dim(tmp_path):
    cifar_fixture(tmp_path / "data")
    rc = run_cli("run", "--dataset", "cifar10", "--data-dir", tmp_path / "data", "--base-epochs", 1,
                 "--incr-epochs", 1, "--fisher-samples", 10, "--output-dir", tmp_path / "out")
    assert rc == 0
    text = only_csv(tmp_path / "out").read_text()
    assert "# input_dim=1024" in text
    assert len(data_lines(only_csv(tmp_path / "out"))) == 6


def test_numerical_abort_keeps_prefix(tmp_path, monkeypatch):
    real = cpcf.continual.train_epoch
    calls = {"n": 0}

    def flaky(*args, **kw):
        calls["n"] += 1
        if calls["n"] > 4:
            raise NumericalAbort("loss became nan")
        return real(*args, **kw)

    monkeypatch.setattr(cpcf.continual, "train_epoch", flaky)
    assert run_cli("run", *QUICK, "--output-dir", tmp_path) == EXIT_ABORT
    rows = data_lines(only_csv(tmp_path))
    # 2 base epochs, then 2 epochs of task 1 logged before the abort
    assert len(rows) == 3
    assert read_runlog(only_csv(tmp_path)).records[-1].task_index == 1


def test_sweep_one_by_one_reduces_to_run(tmp_path):
    assert run_cli("run", *QUICK, "--output-dir", tmp_path / "run") == 0
    assert run_cli("sweep", *QUICK, "--output-dir", tmp_path / "sweep") == 0
    run_csv = only_csv(tmp_path / "run")
    assert (tmp_path / "sweep" / run_csv.name).read_bytes() == run_csv.read_bytes()
    for table in ("table2.csv", "table3.csv"):
        lines = (tmp_path / "sweep" / table).read_text().splitlines()
        assert len(lines) == 2 and lines[1].startswith("0.1,MLP,")


@pytest.fixture(scope="module")
def grid(tmp_path_factory):
    out = tmp_path_factory.mktemp("grid")
    args = ["sweep", *QUICK, "--base-epochs", "1", "--incr-epochs", "1", "--method", "plain,ewc_single",
            "--calib-ratio", "0.05,0.1,0.15,0.2", "--alpha", "0.1,0.2"]
    assert run_cli(*args, "--output-dir", out / "serial") == 0
    reordered = ["sweep", *QUICK, "--base-epochs", "1", "--incr-epochs", "1", "--method", "ewc_single,plain",
                 "--calib-ratio", "0.2,0.15,0.1,0.05", "--alpha", "0.2,0.1", "--workers", "3"]
    assert run_cli(*reordered, "--output-dir", out / "pool") == 0
    return out


def test_table2_shape(grid):
    lines = (grid / "serial" / "table2.csv").read_text().splitlines()
    assert lines[0] == "group,method,mnist,cifar10,fashionmnist,kmnist,blobs"
    assert [ln.split(",")[:2] for ln in lines[1:]] == [
        [r, m] for r in ("0.05", "0.1", "0.15", "0.2") for m in ("MLP", "EWC")
    ]
    t3 = (grid / "serial" / "table3.csv").read_text().splitlines()
    assert [ln.split(",")[0] for ln in t3[1:]] == ["0.1", "0.1", "0.2", "0.2"]


def test_sweep_order_independent(grid):
    for name in ("table2.csv", "table3.csv"):
        assert (grid / "serial" / name).read_bytes() == (grid / "pool" / name).read_bytes()
    serial = sorted(p.name for p in (grid / "serial").glob("*.csv"))
    assert serial == sorted(p.name for p in (grid / "pool").glob("*.csv"))
    for name in serial:
        assert (grid / "serial" / name).read_bytes() == (grid / "pool" / name).read_bytes()


def test_sweep_continues_past_failed_cells(tmp_path, monkeypatch, capsys):
    real = cpcf.continual.run_curriculum

    def picky(config, stream, hooks=None):
        if config.method == "ewc_single":
            raise NumericalAbort("boom")
        return real(config, stream, hooks)

    monkeypatch.setattr("cpcf.cli.run_curriculum", picky)
    rc = run_cli("sweep", *QUICK, "--method", "plain,ewc_single", "--output-dir", tmp_path)
    assert rc == EXIT_ABORT
    out = capsys.readouterr()
    assert "1 of 2 cells ok" in out.out and "ewc_single" in out.err
    assert "MLP" in (tmp_path / "table2.csv").read_text()


def parse_svg(path):
    root = ET.parse(path).getroot()
    assert root.tag == SVG + "svg"
    return root


def test_plot_two_runs(tmp_path):
    for m in ("plain", "ewc_single"):
        assert run_cli("run", *QUICK, "--method", m, "--output-dir", tmp_path / "runs") == 0
    csvs = sorted(p for p in (tmp_path / "runs").glob("*.csv") if not p.name.endswith(".omega.csv"))
    assert run_cli("plot", *csvs, "--out", tmp_path / "svg") == 0
    acc = parse_svg(tmp_path / "svg" / "accuracy.svg")
    assert len(acc.findall(f"{SVG}polyline")) == 4
    labels = [t.text for t in acc.findall(f"{SVG}text")]
    assert "MLP s0 a_prev" in labels and "EWC s0 a_new" in labels
    cp = parse_svg(tmp_path / "svg" / "cpcf.svg")
    assert len(cp.findall(f"{SVG}polyline")) == 2
    assert len(parse_svg(tmp_path / "svg" / "lr.svg").findall(f"{SVG}polyline")) == 2


def test_plot_empty_log(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("# cpcf runlog\n" + CSV_HEADER + "\n")
    assert run_cli("plot", empty, "--out", tmp_path / "svg") == 0
    root = parse_svg(tmp_path / "svg" / "accuracy.svg")
    assert not root.findall(f"{SVG}polyline")
    assert any(t.text and "Accuracy" in t.text for t in root.findall(f"{SVG}text"))


def test_malformed_csv_names_line(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("# cpcf runlog\n# seed=0\n" + CSV_HEADER + "\nr,0,blobs,plain,0,8,,1,,,0.1,0.1,0.001,0\nr,0,blobs\n")
    with pytest.raises(CsvFormatError) as info:
        read_runlog(bad)
    assert info.value.line == 5
    assert run_cli("plot", bad, "--out", tmp_path / "svg") == EXIT_DATA
    assert "line 5" in capsys.readouterr().err
    bad.write_text("run_id,seed\n")
    with pytest.raises(CsvFormatError, match="line 1"):
        read_runlog(bad)
    bad.write_text(CSV_HEADER + "\nr,0,blobs,plain,zero,8,,1,,,0.1,0.1,0.001,0\n")
    with pytest.raises(CsvFormatError, match="line 2: column task_index"):
        read_runlog(bad)


def test_verify(tmp_path, capsys):
    assert run_cli("run", *QUICK, "--output-dir", tmp_path) == 0
    good = only_csv(tmp_path)
    assert run_cli("verify", good) == 0
    lines = good.read_text().splitlines()
    row = lines[-1].split(",")
    row[8] = "11"
    (tmp_path / "tampered.txt").write_text("\n".join(lines[:-1] + [",".join(row)]) + "\n")
    assert run_cli("verify", tmp_path / "tampered.txt") == EXIT_DATA
    assert "outside [1, 10]" in capsys.readouterr().out
    (tmp_path / "short.txt").write_text("\n".join(lines[:-2]) + "\n")
    assert run_cli("verify", tmp_path / "short.txt") == EXIT_DATA
    assert "cadence implies 11" in capsys.readouterr().out


def test_synth_matches_run_corpus(tmp_path):
    assert run_cli("synth", "--blob-dim", 6, "--blob-per-class", 5, "--blob-test-per-class", 2,
                   "--output-dir", tmp_path) == 0
    cfg = ExperimentConfig(blob_dim=6, blob_per_class=5, blob_test_per_class=2)
    train, test = blob_corpus(cfg)
    back = read_blobs_csv(io.StringIO((tmp_path / "blobs_train.csv").read_text()))
    assert np.array_equal(back.x, train.x) and np.array_equal(back.y, train.y)
    assert len(read_blobs_csv(io.StringIO((tmp_path / "blobs_test.csv").read_text()))) == len(test)
