import csv
import json

import pytest

from pshape.cli import main
from pshape.pipeline import CSV_COLUMNS


def _read_csv(path):
    lines = path.read_text().splitlines()
    header = [ln for ln in lines if ln.startswith("#")]
    rows = list(csv.reader(ln for ln in lines if not ln.startswith("#")))
    return header, rows[0], rows[1:]


def test_build_tree_reproduces_fixture(tmp_path, data_dir):
    out = tmp_path / "small.tree"
    assert main(["build-tree", str(data_dir / "small_tree.spec"), "-o", str(out)]) == 0
    # the spec's leading comment is carried over, the body matches the fixture byte for byte
    body = "".join(ln for ln in out.read_text().splitlines(keepends=True) if not ln.startswith("#"))
    assert body == (data_dir / "small_tree.tree").read_text()


def test_inspect_tree(capsys, data_dir):
    assert main(["inspect-tree", str(data_dir / "small_tree.tree"), "--summary"]) == 0
    text = capsys.readouterr().out
    assert "storage bits   DM 480  invDM 816" in text
    assert "E[|X|^2] 1D    57" in text


def test_design_composition(capsys):
    assert main(["design-composition", "--word-len", "640", "--input-bits", "1014",
                 "--pmf", "0.4969,0.3250,0.1391,0.0391"]) == 0
    assert "composition    318,208,89,25" in capsys.readouterr().out


def test_simulate_writes_csv_and_json(tmp_path):
    cfg = tmp_path / "tiny.yaml"
    cfg.write_text("schema_version: 1\ndm: hidm\nsnr_db: [.inf, 5.0]\nseed: 4\nmax_codewords: 32\n")
    assert main(["simulate", "--config", str(cfg), "--out-dir", str(tmp_path / "res")]) == 0
    header, cols, rows = _read_csv(tmp_path / "res" / "tiny.csv")
    assert header[0].startswith("# pshape ") and "schema=1" in header[0] and "config=" in header[0]
    assert tuple(cols) == CSV_COLUMNS
    assert len(rows) == 2
    first = dict(zip(cols, rows[0]))
    assert first["snr_db"] == "inf" and first["post_fec_errors"] == "0"
    doc = json.loads((tmp_path / "res" / "tiny.json").read_text())
    assert doc["schema_version"] == 1 and len(doc["points"]) == 2
    assert header[0].endswith(doc["config_digest"])


def test_simulate_seed_override_changes_digest(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("dm: none\nsnr_db: [30.0]\nseed: 1\nmax_codewords: 7\n")
    for seed in ("1", "2"):
        assert main(["simulate", "--config", str(cfg), "--seed", seed, "--out-dir", str(tmp_path),
                     "--name", f"s{seed}"]) == 0
    h1, _, _ = _read_csv(tmp_path / "s1.csv")
    h2, _, _ = _read_csv(tmp_path / "s2.csv")
    assert h1 != h2


def test_insert_errors(tmp_path, data_dir):
    out = tmp_path / "ins.csv"
    assert main(["insert-errors", "--dm", "hidm", "--tree", str(data_dir / "small_tree.spec"), "--exhaustive",
                 "-o", str(out)]) == 0
    _, cols, rows = _read_csv(out)
    assert cols == ["n_errors", "ber", "alpha", "trials"]
    assert float(rows[0][2]) == pytest.approx(1229 / 512)
    assert main(["insert-errors", "--dm", "ccdm", "--max-errors", "2", "--trials", "20"]) == 0


def test_bounds(tmp_path, capsys):
    out = tmp_path / "b.csv"
    assert main(["bounds", "--points", "5", "-o", str(out)]) == 0
    text = capsys.readouterr().out
    assert "ccdm: r_E1 bound 347.99" in text
    _, cols, rows = _read_csv(out)
    assert cols[0] == "post_fec_ber" and len(rows) == 5 and len(cols) == 10


def test_metrics(tmp_path):
    out = tmp_path / "m.csv"
    assert main(["metrics", "-o", str(out)]) == 0
    _, cols, rows = _read_csv(out)
    by_name = {r[0]: dict(zip(cols, r)) for r in rows}
    assert float(by_name["ccdm"]["energy_2d"]) == pytest.approx(72.5)
    assert float(by_name["mb"]["gain_db"]) == pytest.approx(1.444, abs=5e-3)
    assert float(by_name["hidm"]["gain_db"]) == pytest.approx(1.056, abs=0.02)


def test_errors_exit_with_status_2(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("dm: hidm\nsnr_db: [20]\nseed: 1\nunknown_key: 3\n")
    assert main(["simulate", "--config", str(bad), "--out-dir", str(tmp_path)]) == 2
    assert "error" in capsys.readouterr().err
    assert main(["inspect-tree", str(tmp_path / "missing.tree")]) == 2
