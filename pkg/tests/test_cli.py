import json
import subprocess
import sys
import time

import numpy as np
import pytest

from dvdkit.bench import parse_csv_report
from dvdkit.cli import build_parser, main, read_router_data
from dvdkit.vico import load_router


def test_check_losses(capsys):
    assert main(["check-losses", "--fixtures", "3"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert len(out) == 6 and all("PASS" in line for line in out)


def test_train_router_synthetic(tmp_path, capsys):
    out = tmp_path / "router.json"
    assert main(["train-router", "--synthetic", "24", "--epochs", "50", "--out", str(out)]) == 0
    assert "train accuracy" in capsys.readouterr().out
    assert load_router(out).dim > 0


def test_train_router_from_jsonl(tmp_path):
    g = np.random.default_rng(0)
    rows = [{"features": list(g.normal(size=3) + (2 if i % 2 else -2)), "label": i % 2} for i in range(20)]
    rows += [{"features": [0.0, 0.0, 1.0], "loss_16": 1.0 + i, "loss_4": 1.0} for i in range(4)]
    data = tmp_path / "d.jsonl"
    data.write_text("\n".join(json.dumps(r) for r in rows) + "\n\n")
    parsed = read_router_data(data)
    assert len(parsed) >= 20 and all(lab in (0, 1) for _, lab in parsed)
    assert main(["train-router", "--data", str(data), "--out", str(tmp_path / "r.json")]) == 0
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"features": [1.0]}\n')
    assert main(["train-router", "--data", str(bad), "--out", str(tmp_path / "x.json")]) == 1


def test_bench_writes_csv(tmp_path, capsys):
    out = tmp_path / "report.csv"
    cfg = tmp_path / "light.ini"
    cfg.write_text("[serving]\nrouter = pinned\n[profile]\nvision_work_per_tile = 1\n"
                   "prefill_work_per_token = 1\ndecode_work_per_token = 1\n")
    code = main(["--config", str(cfg), "bench", "--topology", "monolith", "--topology", "dvd",
                 "--tier", "448", "--rate", "8", "--duration", "1", "--decode-len", "2",
                 "--mode", "thread", "--out", str(out), "--trace", str(tmp_path / "t")])
    assert code == 0
    rows = parse_csv_report(out.read_text())
    assert [r["topology"] for r in rows] == ["monolith", "dvd"]
    assert rows[0]["speedup"] == "" and rows[1]["speedup"] != ""
    assert (tmp_path / "t.dvd.jsonl").exists()
    assert "throughput" in capsys.readouterr().out


def test_parser_rejects_bad_values():
    p = build_parser()
    for argv in (["bench", "--tier", "500"], ["serve-vision", "--language", "nohost"], []):
        with pytest.raises(SystemExit):
            p.parse_args(argv)


def test_missing_config_is_an_error(tmp_path, capsys):
    assert main(["--config", str(tmp_path / "nope.ini"), "bench", "--rate", "1", "--duration", "0"]) == 1
    assert "error" in capsys.readouterr().err


def test_serve_lang_subprocess():
    proc = subprocess.Popen([sys.executable, "-m", "dvdkit.cli", "serve-lang", "--port", "0"],
                            stdout=subprocess.PIPE, text=True)
    try:
        line = proc.stdout.readline()
        assert "listening on 127.0.0.1:" in line
        port = int(line.rsplit(":", 1)[1])
        import socket

        socket.create_connection(("127.0.0.1", port), timeout=5).close()
    finally:
        proc.terminate()
        proc.wait(timeout=10)
