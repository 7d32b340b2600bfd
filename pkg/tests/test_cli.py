import json
import socket
import subprocess
import sys
import time
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
MODELS = ROOT / "models"
CLI = [sys.executable, "-m", "proud.cli"]


def free_port():
    s = socket.socket()
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
    s.close()
    return port


def wait_for_banner(proc, timeout=15.0):
    """Block until the serve process prints its startup line.  Probing the
    port instead would use up a --max-sessions slot."""
    line = proc.stdout.readline()
    if "serving" not in line:
        raise AssertionError(f"unexpected server output: {line!r}")


def run_cli(*args, timeout=120):
    return subprocess.run(
        CLI + list(args), capture_output=True, text=True, timeout=timeout, cwd=ROOT
    )


def test_serve_and_infer_clear(tmp_path):
    port = free_port()
    srv = subprocess.Popen(
        CLI
        + [
            "serve",
            "--addr",
            f"127.0.0.1:{port}",
            "--model",
            str(MODELS / "mlp_64x16x10.json"),
            "--backend",
            "clear",
            "--max-sessions",
            "1",
        ],
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        text=True,
        cwd=ROOT,
    )
    try:
        wait_for_banner(srv)
        report = tmp_path / "report.csv"
        out = run_cli(
            "infer",
            "--addr",
            f"127.0.0.1:{port}",
            "--input",
            str(MODELS / "samples_64.csv"),
            "--index",
            "2",
            "--backend",
            "clear",
            "--seed",
            "5",
            "--report",
            str(report),
        )
        assert out.returncode == 0, out.stderr
        assert "argmax" in out.stdout
        assert "Total" in out.stdout
        lines = report.read_text().strip().split("\n")
        assert lines[0] == "phase,latency_ms,comm_mb"
        assert len(lines) == 6
        srv_rc = srv.wait(timeout=30)
        assert srv_rc == 0
    finally:
        if srv.poll() is None:
            srv.kill()
            srv.wait()


def test_infer_dead_server_exit_3():
    out = run_cli(
        "infer",
        "--addr",
        f"127.0.0.1:{free_port()}",
        "--input",
        str(MODELS / "samples_64.csv"),
        "--backend",
        "clear",
    )
    assert out.returncode == 3
    assert "transport" in out.stderr


def test_role_alias_routes_to_infer():
    out = run_cli(
        "--role",
        "client",
        "--addr",
        f"127.0.0.1:{free_port()}",
        "--input",
        str(MODELS / "samples_64.csv"),
        "--backend",
        "clear",
    )
    assert out.returncode == 3  # reached the connect stage, so routing worked


def test_bad_config_key_exit_2(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"no_such_option": 1}))
    out = run_cli("bench", "--config", str(cfg), "--model", str(MODELS / "mlp_64x16x10.json"))
    assert out.returncode == 2
    assert "no_such_option" in out.stderr


def test_bad_addr_exit_2():
    out = run_cli(
        "infer", "--addr", "nocolon", "--input", str(MODELS / "samples_64.csv")
    )
    assert out.returncode == 2


def test_missing_model_exit_4():
    out = run_cli("serve", "--model", "/nonexistent/model.json", "--backend", "clear")
    assert out.returncode == 4


def test_missing_samples_exit_4():
    out = run_cli(
        "infer",
        "--addr",
        "127.0.0.1:1",
        "--input",
        "/nonexistent/samples.csv",
        "--backend",
        "clear",
    )
    assert out.returncode == 4


def test_config_defaults_and_flag_override(tmp_path):
    # config sets trials=2; the explicit flag must still win
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"trials": 2, "backend": "clear", "seed": 9}))
    report = tmp_path / "bench.csv"
    out = run_cli(
        "bench",
        "--config",
        str(cfg),
        "--model",
        str(MODELS / "mlp_64x16x10.json"),
        "--trials",
        "1",
        "--report",
        str(report),
    )
    assert out.returncode == 0, out.stderr
    lines = report.read_text().strip().split("\n")
    assert lines[0] == "trial,phase,latency_ms,comm_mb"
    trials = {line.split(",")[0] for line in lines[1:]}
    assert trials == {"0"}  # one trial only, numbered from zero


def test_bench_comm_deterministic(tmp_path):
    reports = []
    for run in range(2):
        report = tmp_path / f"bench{run}.csv"
        out = run_cli(
            "bench",
            "--model",
            str(MODELS / "mlp_64x16x10.json"),
            "--backend",
            "clear",
            "--trials",
            "2",
            "--seed",
            "77",
            "--report",
            str(report),
        )
        assert out.returncode == 0, out.stderr
        rows = [line.split(",") for line in report.read_text().strip().split("\n")[1:]]
        reports.append([(r[0], r[1], r[3]) for r in rows])  # trial, phase, comm_mb
    assert reports[0] == reports[1]
