from pathlib import Path

import pytest

from dpcount import cli

DATA = Path(__file__).parent / "data" / "waypoint"


def _files(events=False, **override):
    names = {"topology": "topology.txt", "fib": "fib.txt", "prefixes": "prefixes.txt",
             "requirements": "requirements.txt"}
    args = []
    for k, v in names.items():
        args += [f"--{k}", str(override.get(k, DATA / v))]
    if events:
        args += ["--events", str(DATA / "events.txt")]
    return args


@pytest.mark.parametrize("command", ["verify", "simulate", "oracle"])
def test_violated_then_fixed(command, tmp_path, capsys):
    assert cli.main([command, *_files(), "--out", str(tmp_path / "a")]) == cli.EXIT_VIOLATED
    rows = (tmp_path / "a" / "verdicts.csv").read_text().splitlines()
    assert rows[0] == "requirement,ingress,predicate,status,witness"
    assert "0,S,dstIP=10.0.0.0/24,violated,(0)" in rows
    assert cli.main([command, *_files(events=True), "--out", str(tmp_path / "b")]) == cli.EXIT_OK
    assert "violated" not in (tmp_path / "b" / "verdicts.csv").read_text()


def test_simulate_writes_stats(tmp_path):
    cli.main(["simulate", *_files(events=True), "--out", str(tmp_path), "--seed", "3", "--dampening"])
    lines = (tmp_path / "stats.csv").read_text().splitlines()
    assert lines[0] == "event_id,convergence_us,messages,bytes_proxy,devices_changed"
    assert len(lines) == 3


@pytest.mark.parametrize("command", ["verify", "simulate"])
def test_check_against_oracle(command, capsys):
    assert cli.main([command, *_files(), "--check-against-oracle"]) == cli.EXIT_VIOLATED
    assert "oracle agrees" in capsys.readouterr().out


def test_oracle_disagreement_exits_3(monkeypatch, capsys):
    monkeypatch.setattr(cli, "_rows_oracle", lambda i, req, dp: [])
    assert cli.main(["verify", *_files(), "--check-against-oracle"]) == cli.EXIT_TRAP
    assert "MISMATCH" in capsys.readouterr().err


def test_plan_output_is_stable(tmp_path):
    assert cli.main(["plan", *_files(), "--out", str(tmp_path / "a")]) == cli.EXIT_OK
    assert cli.main(["plan", *_files(), "--out", str(tmp_path / "b")]) == cli.EXIT_OK
    for name in ("plan_r0.txt", "plan_r0.dot"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    dot = (tmp_path / "a" / "plan_r0.dot").read_text()
    for label in ("S1", "A1", "B1", "B2", "C1", "C2", "W1", "W2", "W3", "D1"):
        assert f'"{label}"' in dot
    assert '"D1" [shape=doublecircle' in dot


def test_bad_inputs_exit_2(tmp_path, capsys):
    bad = tmp_path / "prefixes.txt"
    bad.write_text("prefix D 10.0.0.0/99\n")
    assert cli.main(["verify", *_files(prefixes=bad)]) == cli.EXIT_USAGE
    assert "prefixes.txt:1:" in capsys.readouterr().err
    narrow = tmp_path / "narrow.txt"
    narrow.write_text("prefix D 10.0.0.0/24\n")
    assert cli.main(["verify", *_files(prefixes=narrow)]) == cli.EXIT_USAGE
    assert "PrefixMismatch" in capsys.readouterr().err
    req = tmp_path / "req.txt"
    req.write_text("(dstIP in 10.0.0.0/23, [S], (exist >= 1, S .* Q))\n")
    assert cli.main(["verify", *_files(requirements=req)]) == cli.EXIT_USAGE
    assert "UnknownDevice" in capsys.readouterr().err
    assert cli.main(["verify", "--topology", str(DATA / "topology.txt")]) == cli.EXIT_USAGE


def test_gen(tmp_path):
    assert cli.main(["gen", "clos", "--updates", "5", "--seed", "1", "--out", str(tmp_path / "c")]) == cli.EXIT_OK
    out = tmp_path / "c"
    assert len((out / "events.txt").read_text().splitlines()) == 5
    code = cli.main(["simulate", "--topology", str(out / "topology.txt"), "--fib", str(out / "fib.txt"),
                     "--prefixes", str(out / "prefixes.txt"), "--requirements", str(out / "req_torToTorShortest.txt"),
                     "--events", str(out / "events.txt"), "--check-against-oracle"])
    assert code in (cli.EXIT_OK, cli.EXIT_VIOLATED)
    assert cli.main(["gen", "fattree", "--k", "3", "--out", str(tmp_path / "f")]) == cli.EXIT_USAGE
