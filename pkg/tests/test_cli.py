import hashlib
import json
import re
from pathlib import Path

import pytest

import pistack.cli as cli
from pistack.routing import Route
from pistack.scenarios import minimal_scenario, synthetic_scenario, loss_pair_scenario


def write_scenario(tmp_path, doc, name="scenario.json") -> str:
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def run_cli(argv):
    return cli.main(argv)


def test_validate_ok(tmp_path, capsys):
    path = write_scenario(tmp_path, minimal_scenario())
    assert run_cli(["validate", path]) == 0
    assert "scenario OK" in capsys.readouterr().out


def test_validate_unresolved_reference_names_id(tmp_path, capsys):
    doc = minimal_scenario()
    doc["demands"][0]["consignee"] = "QX"
    path = write_scenario(tmp_path, doc)
    with pytest.raises(SystemExit) as exc:
        run_cli(["validate", path])
    assert exc.value.code == 1
    assert "QX" in capsys.readouterr().err


def test_validate_missing_file_is_io_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        run_cli(["validate", str(tmp_path / "nope.json")])
    assert exc.value.code == 3


def test_run_same_seed_identical_trace_files(tmp_path):
    path = write_scenario(tmp_path, synthetic_scenario(61, n_nodes=5, n_demands=4))
    t1, t2 = str(tmp_path / "a.jsonl"), str(tmp_path / "b.jsonl")
    assert run_cli(["run", path, "--seed", "5", "--trace", t1, "--report", str(tmp_path / "r1.txt")]) == 0
    assert run_cli(["run", path, "--seed", "5", "--trace", t2, "--report", str(tmp_path / "r2.txt")]) == 0
    h = lambda p: hashlib.sha256(Path(p).read_bytes()).hexdigest()
    assert h(t1) == h(t2)


def test_run_no_faults_is_cheaper_when_loss_fires(tmp_path, capsys):
    path = write_scenario(tmp_path, loss_pair_scenario(62, with_spare=True))
    assert run_cli(["run", path]) == 0
    faulted = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert run_cli(["run", path, "--no-faults"]) == 0
    baseline = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert faulted["cost"]["total"] > baseline["cost"]["total"]


def test_run_horizon_zero_empty_trace(tmp_path):
    path = write_scenario(tmp_path, minimal_scenario())  # demand releases at t=10
    trace_path = tmp_path / "empty.jsonl"
    assert run_cli(["run", path, "--horizon", "0", "--trace", str(trace_path),
                    "--report", str(tmp_path / "r.txt")]) == 0
    assert trace_path.read_bytes() == b""


def test_env_seed_used_as_default(tmp_path, monkeypatch):
    path = write_scenario(tmp_path, synthetic_scenario(63, n_nodes=4, n_demands=2))
    monkeypatch.setenv("PI_STACK_SEED", "77")
    t1 = str(tmp_path / "env.jsonl")
    assert run_cli(["run", path, "--trace", t1, "--report", str(tmp_path / "r1.txt")]) == 0
    monkeypatch.delenv("PI_STACK_SEED")
    t2 = str(tmp_path / "flag.jsonl")
    assert run_cli(["run", path, "--seed", "77", "--trace", t2, "--report", str(tmp_path / "r2.txt")]) == 0
    assert Path(t1).read_bytes() == Path(t2).read_bytes()


def test_routes_prints_single_route(tmp_path, capsys):
    path = write_scenario(tmp_path, minimal_scenario())
    assert run_cli(["routes", path, "--from", "A", "--to", "B"]) == 0
    out = capsys.readouterr().out
    assert "A -[normal]-> B" in out
    assert "score=" in out


def test_routes_totals_match_route_cost(tmp_path, capsys):
    doc = synthetic_scenario(64, n_nodes=6, n_demands=1)
    path = write_scenario(tmp_path, doc)
    assert run_cli(["routes", path, "--from", "N00", "--to", "N03", "--weights", "1,1,1"]) == 0
    out = capsys.readouterr().out
    time = float(re.search(r"time=([\d.]+)", out).group(1))
    cost = float(re.search(r"cost=([\d.]+)", out).group(1))
    risk = float(re.search(r"risk=([\d.]+)", out).group(1))
    score = float(re.search(r"score=([\d.]+)", out).group(1))
    assert score == pytest.approx(time + cost + risk)


def test_routes_pareto_prints_front(tmp_path, capsys):
    doc = {
        "schema_version": 1,
        "graph": {
            "nodes": [{"id": n} for n in "ABC"] + [{"id": "Z", "kind": "disposal"}],
            "edges": [
                {"from": "A", "to": "B", "base_time": 1, "base_cost": 9.0},
                {"from": "B", "to": "C", "base_time": 1, "base_cost": 9.0},
                {"from": "A", "to": "C", "base_time": 9, "base_cost": 1.0},
                {"from": "A", "to": "Z", "base_time": 1, "base_cost": 1.0},
            ],
        },
        "means": [], "depots": [], "demands": [], "faults": [],
        "params": {},
    }
    path = write_scenario(tmp_path, doc)
    assert run_cli(["routes", path, "--from", "A", "--to", "C", "--pareto"]) == 0
    out = capsys.readouterr().out
    assert "2 non-dominated route(s):" in out


def test_routes_unreachable_is_success_with_message(tmp_path, capsys):
    doc = minimal_scenario()
    doc["graph"]["nodes"].append({"id": "X"})
    path = write_scenario(tmp_path, doc)
    assert run_cli(["routes", path, "--from", "A", "--to", "X"]) == 0
    assert "UNREACHABLE" in capsys.readouterr().out


def test_oracle_agrees(tmp_path, capsys):
    path = write_scenario(tmp_path, synthetic_scenario(65, n_nodes=7, n_demands=1))
    assert run_cli(["oracle", path, "--from", "N00", "--to", "N04"]) == 0
    assert "AGREE" in capsys.readouterr().out


def test_oracle_detects_corrupted_router(tmp_path, monkeypatch, capsys):
    path = write_scenario(tmp_path, synthetic_scenario(66, n_nodes=6, n_demands=1))

    def corrupted(graph, src, dst, weights, allow_expedite=False):
        # Deliberately wrong: always claims an absurdly expensive answer.
        route = cli.pareto_paths(graph, src, dst, max_paths=10_000)[-1]
        return Route(route.hops, route.total_time + 1e6, route.total_cost, route.total_risk)

    monkeypatch.setattr(cli, "shortest_path_scalarized", corrupted)
    assert run_cli(["oracle", path, "--from", "N00", "--to", "N03"]) == 2
    assert "DISAGREE" in capsys.readouterr().err


def test_oracle_instance_too_large(tmp_path, capsys):
    doc = synthetic_scenario(67, n_nodes=13, n_demands=1)
    path = write_scenario(tmp_path, doc)
    assert run_cli(["oracle", path, "--from", "N00", "--to", "N05"]) == 1
    assert "instance_too_large" in capsys.readouterr().err


def test_report_reproduces_run_report(tmp_path, capsys):
    doc = synthetic_scenario(68, n_nodes=5, n_demands=3)
    path = write_scenario(tmp_path, doc)
    trace_path = str(tmp_path / "t.jsonl")
    report_path = tmp_path / "r.txt"
    assert run_cli(["run", path, "--trace", trace_path, "--report", str(report_path)]) == 0
    run_json = report_path.read_text().strip().splitlines()[-1]
    assert run_cli(["report", trace_path]) == 0
    report_json = capsys.readouterr().out.strip().splitlines()[-1]
    assert report_json == run_json


def test_report_empty_trace_zeroed(tmp_path, capsys):
    trace_path = tmp_path / "empty.jsonl"
    trace_path.write_text("")
    assert run_cli(["report", str(trace_path)]) == 0
    payload = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert payload["orders"]["total"] == 0


def test_report_truncated_trace_fails(tmp_path, capsys):
    doc = synthetic_scenario(69, n_nodes=4, n_demands=2)
    path = write_scenario(tmp_path, doc)
    trace_path = tmp_path / "t.jsonl"
    assert run_cli(["run", path, "--trace", str(trace_path), "--report", str(tmp_path / "r.txt")]) == 0
    data = trace_path.read_bytes()
    trace_path.write_bytes(data[: len(data) - 9])
    assert run_cli(["report", str(trace_path)]) == 1
    assert "truncated_trace" in capsys.readouterr().err


GOLDEN_FLAGS = Path(__file__).parent / "data" / "cli_flags.txt"


def collected_flags() -> str:
    parser = cli.build_parser()
    lines = []
    subparsers = parser._subparsers._group_actions[0].choices
    for name in sorted(subparsers):
        sub = subparsers[name]
        flags = sorted(
            opt for action in sub._actions for opt in action.option_strings
        )
        lines.append(f"{name}: {' '.join(flags)}")
    return "\n".join(lines) + "\n"


def test_help_lists_every_flag_golden():
    assert collected_flags() == GOLDEN_FLAGS.read_text()


def test_every_flag_documented_in_help():
    parser = cli.build_parser()
    subparsers = parser._subparsers._group_actions[0].choices
    for name, sub in subparsers.items():
        text = sub.format_help()
        for action in sub._actions:
            for opt in action.option_strings:
                assert opt in text, (name, opt)
