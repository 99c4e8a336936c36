"""CLI surface: every subcommand end to end, exit codes, determinism."""

import json
import os

import pytest

from jigsawenv.cli import main


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli_corpus")
    rc = main(["corpus", "--out", str(root), "--per-category", "4", "--seed", "1",
               "--size", "40"])
    assert rc == 0
    return str(root)


@pytest.fixture(scope="module")
def manifest_path(corpus_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_manifest") / "manifest.jsonl"
    rc = main(["gen", "--corpus", corpus_dir, "--out", str(out), "--m", "2",
               "--levels", "0,1,2", "--per-level", "1", "--seed", "5"])
    assert rc == 0
    return str(out)


def test_gen_deterministic(corpus_dir, tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    for out in (a, b):
        assert main(["gen", "--corpus", corpus_dir, "--out", str(out),
                     "--m", "2", "--levels", "0", "--seed", "9"]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_gen_missing_corpus_fails(tmp_path):
    rc = main(["gen", "--corpus", str(tmp_path / "nope"), "--out",
               str(tmp_path / "m.jsonl"), "--seed", "1"])
    assert rc == 1


def test_gen_requires_seed(corpus_dir, tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["gen", "--corpus", corpus_dir, "--out", str(tmp_path / "x.jsonl")])
    assert exc.value.code == 2


def test_eval_oracle_all_ones(manifest_path, tmp_path, capsys):
    csv_path = tmp_path / "r.csv"
    rc = main(["eval", "--manifest", manifest_path, "--agent", "oracle",
               "--seed", "3", "--T", "8",
               "--out-csv", str(csv_path), "--out-table", str(tmp_path / "r.txt")])
    assert rc == 0
    table = capsys.readouterr().out
    assert "L0" in table and "Avg" in table
    rows = csv_path.read_text().splitlines()
    assert rows[0] == "m,level,episodes,acc,score,mean_steps,ci95_acc"
    for row in rows[1:]:
        assert row.split(",")[3] == "1.000000"


def test_eval_unknown_agent_usage_error(manifest_path, tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["eval", "--manifest", manifest_path, "--agent", "psychic",
              "--seed", "1"])
    assert exc.value.code == 2


def test_eval_jobs_matches_serial(manifest_path, tmp_path):
    serial_csv = tmp_path / "serial.csv"
    parallel_csv = tmp_path / "parallel.csv"
    for csv_path, jobs in ((serial_csv, "1"), (parallel_csv, "2")):
        rc = main(["eval", "--manifest", manifest_path, "--agent", "random",
                   "--seed", "7", "--episodes-per-level", "60", "--jobs", jobs,
                   "--out-csv", str(csv_path), "--out-table", str(tmp_path / "t.txt")])
        assert rc == 0
    assert serial_csv.read_text() == parallel_csv.read_text()


@pytest.fixture(scope="module")
def rollout_dir(manifest_path, tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_rollouts")
    rc = main(["rollout", "--manifest", manifest_path, "--agent", "oracle",
               "--out-dir", str(out), "--seed", "2", "--limit", "4", "--T", "8"])
    assert rc == 0
    return str(out)


def test_replay_clean(rollout_dir):
    paths = sorted(
        os.path.join(rollout_dir, d) for d in os.listdir(rollout_dir)
    )
    assert len(paths) == 4
    assert main(["replay", *paths]) == 0


def test_replay_detects_single_byte_tamper(rollout_dir, capsys):
    target = sorted(os.listdir(rollout_dir))[0]
    doc_path = os.path.join(rollout_dir, target, "trajectory.json")
    doc = json.loads(open(doc_path).read())
    for msg in doc["messages"]:
        if msg["role"] == "environment" and msg["text"]:
            # flip one byte of feedback text
            msg["text"] = ("X" + msg["text"][1:]) if msg["text"][0] != "X" else (
                "Y" + msg["text"][1:]
            )
            break
    open(doc_path, "w").write(json.dumps(doc))
    rc = main(["replay", os.path.join(rollout_dir, target)])
    assert rc == 1
    out = capsys.readouterr().out
    assert "diverges" in out


def test_replay_missing_file(tmp_path):
    assert main(["replay", str(tmp_path / "ghost")]) == 1


def test_solve_command(corpus_dir, tmp_path, capsys):
    image = sorted(
        os.path.join(corpus_dir, "high_res_search", p)
        for p in os.listdir(os.path.join(corpus_dir, "high_res_search"))
    )[0]
    out_dir = tmp_path / "solved"
    rc = main(["solve", "--image", image, "--agent", "oracle", "--seed", "4",
               "--T", "8", "--out-dir", str(out_dir)])
    assert rc == 0
    printed = capsys.readouterr().out
    assert "status=answered" in printed
    assert (out_dir / "trajectory.json").exists()
    assert main(["replay", str(out_dir)]) == 0


def test_grpocheck_passes(capsys):
    rc = main(["grpocheck", "--seeds", "3"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "worst over 3 seeds" in out


def test_grpocheck_negative_control():
    assert main(["grpocheck", "--seeds", "2", "--inject-bug"]) == 1


def test_config_file_round_trip(manifest_path, tmp_path):
    cfg_path = tmp_path / "run.json"
    cfg_path.write_text(json.dumps({"T": 6, "reward": {"step_max": 6}}))
    rc = main(["eval", "--manifest", manifest_path, "--agent", "oracle",
               "--seed", "1", "--config", str(cfg_path),
               "--out-csv", str(tmp_path / "c.csv"),
               "--out-table", str(tmp_path / "c.txt")])
    assert rc == 0


def test_config_unknown_key_rejected(manifest_path, tmp_path):
    cfg_path = tmp_path / "bad.json"
    cfg_path.write_text(json.dumps({"rewards": {"alpha": 1.0}}))
    rc = main(["eval", "--manifest", manifest_path, "--agent", "oracle",
               "--seed", "1", "--config", str(cfg_path),
               "--out-csv", str(tmp_path / "c.csv")])
    assert rc == 1


def test_fixtures_export(tmp_path):
    out = tmp_path / "fixtures.json"
    rc = main(["fixtures", "--out", str(out), "--count", "3", "--seed", "11"])
    assert rc == 0
    doc = json.loads(out.read_text())
    assert doc["v"] == 1 and len(doc["fixtures"]) == 3
    for fixture in doc["fixtures"]:
        assert fixture["expected"]["reward"]["r_acc"] == 1
        assert fixture["turns"]
        assert fixture["image_b64"]


def test_help_documents_every_subcommand(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    for name in ("corpus", "gen", "eval", "rollout", "replay", "solve",
                 "serve", "grpocheck", "fixtures"):
        assert name in out
