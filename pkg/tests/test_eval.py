"""Evaluation aggregation, table/CSV emission, statistical sanity."""

import pytest

from jigsawenv.agents import AGENT_FACTORIES, OracleAgent, RandomAgent
from jigsawenv.corpus import build_synthetic_corpus
from jigsawenv.dataset import SynthesisConfig, synthesize_puzzles
from jigsawenv.evaluate import (
    emit_report,
    evaluate,
    level_average,
    records_csv,
    records_table,
)
from jigsawenv.perms import levels_for_grid


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("eval_corpus")
    build_synthetic_corpus(str(root), per_category=5, seed=3, size=(32, 32))
    return str(root)


@pytest.fixture(scope="module")
def manifest_2x2(corpus_dir):
    return synthesize_puzzles(
        corpus_dir,
        SynthesisConfig(m=2, levels=tuple(levels_for_grid(2)), per_level_count=1, seed=11),
    )


def test_oracle_scores_perfectly_every_cell(manifest_2x2):
    records = evaluate(AGENT_FACTORIES["oracle"], manifest_2x2, T=8)
    assert len(records) == 3
    for r in records:
        assert r.acc == 1.0
        assert r.score == 1.0
        assert r.ci95_acc == 0.0


def test_random_agent_acc_near_analytic(manifest_2x2):
    records = evaluate(
        AGENT_FACTORIES["random"], manifest_2x2, T=5, episodes_per_level=2000
    )
    for r in records:
        assert r.episodes == 2000
        assert abs(r.acc - 1 / 24) < 0.02
        assert abs(r.score - 0.25) < 0.03
    assert abs(level_average(records, 2, "acc") - 1 / 24) < 0.01


def test_acc_never_exceeds_score(manifest_2x2):
    records = evaluate(
        AGENT_FACTORIES["random"], manifest_2x2, T=5, episodes_per_level=500
    )
    for r in records:
        assert r.acc <= r.score + 1e-12


def test_random_acc_level_independent_chi_square(manifest_2x2):
    from scipy.stats import chi2_contingency

    records = evaluate(
        AGENT_FACTORIES["random"], manifest_2x2, T=5, episodes_per_level=3000
    )
    table = [
        [round(r.acc * r.episodes), r.episodes - round(r.acc * r.episodes)]
        for r in records
    ]
    _, p_value, _, _ = chi2_contingency(table)
    assert p_value > 0.01


def test_evaluation_reproducible(manifest_2x2):
    r1 = evaluate(AGENT_FACTORIES["random"], manifest_2x2, T=5, episodes_per_level=200)
    r2 = evaluate(AGENT_FACTORIES["random"], manifest_2x2, T=5, episodes_per_level=200)
    assert records_csv(r1) == records_csv(r2)


def test_table_shape_2x2(manifest_2x2):
    records = evaluate(AGENT_FACTORIES["oracle"], manifest_2x2, T=8)
    table = records_table(records)
    header = table.splitlines()[1]
    assert header.split() == ["L0", "L1", "L2", "Avg"]
    assert "Acc" in table and "Score" in table


def test_table_shape_3x3(corpus_dir):
    manifest = synthesize_puzzles(
        corpus_dir,
        SynthesisConfig(m=3, levels=tuple(levels_for_grid(3)), per_level_count=1, seed=2),
    )
    records = evaluate(AGENT_FACTORIES["oracle"], manifest, T=12)
    table = records_table(records)
    header = table.splitlines()[1]
    assert header.split() == [f"L{k}" for k in range(8)] + ["Avg"]


def test_emit_report_writes_files(manifest_2x2, tmp_path):
    records = evaluate(AGENT_FACTORIES["oracle"], manifest_2x2, T=8)
    csv_path = tmp_path / "report.csv"
    table_path = tmp_path / "report.txt"
    csv_text, table_text = emit_report(records, str(csv_path), str(table_path))
    assert csv_path.read_text() == csv_text
    assert table_path.read_text() == table_text
    header = csv_text.splitlines()[0]
    assert header == "m,level,episodes,acc,score,mean_steps,ci95_acc"


def test_single_record_table():
    from jigsawenv.evaluate import EvalRecord

    table = records_table(
        [EvalRecord(m=2, level=0, episodes=10, acc=0.5, score=0.75, mean_steps=3.0, ci95_acc=0.1)]
    )
    lines = [ln for ln in table.splitlines() if ln]
    assert len(lines) == 5  # title, header, Acc, Score, MeanSteps
    assert lines[1].split() == ["L0", "Avg"]
