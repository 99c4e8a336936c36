"""Acc/Score evaluation across grid sizes and difficulty levels.

Records aggregate per (m, level); the text table mirrors the L0..L(n-2)
column layout with an unweighted Avg column, percentages to one decimal.
"""

import csv
import io
import math
import os
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .agents import run_episode
from .dataset import DatasetManifest, ManifestEntry, derive_seed
from .episode import new_episode
from .errors import EmptyCorpus
from .imageops import PixelImage, load_image
from .rewards import RewardConfig

CSV_COLUMNS = ("m", "level", "episodes", "acc", "score", "mean_steps", "ci95_acc")


@dataclass(frozen=True)
class EvalRecord:
    m: int
    level: int
    episodes: int
    acc: float
    score: float
    mean_steps: float
    ci95_acc: float


def _image_cache() -> Callable[[str], PixelImage]:
    cache: Dict[str, PixelImage] = {}

    def fetch(path: str) -> PixelImage:
        if path not in cache:
            cache[path] = load_image(path)
        return cache[path]

    return fetch


def _expand_entries(
    manifest: DatasetManifest, episodes_per_level: Optional[int]
) -> List[ManifestEntry]:
    """Optionally resample entries so each (m, level) cell reaches the
    requested episode count; replicas get derived seeds."""
    if episodes_per_level is None:
        return list(manifest.entries)
    by_cell: Dict[Tuple[int, int], List[ManifestEntry]] = {}
    for entry in manifest.entries:
        by_cell.setdefault((entry.m, entry.level), []).append(entry)
    expanded: List[ManifestEntry] = []
    for (m, level), pool in sorted(by_cell.items()):
        for k in range(episodes_per_level):
            base = pool[k % len(pool)]
            seed = base.seed if k < len(pool) else derive_seed(base.seed, "replica", k)
            expanded.append(
                ManifestEntry(
                    image_path=base.image_path,
                    m=m,
                    level=level,
                    seed=seed,
                    category_tag=base.category_tag,
                )
            )
    return expanded


def evaluate(
    agent_factory: Callable[[int], object],
    manifest: DatasetManifest,
    T: int = 5,
    episodes_per_level: Optional[int] = None,
    reward_cfg: Optional[RewardConfig] = None,
    agent_seed: int = 0,
) -> List[EvalRecord]:
    """Run every manifest episode with a fresh agent and aggregate per cell."""
    if not manifest.entries:
        raise EmptyCorpus("manifest has no entries")
    fetch = _image_cache()
    entries = _expand_entries(manifest, episodes_per_level)
    cells: Dict[Tuple[int, int], List[Tuple[int, float, int]]] = {}
    for index, entry in enumerate(entries):
        ep = new_episode(
            fetch(entry.image_path),
            m=entry.m,
            level=entry.level,
            seed=entry.seed,
            T=T,
            reward_cfg=reward_cfg,
        )
        agent = agent_factory(derive_seed(agent_seed, "agent", index, entry.seed))
        run_episode(ep, agent)
        cells.setdefault((entry.m, entry.level), []).append(
            (ep.reward.r_acc, ep.score or 0.0, ep.t)
        )
    records = []
    for (m, level), rows in sorted(cells.items()):
        count = len(rows)
        acc = sum(r[0] for r in rows) / count
        score = sum(r[1] for r in rows) / count
        mean_steps = sum(r[2] for r in rows) / count
        ci95 = 1.96 * math.sqrt(acc * (1 - acc) / count)
        records.append(
            EvalRecord(
                m=m, level=level, episodes=count, acc=acc, score=score,
                mean_steps=mean_steps, ci95_acc=ci95,
            )
        )
    return records


def _eval_chunk(args) -> List[Tuple[int, int, int, float, int]]:
    """Worker for parallel evaluation: one (index, entry) chunk, one agent name."""
    from .agents import AGENT_FACTORIES

    chunk, agent_name, T, reward_cfg, agent_seed = args
    factory = AGENT_FACTORIES[agent_name]
    fetch = _image_cache()
    rows = []
    for index, entry in chunk:
        ep = new_episode(
            fetch(entry.image_path),
            m=entry.m,
            level=entry.level,
            seed=entry.seed,
            T=T,
            reward_cfg=reward_cfg,
        )
        agent = factory(derive_seed(agent_seed, "agent", index, entry.seed))
        run_episode(ep, agent)
        rows.append((entry.m, entry.level, ep.reward.r_acc, ep.score or 0.0, ep.t))
    return rows


def evaluate_by_name(
    agent_name: str,
    manifest: DatasetManifest,
    T: int = 5,
    episodes_per_level: Optional[int] = None,
    reward_cfg: Optional[RewardConfig] = None,
    agent_seed: int = 0,
    jobs: int = 1,
) -> List[EvalRecord]:
    """evaluate() by agent name, optionally fanned out over processes.

    Results are independent of jobs: per-episode agent seeds derive from the
    episode's global index, and aggregation is a sorted reduction.
    """
    from .agents import AGENT_FACTORIES

    if agent_name not in AGENT_FACTORIES:
        raise KeyError(f"unknown agent {agent_name!r}; have {sorted(AGENT_FACTORIES)}")
    if jobs <= 1:
        return evaluate(
            AGENT_FACTORIES[agent_name],
            manifest,
            T=T,
            episodes_per_level=episodes_per_level,
            reward_cfg=reward_cfg,
            agent_seed=agent_seed,
        )
    if not manifest.entries:
        raise EmptyCorpus("manifest has no entries")
    import multiprocessing as mp

    indexed = list(enumerate(_expand_entries(manifest, episodes_per_level)))
    chunk_size = max(1, math.ceil(len(indexed) / (jobs * 4)))
    chunks = [
        (indexed[k : k + chunk_size], agent_name, T, reward_cfg, agent_seed)
        for k in range(0, len(indexed), chunk_size)
    ]
    cells: Dict[Tuple[int, int], List[Tuple[int, float, int]]] = {}
    with mp.Pool(processes=jobs) as pool:
        for rows in pool.map(_eval_chunk, chunks):
            for m, level, r_acc, score, t in rows:
                cells.setdefault((m, level), []).append((r_acc, score, t))
    records = []
    for (m, level), rows in sorted(cells.items()):
        count = len(rows)
        acc = sum(r[0] for r in rows) / count
        score = sum(r[1] for r in rows) / count
        mean_steps = sum(r[2] for r in rows) / count
        ci95 = 1.96 * math.sqrt(acc * (1 - acc) / count)
        records.append(
            EvalRecord(
                m=m, level=level, episodes=count, acc=acc, score=score,
                mean_steps=mean_steps, ci95_acc=ci95,
            )
        )
    return records


def records_csv(records: Sequence[EvalRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in records:
        writer.writerow(
            [
                r.m,
                r.level,
                r.episodes,
                f"{r.acc:.6f}",
                f"{r.score:.6f}",
                f"{r.mean_steps:.6f}",
                f"{r.ci95_acc:.6f}",
            ]
        )
    return buf.getvalue()


def _format_row(name: str, values: List[float], width: int = 7) -> str:
    cells = "".join(f"{100 * v:>{width}.1f}" for v in values)
    return f"{name:<12}{cells}"


def records_table(records: Sequence[EvalRecord]) -> str:
    """Aligned text table per grid size: L0..L(n-2) columns plus an
    unweighted Avg, in percent."""
    lines: List[str] = []
    by_m: Dict[int, List[EvalRecord]] = {}
    for r in records:
        by_m.setdefault(r.m, []).append(r)
    for m, rows in sorted(by_m.items()):
        rows = sorted(rows, key=lambda r: r.level)
        headers = [f"L{r.level}" for r in rows] + ["Avg"]
        lines.append(f"{m}x{m} grid ({rows[0].episodes} episodes/level)")
        lines.append(f"{'':<12}" + "".join(f"{h:>7}" for h in headers))
        accs = [r.acc for r in rows]
        scores = [r.score for r in rows]
        lines.append(_format_row("Acc", accs + [sum(accs) / len(accs)]))
        lines.append(_format_row("Score", scores + [sum(scores) / len(scores)]))
        steps = [r.mean_steps for r in rows]
        lines.append(
            f"{'MeanSteps':<12}"
            + "".join(f"{v:>7.2f}" for v in steps + [sum(steps) / len(steps)])
        )
        lines.append("")
    return "\n".join(lines)


def emit_report(
    records: Sequence[EvalRecord], csv_path: str, table_path: Optional[str] = None
) -> Tuple[str, str]:
    """Write CSV (and optionally the text table) atomically; returns both
    rendered strings."""
    if not records:
        raise EmptyCorpus("no records to report")
    csv_text = records_csv(records)
    table_text = records_table(records)
    tmp = csv_path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(csv_text)
    os.replace(tmp, csv_path)
    if table_path:
        tmp = table_path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(table_text)
        os.replace(tmp, table_path)
    return csv_text, table_text


def level_average(records: Sequence[EvalRecord], m: int, field: str) -> float:
    """Unweighted mean of one metric over all levels of a grid size."""
    rows = [r for r in records if r.m == m]
    if not rows:
        raise EmptyCorpus(f"no records for m={m}")
    return sum(getattr(r, field) for r in rows) / len(rows)
