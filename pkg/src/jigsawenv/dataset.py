"""Puzzle-dataset synthesis, trajectory balance filters and replay validation.

A manifest is JSON-lines: a single meta record first, then one entry per
line. Entry seeds are derived from the manifest seed by hashing, so the
whole file is a pure function of (corpus listing, config).
"""

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from . import actions
from .actions import Crop, Observe, Swap, Zoom
from .episode import EpisodeConfig, new_episode, step
from .errors import ConfigError, EmptyCorpus, SchemaError, UndecodableImage
from .imageops import load_image
from .rewards import RewardConfig
from .trajectory import Trajectory, load_trajectory

log = logging.getLogger(__name__)

MANIFEST_SCHEMA_VERSION = 1
IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp")


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from arbitrary parts (cross-platform, unlike hash())."""
    text = "|".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


@dataclass(frozen=True)
class ManifestEntry:
    image_path: str
    m: int
    level: int
    seed: int
    category_tag: str

    def to_dict(self) -> dict:
        return {
            "image_path": self.image_path,
            "m": self.m,
            "level": self.level,
            "seed": self.seed,
            "category_tag": self.category_tag,
        }


@dataclass
class DatasetManifest:
    entries: List[ManifestEntry]
    mixture: Optional[Dict[str, float]] = None
    config: dict = field(default_factory=dict)

    def to_jsonl(self) -> str:
        meta = {
            "kind": "meta",
            "schema_version": MANIFEST_SCHEMA_VERSION,
            "mixture": self.mixture,
            "config": self.config,
        }
        lines = [json.dumps(meta, sort_keys=True)]
        lines += [json.dumps(e.to_dict(), sort_keys=True) for e in self.entries]
        return "\n".join(lines) + "\n"

    def save(self, path: str) -> None:
        tmp = path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(self.to_jsonl())
        os.replace(tmp, path)

    @classmethod
    def load(cls, path: str) -> "DatasetManifest":
        entries: List[ManifestEntry] = []
        mixture = None
        config: dict = {}
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    doc = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise SchemaError(f"{path}:{line_no}: invalid JSON: {exc}") from exc
                if doc.get("kind") == "meta":
                    if doc.get("schema_version") != MANIFEST_SCHEMA_VERSION:
                        raise SchemaError(
                            f"unsupported manifest schema {doc.get('schema_version')!r}"
                        )
                    mixture = doc.get("mixture")
                    config = doc.get("config", {})
                    continue
                try:
                    entries.append(
                        ManifestEntry(
                            image_path=doc["image_path"],
                            m=int(doc["m"]),
                            level=int(doc["level"]),
                            seed=int(doc["seed"]),
                            category_tag=doc["category_tag"],
                        )
                    )
                except (KeyError, TypeError, ValueError) as exc:
                    raise SchemaError(f"{path}:{line_no}: bad entry: {exc!r}") from exc
        return cls(entries=entries, mixture=mixture, config=config)


@dataclass(frozen=True)
class SynthesisConfig:
    m: int = 2
    levels: Tuple[int, ...] = (0,)
    per_level_count: int = 1
    seed: int = 0
    mixture: Optional[Dict[str, float]] = None
    count: Optional[int] = None  # images to select; required with mixture

    def __post_init__(self):
        if self.per_level_count < 1:
            raise ConfigError("per_level_count must be >= 1")
        if self.mixture is not None:
            total = sum(self.mixture.values())
            if abs(total - 1.0) > 1e-9:
                raise ConfigError(f"mixture fractions sum to {total}, expected 1")
            if self.count is None:
                raise ConfigError("mixture requires an explicit image count")


def largest_remainder(total: int, fractions: Dict[str, float]) -> Dict[str, int]:
    """Apportion total into integer counts matching fractions."""
    quotas = {k: total * f for k, f in fractions.items()}
    counts = {k: int(q) for k, q in quotas.items()}
    short = total - sum(counts.values())
    order = sorted(quotas, key=lambda k: (-(quotas[k] - counts[k]), k))
    for k in order[:short]:
        counts[k] += 1
    return counts


def _list_corpus(image_dir: str) -> Dict[str, List[str]]:
    """Decodable images grouped by category (immediate subdirectory name;
    files directly under image_dir get the 'uncategorized' tag)."""
    if not os.path.isdir(image_dir):
        raise EmptyCorpus(f"not a directory: {image_dir}")
    grouped: Dict[str, List[str]] = {}
    for root, _, files in sorted(os.walk(image_dir)):
        for name in sorted(files):
            if not name.lower().endswith(IMAGE_EXTENSIONS):
                continue
            path = os.path.join(root, name)
            rel = os.path.relpath(path, image_dir)
            category = rel.split(os.sep)[0] if os.sep in rel else "uncategorized"
            try:
                load_image(path)
            except UndecodableImage as exc:
                log.warning("skipping undecodable image: %s", exc)
                continue
            grouped.setdefault(category, []).append(path)
    if not any(grouped.values()):
        raise EmptyCorpus(f"no decodable images under {image_dir}")
    return grouped


def synthesize_puzzles(image_dir: str, cfg: SynthesisConfig) -> DatasetManifest:
    """Deterministic manifest over the corpus at the requested difficulty grid."""
    import random

    grouped = _list_corpus(image_dir)
    if cfg.mixture is not None:
        unknown = set(cfg.mixture) - set(grouped)
        if unknown:
            raise ConfigError(f"mixture names absent categories: {sorted(unknown)}")
        targets = largest_remainder(cfg.count, cfg.mixture)
        selected: List[Tuple[str, str]] = []
        for category in sorted(targets):
            pool = grouped[category]
            want = targets[category]
            if want > len(pool):
                raise ConfigError(
                    f"category {category!r} has {len(pool)} images, "
                    f"mixture needs {want}"
                )
            rng = random.Random(derive_seed(cfg.seed, "select", category))
            chosen = sorted(rng.sample(pool, want))
            selected += [(category, p) for p in chosen]
    else:
        selected = [
            (category, p) for category in sorted(grouped) for p in grouped[category]
        ]

    entries: List[ManifestEntry] = []
    seen = set()
    for category, path in selected:
        for level in cfg.levels:
            for replica in range(cfg.per_level_count):
                seed = derive_seed(cfg.seed, path, cfg.m, level, replica)
                key = (path, cfg.m, level, seed)
                if key in seen:  # astronomically unlikely; keep tuples unique
                    seed = derive_seed(cfg.seed, path, cfg.m, level, replica, "bump")
                    key = (path, cfg.m, level, seed)
                seen.add(key)
                entries.append(
                    ManifestEntry(
                        image_path=path,
                        m=cfg.m,
                        level=level,
                        seed=seed,
                        category_tag=category,
                    )
                )
    config = {
        "m": cfg.m,
        "levels": list(cfg.levels),
        "per_level_count": cfg.per_level_count,
        "seed": cfg.seed,
        "mixture": cfg.mixture,
        "count": cfg.count,
        "image_dir": image_dir,
    }
    return DatasetManifest(entries=entries, mixture=cfg.mixture, config=config)


# --- balance filter ------------------------------------------------------------

ACTION_KINDS = ("Swap", "Observe", "Crop", "Zoom")
_KIND_BY_TYPE = {Swap: "Swap", Observe: "Observe", Crop: "Crop", Zoom: "Zoom"}


@dataclass(frozen=True)
class BalanceFilterConfig:
    step_min: int = 4
    step_max_keep: int = 8
    required_action_kinds: Tuple[str, ...] = ACTION_KINDS
    min_kind_fraction: float = 0.1

    def __post_init__(self):
        if self.step_min > self.step_max_keep:
            raise ConfigError("step_min must be <= step_max_keep")


@dataclass
class FilterReport:
    kept: List[Trajectory]
    rejected: List[Tuple[Trajectory, str]]
    kind_fractions: Dict[str, float]
    warnings: List[str]


def trajectory_action_kinds(traj: Trajectory) -> set:
    kinds = set()
    for text in traj.assistant_texts():
        tags = actions.extract_tags(text)
        for block in tags.code_blocks:
            try:
                program = actions.parse_program(block)
            except Exception:
                continue
            for statement in program.statements:
                kind = _KIND_BY_TYPE.get(type(statement))
                if kind:
                    kinds.add(kind)
    return kinds


def filter_trajectories(
    trajs: Sequence[Trajectory], cfg: BalanceFilterConfig
) -> FilterReport:
    """Keep correct trajectories within the step window; report action-kind
    coverage of the kept set and warn on under-represented kinds.

    Callers feed this replay-validated trajectories (validate_trajectory),
    so everything kept is known to replay cleanly."""
    kept: List[Trajectory] = []
    rejected: List[Tuple[Trajectory, str]] = []
    for traj in trajs:
        if traj.reward is None or traj.reward.r_acc != 1:
            rejected.append((traj, "accuracy 0"))
        elif traj.executed_turns < cfg.step_min:
            rejected.append((traj, f"below step_min ({traj.executed_turns} < {cfg.step_min})"))
        elif traj.executed_turns > cfg.step_max_keep:
            rejected.append(
                (traj, f"above step_max_keep ({traj.executed_turns} > {cfg.step_max_keep})")
            )
        else:
            kept.append(traj)
    fractions = {}
    warnings = []
    for kind in cfg.required_action_kinds:
        hits = sum(kind in trajectory_action_kinds(t) for t in kept)
        fraction = hits / len(kept) if kept else 0.0
        fractions[kind] = fraction
        if fraction < cfg.min_kind_fraction:
            warnings.append(
                f"action kind {kind} appears in {fraction:.1%} of kept "
                f"trajectories (threshold {cfg.min_kind_fraction:.1%})"
            )
    return FilterReport(kept=kept, rejected=rejected, kind_fractions=fractions, warnings=warnings)


# --- replay validation -------------------------------------------------------------


@dataclass
class ValidationReport:
    path: str
    clean: bool
    issues: List[str]

    def summary(self) -> str:
        status = "clean" if self.clean else f"{len(self.issues)} issue(s)"
        lines = [f"{self.path}: {status}"]
        lines += [f"  - {issue}" for issue in self.issues]
        return "\n".join(lines)


def _rebuild_episode(traj: Trajectory, images) -> "object":
    meta = traj.metadata
    source_id = meta.get("source_image_id", "source")
    reward_meta = meta.get("reward_config", {})
    ep_meta = meta.get("episode_config", {})
    reward_cfg = RewardConfig(
        alpha=reward_meta.get("alpha", 0.8),
        beta_fmt=reward_meta.get("beta_fmt", 0.2),
        gamma=reward_meta.get("gamma", 1.0),
        lam=reward_meta.get("lam", -0.05),
        step_max=reward_meta.get("step_max", 5),
    )
    ep_cfg = EpisodeConfig(
        max_feedback_side=ep_meta.get("max_feedback_side", 1024),
        step_count_mode=ep_meta.get("step_count_mode", "code_turns"),
    )
    return new_episode(
        images[source_id],
        m=int(meta["m"]),
        level=int(meta["level"]),
        seed=int(meta["seed"]),
        T=int(meta["T"]),
        reward_cfg=reward_cfg,
        ep_cfg=ep_cfg,
        episode_id=traj.episode_id,
    )


def validate_trajectory(path: str) -> ValidationReport:
    """Schema check, per-turn format check, full deterministic replay and
    reward recomputation. Raises SchemaError for structural problems;
    divergences land in the report."""
    traj, images = load_trajectory(path)
    issues: List[str] = []

    meta = traj.metadata
    for key in ("m", "level", "seed", "T", "gt_labels", "source_image_id"):
        if key not in meta:
            raise SchemaError(f"metadata missing {key!r}")
    if not traj.messages or traj.messages[0].role != "system" or (
        len(traj.messages) > 1 and traj.messages[1].role != "user"
    ):
        raise SchemaError("trajectory must start with system + user messages")
    for k, msg in enumerate(traj.messages[2:], start=2):
        expected = "assistant" if k % 2 == 0 else "environment"
        if msg.role != expected:
            raise SchemaError(f"message {k} has role {msg.role!r}, expected {expected!r}")

    ep = _rebuild_episode(traj, images)
    if list(ep.gt) != list(meta["gt_labels"]):
        issues.append(
            f"ground truth mismatch: stored {meta['gt_labels']}, replay {list(ep.gt)}"
        )

    # Prompt messages must replay byte-identically.
    for k in (0, 1):
        if k < len(traj.messages) and traj.messages[k].text != ep.messages[k].text:
            issues.append(f"prompt message {k} differs from deterministic replay")

    for turn_no, text in enumerate(traj.assistant_texts(), start=1):
        if ep.status != "running":
            issues.append(f"turn {turn_no}: episode already terminal during replay")
            break
        step(ep, text)

    replayed = ep.messages
    if len(replayed) != len(traj.messages):
        issues.append(
            f"message count differs: stored {len(traj.messages)}, replay {len(replayed)}"
        )
    for k, (stored, new) in enumerate(zip(traj.messages, replayed)):
        if stored.role != new.role:
            issues.append(f"message {k}: role {stored.role!r} vs replay {new.role!r}")
        if stored.text != new.text:
            issues.append(f"message {k} ({stored.role}): text diverges from replay")
        if tuple(stored.image_refs) != tuple(new.image_refs):
            issues.append(f"message {k}: image_refs diverge from replay")

    # The stored source is the replay *input* (tampering with it surfaces as
    # divergent tiles); every produced image must match the replay exactly.
    for name, img in ep.registry.items():
        stored = images.get(name)
        if stored is None:
            issues.append(f"image {name}: missing from trajectory directory")
        elif not stored.same_pixels(img):
            issues.append(f"image {name}: pixels diverge from replay")

    if (traj.reward is None) != (ep.reward is None):
        issues.append(
            f"reward presence differs: stored {traj.reward}, replay {ep.reward}"
        )
    elif traj.reward is not None and traj.reward != ep.reward:
        issues.append(
            f"reward mismatch: stored {traj.reward.to_dict()}, "
            f"recomputed {ep.reward.to_dict()}"
        )
    if traj.executed_turns != ep.t:
        issues.append(
            f"executed_turns mismatch: stored {traj.executed_turns}, replay {ep.t}"
        )
    status = meta.get("status")
    if status and status != ep.status:
        issues.append(f"status mismatch: stored {status!r}, replay {ep.status!r}")

    return ValidationReport(path=str(path), clean=not issues, issues=issues)
