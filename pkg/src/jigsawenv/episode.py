"""Episode state machine: prompt assembly, the turn loop, statement
execution against the image registry, feedback emission and termination.

An episode is fully determined by (source image, m, level, seed, T): the
shuffle, the prompt bytes, every feedback message and every produced image
replay identically. Parse and execution failures never kill an episode;
they come back to the caller as "Error: ..." feedback, exactly like any
other observation.
"""

import random
import threading
import uuid
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

from . import actions, imageops, perms, prompts
from .actions import ActionProgram, BoxAssign, Crop, Observe, Statement, Swap, Zoom
from .errors import (
    ActionParseError,
    ConfigError,
    DuplicateImageName,
    EpisodeBusy,
    EpisodeFinished,
    JigsawError,
    SwapIndexOutOfRange,
    UnknownBoxRef,
    UnknownImageRef,
)
from .imageops import NormalizedBox, PixelImage, TileSet
from .perms import Arrangement, DifficultyLevel
from .rewards import RewardBreakdown, RewardConfig, format_reward, total_reward
from .trajectory import Message, Trajectory

RUNNING = "running"
ANSWERED = "answered"
TRUNCATED = "truncated"
ABORTED = "aborted"

STEP_COUNT_MODES = ("code_turns", "swap_statements")


@dataclass(frozen=True)
class EpisodeConfig:
    max_feedback_side: int = 1024
    step_count_mode: str = "code_turns"

    def __post_init__(self):
        if self.step_count_mode not in STEP_COUNT_MODES:
            raise ConfigError(
                f"step_count_mode must be one of {STEP_COUNT_MODES}, "
                f"got {self.step_count_mode!r}"
            )
        if self.max_feedback_side < 1:
            raise ConfigError("max_feedback_side must be >= 1")


@dataclass
class StepOutcome:
    status: str  # continue | done | truncated | error
    feedback_text: str
    new_images: List[Tuple[str, PixelImage]] = field(default_factory=list)
    reward: Optional[RewardBreakdown] = None


@dataclass
class Episode:
    id: str
    m: int
    gt: Arrangement
    state: Arrangement
    tiles: TileSet  # label order: tiles.tiles[i] belongs to label i
    registry: Dict[str, PixelImage]
    source_image: PixelImage
    t: int
    T: int
    status: str
    level: int
    seed: int
    reward_cfg: RewardConfig
    ep_cfg: EpisodeConfig
    messages: List[Message] = field(default_factory=list)
    boxes: Dict[str, NormalizedBox] = field(default_factory=dict)
    swap_statements: int = 0
    reward: Optional[RewardBreakdown] = None
    answer: Optional[Arrangement] = None
    score: Optional[float] = None
    warnings: List[str] = field(default_factory=list)
    source_image_id: str = "source"
    _step_lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def n(self) -> int:
        return self.m * self.m

    @property
    def labels(self) -> Arrangement:
        return perms.labels_for(self.n)

    def assistant_texts(self) -> List[str]:
        return [msg.text for msg in self.messages if msg.role == "assistant"]

    def to_trajectory(self) -> Trajectory:
        meta = {
            "m": self.m,
            "level": self.level,
            "seed": self.seed,
            "T": self.T,
            "gt_labels": list(self.gt),
            "source_image_id": self.source_image_id,
            "status": self.status,
            "answer_labels": list(self.answer) if self.answer else None,
            "score": self.score,
            "warnings": list(self.warnings),
            "reward_config": {
                "alpha": self.reward_cfg.alpha,
                "beta_fmt": self.reward_cfg.beta_fmt,
                "gamma": self.reward_cfg.gamma,
                "lam": self.reward_cfg.lam,
                "step_max": self.reward_cfg.step_max,
            },
            "episode_config": {
                "max_feedback_side": self.ep_cfg.max_feedback_side,
                "step_count_mode": self.ep_cfg.step_count_mode,
            },
        }
        return Trajectory(
            episode_id=self.id,
            messages=list(self.messages),
            metadata=meta,
            reward=self.reward,
            executed_turns=self.t,
        )

    def all_images(self) -> Dict[str, PixelImage]:
        out = dict(self.registry)
        out[self.source_image_id] = self.source_image
        return out


def new_episode(
    img: PixelImage,
    m: int,
    level: Union[int, DifficultyLevel],
    seed: int,
    T: int = 5,
    reward_cfg: Optional[RewardConfig] = None,
    ep_cfg: Optional[EpisodeConfig] = None,
    episode_id: Optional[str] = None,
) -> Episode:
    """Build a ready-to-step episode from a source image.

    The image is resized to grid multiples, split, and shuffled so that
    exactly `level` tiles start in their ground-truth slot; the system and
    user prompts form the first two messages.
    """
    if T < 1:
        raise ConfigError(f"T must be >= 1, got {T}")
    n = m * m
    n_correct = level.n_correct if isinstance(level, DifficultyLevel) else int(level)
    DifficultyLevel(n_correct).validate_for(n)
    reward_cfg = reward_cfg or RewardConfig(step_max=T)
    ep_cfg = ep_cfg or EpisodeConfig()

    resized = imageops.resize_to_multiple(img, m)
    true_tiles = imageops.split_tiles(resized, m)
    rng = random.Random(seed)
    perm = perms.sample_perm_with_fixed_points(n, n_correct, rng)
    labels = perms.labels_for(n)

    # Presented slot k shows true tile perm[k]; that tile is named labels[k].
    label_tiles = TileSet(m=m, tiles=tuple(true_tiles.tiles[p] for p in perm))
    inverse = [0] * n
    for k, p in enumerate(perm):
        inverse[p] = k
    gt = tuple(labels[inverse[j]] for j in range(n))

    registry = {
        labels[i]: imageops.cap_longest_side(label_tiles.tiles[i], ep_cfg.max_feedback_side)
        for i in range(n)
    }
    messages = [
        Message(role="system", text=prompts.system_prompt(m)),
        Message(role="user", text=prompts.user_prompt(m), image_refs=tuple(labels)),
    ]
    return Episode(
        id=episode_id or f"ep-{uuid.uuid4().hex[:12]}",
        m=m,
        gt=gt,
        state=labels,
        tiles=label_tiles,
        registry=registry,
        source_image=resized,
        t=0,
        T=T,
        status=RUNNING,
        level=n_correct,
        seed=seed,
        reward_cfg=reward_cfg,
        ep_cfg=ep_cfg,
        messages=messages,
    )


def grade_answer(ep: Episode, answer: Sequence[str]) -> Tuple[int, float]:
    """(acc, score) for a declared answer: all-or-nothing accuracy and the
    fraction of correctly placed tiles."""
    answer = tuple(answer)
    acc = int(answer == ep.gt)
    score = perms.count_fixed_points(answer, ep.gt) / ep.n
    return acc, score


def execute_statement(ep: Episode, s: Statement) -> Tuple[str, Optional[Tuple[str, PixelImage]]]:
    """Run one statement against the episode, returning a feedback fragment
    and the produced image, if any. Raises JigsawError subclasses for
    recoverable problems; step() turns those into feedback text."""
    if isinstance(s, Swap):
        if not (0 <= s.i < ep.n and 0 <= s.j < ep.n):
            raise SwapIndexOutOfRange(
                f"swap indices ({s.i}, {s.j}) outside [0, {ep.n})"
            )
        ep.state = perms.apply_swap(ep.state, s.i, s.j)
        assert sorted(ep.state) == sorted(ep.labels), "state bijection broken"
        ep.swap_statements += 1
        return f"Swapped slots {s.i} and {s.j}.", None

    if isinstance(s, BoxAssign):
        ep.boxes[s.name] = s.box
        return f"Set {s.name} = {actions._render_box(s.box)}.", None

    if isinstance(s, Observe):
        _check_fresh_name(ep, s.result)
        img = imageops.compose_state_image(ep.tiles, ep.state)
        img = imageops.cap_longest_side(img, ep.ep_cfg.max_feedback_side)
        ep.registry[s.result] = img
        return f"Generated {s.result} showing the current jigsaw state.", (s.result, img)

    if isinstance(s, Crop):
        _check_fresh_name(ep, s.result)
        source = _resolve_image(ep, s.source)
        box = s.box if isinstance(s.box, NormalizedBox) else _resolve_box(ep, s.box)
        img = imageops.crop_region(source, box)
        img = imageops.cap_longest_side(img, ep.ep_cfg.max_feedback_side)
        ep.registry[s.result] = img
        return f"Generated {s.result} ({img.width}x{img.height}).", (s.result, img)

    if isinstance(s, Zoom):
        _check_fresh_name(ep, s.result)
        source = _resolve_image(ep, s.source)
        img = imageops.zoom_image(source, s.factor)
        img = imageops.cap_longest_side(img, ep.ep_cfg.max_feedback_side)
        ep.registry[s.result] = img
        return f"Generated {s.result} ({img.width}x{img.height}).", (s.result, img)

    raise JigsawError(f"unsupported statement: {s!r}")


def _check_fresh_name(ep: Episode, name: str) -> None:
    if name in ep.registry:
        raise DuplicateImageName(f"image '{name}' already exists")


def _resolve_image(ep: Episode, ref: str) -> PixelImage:
    try:
        return ep.registry[ref]
    except KeyError:
        raise UnknownImageRef(f"unknown image '{ref}'") from None


def _resolve_box(ep: Episode, name: str) -> NormalizedBox:
    try:
        return ep.boxes[name]
    except KeyError:
        raise UnknownBoxRef(f"unknown crop box '{name}'") from None


def _step_num(ep: Episode) -> int:
    counted = ep.t if ep.ep_cfg.step_count_mode == "code_turns" else ep.swap_statements
    # The step penalty saturates at step_max; only relevant when T is
    # configured above the reward's step_max.
    return min(counted, ep.reward_cfg.step_max)


def _finish(ep: Episode, status: str, r_acc: int) -> RewardBreakdown:
    ep.status = status
    r_format = format_reward(ep.assistant_texts(), truncated=(status == TRUNCATED))
    ep.reward = total_reward(r_acc, r_format, _step_num(ep), ep.reward_cfg)
    return ep.reward


def step(ep: Episode, assistant_text: str) -> StepOutcome:
    """Advance the episode by one assistant turn.

    Answer turns terminate with a graded reward and do not increment t;
    every other processed turn increments t, and hitting T without an
    answer truncates the episode with zero accuracy and the maximum step
    penalty.
    """
    if ep.status != RUNNING:
        raise EpisodeFinished(f"episode {ep.id} is {ep.status}")
    if not ep._step_lock.acquire(blocking=False):
        raise EpisodeBusy(f"episode {ep.id} is already stepping")
    try:
        return _step_locked(ep, assistant_text)
    finally:
        ep._step_lock.release()


def _step_locked(ep: Episode, assistant_text: str) -> StepOutcome:
    tags = actions.extract_tags(assistant_text)
    ep.messages.append(Message(role="assistant", text=assistant_text))

    if tags.answer_block is not None:
        notes = []
        if tags.code_blocks:
            warning = "Warning: code block ignored because an answer was provided."
            ep.warnings.append(warning)
            notes.append(warning)
        try:
            answer = actions.parse_answer(tags.answer_block, n=ep.n, labels=ep.labels)
            ep.answer = answer
            r_acc, ep.score = grade_answer(ep, answer)
            notes.append(f"Answer received: {list(answer)}.")
        except JigsawError as exc:
            ep.answer = None
            ep.score = 0.0
            r_acc = 0
            notes.append(f"Error: malformed answer: {exc}")
        reward = _finish(ep, ANSWERED, r_acc)
        return StepOutcome(status="done", feedback_text="\n".join(notes), reward=reward)

    fragments: List[str] = []
    new_images: List[Tuple[str, PixelImage]] = []
    had_error = False
    if not tags.code_blocks:
        fragments.append("Error: no executable code or answer block found in response.")
        had_error = True
    else:
        try:
            program = actions.parse_program("\n".join(tags.code_blocks))
        except (ActionParseError, JigsawError) as exc:
            fragments.append(f"Error: {exc}")
            had_error = True
        else:
            for statement in program.statements:
                try:
                    fragment, produced = execute_statement(ep, statement)
                except JigsawError as exc:
                    fragments.append(f"Error: {exc}")
                    had_error = True
                    break  # remaining statements are skipped, like a script abort
                fragments.append(fragment)
                if produced:
                    new_images.append(produced)

    ep.t += 1
    feedback_text = "\n".join(fragments)
    ep.messages.append(
        Message(
            role="environment",
            text=feedback_text,
            image_refs=tuple(name for name, _ in new_images),
        )
    )
    if ep.t >= ep.T:
        reward = _finish(ep, TRUNCATED, r_acc=0)
        return StepOutcome(
            status="truncated",
            feedback_text=feedback_text,
            new_images=new_images,
            reward=reward,
        )
    return StepOutcome(
        status="error" if had_error else "continue",
        feedback_text=feedback_text,
        new_images=new_images,
    )


def abort(ep: Episode) -> None:
    """Mark a running episode aborted; waits for any in-flight step."""
    with ep._step_lock:
        if ep.status == RUNNING:
            ep.status = ABORTED
