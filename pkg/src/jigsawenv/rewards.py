"""Verifiable three-part episode reward: accuracy, format, step penalty.

total = alpha * r_acc + beta_fmt * r_format + gamma * r_step
r_step = lam * (step_num if r_acc == 1 else step_max)

A correct answer earns the per-step penalty actually spent; an incorrect or
missing answer earns the maximum penalty so the step term can never be
farmed by stopping early with a wrong answer.
"""

from dataclasses import dataclass, field
from typing import Sequence

from .actions import extract_tags
from .errors import ConfigError, SizeMismatch, StepOverflow


@dataclass(frozen=True)
class RewardConfig:
    alpha: float = 0.8
    beta_fmt: float = 0.2
    gamma: float = 1.0
    lam: float = -0.05
    step_max: int = 5

    def __post_init__(self):
        for name in ("alpha", "beta_fmt", "gamma", "lam"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or v != v or v in (float("inf"), float("-inf")):
                raise ConfigError(f"{name} must be finite, got {v!r}")
        if self.lam > 0:
            raise ConfigError(f"lam is a penalty coefficient and must be <= 0, got {self.lam}")
        if self.step_max < 1:
            raise ConfigError(f"step_max must be >= 1, got {self.step_max}")


@dataclass(frozen=True)
class RewardBreakdown:
    r_acc: int
    r_format: int
    r_step: float
    total: float
    step_num: int

    def to_dict(self) -> dict:
        return {
            "r_acc": self.r_acc,
            "r_format": self.r_format,
            "r_step": self.r_step,
            "total": self.total,
            "step_num": self.step_num,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RewardBreakdown":
        return cls(
            r_acc=int(d["r_acc"]),
            r_format=int(d["r_format"]),
            r_step=float(d["r_step"]),
            total=float(d["total"]),
            step_num=int(d["step_num"]),
        )


def accuracy_reward(answer: Sequence[str], gt: Sequence[str]) -> int:
    """1 iff every slot of the declared answer matches the ground truth."""
    if len(answer) != len(gt):
        raise SizeMismatch(f"lengths differ: {len(answer)} vs {len(gt)}")
    return int(tuple(answer) == tuple(gt))


def format_reward(assistant_texts: Sequence[str], truncated: bool = False) -> int:
    """1 iff every assistant message is perfectly tagged.

    The final message must additionally contain exactly one answer block,
    except for truncated episodes where no answer ever existed; those are
    judged on tag discipline alone.
    """
    if not assistant_texts:
        return 0
    responses = [extract_tags(text) for text in assistant_texts]
    if any(not r.format_ok for r in responses):
        return 0
    if not truncated and responses[-1].answer_count != 1:
        return 0
    return int(all(r.answer_count == 0 for r in responses[:-1]))


def step_reward(r_acc: int, step_num: int, cfg: RewardConfig) -> float:
    if step_num < 0:
        raise StepOverflow(f"step_num must be >= 0, got {step_num}")
    if step_num > cfg.step_max:
        raise StepOverflow(f"step_num={step_num} exceeds step_max={cfg.step_max}")
    return cfg.lam * (step_num if r_acc == 1 else cfg.step_max)


def total_reward(
    r_acc: int, r_format: int, step_num: int, cfg: RewardConfig
) -> RewardBreakdown:
    r_step = step_reward(r_acc, step_num, cfg)
    total = cfg.alpha * r_acc + cfg.beta_fmt * r_format + cfg.gamma * r_step
    return RewardBreakdown(
        r_acc=r_acc, r_format=r_format, r_step=r_step, total=total, step_num=step_num
    )
