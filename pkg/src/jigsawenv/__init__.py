"""Interactive jigsaw-solving environment with verifiable rewards."""

__version__ = "0.1.0"

from .episode import Episode, EpisodeConfig, StepOutcome, grade_answer, new_episode, step
from .imageops import NormalizedBox, PixelImage, TileSet
from .perms import Arrangement, DifficultyLevel, labels_for, levels_for_grid
from .rewards import RewardBreakdown, RewardConfig

__all__ = [
    "Arrangement",
    "DifficultyLevel",
    "Episode",
    "EpisodeConfig",
    "NormalizedBox",
    "PixelImage",
    "RewardBreakdown",
    "RewardConfig",
    "StepOutcome",
    "TileSet",
    "grade_answer",
    "labels_for",
    "levels_for_grid",
    "new_episode",
    "step",
]
