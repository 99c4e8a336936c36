"""Trajectory records and their on-disk layout.

One episode is stored as a directory: trajectory.json plus one sibling PNG
per image, named by its registry identifier (tile labels, produced result
identifiers, and the post-resize source image). Pixel comparisons are
defined on decoded buffers, not on PNG container bytes.
"""

import json
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .errors import SchemaError
from .imageops import PixelImage, load_image, save_png
from .rewards import RewardBreakdown

SCHEMA_VERSION = 1

ROLES = ("system", "user", "assistant", "environment")


@dataclass
class Message:
    role: str
    text: str
    image_refs: Tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"role": self.role, "text": self.text, "image_refs": list(self.image_refs)}

    @classmethod
    def from_dict(cls, d: dict) -> "Message":
        return cls(
            role=d["role"], text=d["text"], image_refs=tuple(d.get("image_refs", ()))
        )


@dataclass
class Trajectory:
    episode_id: str
    messages: List[Message] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    reward: Optional[RewardBreakdown] = None
    executed_turns: int = 0

    def assistant_texts(self) -> List[str]:
        return [msg.text for msg in self.messages if msg.role == "assistant"]

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "episode_id": self.episode_id,
            "messages": [msg.to_dict() for msg in self.messages],
            "metadata": self.metadata,
            "reward": self.reward.to_dict() if self.reward else None,
            "executed_turns": self.executed_turns,
        }


def trajectory_from_dict(doc: dict) -> Trajectory:
    try:
        if doc["schema_version"] != SCHEMA_VERSION:
            raise SchemaError(f"unsupported schema_version {doc['schema_version']!r}")
        messages = [Message.from_dict(m) for m in doc["messages"]]
        reward = RewardBreakdown.from_dict(doc["reward"]) if doc.get("reward") else None
        traj = Trajectory(
            episode_id=doc["episode_id"],
            messages=messages,
            metadata=doc["metadata"],
            reward=reward,
            executed_turns=int(doc["executed_turns"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed trajectory document: {exc!r}") from exc
    for msg in traj.messages:
        if msg.role not in ROLES:
            raise SchemaError(f"unknown message role {msg.role!r}")
    return traj


def trajectory_json(traj: Trajectory) -> str:
    return json.dumps(traj.to_dict(), indent=2, sort_keys=True)


def save_trajectory(traj: Trajectory, images: Dict[str, PixelImage], out_dir: str) -> str:
    """Write trajectory.json and one PNG per image into out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "trajectory.json")
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(trajectory_json(traj))
    os.replace(tmp, path)
    for name, img in images.items():
        save_png(img, os.path.join(out_dir, f"{name}.png"))
    return path


def load_trajectory(path: str) -> Tuple[Trajectory, Dict[str, PixelImage]]:
    """Read a trajectory directory (or its trajectory.json path) back.

    Returns the parsed trajectory and every sibling PNG keyed by identifier.
    Raises SchemaError on structural problems, including PNGs referenced by
    messages but missing on disk.
    """
    if os.path.isdir(path):
        path = os.path.join(path, "trajectory.json")
    if not os.path.exists(path):
        raise SchemaError(f"no trajectory file at {path}")
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc}") from exc
    traj = trajectory_from_dict(doc)
    base = os.path.dirname(path)
    images: Dict[str, PixelImage] = {}
    for entry in sorted(os.listdir(base)):
        if entry.endswith(".png"):
            images[entry[: -len(".png")]] = load_image(os.path.join(base, entry))
    referenced = {ref for msg in traj.messages for ref in msg.image_refs}
    referenced.add(traj.metadata.get("source_image_id", "source"))
    missing = sorted(referenced - set(images))
    if missing:
        raise SchemaError(f"missing sibling PNGs: {missing}")
    return traj, images
