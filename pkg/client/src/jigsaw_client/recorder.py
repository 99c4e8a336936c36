"""Client-side trajectory capture.

Mirrors the server's on-disk episode layout: one trajectory.json plus one
sibling PNG per image identifier. PNG bytes are stored exactly as received
off the wire, so the capture is pixel-identical to the server's registry
and replays cleanly through the environment's own validator.
"""

import base64
import json
import os
from typing import Dict, Optional

SCHEMA_VERSION = 1


class TrajectoryRecorder:
    def __init__(self, new_episode_doc: dict, source_png: Optional[bytes] = None):
        doc = new_episode_doc
        self.episode_id = doc["episode_id"]
        self.executed_turns = 0
        self.reward: Optional[dict] = None
        self._status = doc["status"]
        self._pngs: Dict[str, bytes] = {
            img["name"]: base64.b64decode(img["png_base64"]) for img in doc["images"]
        }
        if source_png is not None:
            self._pngs["source"] = source_png
        self.messages = [
            {"role": "system", "text": doc["prompts"]["system"], "image_refs": []},
            {
                "role": "user",
                "text": doc["prompts"]["user"],
                "image_refs": list(doc["labels"]),
            },
        ]
        config = doc.get("config", {})
        self.metadata = {
            "m": doc["m"],
            "level": doc["level"],
            "seed": doc["seed"],
            "T": doc["T"],
            "gt_labels": None,  # hidden until the episode is terminal
            "source_image_id": "source",
            "status": doc["status"],
            "answer_labels": None,
            "score": None,
            "warnings": [],
            "reward_config": config.get("reward_config", {}),
            "episode_config": config.get("episode_config", {}),
        }

    def record_turn(self, assistant_text: str, step_doc: dict, raw_images: Dict[str, str]):
        self.messages.append(
            {"role": "assistant", "text": assistant_text, "image_refs": []}
        )
        if step_doc["outcome"] != "done":
            self.messages.append(
                {
                    "role": "environment",
                    "text": step_doc["feedback_text"],
                    "image_refs": list(raw_images),
                }
            )
        for name, b64 in raw_images.items():
            self._pngs[name] = base64.b64decode(b64)
        self.executed_turns = step_doc["t"]
        self._status = step_doc["status"]
        if step_doc.get("reward") is not None:
            self.reward = step_doc["reward"]

    def record_terminal(self, state_doc: dict):
        self.metadata["status"] = state_doc["status"]
        self.metadata["gt_labels"] = state_doc.get("gt_labels")
        self.metadata["score"] = state_doc.get("score")
        self.metadata["answer_labels"] = state_doc.get("answer_labels")
        self.metadata["warnings"] = state_doc.get("warnings", [])

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "episode_id": self.episode_id,
            "messages": self.messages,
            "metadata": self.metadata,
            "reward": self.reward,
            "executed_turns": self.executed_turns,
        }

    def save(self, out_dir: str) -> str:
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, "trajectory.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
        for name, data in self._pngs.items():
            with open(os.path.join(out_dir, f"{name}.png"), "wb") as fh:
                fh.write(data)
        return path
