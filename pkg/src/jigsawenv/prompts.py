"""Grid-size-aware prompt assembly from the shipped text templates."""

import string
from functools import lru_cache
from importlib import resources
from typing import Sequence

from .perms import labels_for


@lru_cache(maxsize=None)
def _load_asset(name: str) -> str:
    return resources.files("jigsawenv.assets").joinpath(name).read_text(encoding="utf-8")


def _layout_diagram(labels: Sequence[str], m: int) -> str:
    rows = []
    for r in range(m):
        rows.append(" ".join(labels[r * m : (r + 1) * m]))
    return "\n".join(rows)


def _enumerate_labels(labels: Sequence[str]) -> str:
    if len(labels) == 1:
        return labels[0]
    return ", ".join(labels[:-1]) + f" and {labels[-1]}"


def _example_state(labels: Sequence[str]) -> list:
    # A one-step rotation: visibly scrambled but easy to read.
    return list(labels[1:]) + [labels[0]]


def _index_explanation(example: Sequence[str], m: int) -> str:
    lines = []
    corner = {
        (0, 0): "Top left",
        (0, m - 1): "Top right",
        (m - 1, 0): "Bottom left",
        (m - 1, m - 1): "Bottom right",
    }
    for k, label in enumerate(example):
        r, c = divmod(k, m)
        place = corner.get((r, c), f"Row {r + 1}, column {c + 1}")
        lines.append(f"{place} (index {k}): {label}")
    return "\n".join(lines)


def _state_literal(labels: Sequence[str]) -> str:
    return "[" + ", ".join(f'"{lab}"' for lab in labels) + "]"


@lru_cache(maxsize=None)
def system_prompt(m: int) -> str:
    labels = labels_for(m * m)
    example = _example_state(labels)
    template = string.Template(_load_asset("system_prompt.txt"))
    return template.substitute(
        m=m,
        n=m * m,
        label_enumeration=_enumerate_labels(labels),
        initial_state_list=_state_literal(labels),
        layout_diagram=_layout_diagram(labels, m),
        example_state=_state_literal(example),
        index_explanation=_index_explanation(example, m),
        swap_example_j=m,  # first slot of the second row
    )


@lru_cache(maxsize=None)
def user_prompt(m: int) -> str:
    labels = labels_for(m * m)
    image_lines = "\n".join(f"Image {lab}: <image>" for lab in labels)
    template = string.Template(_load_asset("user_prompt.txt"))
    return template.substitute(
        n=m * m,
        label_enumeration=_enumerate_labels(labels),
        image_lines=image_lines,
    )
