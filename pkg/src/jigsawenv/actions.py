"""Tagged-response extraction and the restricted action grammar.

Assistant output is structured as <think>/<code>/<answer> blocks; code
blocks contain a closed, line-oriented scripting syntax:

    state[i], state[j] = state[j], state[i]        swap two slots
    some_box = [x1, y1, x2, y2]                    define a crop box
    crop_image_N = crop(image_ref, box_or_name)    crop a registered image
    zoom_image_N = zoom(image_ref, factor)         scale a registered image
    observation_image_N = observation(state)       render the current state

This is deliberately a grammar, not an interpreter: only these productions
are legal, anything else is a parse error that the environment reports back
as feedback. At most one image-producing statement (crop, zoom or
observation) is allowed per program.
"""

import ast
import re
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

from .errors import (
    ActionSyntaxError,
    DuplicateLabel,
    MalformedAnswer,
    MirrorError,
    MultipleImageOps,
    NameConstraintError,
    WrongLength,
)
from .imageops import NormalizedBox

# --- tag extraction -------------------------------------------------------

TAG_RE = re.compile(r"</?(think|code|answer)>")


@dataclass(frozen=True)
class TaggedResponse:
    think_blocks: Tuple[str, ...]
    code_blocks: Tuple[str, ...]
    answer_block: Optional[str]
    answer_count: int
    format_ok: bool
    violations: Tuple[str, ...]


def extract_tags(text: str) -> TaggedResponse:
    """Split assistant output into think/code/answer blocks.

    Total function: never raises. format_ok is true iff tags are balanced,
    non-nested, at most one answer block exists, and nothing but whitespace
    sits outside the blocks; otherwise blocks are recovered best-effort and
    every violation is reported.
    """
    blocks = {"think": [], "code": [], "answer": []}
    violations: List[str] = []
    open_tag: Optional[str] = None
    open_at = 0
    pos = 0
    for match in TAG_RE.finditer(text):
        token, kind = match.group(0), match.group(1)
        closing = token.startswith("</")
        outside = text[pos : match.start()]
        if open_tag is None:
            if outside.strip():
                violations.append(f"untagged content before {token}: {outside.strip()[:40]!r}")
            if closing:
                violations.append(f"closing {token} with no open block")
            else:
                open_tag = kind
                open_at = match.end()
        else:
            if not closing:
                violations.append(f"<{open_tag}> still open when {token} starts")
                # Recover: treat as implicit close + new open.
                open_tag = kind
                open_at = match.end()
            elif kind != open_tag:
                violations.append(f"{token} closes a <{open_tag}> block")
                open_tag = None
            else:
                blocks[kind].append(text[open_at : match.start()])
                open_tag = None
        pos = match.end()
    tail = text[pos:]
    if open_tag is not None:
        violations.append(f"<{open_tag}> never closed")
    elif tail.strip():
        violations.append(f"untagged content after last block: {tail.strip()[:40]!r}")
    answer_count = len(blocks["answer"])
    if answer_count > 1:
        violations.append(f"{answer_count} answer blocks, at most one allowed")
    return TaggedResponse(
        think_blocks=tuple(blocks["think"]),
        code_blocks=tuple(blocks["code"]),
        answer_block=blocks["answer"][0] if blocks["answer"] else None,
        answer_count=answer_count,
        format_ok=not violations,
        violations=tuple(violations),
    )


# --- statements -----------------------------------------------------------

@dataclass(frozen=True)
class Swap:
    i: int
    j: int


@dataclass(frozen=True)
class BoxAssign:
    name: str
    box: NormalizedBox


@dataclass(frozen=True)
class Crop:
    result: str
    source: str
    box: Union[NormalizedBox, str]


@dataclass(frozen=True)
class Zoom:
    result: str
    source: str
    factor: float


@dataclass(frozen=True)
class Observe:
    result: str


Statement = Union[Swap, BoxAssign, Crop, Zoom, Observe]


@dataclass(frozen=True)
class ActionProgram:
    statements: Tuple[Statement, ...]


# --- parsing --------------------------------------------------------------

NUM = r"[+-]?(?:\d+\.?\d*|\.\d+)"
IDENT = r"[A-Za-z_][A-Za-z0-9_]*"
RESULT_ID_RE = re.compile(r"^(observation|crop|zoom)_image_\d+$")

SWAP_RE = re.compile(
    r"^state\[\s*(\d+)\s*\]\s*,\s*state\[\s*(\d+)\s*\]\s*=\s*"
    r"state\[\s*(\d+)\s*\]\s*,\s*state\[\s*(\d+)\s*\]$"
)
LIST4 = rf"\[\s*({NUM})\s*,\s*({NUM})\s*,\s*({NUM})\s*,\s*({NUM})\s*\]"
BOX_ASSIGN_RE = re.compile(rf"^({IDENT})\s*=\s*{LIST4}$")
CROP_RE = re.compile(
    rf"^({IDENT})\s*=\s*crop\s*\(\s*({IDENT})\s*,\s*(?:({IDENT})|{LIST4})\s*\)$"
)
ZOOM_RE = re.compile(rf"^({IDENT})\s*=\s*zoom\s*\(\s*({IDENT})\s*,\s*({NUM})\s*\)$")
OBSERVE_RE = re.compile(rf"^({IDENT})\s*=\s*observation\s*\(\s*state\s*\)$")
TILE_LABEL_RE = re.compile(r"^[A-Z]$")


def is_result_id(name: str) -> bool:
    return bool(RESULT_ID_RE.match(name))


def _check_result_id(name: str, kind: str, line_no: int) -> str:
    match = RESULT_ID_RE.match(name)
    if not match:
        raise NameConstraintError(
            f"line {line_no}: result name {name!r} must match "
            f"{kind}_image_<integer>",
            line=line_no,
        )
    if match.group(1) != kind:
        raise NameConstraintError(
            f"line {line_no}: {kind} result must be named {kind}_image_<integer>, "
            f"got {name!r}",
            line=line_no,
        )
    return name


def _check_image_ref(name: str, line_no: int) -> str:
    if is_result_id(name) or TILE_LABEL_RE.match(name):
        return name
    raise ActionSyntaxError(
        f"line {line_no}: expected an image reference (a result identifier or "
        f"tile label), got {name!r}",
        line=line_no,
    )


def _parse_line(line: str, line_no: int) -> Statement:
    if line.startswith("state"):
        match = SWAP_RE.match(line)
        if not match:
            raise ActionSyntaxError(
                f"line {line_no}: malformed swap, expected "
                f"state[i], state[j] = state[j], state[i]",
                line=line_no,
            )
        i, j, rj, ri = (int(g) for g in match.groups())
        if (i, j) != (ri, rj):
            raise MirrorError(
                f"line {line_no}: swap operands not mirrored: left pair "
                f"({i}, {j}) vs right pair ({rj}, {ri})",
                line=line_no,
            )
        return Swap(i, j)

    match = OBSERVE_RE.match(line)
    if match:
        return Observe(_check_result_id(match.group(1), "observation", line_no))

    match = ZOOM_RE.match(line)
    if match:
        name, source, factor = match.groups()
        return Zoom(
            _check_result_id(name, "zoom", line_no),
            _check_image_ref(source, line_no),
            float(factor),
        )

    match = CROP_RE.match(line)
    if match:
        name, source, box_name = match.group(1), match.group(2), match.group(3)
        result = _check_result_id(name, "crop", line_no)
        source = _check_image_ref(source, line_no)
        if box_name is not None:
            return Crop(result, source, box_name)
        box = NormalizedBox(*(float(match.group(k)) for k in range(4, 8)))
        return Crop(result, source, box)

    match = BOX_ASSIGN_RE.match(line)
    if match:
        name = match.group(1)
        if is_result_id(name):
            raise NameConstraintError(
                f"line {line_no}: {name!r} is reserved for image results and "
                f"cannot name a box",
                line=line_no,
            )
        box = NormalizedBox(*(float(match.group(k)) for k in range(2, 6)))
        return BoxAssign(name, box)

    raise ActionSyntaxError(
        f"line {line_no}: unrecognized statement {line!r}; expected a swap, "
        f"box assignment, crop, zoom or observation call",
        line=line_no,
    )


def parse_program(code: str) -> ActionProgram:
    """Parse one code block into statements; comments after # are ignored."""
    statements: List[Statement] = []
    for line_no, raw in enumerate(code.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        statements.append(_parse_line(line, line_no))
    image_ops = sum(isinstance(s, (Crop, Zoom, Observe)) for s in statements)
    if image_ops > 1:
        raise MultipleImageOps(
            f"{image_ops} image operations in one turn, only one of "
            f"crop/zoom/observation is allowed"
        )
    return ActionProgram(statements=tuple(statements))


# --- answers ---------------------------------------------------------------

def parse_answer(
    answer: str,
    n: Optional[int] = None,
    labels: Optional[Sequence[str]] = None,
) -> Tuple[str, ...]:
    """Parse a bracketed label-list literal into an arrangement.

    Length and label-set validation run only when n / labels are supplied.
    """
    try:
        value = ast.literal_eval(answer.strip())
    except (ValueError, SyntaxError) as exc:
        raise MalformedAnswer(f"not a list literal: {exc}") from exc
    if not isinstance(value, (list, tuple)) or not all(
        isinstance(item, str) for item in value
    ):
        raise MalformedAnswer(f"expected a list of quoted labels, got {value!r}")
    arrangement = tuple(item.strip() for item in value)
    if n is not None and len(arrangement) != n:
        raise WrongLength(f"expected {n} labels, got {len(arrangement)}")
    seen = set()
    for label in arrangement:
        if label in seen:
            raise DuplicateLabel(f"label {label!r} appears more than once")
        seen.add(label)
    if labels is not None:
        unknown = [lab for lab in arrangement if lab not in set(labels)]
        if unknown:
            raise MalformedAnswer(f"labels not in this episode: {unknown}")
    return arrangement


# --- rendering ---------------------------------------------------------------

def _render_number(x: float) -> str:
    return repr(float(x))


def _render_box(box: NormalizedBox) -> str:
    return "[" + ", ".join(_render_number(v) for v in box.as_list()) + "]"


def render_statement(s: Statement) -> str:
    if isinstance(s, Swap):
        return f"state[{s.i}], state[{s.j}] = state[{s.j}], state[{s.i}]"
    if isinstance(s, BoxAssign):
        return f"{s.name} = {_render_box(s.box)}"
    if isinstance(s, Crop):
        box = s.box if isinstance(s.box, str) else _render_box(s.box)
        return f"{s.result} = crop({s.source}, {box})"
    if isinstance(s, Zoom):
        return f"{s.result} = zoom({s.source}, {_render_number(s.factor)})"
    if isinstance(s, Observe):
        return f"{s.result} = observation(state)"
    raise TypeError(f"not a statement: {s!r}")


def render_program(p: ActionProgram) -> str:
    """Canonical text form; parse_program(render_program(p)) == p."""
    return "\n".join(render_statement(s) for s in p.statements)
