"""Tag extraction and the restricted action grammar."""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jigsawenv import actions, errors
from jigsawenv.actions import BoxAssign, Crop, Observe, Swap, Zoom
from jigsawenv.imageops import NormalizedBox


# --- extract_tags -----------------------------------------------------------

def test_well_formed_think_code():
    r = actions.extract_tags(
        "<think>plan</think><code>state[0], state[1] = state[1], state[0]</code>"
    )
    assert r.think_blocks == ("plan",)
    assert len(r.code_blocks) == 1
    assert r.answer_block is None
    assert r.format_ok


def test_answer_only():
    r = actions.extract_tags('<answer>["B","A","C","D"]</answer>')
    assert r.answer_block == '["B","A","C","D"]'
    assert r.format_ok


def test_unbalanced_and_stray_text():
    r = actions.extract_tags("<code>x</code> stray text <think>y")
    assert not r.format_ok
    assert r.code_blocks == ("x",)
    assert len(r.violations) >= 2  # untagged span + unclosed think


def test_two_answer_blocks_flagged():
    r = actions.extract_tags("<answer>[]</answer><answer>[]</answer>")
    assert not r.format_ok
    assert r.answer_count == 2


def test_nested_tags_flagged():
    r = actions.extract_tags("<think>a <code>b</code> c</think>")
    assert not r.format_ok


def test_mismatched_close_flagged():
    r = actions.extract_tags("<think>a</code>")
    assert not r.format_ok


def test_whitespace_between_blocks_is_fine():
    r = actions.extract_tags("<think>a</think>\n\n  <code>b</code>\n")
    assert r.format_ok


def test_case_sensitive_tags():
    r = actions.extract_tags("<THINK>a</THINK>")
    assert not r.format_ok  # uppercase variants are untagged content


@given(st.text(max_size=300))
@settings(max_examples=300)
def test_extract_tags_never_throws(text):
    r = actions.extract_tags(text)
    if not r.format_ok:
        assert r.violations


# --- parse_program ------------------------------------------------------------

def test_swap_statement():
    p = actions.parse_program("state[0], state[2] = state[2], state[0]")
    assert p.statements == (Swap(0, 2),)


def test_box_then_crop():
    code = "crop_box = [0.0, 0.5, 0.5, 1.0]\ncrop_image_1 = crop(observation_image_1, crop_box)"
    p = actions.parse_program(code)
    assert p.statements == (
        BoxAssign("crop_box", NormalizedBox(0.0, 0.5, 0.5, 1.0)),
        Crop("crop_image_1", "observation_image_1", "crop_box"),
    )


def test_crop_with_literal_box_and_tile_source():
    p = actions.parse_program("crop_image_2 = crop(A, [0.1, 0.1, 0.9, 0.9])")
    (stmt,) = p.statements
    assert stmt == Crop("crop_image_2", "A", NormalizedBox(0.1, 0.1, 0.9, 0.9))


def test_zoom_statement():
    p = actions.parse_program("zoom_image_3 = zoom(crop_image_1, 1.5)")
    assert p.statements == (Zoom("zoom_image_3", "crop_image_1", 1.5),)


def test_observe_statement():
    p = actions.parse_program("observation_image_2 = observation(state)")
    assert p.statements == (Observe("observation_image_2"),)


def test_swap_then_observe_in_one_turn():
    code = "state[0], state[2] = state[2], state[0]\nobservation_image_1 = observation(state)"
    p = actions.parse_program(code)
    assert p.statements == (Swap(0, 2), Observe("observation_image_1"))


def test_non_mirrored_swap():
    with pytest.raises(errors.MirrorError):
        actions.parse_program("state[0], state[2] = state[0], state[2]")


def test_multiple_image_ops_rejected():
    code = (
        "observation_image_1 = observation(state)\n"
        "crop_image_1 = crop(observation_image_1, [0.0, 0.0, 0.5, 0.5])"
    )
    with pytest.raises(errors.MultipleImageOps):
        actions.parse_program(code)


def test_many_swaps_allowed_in_one_turn():
    code = (
        "state[0], state[1] = state[1], state[0]\n"
        "state[2], state[3] = state[3], state[2]\n"
        "observation_image_1 = observation(state)"
    )
    p = actions.parse_program(code)
    assert len(p.statements) == 3


def test_result_name_prefix_must_agree():
    with pytest.raises(errors.NameConstraintError):
        actions.parse_program("zoom_image_1 = crop(A, [0.0, 0.0, 0.5, 0.5])")
    with pytest.raises(errors.NameConstraintError):
        actions.parse_program("my_crop = crop(A, [0.0, 0.0, 0.5, 0.5])")
    with pytest.raises(errors.NameConstraintError):
        actions.parse_program("crop_image_1 = [0.0, 0.0, 0.5, 0.5]")


def test_unknown_statements_are_syntax_errors():
    for code in (
        "for i in range(4): pass",
        "import os",
        "state[0] = 'A'",
        "print('hello')",
        "crop_image_1 = crop(A)",
    ):
        with pytest.raises(errors.ActionSyntaxError):
            actions.parse_program(code)


def test_syntax_error_carries_line_number():
    try:
        actions.parse_program("state[0], state[1] = state[1], state[0]\nnonsense here")
    except errors.ActionSyntaxError as exc:
        assert exc.line == 2
        assert "line 2" in str(exc)
    else:
        raise AssertionError("expected ActionSyntaxError")


def test_comments_and_blank_lines_ignored():
    code = "# setup\n\nstate[1], state[3] = state[3], state[1]  # swap them\n"
    p = actions.parse_program(code)
    assert p.statements == (Swap(1, 3),)


def test_box_invariants_checked_at_parse():
    with pytest.raises(errors.InvalidBox):
        actions.parse_program("crop_box = [0.3, 0.3, 0.3, 0.8]")
    with pytest.raises(errors.InvalidBox):
        actions.parse_program("crop_image_1 = crop(A, [0.9, 0.0, 0.2, 0.5])")


# --- parse_answer ----------------------------------------------------------------

def test_parse_answer_identity():
    assert actions.parse_answer('["A", "B", "C", "D"]', n=4) == ("A", "B", "C", "D")


def test_parse_answer_zero_fixed_points():
    got = actions.parse_answer('["B", "A", "D", "C"]', n=4, labels="ABCD")
    assert got == ("B", "A", "D", "C")


def test_parse_answer_duplicate():
    with pytest.raises(errors.DuplicateLabel):
        actions.parse_answer('["A", "A", "C", "D"]', n=4)


def test_parse_answer_wrong_length():
    with pytest.raises(errors.WrongLength):
        actions.parse_answer('["A", "B", "C"]', n=4)


def test_parse_answer_malformed():
    for text in ("nonsense", "[1, 2, 3, 4]", '{"a": 1}', ""):
        with pytest.raises(errors.MalformedAnswer):
            actions.parse_answer(text, n=4)


def test_parse_answer_unknown_label():
    with pytest.raises(errors.MalformedAnswer):
        actions.parse_answer('["A", "B", "C", "Z"]', n=4, labels="ABCD")


def test_parse_answer_single_quotes_ok():
    assert actions.parse_answer("['A', 'B', 'C', 'D']", n=4) == ("A", "B", "C", "D")


# --- render / round trip -----------------------------------------------------------

def test_render_examples():
    assert actions.render_statement(Swap(1, 3)) == "state[1], state[3] = state[3], state[1]"
    assert (
        actions.render_statement(Observe("observation_image_2"))
        == "observation_image_2 = observation(state)"
    )


def random_program(rng: random.Random) -> actions.ActionProgram:
    """Generator for valid programs: any number of swaps and box assigns,
    at most one image op, order shuffled."""
    statements = []
    for _ in range(rng.randint(0, 4)):
        statements.append(Swap(rng.randint(0, 8), rng.randint(0, 8)))
    box_names = []
    for k in range(rng.randint(0, 2)):
        name = f"box_{rng.randint(0, 99)}_{k}"
        statements.append(BoxAssign(name, _random_box(rng)))
        box_names.append(name)
    rng.shuffle(statements)
    kind = rng.choice(["none", "crop", "zoom", "observe"])
    serial = rng.randint(0, 999)
    sources = ["A", "B", "observation_image_1", "crop_image_7", "zoom_image_2"]
    if kind == "crop":
        box = rng.choice(box_names) if box_names and rng.random() < 0.5 else _random_box(rng)
        statements.append(Crop(f"crop_image_{serial}", rng.choice(sources), box))
    elif kind == "zoom":
        factor = round(rng.uniform(0.2, 4.0), 3)
        statements.append(Zoom(f"zoom_image_{serial}", rng.choice(sources), factor))
    elif kind == "observe":
        statements.append(Observe(f"observation_image_{serial}"))
    return actions.ActionProgram(statements=tuple(statements))


def _random_box(rng: random.Random) -> NormalizedBox:
    x1, x2 = sorted(round(rng.uniform(0, 1), 4) for _ in range(2))
    y1, y2 = sorted(round(rng.uniform(0, 1), 4) for _ in range(2))
    if x1 == x2:
        x1, x2 = 0.0, max(x2, 0.5)
    if y1 == y2:
        y1, y2 = 0.0, max(y2, 0.5)
    return NormalizedBox(x1, y1, x2, y2)


def test_round_trip_fixpoint_on_1000_programs():
    rng = random.Random(2024)
    for _ in range(1000):
        program = random_program(rng)
        rendered = actions.render_program(program)
        assert actions.parse_program(rendered) == program


@given(st.text(max_size=200))
@settings(max_examples=300)
def test_parse_program_raises_only_family_errors(code):
    try:
        actions.parse_program(code)
    except errors.JigsawError:
        pass
