"""Permutation math for jigsaw arrangements.

An arrangement is a tuple of tile labels, one per grid slot in row-major
order. The ground-truth reference for fixed-point counting is the identity
arrangement (label i sitting in slot i). All sampling goes through an
explicit ``random.Random`` so every caller owns its seed.
"""

import math
import random
from dataclasses import dataclass
from typing import List, Sequence, Tuple

from .errors import IndexOutOfRange, InvalidLevel, InvalidSize, SizeMismatch

Arrangement = Tuple[str, ...]

#: Largest supported slot count (labels are single uppercase letters).
MAX_SLOTS = 26


def labels_for(n: int) -> Arrangement:
    """First n uppercase letters, the canonical label set for n slots."""
    if not 1 <= n <= MAX_SLOTS:
        raise InvalidSize(f"slot count must be in [1, {MAX_SLOTS}], got {n}")
    return tuple(chr(ord("A") + i) for i in range(n))


def identity_arrangement(n: int) -> Arrangement:
    return labels_for(n)


def validate_arrangement(arr: Sequence[str], n: int) -> Arrangement:
    """Check that arr is a bijection over the canonical n-label set."""
    arr = tuple(arr)
    if len(arr) != n:
        raise SizeMismatch(f"expected {n} slots, got {len(arr)}")
    if sorted(arr) != sorted(labels_for(n)):
        raise SizeMismatch(f"not a permutation of the label set: {arr!r}")
    return arr


@dataclass(frozen=True)
class DifficultyLevel:
    """Number of slots that already hold their ground-truth tile (the N in LN)."""

    n_correct: int

    def validate_for(self, n: int) -> None:
        if not 0 <= self.n_correct <= n:
            raise InvalidLevel(
                f"n_correct={self.n_correct} outside [0, {n}]"
            )
        if self.n_correct == n - 1:
            raise InvalidLevel(
                f"n_correct={self.n_correct} impossible: no permutation of "
                f"{n} elements has exactly {n - 1} fixed points"
            )


def levels_for_grid(m: int) -> List[int]:
    """Difficulty levels evaluated for an m x m grid: 0 .. m^2 - 2.

    m^2 - 1 is impossible and m^2 is the already-solved puzzle, so neither
    appears in an evaluation sweep.
    """
    return list(range(m * m - 1))


def derangement_count(n: int) -> int:
    """D(n) by inclusion-exclusion: n! * sum_{k=0..n} (-1)^k / k!."""
    return sum((-1) ** k * math.factorial(n) // math.factorial(k) for k in range(n + 1))


def sample_derangement(k: int, rng: random.Random) -> Tuple[int, ...]:
    """Uniform derangement of range(k) by rejection from uniform permutations.

    Acceptance probability tends to 1/e, so the expected number of retries
    is bounded by e for every k >= 2.
    """
    if k < 2:
        raise InvalidSize(f"no derangement exists for k={k}")
    perm = list(range(k))
    while True:
        rng.shuffle(perm)
        if all(perm[i] != i for i in range(k)):
            return tuple(perm)


def sample_perm_with_fixed_points(
    n: int, n_correct: int, rng: random.Random
) -> Tuple[int, ...]:
    """Permutation of range(n) with exactly n_correct fixed points.

    The fixed set is chosen uniformly among C(n, n_correct) subsets; the
    displaced slots then receive a uniform derangement, so conditioned on
    the fixed set the output is uniform over valid permutations.
    """
    DifficultyLevel(n_correct).validate_for(n)
    perm = list(range(n))
    if n_correct == n:
        return tuple(perm)
    fixed = set(rng.sample(range(n), n_correct))
    displaced = [i for i in range(n) if i not in fixed]
    sub = sample_derangement(len(displaced), rng)
    for pos, image in zip(displaced, sub):
        perm[pos] = displaced[image]
    return tuple(perm)


def sample_with_fixed_points(
    n: int, n_correct: int, rng: random.Random
) -> Arrangement:
    """Arrangement with exactly n_correct slots holding their own label."""
    perm = sample_perm_with_fixed_points(n, n_correct, rng)
    base = labels_for(n)
    return tuple(base[p] for p in perm)


def count_fixed_points(state: Sequence[str], gt: Sequence[str]) -> int:
    """Number of slots where state and gt agree."""
    if len(state) != len(gt):
        raise SizeMismatch(f"lengths differ: {len(state)} vs {len(gt)}")
    return sum(s == g for s, g in zip(state, gt))


def min_swap_distance(state: Sequence[str], gt: Sequence[str]) -> int:
    """Minimum transpositions turning state into gt.

    Equals n minus the cycle count of the relative permutation
    q(i) = position of state[i] within gt.
    """
    if len(state) != len(gt):
        raise SizeMismatch(f"lengths differ: {len(state)} vs {len(gt)}")
    n = len(state)
    where = {label: i for i, label in enumerate(gt)}
    q = [where[s] for s in state]
    seen = [False] * n
    cycles = 0
    for i in range(n):
        if seen[i]:
            continue
        cycles += 1
        j = i
        while not seen[j]:
            seen[j] = True
            j = q[j]
    return n - cycles


def apply_swap(state: Sequence[str], i: int, j: int) -> Arrangement:
    """New arrangement with the labels at slots i and j exchanged."""
    n = len(state)
    if not (0 <= i < n and 0 <= j < n):
        raise IndexOutOfRange(f"swap indices ({i}, {j}) outside [0, {n})")
    out = list(state)
    out[i], out[j] = out[j], out[i]
    return tuple(out)


def swap_plan(state: Sequence[str], gt: Sequence[str]) -> List[Tuple[int, int]]:
    """A minimum-length transposition sequence turning state into gt.

    Walks slots left to right and pulls each slot's ground-truth label into
    place, resolving one cycle element per swap; the result has exactly
    min_swap_distance(state, gt) entries.
    """
    if len(state) != len(gt):
        raise SizeMismatch(f"lengths differ: {len(state)} vs {len(gt)}")
    cur = list(state)
    plan: List[Tuple[int, int]] = []
    for i in range(len(cur)):
        if cur[i] == gt[i]:
            continue
        j = cur.index(gt[i], i + 1)
        cur[i], cur[j] = cur[j], cur[i]
        plan.append((i, j))
    return plan
