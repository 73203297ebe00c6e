"""Semantic collapse of instance stacks and self-consistency voting.

A stack collapses to one semantic mask by per-pixel logical OR. Across
repeated runs, the candidate semantic mask closest (L1) to the per-pixel
mean of all candidates wins; its paired instance stack is the instance
prediction.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import BinaryMask, InstanceMaskStack
from .errors import DimensionMismatch, EmptyCandidates, EmptyStack


@dataclass(frozen=True, eq=False)
class SemanticMask:
    mask: BinaryMask
    run_index: int


@dataclass(frozen=True)
class VoteResult:
    selected_index: int
    distances: tuple[float, ...]


def collapse_semantic(stack: InstanceMaskStack) -> BinaryMask:
    """Per-pixel OR over the instance dimension."""
    if len(stack) == 0:  # unreachable through the constructor; kept for defense
        raise EmptyStack("cannot collapse an empty stack")
    acc = np.zeros((stack.height, stack.width), dtype=bool)
    for m in stack.masks:
        acc |= m.bits
    return BinaryMask(acc)


def vote(candidates: Sequence[BinaryMask]) -> VoteResult:
    """Pick the candidate minimizing L1 distance to the candidates' mean.

    distance_i = sum_pixels |M_i - mean|. The argmin is computed on the
    integer numerators sum |I*M_i - S| (S = per-pixel sum of candidates),
    which equals the float argmin exactly and is immune to summation-order
    ties. Ties break to the lowest index.
    """
    if not candidates:
        raise EmptyCandidates("vote needs at least one candidate")
    shape = candidates[0].bits.shape
    for m in candidates[1:]:
        if m.bits.shape != shape:
            raise DimensionMismatch("vote candidates must share dimensions")
    n = len(candidates)
    total = np.zeros(shape, dtype=np.int64)
    for m in candidates:
        total += m.bits
    numerators = [
        int(np.abs(n * m.bits.astype(np.int64) - total).sum()) for m in candidates
    ]
    selected = min(range(n), key=lambda i: (numerators[i], i))
    distances = tuple(num / n for num in numerators)
    return VoteResult(selected_index=selected, distances=distances)


def select_final(
    runs: Sequence[tuple[SemanticMask, InstanceMaskStack]]
) -> tuple[BinaryMask, InstanceMaskStack]:
    """Vote across runs and return the winning semantic mask with its stack."""
    if not runs:
        raise EmptyCandidates("select_final needs at least one run")
    result = vote([sm.mask for sm, _ in runs])
    sm, stack = runs[result.selected_index]
    return sm.mask, stack
