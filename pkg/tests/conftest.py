import numpy as np
import pytest

from iapf.core import BinaryMask, GrayMask, Heatmap


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def mask(rows) -> BinaryMask:
    """Build a BinaryMask from nested 0/1 lists or strings like '0110'."""
    if isinstance(rows[0], str):
        rows = [[int(ch) for ch in row] for row in rows]
    return BinaryMask(np.array(rows, dtype=bool))


def gray(rows) -> GrayMask:
    return GrayMask(np.array(rows, dtype=np.float64))


def heatmap(rows) -> Heatmap:
    return Heatmap(np.array(rows, dtype=np.float64))
