import math

import numpy as np
import pytest
from hypothesis import strategies as st

from textborder.geometry import RotatedRect


@pytest.fixture
def rng():
    return np.random.default_rng(0xC0FFEE)


coords = st.floats(-50.0, 50.0)
sides = st.floats(1.0, 80.0)
angles = st.floats(-math.pi, math.pi)

rects = st.builds(RotatedRect, cx=coords, cy=coords, length=sides,
                  width=sides, angle=angles)


def boxes_equal(a: RotatedRect, b: RotatedRect, tol: float = 1e-6) -> bool:
    """Geometric equality: same corner set up to vertex ordering."""
    ca, cb = a.corners(), b.corners()
    for shift in range(4):
        rolled = np.roll(cb, shift, axis=0)
        if np.abs(ca - rolled).max() < tol or np.abs(ca - rolled[::-1]).max() < tol:
            return True
    return False


def random_rect(rng: np.random.Generator, center_span: float = 40.0,
                side_range=(5.0, 80.0)) -> RotatedRect:
    return RotatedRect(rng.uniform(-center_span, center_span),
                       rng.uniform(-center_span, center_span),
                       rng.uniform(*side_range), rng.uniform(*side_range),
                       rng.uniform(-math.pi, math.pi))
