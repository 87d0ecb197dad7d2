"""Shared helpers for the test suite."""

import numpy as np


def relative_error(a, b, floor=1e-8):
    """Norm-relative disagreement between two same-shaped arrays.

    Falls back to the absolute scale when both sides are tiny, so a pair of
    all-zero gradients compares as exactly equal instead of 0/0.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), floor)
    return np.linalg.norm(a - b) / denom
