"""Helpers shared by the application front-ends."""
from __future__ import annotations

import os
from fractions import Fraction

import numpy as np

from ..model import AffineConstraint, Sense

DEFAULT_ENUM_CAP = int(os.environ.get("QBILINEAR_ENUM_CAP", 10**7))


class EnumerationTooLarge(ValueError):
    pass


def check_enum(count: int, cap=None, what="enumeration"):
    cap = DEFAULT_ENUM_CAP if cap is None else cap
    if count > cap:
        raise EnumerationTooLarge(f"{what} of {count} points exceeds cap {cap}")


def as_fraction(v) -> Fraction:
    if isinstance(v, float):
        return Fraction(v)
    return Fraction(str(v)) if isinstance(v, str) else Fraction(v)


def box_and_simplex(n_total: int, groups, offset: int, label: str):
    """Box bounds 0 <= x <= 1 and sum-to-one equalities for each index group.

    ``groups`` lists 0-based positions inside the family, ``offset`` shifts
    them into the 1-based coefficient layout of the whole problem.
    """
    rows = []
    for g, members in enumerate(groups):
        c = np.zeros(n_total + 1)
        c[0] = -1.0
        c[[offset + m + 1 for m in members]] = 1.0
        rows.append(AffineConstraint(c, Sense.ZERO, f"{label}.norm[{g}]"))
    for m in sorted(m for members in groups for m in members):
        lo = np.zeros(n_total + 1)
        lo[offset + m + 1] = 1.0
        hi = np.zeros(n_total + 1)
        hi[0], hi[offset + m + 1] = 1.0, -1.0
        rows.append(AffineConstraint(lo, Sense.NONNEG, f"{label}.lb[{m}]"))
        rows.append(AffineConstraint(hi, Sense.NONNEG, f"{label}.ub[{m}]"))
    return rows
