import math

import numpy as np
import pytest

from peakgain.tailsplit import shifted_system, tail_split
from support import exact, split, system


def test_shifted_input_matrix():
    sys = system("stiff")
    sh = shifted_system(sys, 0.05)
    assert np.allclose(sh.b.ravel(), [math.exp(-0.05), 100 * math.exp(-5.0)], rtol=1e-12)
    assert np.array_equal(sh.a, sys.a) and np.array_equal(sh.c, sys.c)
    assert sh.is_stable()
    assert np.allclose(shifted_system(sys, 1e-12).b, sys.b, rtol=1e-9)


def test_shift_must_be_positive():
    for t0 in (0.0, -1.0):
        with pytest.raises(ValueError):
            shifted_system(system("stiff"), t0)
    with pytest.raises(ValueError):
        tail_split(system("stiff"), 0.05, quad_tolerance=0.0)


def test_stiff_head_closed_form():
    res = split("stiff", 0.05, 2)
    # h < 0 on [0, 0.05] since the root is at ln(200)/99 > 0.05
    head = 2.0 * (1.0 - math.exp(-5.0)) - (1.0 - math.exp(-0.05))
    assert res.head == pytest.approx(head, abs=1e-9)
    assert res.total == res.head + res.tail_bound


@pytest.mark.parametrize("t0", [2.0, 5.0, 10.0, 20.0])
def test_low_damping_rows_bound_exact(t0):
    ex = exact("low_damping").value
    d1, d2 = split("low_damping", t0, 1), split("low_damping", t0, 2)
    assert d1.total >= ex and d2.total >= ex
    assert d2.total <= d1.total


def test_low_damping_rows_decrease():
    for degree in (1, 2):
        totals = [split("low_damping", t0, degree).total for t0 in (2.0, 5.0, 10.0, 20.0)]
        assert all(a > b for a, b in zip(totals, totals[1:]))


def test_stiff_split_bounds_exact():
    assert split("stiff", 0.05, 2).total >= exact("stiff").value
