import numpy as np
import pytest

from conftest import system
from heisenlab.curves import grow_stable_curve, grow_unstable_curve, hausdorff


def test_unperturbed_unstable_curve_is_a_y_line():
    f = system(0.0, True)
    p0 = np.array([0.3, -0.2, 0.7])
    c = grow_unstable_curve(f, p0, 4.0, 0.05)
    # the Y integral curve through p0 is t -> p0 * (0, t, 0) = (x0, y0 + t, z0 + x0 t)
    t = c.points[:, 1] - p0[1]
    want = np.stack([np.full_like(t, p0[0]), p0[1] + t, p0[2] + p0[0] * t], axis=-1)
    # grow mode pulls back 12 steps and pushes forward again, which costs a few digits
    assert np.abs(c.points - want).max() < 1e-6
    assert c.length == pytest.approx(4.0, abs=0.05)
    assert np.array_equal(c.points[c.center_index], p0)


def test_unperturbed_stable_curve_is_an_x_line():
    f = system(0.0, True)
    c = grow_stable_curve(f, np.zeros(3), 2.0, 0.05)
    assert np.abs(c.points[:, 1:]).max() < 1e-6


def test_spacing_and_arclength():
    f = system(0.05, True)
    c = grow_unstable_curve(f, np.array([0.1, 0.2, 0.3]), 6.0, 0.05)
    seg = c.segment_lengths
    assert seg.max() <= 0.05 * 1.01
    assert c.arclength[0] <= -3.0 + 0.06 and c.arclength[-1] >= 3.0 - 0.06
    assert c.to_csv().splitlines()[0] == "x,y,z"


def test_grow_and_integrate_agree():
    f = system(0.03, True)
    p0 = np.array([0.2, 0.4, 0.1])
    grown = grow_unstable_curve(f, p0, 10.0, 0.05)
    integrated = grow_unstable_curve(f, p0, 10.0, 0.05, mode="integrate")
    assert hausdorff(grown, integrated) < 1e-4
