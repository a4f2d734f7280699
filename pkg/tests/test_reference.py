import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sloshfree.metrics import slosh_free_angle
from sloshfree.reference import (
    G_COMP,
    TIME_LAW_PEAK_RATE,
    DegenerateReference,
    Trajectory,
    baseline_reference,
    eval_trajectory,
    slosh_free_orientation,
    slosh_free_orientations,
    slosh_free_reference,
    time_scaling,
)
from sloshfree.task_control import log_so3

finite = st.floats(-50, 50, allow_nan=False)


# -- time law -----------------------------------------------------------------

def test_time_law_boundaries():
    np.testing.assert_allclose(time_scaling(2.0, 0.0), (0, 0, 0, 0, 0), atol=1e-15)
    np.testing.assert_allclose(time_scaling(2.0, 2.0), (1, 0, 0, 0, 0), atol=1e-12)


def test_time_law_midpoint():
    assert time_scaling(3.0, 1.5)[0] == pytest.approx(0.5, abs=1e-15)


def test_time_law_peak_rate_by_dense_sampling():
    T = 4.0
    ts = np.linspace(0, T, 200001)
    peak = max(time_scaling(T, t)[1] for t in ts[::50])
    dense = max(time_scaling(T, t)[1] for t in ts[99000:101001])
    assert max(peak, dense) == pytest.approx(TIME_LAW_PEAK_RATE / T, rel=1e-9)


@pytest.mark.parametrize("t", [0.3, 1.1, 2.0, 2.9])
def test_time_law_derivatives_match_differences(t):
    T, h = 3.0, 1e-5
    plus, minus = time_scaling(T, t + h), time_scaling(T, t - h)
    here = time_scaling(T, t)
    for k in range(4):
        fd = (plus[k] - minus[k]) / (2 * h)
        assert abs(fd - here[k + 1]) <= 1e-8 * max(1.0, abs(here[k + 1])) + 1e-9


def test_time_law_rejects_bad_inputs():
    with pytest.raises(ValueError):
        time_scaling(0.0, 0.0)
    with pytest.raises(ValueError):
        time_scaling(1.0, 1.5)


# -- trajectories ---------------------------------------------------------------

@pytest.mark.parametrize("kind", ["loop", "lissajous", "helix"])
def test_rest_at_both_ends(kind):
    tr = Trajectory(kind, 5.0)
    for t in (0.0, 5.0):
        s = eval_trajectory(tr, t)
        for v in (s.v, s.a, s.j):
            np.testing.assert_allclose(v, 0.0, atol=1e-12)


def test_lissajous_derivatives_match_five_point_stencil():
    tr = Trajectory("lissajous", 6.0, params={"amplitudes": (0.25, 0.2, 0.1)})
    h = 1e-3

    def stencil(f, t):
        return (-f(t + 2 * h) + 8 * f(t + h) - 8 * f(t - h) + f(t - 2 * h)) / (12 * h)

    t = 2.3
    get = lambda attr: (lambda s: getattr(eval_trajectory(tr, s), attr))
    here = eval_trajectory(tr, t)
    for lower, upper in (("p", "v"), ("v", "a"), ("a", "j"), ("j", "s")):
        fd = stencil(get(lower), t)
        ref = getattr(here, upper)
        assert np.abs(fd - ref).max() / np.abs(ref).max() < 1e-6


def test_flat_helix_stays_at_center_height():
    tr = Trajectory("helix", 4.0, center=(0.5, 0.0, 0.35), params={"pitch": 0.0})
    for t in np.linspace(0, 4, 41):
        assert eval_trajectory(tr, t).p[2] == pytest.approx(0.35, abs=1e-15)


def test_outside_window_rejected():
    tr = Trajectory("loop", 2.0)
    with pytest.raises(ValueError):
        eval_trajectory(tr, 2.5)


def test_custom_spline_passes_through_waypoints():
    pts = np.array([[0.5, 0, 0.3], [0.5, 0.1, 0.35], [0.45, 0.2, 0.4], [0.4, 0.1, 0.4], [0.45, 0, 0.35], [0.5, 0, 0.3]])
    tr = Trajectory("custom", 5.0, params={"points": pts})
    np.testing.assert_allclose(eval_trajectory(tr, 0.0).p, pts[0], atol=1e-12)
    np.testing.assert_allclose(eval_trajectory(tr, 5.0).p, pts[-1], atol=1e-12)


def test_trajectory_validation():
    with pytest.raises(ValueError):
        Trajectory("spiral", 2.0)
    with pytest.raises(ValueError):
        Trajectory("loop", -1.0)
    with pytest.raises(ValueError):
        Trajectory("custom", 1.0, params={"points": np.zeros((3, 3))})


# -- flatness map ---------------------------------------------------------------

def test_hover_is_identity():
    np.testing.assert_allclose(slosh_free_orientation(np.zeros(3)), np.eye(3), atol=1e-15)


def test_sideways_acceleration_tilts_45_degrees():
    R = slosh_free_orientation(np.array([9.81, 0.0, 0.0]))
    c = np.sqrt(0.5)
    np.testing.assert_allclose(R[:, 0], [c, 0, -c], atol=1e-15)
    np.testing.assert_allclose(R[:, 1], [0, 1, 0], atol=1e-15)
    np.testing.assert_allclose(R[:, 2], [c, 0, c], atol=1e-15)


def _axis_angle(R, a):
    a_g = a + G_COMP
    z = R[:, 2]
    return np.arctan2(np.linalg.norm(np.cross(z, a_g)), z @ a_g)


def test_random_accelerations_align_axis(rng):
    n = 0
    while n < 1000:
        a = rng.normal(scale=10.0, size=3)
        if np.linalg.norm(a + G_COMP) <= 0.1:
            continue
        psi = rng.uniform(-np.pi, np.pi)
        try:
            R = slosh_free_orientation(a, psi)
        except DegenerateReference:
            continue
        assert _axis_angle(R, a) < 1e-10
        assert np.abs(R.T @ R - np.eye(3)).max() < 1e-9
        assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-9)
        n += 1


@settings(max_examples=300, deadline=None)
@given(st.tuples(finite, finite, finite), st.floats(-np.pi, np.pi))
def test_flatness_property(a, psi):
    a = np.asarray(a)
    if np.linalg.norm(a + G_COMP) <= 0.1:
        return
    try:
        R = slosh_free_orientation(a, psi)
    except DegenerateReference as exc:
        assert exc.reason == "gimbal"
        return
    assert _axis_angle(R, a) < 1e-10
    assert np.abs(R.T @ R - np.eye(3)).max() < 1e-9
    # the heading lies in the plane spanned by the yaw vector and the thrust axis
    x_aux = np.array([np.cos(psi), np.sin(psi), 0.0])
    assert R[:, 1] @ x_aux == pytest.approx(0.0, abs=1e-9)


def test_free_fall_is_degenerate():
    with pytest.raises(DegenerateReference) as err:
        slosh_free_orientation(np.array([0.0, 0.0, -9.81]))
    assert err.value.reason == "free_fall"


def test_gimbal_is_degenerate():
    # resultant acceleration parallel to the yaw vector (psi = 0 -> world x)
    with pytest.raises(DegenerateReference) as err:
        slosh_free_orientation(np.array([5.0, 0.0, -9.81]))
    assert err.value.reason == "gimbal"


def test_reference_at_rest_is_upright():
    for kind in ("loop", "lissajous", "helix"):
        tr = Trajectory(kind, 4.0)
        for t in (0.0, 4.0):
            np.testing.assert_allclose(slosh_free_reference(tr, t).R_r, np.eye(3), atol=1e-12)


def test_reference_is_slosh_free_by_construction():
    tr = Trajectory("loop", 4.0)
    for t in np.linspace(0.1, 3.9, 30):
        s = eval_trajectory(tr, t)
        ref = slosh_free_reference(tr, t)
        assert slosh_free_angle(s.a, ref.R_r) < 1e-12


def test_free_fall_sample_holds_previous_orientation():
    class FreeFall:
        T, t0, tf = 1.0, 0.0, 1.0

    from sloshfree.reference import ReferenceSample

    z = np.zeros(3)
    sample = ReferenceSample(0.5, np.array([0.5, 0, 0.3]), z, np.array([0, 0, -9.81]), z, z)
    held = slosh_free_orientation(np.array([2.0, 0.0, 0.0]))
    ref = slosh_free_reference(FreeFall(), 0.5, previous_R=held, sample=sample)
    assert ref.degenerate == "free_fall"
    np.testing.assert_array_equal(ref.R_r, held)


def test_orientation_continuity_along_loop():
    tr = Trajectory("loop", 4.0)
    dt = 1e-3
    prev = None
    worst = 0.0
    for t in np.arange(0.0, 4.0 + dt / 2, dt):
        R = slosh_free_reference(tr, t).R_r
        if prev is not None:
            worst = max(worst, np.linalg.norm(log_so3(R @ prev.T)) / dt)
        prev = R
    # bounded rate: no jumps between consecutive samples
    assert worst < 10.0


def test_baseline_shares_position_and_is_upright():
    tr = Trajectory("lissajous", 5.0)
    for t in (0.0, 1.3, 2.5, 5.0):
        b, s = baseline_reference(tr, t), slosh_free_reference(tr, t)
        np.testing.assert_array_equal(b.p_r, s.p_r)
        np.testing.assert_array_equal(b.R_r, np.eye(3))
    np.testing.assert_allclose(slosh_free_reference(tr, 0.0).R_r, baseline_reference(tr, 0.0).R_r, atol=1e-12)


def test_batch_orientation_matches_scalar(rng):
    a = rng.normal(scale=8.0, size=(300, 3))
    a[:3] = [[0.0, 0.0, -9.81], [0.0, 0.0, -9.8105], [5.0, 0.0, -9.81]]
    psi = rng.uniform(-np.pi, np.pi, size=300)
    psi[2] = 0.0
    R, valid = slosh_free_orientations(a, psi)
    assert not valid[:3].any() and np.isnan(R[:3]).all()
    for k in range(3, 300):
        np.testing.assert_allclose(R[k], slosh_free_orientation(a[k], psi[k]), atol=1e-14)
