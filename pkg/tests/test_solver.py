import math

import numpy as np
import pytest

from epcag_lab.errors import BlowUpError, EpcagError, InvalidParameterError
from epcag_lab.grid import make_uniform_grid
from epcag_lab.solver import (
    back_continue,
    back_continue_interval,
    shooting_map,
    solve_forward,
)
from epcag_lab.system import SystemSpec, get_problem

E2 = math.exp(2.0)


def _linear_spec(A, window=(-5.0, 5.0)):
    A = np.asarray(A, dtype=float)
    return SystemSpec(
        n=A.shape[0], A=lambda t: A, f=lambda t, y, w: np.zeros_like(y),
        grid=make_uniform_grid(1.0, 0.0, window),
        mu=float(np.linalg.norm(A, 2)), lip=0.0, a_constant=A,
    )


def ex1_map(x0, t=1.0):
    """Variation-of-constants for x' = 2x - c, c frozen at x0^2."""
    return math.exp(2 * t) * x0 - (math.exp(2 * t) - 1.0) * x0 ** 2 / 2.0


def ex1_roots(z):
    a, b, c = E2 - 1.0, -2.0 * E2, 2.0 * z
    disc = b * b - 4 * a * c
    if disc < 0:
        return []
    r = math.sqrt(disc)
    return sorted({(-b - r) / (2 * a), (-b + r) / (2 * a)})


def test_forward_zero_nonlinearity_is_linear_flow():
    spec = _linear_spec(np.diag([-1.0, 1.0]))
    path = solve_forward(spec, 0.0, [1.0, 1.0], 1.0)
    assert np.allclose(path.ys[-1], [math.exp(-1.0), math.exp(1.0)], atol=1e-9)


def test_forward_example1_closed_form():
    spec = get_problem("paper-example-1")
    for x0 in (-1.5, 0.3, 1.0, 2.0):
        path = solve_forward(spec, 0.0, [x0], 1.0, substeps=256)
        assert path.ys[-1][0] == pytest.approx(ex1_map(x0), rel=1e-9)
    path = solve_forward(spec, 0.0, [1.0], 1.0, substeps=256)
    assert path.ys[-1][0] == pytest.approx(4.194528049465325, rel=1e-8)


def test_forward_equilibrium_at_zero():
    spec = get_problem("paper-example-1")
    path = solve_forward(spec, 0.0, [0.0], 5.0)
    assert np.all(path.ys == 0.0)


def test_forward_interior_start_needs_frozen_value():
    spec = get_problem("paper-example-1")
    with pytest.raises(InvalidParameterError):
        solve_forward(spec, 0.5, [1.0], 2.0)
    path = solve_forward(spec, 0.5, [1.0], 1.0, w0=[0.8])
    # on [0.5, 1): x' = 2x - 0.64
    t = 0.5
    exact = math.exp(2 * t) * 1.0 - (math.exp(2 * t) - 1) * 0.64 / 2.0
    assert path.ys[-1][0] == pytest.approx(exact, rel=1e-8)


def test_forward_continuity_at_knots():
    spec = get_problem("paper-example-1")
    path = solve_forward(spec, 0.0, [0.5], 3.0)
    # knots are stored twice (corner copies) with identical states
    dup = np.flatnonzero(np.diff(path.ts) == 0.0)
    assert len(dup) == 2
    for j in dup:
        assert np.array_equal(path.ys[j], path.ys[j + 1])
        assert path.intervals[j] + 1 == path.intervals[j + 1]


def test_forward_frozen_argument_updates():
    spec = get_problem("paper-example-1")
    path = solve_forward(spec, 0.0, [0.5], 2.0)
    tk, yk = path.at_knots()
    assert list(tk) == [0.0, 1.0, 2.0]
    # frozen value on [1, 2) equals the state at t = 1
    j = np.flatnonzero(path.ts == 1.0)[-1]
    assert path.frozen[j][0] == yk[1][0]


def test_collocation_residual_on_hermite_interpolant():
    spec = get_problem("paper-example-1")
    path = solve_forward(spec, 0.0, [0.8], 2.0, substeps=64)
    rng = np.random.default_rng(3)
    h = 1.0 / 64
    for _ in range(40):
        j = rng.integers(0, len(path.ts) - 1)
        if path.ts[j + 1] == path.ts[j]:
            continue
        tm = 0.5 * (path.ts[j] + path.ts[j + 1])
        ym = path.value(tm)
        w = path.frozen[j]
        rhs = spec.eval_A(tm) @ ym + spec.eval_f(tm, ym, w)
        dy = (path.value(tm + h / 4) - path.value(tm - h / 4)) / (h / 2)
        assert np.linalg.norm(dy - rhs) <= 1e-4 * (1 + np.linalg.norm(rhs))


def test_semigroup_on_knots():
    spec = get_problem("paper-example-1")
    p1 = solve_forward(spec, 0.0, [0.7], 1.0)
    p2 = solve_forward(spec, 1.0, p1.ys[-1], 2.0)
    direct = solve_forward(spec, 0.0, [0.7], 2.0)
    assert p2.ys[-1][0] == pytest.approx(direct.ys[-1][0], abs=1e-10)


def test_convergence_order_fourth():
    spec = get_problem("paper-example-1")
    errs = []
    for ss in (32, 64):
        path = solve_forward(spec, 0.0, [1.0], 1.0, substeps=ss)
        errs.append(abs(path.ys[-1][0] - ex1_map(1.0)))
    ratio = errs[0] / errs[1]
    assert 12.0 <= ratio <= 20.0


def test_blowup_guard():
    spec = _linear_spec(np.array([[5.0]]), window=(0.0, 500.0))
    with pytest.raises(BlowUpError):
        solve_forward(spec, 0.0, [1.0], 500.0, guard=1e6)


def test_shooting_map_examples():
    spec = get_problem("paper-example-1")
    assert shooting_map(spec, 0, [1.0], substeps=256)[0] == pytest.approx(
        ex1_map(1.0), rel=1e-9)
    assert shooting_map(spec, 0, [0.0])[0] == 0.0
    lin = _linear_spec(np.diag([-1.0, 1.0]))
    got = shooting_map(lin, 0, [1.0, 2.0])
    assert np.allclose(got, [math.exp(-1.0), 2 * math.exp(1.0)], atol=1e-9)


def test_preimages_match_quadratic_oracle():
    spec = get_problem("paper-example-1")
    ps = back_continue_interval(spec, 0, 1.0, [0.0], substeps=128)
    assert ps.classification == "multiple"
    want = ex1_roots(0.0)
    got = sorted(p[0] for p in ps.preimages)
    assert got == pytest.approx(want, abs=1e-6)
    assert want[1] == pytest.approx(2 * E2 / (E2 - 1.0))


def test_preimages_none_beyond_threshold():
    spec = get_problem("paper-example-1")
    z_thresh = E2 ** 2 / (2 * (E2 - 1.0))
    ps = back_continue_interval(spec, 0, 1.0, [z_thresh + 0.5], substeps=64)
    assert ps.classification == "none"
    assert ps.search_exhausted
    assert ps.preimages == []


def test_preimage_linear_flow_unique():
    spec = _linear_spec(np.diag([-1.0, 1.0]))
    target = np.array([0.4, -0.9])
    ps = back_continue_interval(spec, 0, 1.0, target, substeps=64)
    assert ps.classification == "unique"
    want = np.diag([math.exp(1.0), math.exp(-1.0)]) @ target
    assert np.allclose(ps.preimages[0], want, atol=1e-7)


def test_preimage_interior_target():
    spec = get_problem("paper-example-1")
    ps = back_continue_interval(spec, 0, 0.5, [1.0], substeps=128)
    assert ps.classification in ("unique", "multiple")
    for p in ps.preimages:
        fwd = solve_forward(spec, 0.0, p, 0.5, substeps=128)
        assert abs(fwd.ys[-1][0] - 1.0) <= 1e-7


def test_preimage_validates_target_time():
    spec = get_problem("paper-example-1")
    with pytest.raises(InvalidParameterError):
        back_continue_interval(spec, 0, 1.5, [0.0])


def test_back_continue_linear_reproduces_flow():
    spec = _linear_spec(np.diag([-1.0, 1.0]))
    res = back_continue(spec, 2.0, [1.0, 1.0], 0.0)
    assert res.ok and not res.flags
    want = np.diag([math.exp(2.0), math.exp(-2.0)]) @ np.array([1.0, 1.0])
    assert np.allclose(res.path.ys[0], want, atol=1e-6)
    assert res.residual <= 1e-8


def test_back_continue_example1_non_unique_branch():
    spec = get_problem("paper-example-1")
    res = back_continue(spec, 1.0, [0.0], 0.0, substeps=128)
    assert res.ok
    assert any("non-unique" in f for f in res.flags)
    roots = sorted(p[0] for p in res.steps[0].preimages)
    assert roots == pytest.approx(ex1_roots(0.0), abs=1e-6)
    # pair sums to 2e^2/(e^2-1), mirroring the collision identity
    assert sum(roots) == pytest.approx(2 * E2 / (E2 - 1.0), abs=1e-6)


def test_back_continue_failure_reports_interval():
    spec = get_problem("paper-example-1")
    res = back_continue(spec, 1.0, [6.0], 0.0, substeps=64)
    assert not res.ok
    assert res.failed_interval == 0
    assert res.steps[-1].classification == "none"


def test_round_trip_under_uniqueness():
    spec = get_problem("periodic-coupled")
    rng = np.random.default_rng(4)
    for _ in range(10):
        x0 = rng.uniform(-2, 2, 1)
        res = back_continue(spec, 1.5, x0, 0.5, substeps=64)
        assert res.ok and not res.flags
        fwd = solve_forward(spec, 0.5, res.path.value(0.5), 1.5, substeps=64)
        assert abs(fwd.ys[-1][0] - x0[0]) <= 1e-6


def test_uniqueness_property_under_bw():
    spec = get_problem("periodic-coupled")
    rng = np.random.default_rng(5)
    for _ in range(20):
        i = int(rng.integers(0, 4))
        x = rng.uniform(-3, 3, 1)
        ps = back_continue_interval(spec, i, spec.grid.knot(i + 1), x, substeps=64)
        assert ps.classification == "unique"


def test_solution_path_value_interpolation():
    spec = get_problem("paper-example-1")
    path = solve_forward(spec, 0.0, [0.6], 1.0, substeps=64)
    for t in (0.0, 0.25, 0.515625, 1.0):
        exact = ex1_map(0.6, t)
        assert path.value(t)[0] == pytest.approx(exact, rel=1e-7)
