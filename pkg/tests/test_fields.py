import numpy as np
import pytest

from checkerfield import (
    Box,
    CheckeredField,
    NotInImage,
    PointOutsideDomain,
    classify_nodes,
    discretize,
    eval_field,
    eval_field_many,
    field_from_json,
    field_to_json,
    point_mass_allclose,
    point_mass_field,
    random_checkered_field,
    reconstruct_field,
)

UNIT = Box((0.0, 0.0), (1.0, 1.0))


def mass_dict(pm, digits=9):
    return {tuple(np.round(p, digits)): round(float(m), digits)
            for p, m in zip(pm.points, pm.masses)}


def test_eval_single_box():
    f = CheckeredField(UNIT, ((UNIT, 1.0),))
    assert eval_field(f, (0.5, 0.5)) == 1.0


def test_eval_additive_overlap():
    f = CheckeredField(UNIT, ((UNIT, 1.0), (Box((0, 0), (0.5, 0.5)), 2.0)))
    assert eval_field(f, (0.25, 0.25)) == 3.0
    assert eval_field(f, (0.75, 0.75)) == 1.0


def test_eval_half_open_edge():
    f = CheckeredField(UNIT, ((UNIT, 1.0),))
    with pytest.raises(PointOutsideDomain):
        eval_field(f, (1.0, 0.5))
    g = CheckeredField(Box((0, 0), (2, 2)), ((UNIT, 1.0),))
    assert eval_field(g, (1.0, 0.5)) == 0.0


def test_discretize_sign_pattern():
    f = CheckeredField(UNIT, ((UNIT, 1.0),))
    assert mass_dict(discretize(f)) == {
        (0.0, 0.0): 1.0, (1.0, 1.0): 1.0, (1.0, 0.0): -1.0, (0.0, 1.0): -1.0}


def test_discretize_two_boxes_merged():
    dom = Box((0, 0), (2, 1))
    f = CheckeredField(dom, ((Box((0, 0), (1, 1)), 2.0),
                             (Box((1, 0), (2, 1)), 3.0)))
    assert mass_dict(discretize(f)) == {
        (0.0, 0.0): 2.0, (0.0, 1.0): -2.0, (1.0, 0.0): 1.0,
        (1.0, 1.0): -1.0, (2.0, 0.0): -3.0, (2.0, 1.0): 3.0}


def test_discretize_zero_function():
    dom = Box((0, 0), (2, 1))
    f = CheckeredField(dom, ((Box((0, 0), (2, 1)), 1.0),
                             (Box((0, 0), (1, 1)), -1.0),
                             (Box((1, 0), (2, 1)), -1.0)))
    assert discretize(f).size == 0


def test_discretize_linearity():
    dom = Box((0, 0), (3, 3))
    rng = np.random.default_rng(5)
    f = random_checkered_field(dom, 3, rng)
    g = random_checkered_field(dom, 2, rng)
    combo = 2.0 * f + (-0.5) * g
    left = discretize(combo)
    pm_f, pm_g = discretize(f), discretize(g)
    right = point_mass_field(
        2, np.vstack([pm_f.points, pm_g.points]),
        np.concatenate([2.0 * pm_f.masses, -0.5 * pm_g.masses]))
    assert point_mass_allclose(left, right, atol=1e-10)


def test_classify_nodes_single_box():
    f = CheckeredField(UNIT, ((UNIT, 1.0),))
    rep = classify_nodes(f)
    corners = {(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)}
    assert {tuple(p) for p in rep.interesting} == corners
    assert {tuple(p) for p in rep.marked} == corners


def test_octant_node_not_interesting():
    # constant 1 on the positive and negative octants of a cube at 0:
    # the origin mass cancels although the function jumps there
    dom = Box((-1, -1, -1), (1, 1, 1))
    f = CheckeredField(dom, ((Box((0, 0, 0), (1, 1, 1)), 1.0),
                             (Box((-1, -1, -1), (0, 0, 0)), 1.0)))
    rep = classify_nodes(f)
    interesting = {tuple(p) for p in rep.interesting}
    assert (0.0, 0.0, 0.0) not in interesting
    assert (0.0, 0.0, 0.0) in {tuple(p) for p in rep.marked}


def test_artificial_nodes_on_merge_line():
    dom = Box((0, 0), (2, 2))
    f = CheckeredField(dom, ((Box((0, 0), (2, 1)), 1.0),
                             (Box((0, 1), (2, 2)), 1.0)))
    rep = classify_nodes(f)
    interesting = {tuple(p) for p in rep.interesting}
    assert all(p[1] != 1.0 for p in interesting)


def _locally_constant_across(f, node, axis, delta, rng):
    """True when the field does not change across the axis plane near node."""
    for _ in range(40):
        x = node + delta * rng.uniform(-1, 1, size=f.dim)
        x[axis] = node[axis] + delta * rng.uniform(0.1, 1.0)
        mirror = x.copy()
        mirror[axis] = 2 * node[axis] - x[axis]
        try:
            if eval_field(f, x) != eval_field(f, mirror):
                return False
        except PointOutsideDomain:
            continue
    return True


@pytest.mark.parametrize("dim", [2, 3])
def test_marked_nodes_contain_non_artificial(dim):
    dom = Box((0,) * dim, (4,) * dim)
    rng = np.random.default_rng(17 + dim)
    for _ in range(6):
        f = random_checkered_field(dom, 3, rng, coord_step=0.5, min_side=0.5)
        rep = classify_nodes(f)
        marked = {tuple(np.round(p, 9)) for p in rep.marked}
        coords = sorted({c for p in rep.all_nodes for c in p})
        gaps = np.diff(coords)
        delta = 0.25 * gaps[gaps > 1e-9].min() if gaps.size else 0.1
        for node in rep.all_nodes:
            artificial = any(
                _locally_constant_across(f, node, axis, delta, rng)
                for axis in range(dim))
            if not artificial:
                assert tuple(np.round(node, 9)) in marked


def test_reconstruct_round_trip_simple():
    f = CheckeredField(UNIT, ((UNIT, 1.0),))
    g = reconstruct_field(discretize(f), UNIT)
    assert g.terms == f.terms


def test_reconstruct_two_box_example():
    dom = Box((0, 0), (2, 1))
    f = CheckeredField(dom, ((Box((0, 0), (1, 1)), 2.0),
                             (Box((1, 0), (2, 1)), 3.0)))
    g = reconstruct_field(discretize(f), dom)
    X = np.random.default_rng(0).random((200, 2)) * [1.99, 0.99]
    assert np.allclose(eval_field_many(g, X), eval_field_many(f, X))


def test_reconstruct_not_in_image():
    pm = point_mass_field(2, [[0.0, 0.0]], [1.0])
    with pytest.raises(NotInImage):
        reconstruct_field(pm, UNIT)


@pytest.mark.parametrize("dim", [2, 3])
def test_round_trip_random_fields(dim):
    dom = Box((0,) * dim, (3,) * dim)
    rng = np.random.default_rng(23 + dim)
    for _ in range(25):
        f = random_checkered_field(dom, int(rng.integers(1, 5)), rng)
        g = reconstruct_field(discretize(f), dom)
        X = rng.random((300, dim)) * 2.999
        assert np.allclose(eval_field_many(g, X), eval_field_many(f, X),
                           atol=1e-9)


def test_json_round_trip():
    dom = Box((0, 0), (4, 3))
    rng = np.random.default_rng(1)
    f = random_checkered_field(dom, 3, rng)
    g = field_from_json(field_to_json(f))
    assert g.domain == f.domain
    assert g.terms == f.terms
