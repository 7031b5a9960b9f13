import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from subquad.field import Field, Grid, init_field, total_energy
from subquad.potential import Potential
from subquad.symmetry import (
    ReflectionGroup,
    SymmetryError,
    build_group,
    coordinate,
    dihedral,
    equivariance_residual,
    equivariant_project,
    fundamental_region,
    positivity_project,
    stabilizer_region,
)

invariant = pytest.mark.invariant


def _as_set(mats):
    return sorted(tuple(np.round(g, 12).ravel() + 0.0) for g in mats)


def test_group_orders():
    d3 = dihedral(3)
    assert d3.order == 6 and len(d3.reflection_indices) == 3
    c2 = coordinate(2)
    assert c2.order == 4 and len(c2.reflection_indices) == 2
    assert coordinate(3).order == 8


def test_dihedral2_matches_coordinate2_as_matrix_sets():
    # mirror lines at angles 0 and pi/2 are the coordinate axes
    assert _as_set(dihedral(2).elements) == _as_set(coordinate(2).elements)


def test_dihedral2_rotated_by_45_degrees_is_still_coordinate_like():
    c, s = np.cos(np.pi / 4), np.sin(np.pi / 4)
    rot = np.array([[c, -s], [s, c]])
    conj = np.array([rot @ g @ rot.T for g in coordinate(2).elements])
    group = ReflectionGroup(conj)
    walls = fundamental_region(group)
    assert len(walls) == 2
    assert abs(walls[0] @ walls[1]) < 1e-12


def test_build_group_errors():
    with pytest.raises(SymmetryError):
        build_group({"kind": "dihedral", "k": 1})
    with pytest.raises(SymmetryError):
        build_group({"kind": "coordinate", "n": 0})
    with pytest.raises(SymmetryError):
        build_group({"kind": "icosahedral"})


def test_rotation_only_group_rejected():
    rot = np.array([[0.0, -1.0], [1.0, 0.0]])
    group = ReflectionGroup(np.array([np.eye(2), rot, rot @ rot, rot.T]))
    with pytest.raises(SymmetryError):
        fundamental_region(group)


def test_non_closed_set_rejected():
    with pytest.raises(SymmetryError):
        ReflectionGroup(np.array([np.eye(2), np.diag([1.0, -1.0]), np.diag([-1.0, 1.0])]))


def test_dihedral3_sector_angle():
    walls = fundamental_region(dihedral(3))
    assert len(walls) == 2
    # the sector angle is pi minus the angle between inward normals
    angle = np.pi - np.arccos(np.clip(walls[0] @ walls[1], -1, 1))
    assert angle == pytest.approx(np.pi / 3)


def test_coordinate2_first_quadrant():
    walls = fundamental_region(coordinate(2))
    assert _as_set(walls[:, None, :]) == _as_set(np.eye(2)[:, None, :])


@pytest.mark.parametrize("group", [dihedral(3), dihedral(4), coordinate(2)])
def test_chambers_tile_disk(group):
    walls = fundamental_region(group)
    rng = np.random.default_rng(0)
    pts = rng.uniform(-1, 1, size=(10_000, 2))
    pts = pts[np.linalg.norm(pts, axis=1) <= 1]
    # x lies in g F iff g^T x lies in F
    inside = np.stack([np.all((pts @ g) @ walls.T > 1e-9, axis=1) for g in group.elements], axis=1)
    on_edge = np.stack([np.abs((pts @ g) @ walls.T).min(axis=1) <= 1e-9 for g in group.elements], axis=1)
    counts = inside.sum(axis=1)
    assert np.all((counts == 1) | on_edge.any(axis=1))


def test_stabilizer_on_a_mirror():
    setup = stabilizer_region(dihedral(3), [1.0, 0.0])
    assert len(setup.stab) == 2 and setup.N == 3


def test_stabilizer_inside_chamber():
    walls = fundamental_region(dihedral(3))
    a1 = walls.sum(axis=0)
    setup = stabilizer_region(dihedral(3), a1 / np.linalg.norm(a1))
    assert len(setup.stab) == 1 and setup.N == 6


def test_coordinate_stabilizer_and_region():
    setup = stabilizer_region(coordinate(2), [1.0, 0.0])
    stab = {tuple(np.diag(setup.group.elements[i])) for i in setup.stab}
    assert stab == {(1.0, 1.0), (1.0, -1.0)}
    assert setup.N == 2
    pts = np.array([[0.3, 5.0], [0.3, -5.0], [-0.3, 0.0], [0.0, 1.0]])
    assert setup.in_D(pts).tolist() == [True, True, False, False]


def test_a1_outside_closed_chamber():
    with pytest.raises(SymmetryError):
        stabilizer_region(coordinate(2), [-1.0, 0.5])
    with pytest.raises(SymmetryError):
        stabilizer_region(coordinate(2), [0.0, 0.0])


def _grid():
    return Grid(2, 0.1, 1.0)


def test_projection_fixes_equivariant_fields():
    g = _grid()
    u = init_field(g, "custom", lambda x: np.stack([x[..., 0] ** 3, np.sin(x[..., 1])], axis=-1))
    v = equivariant_project(u, coordinate(2))
    assert np.abs(v.values - u.values).max() <= 1e-10


def test_projection_of_constant_is_group_average():
    g = _grid()
    u = init_field(g, "constant", [0.7, -0.2], bc="free")
    v = equivariant_project(u, dihedral(3))
    assert np.abs(v.values).max() <= 1e-12
    w = equivariant_project(init_field(g, "constant", [0.7, -0.2], bc="free"), coordinate(2))
    assert np.abs(w.values).max() == 0.0


def test_projection_is_idempotent_on_lattice():
    rng = np.random.default_rng(1)
    g = _grid()
    u = Field(g, rng.standard_normal(g.shape + (2,)), bc="free")
    once = equivariant_project(u, coordinate(2))
    twice = equivariant_project(once, coordinate(2))
    assert np.abs(twice.values - once.values).max() <= 1e-10


def test_projection_rejects_mismatched_field():
    g = _grid()
    with pytest.raises(SymmetryError):
        equivariant_project(init_field(g, "constant", [1.0]), coordinate(2))


def test_positivity_examples():
    setup = stabilizer_region(coordinate(2), [1.0, 0.0])
    g = _grid()
    u = init_field(g, "constant", [-1.0, 2.0], bc="free")
    v = positivity_project(u, setup)
    i = g.half + 3  # node (0.3, 0.3) is interior to the first quadrant
    assert v.values[i, i].tolist() == [0.0, 2.0]
    inside = init_field(g, "custom", lambda x: 2.0 * x, bc="free")
    assert np.array_equal(positivity_project(inside, setup).values, inside.values)


# -- properties ---------------------------------------------------------------------------
groups = st.sampled_from([dihedral(2), dihedral(3), dihedral(5), coordinate(2), coordinate(3)])


@invariant
@given(groups)
def test_group_is_orthogonal_and_closed(group):
    mats = group.elements
    n = group.n
    assert np.abs(np.einsum("gji,gjk->gik", mats, mats) - np.eye(n)).max() <= 1e-12
    for a in mats:
        for b in mats:
            assert np.abs(mats - a @ b).max(axis=(1, 2)).min() <= 1e-10
    for i, nrm in zip(group.reflection_indices, group.normals):
        assert np.abs(mats[i] - (np.eye(n) - 2 * np.outer(nrm, nrm))).max() <= 1e-12


@invariant
@given(groups, st.integers(0, 10_000))
def test_setup_invariants(group, seed):
    walls = fundamental_region(group)
    rng = np.random.default_rng(seed)
    # a random point of the closed chamber
    x = rng.standard_normal(group.n)
    idx = int(np.argmax([np.min((x @ g) @ walls.T) for g in group.elements]))
    a1 = x @ group.elements[idx]
    setup = stabilizer_region(group, a1)
    assert np.all(walls @ setup.a1 >= -1e-12)
    assert setup.N * len(setup.stab) == group.order
    pts = rng.standard_normal((200, group.n))
    interior = pts[np.all(pts @ walls.T > 1e-9, axis=1)]
    for g in group.elements[1:]:
        moved = interior @ g.T
        assert not np.any(np.all(moved @ walls.T > 1e-9, axis=1))


@invariant
@given(st.floats(0.2, 2.0), st.floats(-1.0, 1.0))
def test_projection_residual_on_smooth_fields(freq, phase):
    grid = Grid(2, 0.05, 1.0)
    group = dihedral(3)
    u = init_field(grid, "custom",
                   lambda x: np.stack([np.sin(freq * x[..., 0] + phase), np.cos(freq * x[..., 1])], axis=-1),
                   bc="free")
    v = equivariant_project(u, group)
    # interpolation error is below h^2/8 max|D^2 u| <= h^2 freq^2 / 8 per sample
    inner = Field(Grid(2, 0.05, 1.0, R=0.7), v.values, bc="free")
    assert equivariance_residual(inner, group) <= 10 * grid.h**2 * max(freq**2, 1.0)


@invariant
@given(st.integers(0, 10_000))
def test_positivity_projection_never_raises_dirichlet_energy(seed):
    rng = np.random.default_rng(seed)
    grid = Grid(2, 0.1, 0.5)
    setup = stabilizer_region(coordinate(2), [1.0, 0.0])
    u = Field(grid, rng.standard_normal(grid.shape + (2,)), bc="free")
    p = Potential.subquadratic(setup.orbit, 1.0)
    before = total_energy(u, p).dirichlet
    after = total_energy(positivity_project(u, setup), p).dirichlet
    assert after <= before + 1e-12


@invariant
@given(st.integers(0, 10_000), st.sampled_from([dihedral(3), coordinate(2)]))
def test_positivity_projection_is_idempotent(seed, group):
    rng = np.random.default_rng(seed)
    grid = Grid(2, 0.1, 0.5)
    setup = stabilizer_region(group, [1.0, 0.0])
    u = Field(grid, rng.standard_normal(grid.shape + (2,)), bc="free")
    once = positivity_project(u, setup)
    twice = positivity_project(once, setup)
    assert np.abs(twice.values - once.values).max() <= 1e-12
