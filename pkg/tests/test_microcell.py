import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from porohomog.microcell import (GeometryError, VoxelCell, analyze_connectivity, cube_inclusion,
                                 fluid_matrix, format_geometry, laminate, load_geometry,
                                 parse_geometry, porosity, solid_only, write_geometry)


def test_parse_small_file(tmp_path):
    path = tmp_path / "c.cellgeo"
    path.write_text("poro-cellgeo v1\ndims 2 2 2\n11110000\n")
    cell = load_geometry(path)
    assert cell.dims == (2, 2, 2)
    assert porosity(cell) == 0.5
    # x runs fastest in the payload
    assert cell.chi[1, 0, 0] == 1 and cell.chi[0, 0, 1] == 0


def test_single_solid_voxel():
    cell = parse_geometry("poro-cellgeo v1\ndims 1 1 1\n0\n")
    assert porosity(cell) == 0.0
    assert analyze_connectivity(cell).solid_connected


@pytest.mark.parametrize("text, where", [
    ("poro-cellgeo v2\ndims 1 1 1\n0\n", "line 1"),
    ("poro-cellgeo v1\n", "line 2"),
    ("poro-cellgeo v1\nsize 1 1 1\n0\n", "line 2"),
    ("poro-cellgeo v1\ndims 1 x 1\n0\n", "line 2"),
    ("poro-cellgeo v1\ndims 2 1 1\n0\n", "payload"),
    ("poro-cellgeo v1\ndims 2 1 1\n02\n", "line 3, column 2"),
])
def test_parse_errors_name_location(text, where):
    with pytest.raises(GeometryError, match=where):
        parse_geometry(text)


@given(st.lists(st.integers(1, 4), min_size=3, max_size=3), st.integers(0, 2**32 - 1))
def test_format_round_trip(dims, seed):
    chi = np.random.default_rng(seed).integers(0, 2, size=dims)
    cell = VoxelCell(chi)
    back = parse_geometry(format_geometry(cell, width=5))
    assert np.array_equal(back.chi, cell.chi)


def test_write_then_load(tmp_path):
    cell = cube_inclusion(6, 2)
    write_geometry(cell, tmp_path / "g.cellgeo")
    assert np.array_equal(load_geometry(tmp_path / "g.cellgeo").chi, cell.chi)


def test_indicator_validation():
    with pytest.raises(GeometryError):
        VoxelCell(np.full((2, 2, 2), 2))
    with pytest.raises(GeometryError):
        VoxelCell(np.zeros((2, 2)))


@pytest.mark.parametrize("cell, expected", [
    (VoxelCell(np.ones((4, 4, 4))), 1.0),
    (laminate(32, 8, lateral=2), 0.25),
    (fluid_matrix(32, 8), 1 - (8 / 32) ** 3),
    (solid_only(3), 0.0),
])
def test_porosity_examples(cell, expected):
    assert porosity(cell) == expected


def test_isolated_inclusion():
    c = analyze_connectivity(cube_inclusion(32, 8))
    assert not c.fluid_connected and c.pores_isolated and c.solid_connected
    assert c.n_fluid_components == 1


def test_laminate_connectivity():
    c = analyze_connectivity(laminate(8, 2))
    assert c.fluid_connected and not c.pores_isolated
    assert c.fluid_wraps == (True, True, False)
    assert c.solid_connected


def test_solid_only_connectivity():
    c = analyze_connectivity(solid_only(4))
    assert not c.fluid_connected and c.solid_connected and not c.pores_isolated


def test_fluid_matrix_connectivity():
    with pytest.warns(UserWarning, match="solid phase"):
        c = analyze_connectivity(fluid_matrix(8, 2))
    assert c.fluid_connected and not c.solid_connected
    assert c.n_solid_components == 1


def test_two_blobs_not_connected():
    chi = np.zeros((8, 8, 8))
    chi[1:3, 1:3, 1:3] = 1
    chi[5:7, 5:7, 5:7] = 1
    c = analyze_connectivity(VoxelCell(chi))
    assert c.n_fluid_components == 2
    assert not c.fluid_connected and c.pores_isolated


def test_split_solid_warns():
    # a solid slab surrounded by fluid in the lateral direction: two solid layers
    chi = np.ones((6, 6, 6))
    chi[:, :, 1] = 0
    chi[:, :, 4] = 0
    with pytest.warns(UserWarning):
        c = analyze_connectivity(VoxelCell(chi))
    assert c.n_solid_components == 2 and not c.solid_connected


def test_loop_wrapping_through_face():
    # a fluid tube along x that closes only through the periodic face
    chi = np.zeros((6, 6, 6))
    chi[:, 2, 2] = 1
    c = analyze_connectivity(VoxelCell(chi))
    assert c.fluid_wraps == (True, False, False) and c.fluid_connected


cells = st.tuples(st.lists(st.integers(2, 5), min_size=3, max_size=3),
                  st.integers(0, 2**32 - 1), st.floats(0.2, 0.8))


@given(cells, st.integers(0, 2), st.integers(-4, 4))
def test_topology_is_shift_invariant(spec, axis, shift):
    dims, seed, p = spec
    chi = (np.random.default_rng(seed).random(dims) < p).astype(int)
    cell = VoxelCell(chi)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        a = analyze_connectivity(cell)
        b = analyze_connectivity(cell.shifted(shift, axis))
    assert a.fluid_connected == b.fluid_connected
    assert a.solid_connected == b.solid_connected
    assert a.fluid_wraps == b.fluid_wraps and a.solid_wraps == b.solid_wraps
    assert a.n_fluid_components == b.n_fluid_components
    assert a.n_solid_components == b.n_solid_components


@given(cells)
def test_isolated_excludes_connected(spec):
    dims, seed, p = spec
    chi = (np.random.default_rng(seed).random(dims) < p).astype(int)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        c = analyze_connectivity(VoxelCell(chi))
    assert not (c.pores_isolated and c.fluid_connected)


@given(st.integers(1, 3), st.integers(1, 3))
def test_shifted_inclusion_stays_isolated_while_interior(size, shift):
    cell = cube_inclusion(10, size)
    lo = (10 - size) // 2
    if lo - shift < 1:
        return
    assert analyze_connectivity(cell.shifted(-shift, 0)).pores_isolated
