"""Periodic voxel unit cells: loading, porosity and phase connectivity.

A cell is stored as a 0/1 array ``chi`` of shape ``(nx, ny, nz)`` where
1 marks fluid (pore space) and 0 marks the solid skeleton.  On disk the
``poro-cellgeo v1`` text format lists the voxels x-fastest.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy import ndimage

HEADER = "poro-cellgeo v1"


class GeometryError(ValueError):
    """Raised for malformed cell files or invalid indicator arrays."""


@dataclass(frozen=True)
class VoxelCell:
    chi: np.ndarray
    porosity: float = field(init=False)

    def __post_init__(self):
        chi = np.asarray(self.chi)
        if chi.ndim != 3 or min(chi.shape) < 1:
            raise GeometryError(f"indicator must be a non-empty 3D array, got shape {chi.shape}")
        if not np.all((chi == 0) | (chi == 1)):
            raise GeometryError("indicator entries must be 0 or 1")
        chi = chi.astype(np.int8)
        chi.setflags(write=False)
        object.__setattr__(self, "chi", chi)
        object.__setattr__(self, "porosity", float(self.porosity_fraction))

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(n) for n in self.chi.shape)

    @property
    def spacing(self) -> tuple[float, float, float]:
        return tuple(1.0 / n for n in self.dims)

    @property
    def n_voxels(self) -> int:
        return int(self.chi.size)

    @property
    def porosity_fraction(self) -> Fraction:
        return Fraction(int(self.chi.sum()), self.n_voxels)

    @property
    def fluid(self) -> np.ndarray:
        return self.chi.astype(bool)

    @property
    def solid(self) -> np.ndarray:
        return ~self.fluid

    def shifted(self, shift, axis) -> "VoxelCell":
        return VoxelCell(np.roll(self.chi, shift, axis=axis))


def porosity(cell: VoxelCell) -> float:
    return float(cell.porosity_fraction)


def parse_geometry(text: str) -> VoxelCell:
    lines = text.splitlines()
    if not lines or lines[0].strip() != HEADER:
        raise GeometryError(f"line 1: expected header '{HEADER}'")
    if len(lines) < 2:
        raise GeometryError("line 2: missing dims line")
    parts = lines[1].split()
    if len(parts) != 4 or parts[0] != "dims":
        raise GeometryError("line 2: expected 'dims <nx> <ny> <nz>'")
    try:
        dims = tuple(int(p) for p in parts[1:])
    except ValueError:
        raise GeometryError("line 2: dims must be integers") from None
    if min(dims) < 1:
        raise GeometryError("line 2: dims must be positive")
    nx, ny, nz = dims
    symbols = []
    for lineno, line in enumerate(lines[2:], start=3):
        for col, ch in enumerate(line, start=1):
            if ch.isspace():
                continue
            if ch not in "01":
                raise GeometryError(
                    f"line {lineno}, column {col} (payload offset {len(symbols)}): "
                    f"invalid symbol {ch!r}"
                )
            symbols.append(ch == "1")
    if len(symbols) != nx * ny * nz:
        raise GeometryError(
            f"payload has {len(symbols)} voxels but dims require {nx * ny * nz}"
        )
    flat = np.array(symbols, dtype=np.int8)
    return VoxelCell(flat.reshape((nz, ny, nx)).transpose(2, 1, 0))


def load_geometry(path) -> VoxelCell:
    return parse_geometry(Path(path).read_text())


def format_geometry(cell: VoxelCell, width: int = 64) -> str:
    nx, ny, nz = cell.dims
    payload = "".join("1" if v else "0" for v in cell.chi.transpose(2, 1, 0).ravel())
    rows = [payload[i:i + width] for i in range(0, len(payload), width)]
    return "\n".join([HEADER, f"dims {nx} {ny} {nz}", *rows]) + "\n"


def write_geometry(cell: VoxelCell, path) -> None:
    Path(path).write_text(format_geometry(cell))


# built-in shapes


def laminate(n_layers: int, fluid_layers: int, axis: int = 2, lateral: int | None = None,
             offset: int | None = None) -> VoxelCell:
    """Fluid slab of ``fluid_layers`` layers normal to ``axis``.

    ``lateral`` sets the resolution of the two in-plane axes (default
    ``n_layers``); the laminate does not vary along them.
    """
    if not 0 <= fluid_layers <= n_layers:
        raise GeometryError("fluid_layers must lie in [0, n_layers]")
    lateral = n_layers if lateral is None else lateral
    if offset is None:
        offset = (n_layers - fluid_layers) // 2
    dims = [lateral] * 3
    dims[axis] = n_layers
    chi = np.zeros(dims, dtype=np.int8)
    sl = [slice(None)] * 3
    sl[axis] = (np.arange(fluid_layers) + offset) % n_layers
    chi[tuple(sl)] = 1
    return VoxelCell(chi)


def cube_inclusion(n: int, size: int, fluid_inside: bool = True) -> VoxelCell:
    """Centered cube of edge ``size`` voxels in an ``n``-cube cell.

    With ``fluid_inside`` the cube is an isolated pore in a solid matrix,
    otherwise it is a solid grain in a fluid matrix.
    """
    if not 0 <= size <= n:
        raise GeometryError("inclusion size must lie in [0, n]")
    inside = 1 if fluid_inside else 0
    chi = np.full((n, n, n), 1 - inside, dtype=np.int8)
    lo = (n - size) // 2
    chi[lo:lo + size, lo:lo + size, lo:lo + size] = inside
    return VoxelCell(chi)


def solid_only(n: int = 4) -> VoxelCell:
    return VoxelCell(np.zeros((n, n, n), dtype=np.int8))


def fluid_matrix(n: int, size: int) -> VoxelCell:
    return cube_inclusion(n, size, fluid_inside=False)


# connectivity


@dataclass(frozen=True)
class PhaseComponents:
    """Periodic components of one phase.

    ``labels`` holds a component id per voxel (-1 outside the phase),
    ``unwrapped`` holds per-voxel integer coordinates continued across
    periodic faces inside each component, and ``wraps[c]`` flags the
    axes along which component ``c`` closes a loop around the torus.
    """

    labels: np.ndarray
    unwrapped: np.ndarray
    wraps: np.ndarray

    @property
    def count(self) -> int:
        return int(self.wraps.shape[0])


class _OffsetUnionFind:
    # union-find carrying the translation between a node and its root

    def __init__(self, n):
        self.parent = list(range(n))
        self.offset = [np.zeros(3, dtype=np.int64) for _ in range(n)]

    def find(self, a):
        path = []
        while self.parent[a] != a:
            path.append(a)
            a = self.parent[a]
        root = a
        # compress, accumulating offsets from the top of the path down
        acc = np.zeros(3, dtype=np.int64)
        for node in reversed(path):
            acc = acc + self.offset[node]
            self.offset[node] = acc.copy()
            self.parent[node] = root
        return root

    def union(self, a, b, d):
        """Record pos(b) = pos(a) + d; return the loop mismatch if already joined."""
        ra, rb = self.find(a), self.find(b)
        oa, ob = self.offset[a], self.offset[b]
        if ra == rb:
            return oa + d - ob
        # pos(x) = pos(root) + offset(x); attach rb under ra
        self.parent[rb] = ra
        self.offset[rb] = oa + d - ob
        return None


def phase_components(mask: np.ndarray) -> PhaseComponents:
    """Label the 6-connected periodic components of a boolean mask."""
    mask = np.asarray(mask, dtype=bool)
    dims = np.array(mask.shape)
    local, n_local = ndimage.label(mask)
    uf = _OffsetUnionFind(n_local)
    loops = [[] for _ in range(n_local)]
    for axis in range(3):
        lo = np.take(local, 0, axis=axis)
        hi = np.take(local, -1, axis=axis)
        both = (lo > 0) & (hi > 0)
        pairs = np.unique(np.stack([hi[both], lo[both]], axis=1), axis=0)
        d = np.zeros(3, dtype=np.int64)
        d[axis] = 1
        for a, b in pairs:
            # stepping +1 across the face from the last layer to the first
            mismatch = uf.union(int(a) - 1, int(b) - 1, d)
            if mismatch is not None:
                loops[int(a) - 1].append(mismatch)
    roots = [uf.find(i) for i in range(n_local)]
    root_ids = {r: k for k, r in enumerate(sorted(set(roots)))}
    wraps = np.zeros((len(root_ids), 3), dtype=bool)
    for i in range(n_local):
        for mismatch in loops[i]:
            wraps[root_ids[roots[i]]] |= mismatch != 0
    labels = np.full(mask.shape, -1, dtype=np.int64)
    unwrapped = np.zeros(mask.shape + (3,), dtype=np.int64)
    if n_local:
        comp_of_local = np.array([root_ids[r] for r in roots])
        off = np.array([uf.offset[i] for i in range(n_local)])
        inside = local > 0
        labels[inside] = comp_of_local[local[inside] - 1]
        grid = np.stack(np.meshgrid(*[np.arange(n) for n in dims], indexing="ij"), axis=-1)
        # offsets are in units of whole cells
        unwrapped[inside] = grid[inside] + off[local[inside] - 1] * dims
    return PhaseComponents(labels=labels, unwrapped=unwrapped, wraps=wraps)


@dataclass(frozen=True)
class Connectivity:
    fluid_connected: bool
    solid_connected: bool
    pores_isolated: bool
    fluid_wraps: tuple[bool, bool, bool]
    solid_wraps: tuple[bool, bool, bool]
    n_fluid_components: int
    n_solid_components: int


def analyze_connectivity(cell: VoxelCell) -> Connectivity:
    fluid = phase_components(cell.fluid)
    solid = phase_components(cell.solid)

    def summary(comp):
        wraps = tuple(bool(w) for w in comp.wraps.any(axis=0)) if comp.count else (False,) * 3
        connected = comp.count == 1 and any(wraps)
        return connected, wraps

    fluid_connected, fluid_wraps = summary(fluid)
    solid_connected, solid_wraps = summary(solid)
    if cell.porosity == 0:
        solid_connected = True
    chi = cell.chi
    touches = any(
        np.take(chi, 0, axis=a).any() or np.take(chi, -1, axis=a).any() for a in range(3)
    )
    pores_isolated = cell.porosity > 0 and not touches and not any(fluid_wraps)
    if not solid_connected and cell.porosity < 1:
        warnings.warn("solid phase is not a single periodic component", stacklevel=2)
    return Connectivity(
        fluid_connected=fluid_connected,
        solid_connected=solid_connected,
        pores_isolated=pores_isolated,
        fluid_wraps=fluid_wraps,
        solid_wraps=solid_wraps,
        n_fluid_components=fluid.count,
        n_solid_components=solid.count,
    )
