"""Two-dimensional polygonal meshes.

A :class:`Mesh` stores vertices, counterclockwise cell loops and the face
topology derived from them. Faces are deduplicated by their sorted vertex
pair, so hanging-node-free nonconforming inputs are not supported but any
polygonal tiling is. Generators cover the cartesian, triangular, hexagonal
and Kershaw-type families on rectangles, and rectangles with a rectangular
hole for the first two.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class MeshError(ValueError):
    """Raised for invalid mesh input or construction requests."""


@dataclass(frozen=True)
class Domain:
    """Axis-aligned rectangle, optionally with a rectangular hole."""

    xmin: float = 0.0
    xmax: float = 1.0
    ymin: float = 0.0
    ymax: float = 1.0
    hole: tuple[float, float, float, float] | None = None

    def __post_init__(self):
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise MeshError("degenerate domain")
        if self.hole is not None:
            hx0, hx1, hy0, hy1 = self.hole
            if not (self.xmin < hx0 < hx1 < self.xmax and self.ymin < hy0 < hy1 < self.ymax):
                raise MeshError("hole must lie strictly inside the domain")

    @property
    def area(self) -> float:
        a = (self.xmax - self.xmin) * (self.ymax - self.ymin)
        if self.hole is not None:
            hx0, hx1, hy0, hy1 = self.hole
            a -= (hx1 - hx0) * (hy1 - hy0)
        return a


UNIT_SQUARE = Domain()


@dataclass(frozen=True, eq=False)
class Mesh:
    """Polygonal mesh with face topology and geometric quantities.

    Attributes
    ----------
    vertices : (nv, 2) array
    cells : list of int arrays, counterclockwise vertex loops
    cell_tags : (nc,) int array of subdomain tags
    faces : (nf, 2) int array; vertex pair in the orientation of the owner cell
    face_cells : (nf, 2) int array; owner T1 and neighbor T2 (-1 on the boundary)
    cell_faces : list of int arrays, face ids in loop order
    cell_face_signs : list of arrays, +1 if the cell owns the face else -1,
        so that ``n_TF = sign * n_F``
    """

    vertices: np.ndarray
    cells: list
    cell_tags: np.ndarray
    faces: np.ndarray
    face_cells: np.ndarray
    cell_faces: list
    cell_face_signs: list
    face_normals: np.ndarray = field(repr=False)
    face_tangents: np.ndarray = field(repr=False)
    face_lengths: np.ndarray = field(repr=False)
    face_midpoints: np.ndarray = field(repr=False)
    cell_areas: np.ndarray = field(repr=False)
    cell_centroids: np.ndarray = field(repr=False)
    cell_diameters: np.ndarray = field(repr=False)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def boundary_faces(self) -> np.ndarray:
        return np.flatnonzero(self.face_cells[:, 1] < 0)

    @property
    def interior_faces(self) -> np.ndarray:
        return np.flatnonzero(self.face_cells[:, 1] >= 0)

    @property
    def is_boundary_face(self) -> np.ndarray:
        return self.face_cells[:, 1] < 0

    @property
    def face_diameters(self) -> np.ndarray:
        return self.face_lengths

    @property
    def meshsize(self) -> float:
        return float(self.cell_diameters.max())

    def cell_vertices(self, c: int) -> np.ndarray:
        return self.vertices[self.cells[c]]

    def cell_normals(self, c: int) -> np.ndarray:
        """Outward unit normals n_TF, one row per face of cell ``c``."""
        return self.face_normals[self.cell_faces[c]] * self.cell_face_signs[c][:, None]

    def with_tags(self, tags) -> "Mesh":
        tags = np.asarray(tags, dtype=int)
        if tags.shape != (self.n_cells,):
            raise MeshError("one tag per cell required")
        return Mesh(**{**self.__dict__, "cell_tags": tags})


def _polygon_area_centroid(xy: np.ndarray) -> tuple[float, np.ndarray]:
    x, y = xy[:, 0], xy[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * cross.sum()
    if area == 0.0:
        return 0.0, xy.mean(axis=0)
    cx = ((x + xn) * cross).sum() / (6.0 * area)
    cy = ((y + yn) * cross).sum() / (6.0 * area)
    return area, np.array([cx, cy])


def build_mesh(vertices, cells, tags=None) -> Mesh:
    """Build the face topology of a polygonal mesh from cell-vertex loops."""
    vertices = np.array(vertices, dtype=float)
    if vertices.ndim != 2 or vertices.shape[1] != 2:
        raise MeshError("vertices must be an (nv, 2) array")
    nv = len(vertices)
    cells = [np.asarray(c, dtype=int) for c in cells]
    nc = len(cells)
    if tags is None:
        tags = np.ones(nc, dtype=int)
    tags = np.array(tags, dtype=int)
    if tags.shape != (nc,):
        raise MeshError("one tag per cell required")

    areas = np.empty(nc)
    centroids = np.empty((nc, 2))
    diameters = np.empty(nc)
    for c, loop in enumerate(cells):
        if len(loop) < 3:
            raise MeshError(f"cell {c} has fewer than 3 vertices")
        if loop.min() < 0 or loop.max() >= nv:
            raise MeshError(f"cell {c} references a dangling vertex index")
        if len(set(loop.tolist())) != len(loop):
            raise MeshError(f"cell {c} repeats a vertex")
        xy = vertices[loop]
        a, g = _polygon_area_centroid(xy)
        if a <= 0.0:
            raise MeshError(f"cell {c} has zero or negative measure (area={a})")
        areas[c], centroids[c] = a, g
        d = xy[:, None, :] - xy[None, :, :]
        diameters[c] = np.sqrt((d ** 2).sum(axis=-1)).max()

    face_index: dict[tuple[int, int], int] = {}
    faces: list[tuple[int, int]] = []
    face_cells: list[list[int]] = []
    cell_faces, cell_face_signs = [], []
    for c, loop in enumerate(cells):
        fids, signs = [], []
        for a, b in zip(loop, np.roll(loop, -1)):
            key = (min(a, b), max(a, b))
            f = face_index.get(key)
            if f is None:
                f = len(faces)
                face_index[key] = f
                faces.append((int(a), int(b)))
                face_cells.append([c, -1])
                signs.append(1.0)
            else:
                if face_cells[f][1] >= 0:
                    raise MeshError(f"non-manifold face {key}: more than two incident cells")
                if (int(a), int(b)) == faces[f]:
                    raise MeshError(f"face {key} has inconsistent orientation; cells must be counterclockwise")
                face_cells[f][1] = c
                signs.append(-1.0)
            fids.append(f)
        cell_faces.append(np.array(fids, dtype=int))
        cell_face_signs.append(np.array(signs))

    faces_arr = np.array(faces, dtype=int).reshape(-1, 2)
    p0, p1 = vertices[faces_arr[:, 0]], vertices[faces_arr[:, 1]]
    e = p1 - p0
    lengths = np.sqrt((e ** 2).sum(axis=1))
    if np.any(lengths <= 0.0):
        raise MeshError("zero-length face")
    tangents = e / lengths[:, None]
    normals = np.column_stack([tangents[:, 1], -tangents[:, 0]])

    for arr in (vertices, tags, faces_arr, areas, centroids, diameters, lengths, tangents, normals):
        arr.setflags(write=False)
    return Mesh(
        vertices=vertices,
        cells=cells,
        cell_tags=tags,
        faces=faces_arr,
        face_cells=np.array(face_cells, dtype=int).reshape(-1, 2),
        cell_faces=cell_faces,
        cell_face_signs=cell_face_signs,
        face_normals=normals,
        face_tangents=tangents,
        face_lengths=lengths,
        face_midpoints=0.5 * (p0 + p1),
        cell_areas=areas,
        cell_centroids=centroids,
        cell_diameters=diameters,
    )


# ---------------------------------------------------------------------------
# generators


def _grid_lines(lo, hi, n, hole_lo=None, hole_hi=None):
    x = np.linspace(lo, hi, n + 1)
    if hole_lo is not None:
        h = (hi - lo) / n
        for v in (hole_lo, hole_hi):
            j = (v - lo) / h
            if abs(j - round(j)) > 1e-9:
                raise MeshError("hole not aligned to cell boundaries; choose a compatible resolution")
    return x


def _structured_grid(n, domain: Domain):
    hole = domain.hole
    hx = hole[:2] if hole else (None, None)
    hy = hole[2:] if hole else (None, None)
    xs = _grid_lines(domain.xmin, domain.xmax, n, *hx)
    ys = _grid_lines(domain.ymin, domain.ymax, n, *hy)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    verts = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return i * (n + 1) + j

    quads = []
    for i in range(n):
        for j in range(n):
            cx, cy = 0.5 * (xs[i] + xs[i + 1]), 0.5 * (ys[j] + ys[j + 1])
            if hole and hole[0] < cx < hole[1] and hole[2] < cy < hole[3]:
                continue
            quads.append((vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)))
    return verts, quads


def _drop_unused(verts, cells):
    used = np.unique(np.concatenate([np.asarray(c) for c in cells]))
    remap = -np.ones(len(verts), dtype=int)
    remap[used] = np.arange(len(used))
    return verts[used], [remap[np.asarray(c)] for c in cells]


def cartesian(n: int, domain: Domain = UNIT_SQUARE) -> Mesh:
    if n < 1:
        raise MeshError("resolution must be >= 1")
    verts, quads = _structured_grid(n, domain)
    verts, cells = _drop_unused(verts, quads)
    return build_mesh(verts, cells)


def triangular(n: int, domain: Domain = UNIT_SQUARE) -> Mesh:
    """Cartesian grid with every square split along its lower-left/upper-right diagonal."""
    if n < 1:
        raise MeshError("resolution must be >= 1")
    verts, quads = _structured_grid(n, domain)
    tris = []
    for a, b, c, d in quads:
        tris.append((a, b, c))
        tris.append((a, c, d))
    verts, cells = _drop_unused(verts, tris)
    return build_mesh(verts, cells)


def kershaw(n: int, domain: Domain = UNIT_SQUARE, amplitude: float = 0.1) -> Mesh:
    """Cartesian grid distorted by a smooth shear that fixes the boundary.

    Both coordinates are displaced by ``amplitude * sin(2 pi xi) sin(2 pi eta)``
    in reference coordinates; the map stays injective for amplitude < 1/(2 pi).
    """
    if domain.hole is not None:
        raise MeshError("kershaw family does not support holes")
    if not 0.0 <= amplitude < 1.0 / (2.0 * np.pi):
        raise MeshError("amplitude must lie in [0, 1/(2 pi))")
    m = cartesian(n, domain)
    lx, ly = domain.xmax - domain.xmin, domain.ymax - domain.ymin
    xi = (m.vertices[:, 0] - domain.xmin) / lx
    eta = (m.vertices[:, 1] - domain.ymin) / ly
    bump = amplitude * np.sin(2 * np.pi * xi) * np.sin(2 * np.pi * eta)
    verts = np.column_stack([domain.xmin + lx * (xi + bump), domain.ymin + ly * (eta + bump)])
    return build_mesh(verts, m.cells)


def _clip(poly: np.ndarray, axis: int, value: float, keep_greater: bool) -> np.ndarray:
    # Sutherland-Hodgman against one axis-aligned half plane
    out = []
    n = len(poly)
    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        pin = p[axis] >= value if keep_greater else p[axis] <= value
        qin = q[axis] >= value if keep_greater else q[axis] <= value
        if pin:
            out.append(p)
        if pin != qin:
            t = (value - p[axis]) / (q[axis] - p[axis])
            r = p + t * (q - p)
            r[axis] = value
            out.append(r)
    return np.array(out).reshape(-1, 2)


def hexagonal(n: int, domain: Domain = UNIT_SQUARE) -> Mesh:
    """Pointy-top hexagonal tiling clipped to the rectangle.

    ``n`` hexagons span the width; rows are stretched vertically so that an
    integer number of row spacings fits the height. Hexagon centres of even
    rows lie on the left/right sides and the first and last rows are centred
    on the bottom/top sides, so clipping never creates slivers.
    """
    if n < 1:
        raise MeshError("resolution must be >= 1")
    if domain.hole is not None:
        raise MeshError("hexagonal family does not support holes")
    lx, ly = domain.xmax - domain.xmin, domain.ymax - domain.ymin
    w = lx / n
    rows = max(1, int(round(ly / (w * np.sqrt(3.0) / 2.0))))
    dy = ly / rows
    hh = 2.0 * dy / 3.0  # half height so that row spacing is 3/2 of it
    # counterclockwise from the top vertex
    offsets = np.array([[0, hh], [-w / 2, hh / 2], [-w / 2, -hh / 2],
                        [0, -hh], [w / 2, -hh / 2], [w / 2, hh / 2]])
    polys = []
    for j in range(rows + 1):
        yc = domain.ymin + j * dy
        shift = 0.0 if j % 2 == 0 else 0.5 * w
        for i in range(-1, n + 2):
            xc = domain.xmin + i * w + shift
            poly = offsets + np.array([xc, yc])
            poly = _clip(poly, 0, domain.xmin, True)
            poly = _clip(poly, 0, domain.xmax, False) if len(poly) else poly
            poly = _clip(poly, 1, domain.ymin, True) if len(poly) else poly
            poly = _clip(poly, 1, domain.ymax, False) if len(poly) else poly
            if len(poly) < 3:
                continue
            a, _ = _polygon_area_centroid(poly)
            if a <= 1e-12 * w * w:
                continue
            polys.append(poly)

    scale = 1e-9 * min(lx, ly)
    index: dict[tuple[int, int], int] = {}
    verts, cells = [], []
    for poly in polys:
        loop = []
        for p in poly:
            key = (int(round(p[0] / scale)), int(round(p[1] / scale)))
            v = index.get(key)
            if v is None:
                v = len(verts)
                index[key] = v
                verts.append(p)
            if not loop or loop[-1] != v:
                loop.append(v)
        if loop[0] == loop[-1]:
            loop.pop()
        cells.append(loop)
    return build_mesh(np.array(verts), cells)


FAMILIES = {
    "cartesian": cartesian,
    "triangular": triangular,
    "hexagonal": hexagonal,
    "kershaw": kershaw,
}


def generate_mesh(family: str, n: int, domain: Domain = UNIT_SQUARE) -> Mesh:
    try:
        gen = FAMILIES[family]
    except KeyError:
        raise MeshError(f"unknown mesh family {family!r}; choose from {sorted(FAMILIES)}") from None
    return gen(n, domain)


# ---------------------------------------------------------------------------
# text format: "nv nc", nv lines "x y", nc lines "m v1 ... vm tag"


def save_mesh(mesh: Mesh, path) -> None:
    lines = [f"{len(mesh.vertices)} {mesh.n_cells}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    for loop, tag in zip(mesh.cells, mesh.cell_tags):
        lines.append(" ".join([str(len(loop)), *map(str, loop.tolist()), str(int(tag))]))
    Path(path).write_text("\n".join(lines) + "\n")


def load_mesh(path) -> Mesh:
    tokens = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip() and not ln.startswith("#")]
    if not tokens or len(tokens[0]) != 2:
        raise MeshError("first line must be 'nv nc'")
    nv, nc = int(tokens[0][0]), int(tokens[0][1])
    if len(tokens) != 1 + nv + nc:
        raise MeshError(f"expected {1 + nv + nc} non-empty lines, found {len(tokens)}")
    verts = np.array([[float(t[0]), float(t[1])] for t in tokens[1:1 + nv]]).reshape(-1, 2)
    cells, tags = [], []
    for t in tokens[1 + nv:]:
        m = int(t[0])
        if len(t) != m + 2:
            raise MeshError(f"cell line {' '.join(t)!r} does not match its vertex count")
        cells.append([int(v) for v in t[1:1 + m]])
        tags.append(int(t[1 + m]))
    return build_mesh(verts, cells, tags)


# ---------------------------------------------------------------------------
# validation


@dataclass
class ValidationReport:
    n_cells: int
    n_faces: int
    n_boundary_faces: int
    max_faces_per_cell: int
    worst_face_ratio: float  # min over cells and faces of h_F / h_T
    rho_estimate: float  # sqrt of the worst ratio, from rho^2 h_T <= h_F
    min_cell_area: float
    total_area: float
    star_shaped: bool
    face_ratio_ok: bool  # h_F <= h_T everywhere
    non_star_cells: list = field(default_factory=list)

    def lines(self) -> list[str]:
        return [
            f"cells                 {self.n_cells}",
            f"faces                 {self.n_faces} ({self.n_boundary_faces} boundary)",
            f"max faces per cell    {self.max_faces_per_cell}",
            f"worst h_F/h_T         {self.worst_face_ratio:.6g}",
            f"rho estimate          {self.rho_estimate:.6g}",
            f"h_F <= h_T            {self.face_ratio_ok}",
            f"min cell area         {self.min_cell_area:.6g}",
            f"total area            {self.total_area:.15g}",
            f"star-shaped (centroid) {self.star_shaped}",
        ]


def is_star_shaped(mesh: Mesh, c: int) -> bool:
    """Every fan triangle (centroid, v_i, v_i+1) has positive area."""
    xy = mesh.cell_vertices(c)
    g = mesh.cell_centroids[c]
    a = xy - g
    b = np.roll(xy, -1, axis=0) - g
    cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    return bool(np.all(cross > 1e-14 * mesh.cell_diameters[c] ** 2))


def validate(mesh: Mesh) -> ValidationReport:
    ratios = []
    for c in range(mesh.n_cells):
        ratios.append((mesh.face_lengths[mesh.cell_faces[c]] / mesh.cell_diameters[c]).min())
    worst = float(min(ratios))
    bad = [c for c in range(mesh.n_cells) if not is_star_shaped(mesh, c)]
    hf_ok = all(
        np.all(mesh.face_lengths[mesh.cell_faces[c]] <= mesh.cell_diameters[c] * (1 + 1e-14))
        for c in range(mesh.n_cells)
    )
    return ValidationReport(
        n_cells=mesh.n_cells,
        n_faces=mesh.n_faces,
        n_boundary_faces=len(mesh.boundary_faces),
        max_faces_per_cell=max(len(f) for f in mesh.cell_faces),
        worst_face_ratio=worst,
        rho_estimate=float(np.sqrt(worst)),
        min_cell_area=float(mesh.cell_areas.min()),
        total_area=float(mesh.cell_areas.sum()),
        star_shaped=not bad,
        face_ratio_ok=bool(hf_ok),
        non_star_cells=bad,
    )
