"""Triangle meshes: ASCII OBJ/PLY loading, procedural generation, diameter.

All coordinates are millimeters.  Vertex normals are unit length; when a file
does not provide them they are computed as area-weighted averages of incident
face normals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyMesh, InvalidParam, ParseError


@dataclass(frozen=True, eq=False)
class TriMesh:
    vertices: np.ndarray       # (N, 3) float64, mm
    triangles: np.ndarray      # (M, 3) int64 vertex indices
    vertex_normals: np.ndarray  # (N, 3) float64, unit

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64))
        t = np.ascontiguousarray(np.asarray(self.triangles, dtype=np.int64))
        n = np.ascontiguousarray(np.asarray(self.vertex_normals, dtype=np.float64))
        if v.ndim != 2 or v.shape[1] != 3:
            raise InvalidParam(f"vertices must be (N, 3), got {v.shape}")
        if t.ndim != 2 or t.shape[1] != 3 or len(t) < 1:
            raise InvalidParam(f"triangles must be (M, 3) with M >= 1, got {t.shape}")
        if n.shape != v.shape:
            raise InvalidParam("vertex_normals must match vertices in shape")
        if t.min(initial=0) < 0 or t.max(initial=-1) >= len(v):
            raise InvalidParam("triangle indices out of range")
        norms = np.linalg.norm(n, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise InvalidParam("vertex normals must be unit length within 1e-6")
        for arr in (v, t, n):
            arr.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        object.__setattr__(self, "vertex_normals", n)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)


def compute_vertex_normals(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Area-weighted per-vertex average of face normals.

    The raw cross product of two triangle edges has length 2*area, so summing
    the unnormalized face normals weights each face by its area.  Vertices with
    no (non-degenerate) incident face fall back to +z.
    """
    v = np.asarray(vertices, dtype=np.float64)
    t = np.asarray(triangles, dtype=np.int64)
    face_n = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])
    acc = np.zeros_like(v)
    for corner in range(3):
        np.add.at(acc, t[:, corner], face_n)
    norms = np.linalg.norm(acc, axis=1)
    bad = norms < 1e-12
    acc[bad] = (0.0, 0.0, 1.0)
    norms[bad] = 1.0
    return acc / norms[:, None]


def _normalize_or_z(normals: np.ndarray) -> np.ndarray:
    n = np.asarray(normals, dtype=np.float64).copy()
    lens = np.linalg.norm(n, axis=1)
    bad = lens < 1e-12
    n[bad] = (0.0, 0.0, 1.0)
    lens[bad] = 1.0
    return n / lens[:, None]


def _parse_obj(lines, path) -> TriMesh:
    verts: list[list[float]] = []
    file_normals: list[list[float]] = []
    faces: list[list[tuple[int, int]]] = []  # per corner: (vertex idx, normal idx or -1)

    def resolve(idx: int, count: int, what: str, lineno: int) -> int:
        if idx > 0:
            res = idx - 1
        elif idx < 0:
            res = count + idx
        else:
            raise ParseError(f"{path}:{lineno}: OBJ indices are 1-based, got 0")
        if not 0 <= res < count:
            raise ParseError(f"{path}:{lineno}: {what} index {idx} out of range (have {count})")
        return res

    for lineno, raw in enumerate(lines, 1):
        tokens = raw.split()
        if not tokens or tokens[0].startswith("#"):
            continue
        tag = tokens[0]
        try:
            if tag == "v":
                if len(tokens) < 4:
                    raise ValueError("need 3 coordinates")
                verts.append([float(x) for x in tokens[1:4]])
            elif tag == "vn":
                if len(tokens) < 4:
                    raise ValueError("need 3 components")
                file_normals.append([float(x) for x in tokens[1:4]])
            elif tag == "f":
                if len(tokens) < 4:
                    raise ValueError("face needs at least 3 vertices")
                corners = []
                for tok in tokens[1:]:
                    parts = tok.split("/")
                    vi = resolve(int(parts[0]), len(verts), "vertex", lineno)
                    ni = -1
                    if len(parts) >= 3 and parts[2]:
                        ni = resolve(int(parts[2]), len(file_normals), "normal", lineno)
                    corners.append((vi, ni))
                faces.append(corners)
            # vt, o, g, s, usemtl, mtllib ignored
        except ParseError:
            raise
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: malformed '{tag}' record: {exc}") from exc

    if not verts:
        raise ParseError(f"{path}: no vertices")
    tris = []
    tri_corner_normals = []
    for corners in faces:
        for i in range(1, len(corners) - 1):
            fan = (corners[0], corners[i], corners[i + 1])
            tris.append([c[0] for c in fan])
            tri_corner_normals.append([c[1] for c in fan])
    if not tris:
        raise EmptyMesh(f"{path}: no triangles")

    v = np.asarray(verts, dtype=np.float64)
    t = np.asarray(tris, dtype=np.int64)
    # Fold any per-corner file normals onto vertices; fill the rest from geometry.
    normals = np.zeros_like(v)
    have = np.zeros(len(v), dtype=bool)
    if file_normals:
        fn = np.asarray(file_normals, dtype=np.float64)
        for tri, nis in zip(t, tri_corner_normals):
            for vi, ni in zip(tri, nis):
                if ni >= 0:
                    normals[vi] += fn[ni]
                    have[vi] = True
    if not have.all():
        computed = compute_vertex_normals(v, t)
        normals[~have] = computed[~have]
    return TriMesh(v, t, _normalize_or_z(normals))


def _parse_ply(lines, path) -> TriMesh:
    it = iter(enumerate(lines, 1))

    def next_content():
        for lineno, raw in it:
            stripped = raw.strip()
            if stripped and not stripped.startswith("comment"):
                return lineno, stripped
        return None, None

    lineno, magic = next_content()
    if magic != "ply":
        raise ParseError(f"{path}: not a PLY file (missing 'ply' magic)")
    lineno, fmt = next_content()
    if fmt is None or not fmt.startswith("format ascii"):
        raise ParseError(f"{path}: only ASCII PLY is supported, got {fmt!r}")

    elements: list[tuple[str, int, list[str]]] = []  # (name, count, scalar property names)
    current = None
    while True:
        lineno, line = next_content()
        if line is None:
            raise ParseError(f"{path}: unterminated PLY header")
        if line == "end_header":
            break
        tokens = line.split()
        if tokens[0] == "element":
            current = (tokens[1], int(tokens[2]), [])
            elements.append(current)
        elif tokens[0] == "property":
            if current is None:
                raise ParseError(f"{path}:{lineno}: property before element")
            if tokens[1] == "list":
                current[2].append("__list__")
            else:
                current[2].append(tokens[-1])

    verts = None
    normals = None
    tris: list[list[int]] = []
    for name, count, props in elements:
        rows = []
        for _ in range(count):
            lineno, line = next_content()
            if line is None:
                raise ParseError(f"{path}: unexpected end of file in element '{name}'")
            rows.append((lineno, line.split()))
        if name == "vertex":
            for axis in ("x", "y", "z"):
                if axis not in props:
                    raise ParseError(f"{path}: vertex element lacks property '{axis}'")
            ix = [props.index(a) for a in ("x", "y", "z")]
            verts = np.array([[float(r[1][i]) for i in ix] for r in rows])
            if all(a in props for a in ("nx", "ny", "nz")):
                jx = [props.index(a) for a in ("nx", "ny", "nz")]
                normals = np.array([[float(r[1][j]) for j in jx] for r in rows])
        elif name == "face":
            for lineno, tokens in rows:
                n = int(tokens[0])
                if len(tokens) < n + 1:
                    raise ParseError(f"{path}:{lineno}: face lists {n} indices but has {len(tokens) - 1}")
                idx = [int(x) for x in tokens[1:n + 1]]
                if verts is None:
                    raise ParseError(f"{path}:{lineno}: face element precedes vertex element")
                for i in idx:
                    if not 0 <= i < len(verts):
                        raise ParseError(f"{path}:{lineno}: face index {i} out of range (have {len(verts)})")
                for i in range(1, n - 1):
                    tris.append([idx[0], idx[i], idx[i + 1]])

    if verts is None:
        raise ParseError(f"{path}: no vertex element")
    if not tris:
        raise EmptyMesh(f"{path}: no triangles")
    t = np.asarray(tris, dtype=np.int64)
    if normals is None:
        normals = compute_vertex_normals(verts, t)
    return TriMesh(verts, t, _normalize_or_z(normals))


def load_mesh(path) -> TriMesh:
    """Load an ASCII OBJ or PLY mesh; format chosen by extension, else sniffed."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read mesh file {path}: {exc}") from exc
    lines = text.splitlines()
    suffix = path.suffix.lower()
    if suffix == ".obj":
        return _parse_obj(lines, path)
    if suffix == ".ply":
        return _parse_ply(lines, path)
    if lines and lines[0].strip() == "ply":
        return _parse_ply(lines, path)
    return _parse_obj(lines, path)


def save_mesh(path, mesh: TriMesh) -> None:
    """Write ASCII OBJ or PLY (by extension); coordinates round-trip exactly."""
    path = Path(path)

    def fmt(row):
        return " ".join(repr(float(x)) for x in row)

    if path.suffix.lower() == ".ply":
        out = ["ply", "format ascii 1.0",
               f"element vertex {mesh.num_vertices}",
               "property float64 x", "property float64 y", "property float64 z",
               "property float64 nx", "property float64 ny", "property float64 nz",
               f"element face {mesh.num_triangles}",
               "property list uchar int vertex_indices",
               "end_header"]
        for v, n in zip(mesh.vertices, mesh.vertex_normals):
            out.append(f"{fmt(v)} {fmt(n)}")
        for t in mesh.triangles:
            out.append(f"3 {t[0]} {t[1]} {t[2]}")
    else:
        out = [f"v {fmt(v)}" for v in mesh.vertices]
        out += [f"vn {fmt(n)}" for n in mesh.vertex_normals]
        out += [f"f {t[0]+1}//{t[0]+1} {t[1]+1}//{t[1]+1} {t[2]+1}//{t[2]+1}"
                for t in mesh.triangles]
    path.write_text("\n".join(out) + "\n")


def mesh_diameter(mesh: TriMesh) -> float:
    """Largest vertex-to-vertex distance (exact, chunked O(n^2))."""
    v = mesh.vertices
    if len(v) < 2:
        raise InvalidParam("mesh_diameter needs at least 2 vertices")
    best = 0.0
    chunk = 512
    for start in range(0, len(v), chunk):
        block = v[start:start + chunk]
        d2 = ((block[:, None, :] - v[None, :, :]) ** 2).sum(axis=2)
        best = max(best, float(d2.max()))
    return math.sqrt(best)


def generate_needle_mesh(arc_radius: float = 9.325,
                         tube_radius: float = 0.2,
                         arc_angle: float = math.pi,
                         segments: int = 64,
                         ring_segments: int = 12) -> TriMesh:
    """Procedural semicircular suturing needle: a torus segment with end caps.

    The arc lies in the x-y plane, centered on the origin and symmetric about
    the +x axis, so the vertex set is mirror symmetric in y.  Defaults give an
    18.65 mm tip-to-tip needle (arc diameter 2*arc_radius).
    """
    if arc_radius <= 0 or tube_radius <= 0:
        raise InvalidParam("radii must be positive")
    if not 0.0 < arc_angle < 2.0 * math.pi:
        raise InvalidParam(f"arc_angle must lie in (0, 2*pi), got {arc_angle}")
    if segments < 8:
        raise InvalidParam(f"segments must be >= 8, got {segments}")
    if ring_segments < 3:
        raise InvalidParam(f"ring_segments must be >= 3, got {ring_segments}")

    n_rings = segments + 1
    # (2i - n)/(2n) is exactly antisymmetric in i <-> n - i, which keeps the
    # sampled vertex set mirror symmetric about the y = 0 plane.
    thetas = np.array([arc_angle * (2 * i - segments) / (2 * segments)
                       for i in range(n_rings)])
    phis = 2.0 * math.pi * np.arange(ring_segments) / ring_segments

    cos_t, sin_t = np.cos(thetas), np.sin(thetas)
    cos_p, sin_p = np.cos(phis), np.sin(phis)

    verts = np.empty((n_rings * ring_segments + 2, 3))
    normals = np.empty_like(verts)
    for i in range(n_rings):
        u = np.array([cos_t[i], sin_t[i], 0.0])  # radial direction of the ring
        base = i * ring_segments
        ring_n = cos_p[:, None] * u[None, :] + sin_p[:, None] * np.array([[0.0, 0.0, 1.0]])
        verts[base:base + ring_segments] = arc_radius * u[None, :] + tube_radius * ring_n
        normals[base:base + ring_segments] = ring_n

    cap0 = n_rings * ring_segments       # center of the theta = -arc/2 end
    cap1 = cap0 + 1                      # center of the theta = +arc/2 end
    verts[cap0] = (arc_radius * cos_t[0], arc_radius * sin_t[0], 0.0)
    verts[cap1] = (arc_radius * cos_t[-1], arc_radius * sin_t[-1], 0.0)
    normals[cap0] = (sin_t[0], -cos_t[0], 0.0)    # -tangent at the first ring
    normals[cap1] = (-sin_t[-1], cos_t[-1], 0.0)  # +tangent at the last ring

    tris = []
    for i in range(segments):
        a = i * ring_segments
        b = (i + 1) * ring_segments
        for j in range(ring_segments):
            jn = (j + 1) % ring_segments
            tris.append([a + j, b + j, b + jn])
            tris.append([a + j, b + jn, a + jn])
    for j in range(ring_segments):
        jn = (j + 1) % ring_segments
        tris.append([cap0, jn, j])  # first ring cap
        last = segments * ring_segments
        tris.append([cap1, last + j, last + jn])

    return TriMesh(verts, np.asarray(tris, dtype=np.int64), normals)


def make_plane_mesh(size_x: float, size_y: float) -> TriMesh:
    """Two-triangle quad in the z = 0 plane, centered at the origin, +z normals."""
    hx, hy = size_x / 2.0, size_y / 2.0
    v = np.array([[-hx, -hy, 0.0], [hx, -hy, 0.0], [hx, hy, 0.0], [-hx, hy, 0.0]])
    t = np.array([[0, 1, 2], [0, 2, 3]], dtype=np.int64)
    n = np.tile((0.0, 0.0, 1.0), (4, 1))
    return TriMesh(v, t, n)


def make_box_mesh(size_x: float, size_y: float, size_z: float) -> TriMesh:
    """Axis-aligned box centered at the origin (12 triangles, corner normals)."""
    hx, hy, hz = size_x / 2.0, size_y / 2.0, size_z / 2.0
    v = np.array([[sx * hx, sy * hy, sz * hz]
                  for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=np.float64)
    # vertex order: bit2 = x, bit1 = y, bit0 = z
    quads = [
        (0, 1, 3, 2),  # -x
        (4, 6, 7, 5),  # +x
        (0, 4, 5, 1),  # -y
        (2, 3, 7, 6),  # +y
        (0, 2, 6, 4),  # -z
        (1, 5, 7, 3),  # +z
    ]
    t = []
    for a, b, c, d in quads:
        t.append([a, b, c])
        t.append([a, c, d])
    n = _normalize_or_z(v.copy())
    return TriMesh(v, np.asarray(t, dtype=np.int64), n)


def make_uv_sphere_mesh(radius: float, n_lat: int = 16, n_lon: int = 24) -> TriMesh:
    """Latitude-longitude sphere, used mostly as a dense load-test mesh."""
    if radius <= 0 or n_lat < 2 or n_lon < 3:
        raise InvalidParam("bad sphere parameters")
    verts = [(0.0, 0.0, radius)]
    for i in range(1, n_lat):
        theta = math.pi * i / n_lat
        st, ct = math.sin(theta), math.cos(theta)
        for j in range(n_lon):
            phi = 2.0 * math.pi * j / n_lon
            verts.append((radius * st * math.cos(phi), radius * st * math.sin(phi), radius * ct))
    verts.append((0.0, 0.0, -radius))
    south = len(verts) - 1
    tris = []
    for j in range(n_lon):
        jn = (j + 1) % n_lon
        tris.append([0, 1 + j, 1 + jn])
    for i in range(n_lat - 2):
        a = 1 + i * n_lon
        b = a + n_lon
        for j in range(n_lon):
            jn = (j + 1) % n_lon
            tris.append([a + j, b + j, b + jn])
            tris.append([a + j, b + jn, a + jn])
    base = 1 + (n_lat - 2) * n_lon
    for j in range(n_lon):
        jn = (j + 1) % n_lon
        tris.append([south, base + jn, base + j])
    v = np.asarray(verts, dtype=np.float64)
    return TriMesh(v, np.asarray(tris, dtype=np.int64), _normalize_or_z(v.copy()))
