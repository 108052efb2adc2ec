"""OFF reader and writer with a comment-header extension for tags.

Besides the plain OFF body, the writer emits comment lines that a plain OFF
reader ignores::

    #kind volume | surface
    #dim 2 | 3                 ambient dimension (2D meshes store z = 0)
    #cone {"dim": ..., "kind": ..., ...}
    #apex i
    #meta {...}                JSON-serializable mesh metadata
    #tag GAMMA i j             one line per tagged boundary edge
    #boundary v face           boundary vertex of a surface and its cone face

Floats are written with 17 significant digits so coordinates survive a
round trip bit for bit.
"""
from __future__ import annotations

import json
import os
from collections import Counter

import numpy as np

from ..cone import ConeSpec
from ..errors import OutOfRangeParameter, ParseError, ValidationError
from .surface import SurfaceMesh, boundary_loop_edges, order_loop
from .volume import TAGS, VolumeMesh


def _fmt(v: float) -> str:
    return "%.17g" % v


def format_off(mesh) -> str:
    """Serialize a :class:`VolumeMesh` or :class:`SurfaceMesh` to OFF text."""
    lines = ["OFF"]
    if isinstance(mesh, VolumeMesh):
        kind, dim, cells = "volume", 2, mesh.triangles
    elif isinstance(mesh, SurfaceMesh):
        kind, dim, cells = "surface", mesh.dim_ambient, mesh.cells
    else:
        raise OutOfRangeParameter(f"cannot store {type(mesh).__name__} as OFF")
    lines.append(f"#kind {kind}")
    lines.append(f"#dim {dim}")
    if mesh.cone is not None:
        lines.append("#cone " + json.dumps(mesh.cone.to_dict(), sort_keys=True))
    if mesh.meta:
        lines.append("#meta " + json.dumps(mesh.meta, sort_keys=True))
    if kind == "volume":
        if mesh.apex_vertex is not None:
            lines.append(f"#apex {int(mesh.apex_vertex)}")
        for (a, b), tag in zip(mesh.boundary_edges, mesh.edge_tags):
            lines.append(f"#tag {tag} {int(a)} {int(b)}")
    else:
        for v, f in zip(mesh.boundary_vertices, mesh.boundary_faces):
            lines.append(f"#boundary {int(v)} {int(f)}")
    x = mesh.vertices
    lines.append(f"{len(x)} {len(cells)} 0")
    for p in x:
        q = list(p) + [0.0] * (3 - len(p))
        lines.append(" ".join(_fmt(float(c)) for c in q))
    for c in cells:
        lines.append(" ".join([str(len(c))] + [str(int(i)) for i in c]))
    return "\n".join(lines) + "\n"


def store_off(mesh, path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(format_off(mesh))


def _int(token: str, line: int) -> int:
    try:
        return int(token)
    except ValueError:
        raise ParseError(f"expected an integer, got {token!r}", line) from None


def _float(token: str, line: int) -> float:
    try:
        return float(token)
    except ValueError:
        raise ParseError(f"expected a number, got {token!r}", line) from None


def _check_manifold(cells: np.ndarray) -> None:
    if cells.shape[1] != 3:
        return
    e = np.sort(np.concatenate([cells[:, [0, 1]], cells[:, [1, 2]], cells[:, [2, 0]]]), axis=1)
    counts = Counter(map(tuple, e.tolist()))
    bad = [k for k, n in counts.items() if n > 2]
    if bad:
        a, b = bad[0]
        raise ValidationError(f"edge ({a}, {b}) is shared by more than two cells")


def parse_off(text: str):
    """Parse OFF text written by :func:`format_off` (or plain OFF)."""
    header = {"tags": [], "boundary": []}
    body = []
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, rest = line[1:].partition(" ")
            rest = rest.strip()
            try:
                if key == "kind":
                    header["kind"] = rest
                elif key == "dim":
                    header["dim"] = _int(rest, no)
                elif key == "cone":
                    header["cone"] = ConeSpec.from_dict(json.loads(rest))
                elif key == "meta":
                    header["meta"] = json.loads(rest)
                elif key == "apex":
                    header["apex"] = _int(rest, no)
                elif key == "tag":
                    parts = rest.split()
                    if len(parts) != 3 or parts[0] not in TAGS:
                        raise ParseError(f"malformed tag line {line!r}", no)
                    header["tags"].append((parts[0], _int(parts[1], no), _int(parts[2], no), no))
                elif key == "boundary":
                    parts = rest.split()
                    if len(parts) != 2:
                        raise ParseError(f"malformed boundary line {line!r}", no)
                    header["boundary"].append((_int(parts[0], no), _int(parts[1], no)))
            except (json.JSONDecodeError, KeyError, OutOfRangeParameter) as exc:
                raise ParseError(f"bad header value: {exc}", no) from None
            continue
        body.append((no, line.split("#", 1)[0].split()))
    if not body:
        raise ParseError("empty file", 1)
    no, first = body[0]
    if first[0] != "OFF":
        raise ParseError("missing OFF keyword", no)
    rest = body[1:] if len(first) == 1 else [(no, first[1:])] + body[1:]
    if not rest:
        raise ParseError("missing element counts", no)
    no, counts = rest[0]
    if len(counts) < 2:
        raise ParseError("expected vertex and face counts", no)
    nv, nf = _int(counts[0], no), _int(counts[1], no)
    if nv < 0 or nf < 0:
        raise ParseError("negative element count", no)
    if len(rest) - 1 < nv + nf:
        last = rest[-1][0]
        raise ParseError(f"expected {nv} vertices and {nf} faces, file ends early", last)
    verts = np.empty((nv, 3))
    for k in range(nv):
        no, tok = rest[1 + k]
        if len(tok) != 3:
            raise ParseError("a vertex needs three coordinates", no)
        verts[k] = [_float(t, no) for t in tok]
    faces = []
    width = None
    for k in range(nf):
        no, tok = rest[1 + nv + k]
        n = _int(tok[0], no)
        if n not in (2, 3) or len(tok) != n + 1:
            raise ParseError("faces must be segments or triangles with matching counts", no)
        if width is not None and n != width:
            raise ParseError("mixed face sizes", no)
        width = n
        idx = [_int(t, no) for t in tok[1:]]
        if min(idx) < 0 or max(idx) >= nv:
            raise ParseError(f"vertex index out of range in {idx}", no)
        if len(set(idx)) != n:
            raise ParseError(f"repeated vertex in face {idx}", no)
        faces.append(idx)
    if len(rest) - 1 > nv + nf:
        raise ParseError("trailing data after the last face", rest[1 + nv + nf][0])
    cells = np.array(faces, dtype=np.int64).reshape(-1, width or 3)
    _check_manifold(cells)
    for tag, a, b, no in header["tags"]:
        if not (0 <= a < nv and 0 <= b < nv):
            raise ParseError("tagged edge references a missing vertex", no)

    kind = header.get("kind")
    dim = header.get("dim")
    if kind is None:
        flat = nv > 0 and np.all(verts[:, 2] == 0.0)
        kind = "volume" if (header["tags"] or flat) and cells.shape[1] == 3 else "surface"
    if dim is None:
        dim = 2 if kind == "volume" or cells.shape[1] == 2 else 3
    cone = header.get("cone")
    meta = header.get("meta", {})
    if kind == "volume":
        edges = np.array([[a, b] for _, a, b, _ in header["tags"]], dtype=np.int64).reshape(-1, 2)
        tags = np.array([t for t, *_ in header["tags"]], dtype="<U6")
        return VolumeMesh(verts[:, :2], cells, edges, tags, header.get("apex"), cone, meta)
    if kind != "surface":
        raise ParseError(f"unknown mesh kind {kind!r}", 1)
    x = verts[:, :dim]
    if header["boundary"]:
        bv = np.array([v for v, _ in header["boundary"]], dtype=np.int64)
        bf = np.array([f for _, f in header["boundary"]], dtype=np.int64)
    elif cells.shape[1] == 3:
        bv = order_loop(boundary_loop_edges(cells)) if len(cells) else np.zeros(0, np.int64)
        bf = -np.ones(len(bv), dtype=np.int64)
    else:
        bv = np.array([cells[0, 0], cells[-1, 1]], dtype=np.int64)
        bf = -np.ones(2, dtype=np.int64)
    return SurfaceMesh(x, cells, bv, bf, cone, meta)


def load_off(path):
    if not os.path.exists(path):
        raise ParseError(f"no such file: {path}")
    with open(path, encoding="ascii", errors="replace") as fh:
        return parse_off(fh.read())
