"""File outputs: legacy VTK, MatrixMarket, CSV and JSON, each carrying a
provenance line with the hash of the run configuration."""
import hashlib
import json
from pathlib import Path

import numpy as np
import scipy.io


def canonical_config(config):
    """Stable JSON text of a configuration mapping."""
    return json.dumps(config, sort_keys=True, separators=(",", ":"))


def config_hash(config):
    return hashlib.sha256(canonical_config(config).encode()).hexdigest()[:16]


def provenance_line(config, prefix="#"):
    return f"{prefix} stokes_darcy_cr config_sha256={config_hash(config)} config={canonical_config(config)}"


def parse_provenance(line):
    """Inverse of :func:`provenance_line`: returns ``(hash, config)``."""
    head, _, text = line.partition(" config=")
    digest = head.rsplit("config_sha256=", 1)[1]
    return digest, json.loads(text)


def write_csv(path, header, rows, config=None):
    lines = [provenance_line(config)] if config is not None else []
    lines.append(header)
    lines.extend(",".join(r) for r in rows)
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path):
    """Header and rows of a CSV written by :func:`write_csv` (comment lines skipped)."""
    lines = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    header = lines[0].split(",")
    return header, [ln.split(",") for ln in lines[1:]]


def write_json(path, payload, config=None):
    data = dict(payload)
    if config is not None:
        data["provenance"] = {"config_sha256": config_hash(config), "config": canonical_config(config)}
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def write_vtk(path, mesh, velocity, pressure, config=None):
    """Legacy ASCII unstructured grid with per-cell region, pressure and the
    velocity at the cell centroid."""
    title = provenance_line(config, prefix="")[1:] if config is not None else "stokes_darcy_cr solution"
    centroid_u = velocity.midpoint_values().mean(axis=1)
    T = mesh.n_triangles
    out = ["# vtk DataFile Version 3.0", title[:255], "ASCII", "DATASET UNSTRUCTURED_GRID",
           f"POINTS {mesh.n_vertices} double"]
    out += [f"{x:.16g} {y:.16g} 0" for x, y in mesh.vertices]
    out.append(f"CELLS {T} {4 * T}")
    out += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    out.append(f"CELL_TYPES {T}")
    out += ["5"] * T
    out.append(f"CELL_DATA {T}")
    out += ["SCALARS region int 1", "LOOKUP_TABLE default"]
    out += [str(int(r)) for r in mesh.region]
    out += ["SCALARS pressure double 1", "LOOKUP_TABLE default"]
    out += [f"{p:.16g}" for p in pressure]
    out.append("VECTORS velocity double")
    out += [f"{a:.16g} {b:.16g} 0" for a, b in centroid_u]
    Path(path).write_text("\n".join(out) + "\n")


def read_vtk_cell_data(path):
    """Minimal reader for files produced by :func:`write_vtk`; returns a dict
    of cell arrays plus the point and cell tables."""
    tokens = Path(path).read_text().splitlines()
    data, i = {}, 4
    while i < len(tokens):
        parts = tokens[i].split()
        if not parts:
            i += 1
            continue
        key = parts[0]
        if key == "POINTS":
            n = int(parts[1])
            data["points"] = np.array([tokens[i + 1 + k].split() for k in range(n)], dtype=float)
            i += n + 1
        elif key == "CELLS":
            n = int(parts[1])
            data["cells"] = np.array([tokens[i + 1 + k].split() for k in range(n)], dtype=int)
            i += n + 1
        elif key == "CELL_TYPES":
            n = int(parts[1])
            data["cell_types"] = np.array(tokens[i + 1:i + 1 + n], dtype=int)
            i += n + 1
        elif key == "CELL_DATA":
            ncell = int(parts[1])
            i += 1
        elif key == "SCALARS":
            vals = tokens[i + 2:i + 2 + ncell]
            data[parts[1]] = np.array(vals, dtype=float)
            i += ncell + 2
        elif key == "VECTORS":
            data[parts[1]] = np.array([v.split() for v in tokens[i + 1:i + 1 + ncell]], dtype=float)
            i += ncell + 1
        else:
            raise ValueError(f"unexpected VTK section {key!r}")
    return data


def write_matrix(path, matrix, config=None):
    comment = provenance_line(config, prefix="")[1:] if config is not None else ""
    scipy.io.mmwrite(str(path), matrix, comment=comment, symmetry="general")


def write_vector(path, vector, config=None):
    write_matrix(path, np.asarray(vector, dtype=float).reshape(-1, 1), config)
