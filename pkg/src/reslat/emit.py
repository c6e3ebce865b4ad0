"""Deterministic serialisation of reports and lattices.

Floats are written with 17 significant digits (``'%.17g'``), keys in sorted
order and rows in the lattice's own order, so identical inputs give
byte-identical files.
"""

from __future__ import annotations

import json
import math
import os
from pathlib import Path

import numpy as np

FLOAT_FMT = "%.17g"


def fmt_float(x):
    x = float(x)
    if not math.isfinite(x):
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return FLOAT_FMT % x


def _json(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None or obj is True or obj is False:
        return {None: "null", True: "true", False: "false"}[obj]
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt_float(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, (complex, np.complexfloating)):
        return _json([obj.real, obj.imag], indent, level)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, np.ndarray):
        return _json(obj.tolist(), indent, level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = sorted((str(k), v) for k, v in obj.items())
        body = (",\n").join(f"{pad}{_json(k, indent, level + 1)}: {_json(v, indent, level + 1)}"
                            for k, v in items)
        return "{\n" + body + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.number, bool)) or v is None for v in obj):
            return "[" + ", ".join(_json(v, indent, level + 1) for v in obj) + "]"
        body = ",\n".join(pad + _json(v, indent, level + 1) for v in obj)
        return "[\n" + body + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj, indent=2):
    """Deterministic JSON text (sorted keys, 17-digit floats, trailing newline)."""
    return _json(obj, indent, 0) + "\n"


def lattice_header(d):
    return ["m"] + [f"k{j + 1}" for j in range(d)] + ["ReE", "ImE", "residual", "iters"]


def lattice_csv(lattice):
    """CSV text: ``m, k1..kd, ReE, ImE, residual, iters`` plus a header line."""
    lines = [",".join(lattice_header(lattice.d))]
    for r in lattice.resonances:
        row = [str(r.m)] + [str(v) for v in r.k]
        row += [fmt_float(r.E.real), fmt_float(r.E.imag), fmt_float(r.residual), str(r.iters)]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def lattice_dict(lattice):
    return {
        "input": None if lattice.input is None else lattice.input.to_dict(),
        "meta": lattice.meta,
        "columns": lattice_header(lattice.d),
        "resonances": [[r.m, *r.k, r.E.real, r.E.imag, r.residual, r.iters]
                       for r in lattice.resonances],
        "failures": [{"m": m, "k": list(k), "reason": why} for m, k, why in lattice.failures],
    }


def lattice_json(lattice):
    return dumps(lattice_dict(lattice))


def plotdata_csv(lattices):
    """Scatter data ``h, ReE, ImE`` for a sequence of lattices (one block per ``h``)."""
    lines = ["h,ReE,ImE"]
    for lat in lattices:
        h = fmt_float(lat.input.h)
        for r in lat.resonances:
            lines.append(f"{h},{fmt_float(r.E.real)},{fmt_float(r.E.imag)}")
    return "\n".join(lines) + "\n"


def read_lattice_csv(path):
    """Parse a lattice CSV back into ``(keys, energies)``."""
    text = Path(path).read_text().splitlines()
    header = text[0].split(",")
    d = len(header) - 5
    keys, E = [], []
    for line in text[1:]:
        parts = line.split(",")
        keys.append(tuple(int(v) for v in parts[:d + 1]))
        E.append(complex(float(parts[d + 1]), float(parts[d + 2])))
    return keys, np.array(E, dtype=complex)


def write_text(path, text):
    """Write via a temporary file and rename, so readers never see partial files."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)
    return path
