"""Self-describing JSON containers and deterministic CSV emission.

Sections and regions serialize as {schema, kind, dim, N, L, r, data};
symbols and operators additionally carry {k, flags}.  Complex arrays are
stored as paired real/imaginary nested lists.  All writers sort keys and
format floats through a fixed %.17g so identical inputs produce identical
bytes.
"""

from __future__ import annotations

import json

import numpy as np

from .lattice import GridSpec, Region, Section
from .operators import DiscreteOperator
from .symbols import Symbol

__all__ = [
    "to_container",
    "from_container",
    "save",
    "load",
    "write_csv",
    "json_bytes",
]

SCHEMA = "torusop-v1"


def _grid_header(grid: GridSpec) -> dict:
    return {
        "schema": SCHEMA,
        "dim": grid.dim,
        "N": grid.points_per_axis,
        "L": grid.period_scale,
        "r": grid.fiber_dim,
    }


def _grid_from_header(doc: dict) -> GridSpec:
    return GridSpec(doc["dim"], doc["N"], doc["L"], doc["r"])


def _pack(arr: np.ndarray):
    a = np.asarray(arr)
    if np.iscomplexobj(a):
        return {"real": a.real.tolist(), "imag": a.imag.tolist()}
    return {"real": a.tolist()}


def _unpack(doc) -> np.ndarray:
    real = np.asarray(doc["real"], dtype=float)
    if "imag" in doc:
        return real + 1j * np.asarray(doc["imag"], dtype=float)
    return real


def to_container(obj) -> dict:
    if isinstance(obj, Section):
        doc = _grid_header(obj.grid)
        doc.update(kind="section", data=_pack(obj.values))
        return doc
    if isinstance(obj, Region):
        doc = _grid_header(obj.grid)
        doc.update(kind="region", data=_pack(obj.mask.astype(int)))
        return doc
    if isinstance(obj, Symbol):
        doc = _grid_header(obj.grid)
        doc.update(
            kind="symbol", k=obj.order, data=_pack(obj.samples),
            flags={"x_independent": bool(obj.x_independent),
                   "hermitian_valued": bool(obj.hermitian_valued)},
        )
        return doc
    if isinstance(obj, DiscreteOperator):
        doc = _grid_header(obj.grid)
        flags = {
            "provenance": obj.provenance,
            "self_adjoint": bool(obj.self_adjoint),
            "scalar_symbol": bool(obj.scalar_symbol),
            "hermitian_symbol": bool(obj.hermitian_symbol),
        }
        if obj.propagation_bound is not None:
            flags["propagation_bound"] = float(obj.propagation_bound)
        if obj.propagation_speed is not None:
            flags["propagation_speed"] = float(obj.propagation_speed)
        doc.update(kind="operator", k=obj.order, data=_pack(obj.matrix),
                   flags=flags)
        return doc
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def from_container(doc: dict):
    if doc.get("schema") != SCHEMA:
        raise ValueError(f"unknown schema {doc.get('schema')!r}")
    grid = _grid_from_header(doc)
    kind = doc["kind"]
    if kind == "section":
        return Section(grid, _unpack(doc["data"]))
    if kind == "region":
        return Region(grid, _unpack(doc["data"]).astype(bool))
    if kind == "symbol":
        flags = doc["flags"]
        return Symbol(grid, doc["k"], _unpack(doc["data"]),
                      hermitian_valued=flags["hermitian_valued"],
                      x_independent=flags["x_independent"])
    if kind == "operator":
        flags = doc["flags"]
        return DiscreteOperator(
            grid, doc["k"], _unpack(doc["data"]),
            provenance=flags["provenance"],
            self_adjoint=flags["self_adjoint"],
            scalar_symbol=flags["scalar_symbol"],
            hermitian_symbol=flags["hermitian_symbol"],
            propagation_bound=flags.get("propagation_bound"),
            propagation_speed=flags.get("propagation_speed"),
        )
    raise ValueError(f"unknown container kind {kind!r}")


class _FloatEncoder(json.JSONEncoder):
    """repr-stable float rendering for byte-identical reruns."""

    def default(self, o):
        if isinstance(o, (np.integer,)):
            return int(o)
        if isinstance(o, (np.floating,)):
            return float(o)
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, (np.bool_,)):
            return bool(o)
        return super().default(o)


def json_bytes(doc: dict) -> bytes:
    return json.dumps(doc, sort_keys=True, indent=1,
                      cls=_FloatEncoder).encode() + b"\n"


def save(obj, path) -> None:
    with open(path, "wb") as fh:
        fh.write(json_bytes(to_container(obj)))


def load(path):
    with open(path) as fh:
        return from_container(json.load(fh))


def _cell(x) -> str:
    if isinstance(x, (float, np.floating)):
        return "%.17g" % x
    return str(x)


def write_csv(path, header, rows) -> None:
    """Deterministic CSV: fixed column order and float format."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_cell(x) for x in row))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
