"""Free-format MPS emission."""

from __future__ import annotations

import math

from .model import LinearModel, Sense, VarKind

OBJ_ROW = "OBJ"
_SENSE_CODE = {Sense.LE: "L", Sense.EQ: "E", Sense.GE: "G"}


def fmt(value: float) -> str:
    """12 significant digits, never ``-0``."""
    if value == 0:
        return "0"
    return f"{value:.12g}"


def emit_mps(model: LinearModel) -> str:
    """Render ``model`` as free-format MPS text.

    The objective constant goes to the RHS of the objective row with flipped
    sign, which is how CPLEX, Gurobi and HiGHS read an objective offset.
    """
    names = model.var_names
    for n in names + [c.name for c in model.constraints]:
        if not n or any(ch.isspace() for ch in n):
            raise ValueError(f"name {n!r} is not valid in free MPS")
    if any(c.name == OBJ_ROW for c in model.constraints):
        raise ValueError(f"constraint name {OBJ_ROW!r} is reserved for the objective")

    columns = [[] for _ in names]
    for con in model.constraints:
        for j, a in con.coefs.items():
            columns[j].append((con.name, a))

    out = [f"NAME {model.name}", "ROWS", f" N {OBJ_ROW}"]
    out += [f" {_SENSE_CODE[c.sense]} {c.name}" for c in model.constraints]

    out.append("COLUMNS")
    in_int = False
    marker = 0
    for j, name in enumerate(names):
        is_int = model.kinds[j] is VarKind.BINARY
        if is_int != in_int:
            tag = "'INTORG'" if is_int else "'INTEND'"
            out.append(f"    MARKER{marker} 'MARKER' {tag}")
            marker += 1
            in_int = is_int
        entries = []
        if j in model.objective:
            entries.append((OBJ_ROW, model.objective[j]))
        entries += columns[j]
        if not entries:
            # keep the column declared so every variable survives a round trip
            entries = [(OBJ_ROW, 0.0)]
        out += [f"    {name} {row} {fmt(a)}" for row, a in entries]
    if in_int:
        out.append(f"    MARKER{marker} 'MARKER' 'INTEND'")

    out.append("RHS")
    if model.objective_constant:
        out.append(f"    RHS {OBJ_ROW} {fmt(-model.objective_constant)}")
    out += [f"    RHS {c.name} {fmt(c.rhs)}" for c in model.constraints if c.rhs != 0]

    out.append("BOUNDS")
    for j, name in enumerate(names):
        lo, hi = model.lower[j], model.upper[j]
        if model.kinds[j] is VarKind.BINARY:
            if lo == hi:
                out.append(f" FX BND {name} {fmt(lo)}")
            else:
                out.append(f" LO BND {name} {fmt(lo)}")
                out.append(f" UP BND {name} {fmt(hi)}")
            continue
        if lo == hi:
            out.append(f" FX BND {name} {fmt(lo)}")
            continue
        if lo == -math.inf and hi == math.inf:
            out.append(f" FR BND {name}")
            continue
        if lo == -math.inf:
            out.append(f" MI BND {name}")
        elif lo != 0:
            out.append(f" LO BND {name} {fmt(lo)}")
        if hi != math.inf:
            out.append(f" UP BND {name} {fmt(hi)}")
    out.append("ENDATA")
    return "\n".join(out) + "\n"


def write_mps(model: LinearModel, path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(emit_mps(model))
