"""Lattice geometry and the globally addressed pulse instruction set.

The machine is a rectangular grid of qubit sites.  Even rows are register
rows (they hold computational qubits), odd rows are auxiliary rows (they
hold the pointer and transport scratch).  Every pulse is translation
invariant: it names a row class and a pairing parity, never an individual
site.  The single exception is InitPointer, the one-off preparation that
writes a 1 onto one auxiliary site before a program runs.

Pairing convention: parity p pairs columns (2j+p, 2j+1+p) within a row,
and pairing p pairs rows (2j+p, 2j+1+p) across rows.  Pairs never straddle
the lattice boundary; sites left unpaired by the parity are untouched.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, NamedTuple

import numpy as np

ATOL = 1e-10


class RowKind(Enum):
    REGISTER = "register"
    AUXILIARY = "auxiliary"


class RowSet(Enum):
    REGISTER = "REG"
    AUXILIARY = "AUX"
    ALL = "ALL"


class Site(NamedTuple):
    col: int
    row: int


@dataclass(frozen=True)
class LatticeGeometry:
    """Grid dimensions. Rows must be even so every register row has a lane."""

    columns: int
    rows: int

    def __post_init__(self):
        if self.columns < 2:
            raise ValueError(f"need at least 2 columns, got {self.columns}")
        if self.rows < 2 or self.rows % 2 != 0:
            raise ValueError(f"rows must be even and >= 2, got {self.rows}")

    @property
    def n_sites(self) -> int:
        return self.columns * self.rows

    def row_kind(self, row: int) -> RowKind:
        return RowKind.REGISTER if row % 2 == 0 else RowKind.AUXILIARY

    def rows_of(self, rowset: RowSet) -> list[int]:
        if rowset is RowSet.REGISTER:
            return [r for r in range(self.rows) if r % 2 == 0]
        if rowset is RowSet.AUXILIARY:
            return [r for r in range(self.rows) if r % 2 == 1]
        return list(range(self.rows))

    def sites(self) -> Iterator[Site]:
        for row in range(self.rows):
            for col in range(self.columns):
                yield Site(col, row)

    def site_index(self, site: Site) -> int:
        """Canonical flat index (row-major); fixes dense tensor axis order."""
        if not (0 <= site.col < self.columns and 0 <= site.row < self.rows):
            raise ValueError(f"site {site} outside {self.columns}x{self.rows} lattice")
        return site.row * self.columns + site.col

    def column_pairs(self, parity: int) -> list[tuple[int, int]]:
        """Column pairs (2j+parity, 2j+1+parity) that fit on the lattice."""
        return [(c, c + 1) for c in range(parity, self.columns - 1, 2)]

    def unpaired_columns(self, parity: int) -> list[int]:
        paired = {c for pair in self.column_pairs(parity) for c in pair}
        return [c for c in range(self.columns) if c not in paired]

    def row_pairs(self, pairing: int) -> list[tuple[int, int]]:
        """Row pairs (2j+pairing, 2j+1+pairing); each holds one odd (aux) row."""
        return [(r, r + 1) for r in range(pairing, self.rows - 1, 2)]


# --- 2x2 unitaries ----------------------------------------------------------


class Unitary2:
    """A validated 2x2 unitary, optionally carrying a display name."""

    __slots__ = ("mat", "name")

    def __init__(self, mat, name: str | None = None):
        m = np.asarray(mat, dtype=complex)
        if m.shape != (2, 2):
            raise ValueError(f"expected 2x2 matrix, got shape {m.shape}")
        if not np.allclose(m.conj().T @ m, np.eye(2), atol=ATOL):
            raise ValueError("matrix is not unitary within 1e-10")
        m = m.copy()
        m.setflags(write=False)
        self.mat = m
        self.name = name

    def dagger(self) -> "Unitary2":
        name = None
        if self.name is not None:
            name = _DAGGER_NAMES.get(self.name)
        return Unitary2(self.mat.conj().T, name)

    def is_diagonal(self, atol: float = ATOL) -> bool:
        return abs(self.mat[0, 1]) <= atol and abs(self.mat[1, 0]) <= atol

    def is_basis_preserving(self, atol: float = ATOL) -> bool:
        """True when each basis state maps to a basis state up to phase."""
        a = abs(self.mat[0, 0])
        return a <= atol or a >= 1 - atol

    def __repr__(self):
        if self.name:
            return f"Unitary2({self.name})"
        return f"Unitary2({np.array2string(self.mat, precision=4)})"


def same_up_to_phase(a: np.ndarray, b: np.ndarray, atol: float = 1e-9) -> bool:
    """True when a = e^{i phi} b for some global phase phi."""
    inner = np.vdot(b.reshape(-1), a.reshape(-1))
    if abs(inner) < atol:
        return bool(np.allclose(a, 0) and np.allclose(b, 0))
    phase = inner / abs(inner)
    return bool(np.allclose(a, phase * b, atol=atol))


def _build_named() -> dict[str, Unitary2]:
    c8, s8 = math.cos(math.pi / 8), math.sin(math.pi / 8)
    eye = np.eye(2)
    x = np.array([[0, 1], [1, 0]])
    y = np.array([[0, -1j], [1j, 0]])
    z = np.diag([1, -1])
    h = np.array([[1, 1], [1, -1]]) / math.sqrt(2)
    sz = np.diag([1, 1j])  # principal square root of Z
    u8 = c8 * eye - 1j * s8 * x  # exp(-i X pi/8)
    w = u8.conj().T @ z @ u8  # the conjugated-Z reflection used by gate macros
    mats = {
        "I": eye, "X": x, "Y": y, "Z": z, "H": h,
        "SZ": sz, "U8": u8, "U8dag": u8.conj().T, "W": w,
    }
    return {k: Unitary2(v, k) for k, v in mats.items()}


NAMED_UNITARIES = _build_named()
_DAGGER_NAMES = {
    "I": "I", "X": "X", "Y": "Y", "Z": "Z", "H": "H",
    "U8": "U8dag", "U8dag": "U8", "W": "W",
}


def named_unitary(name: str) -> Unitary2:
    try:
        return NAMED_UNITARIES[name]
    except KeyError:
        valid = ", ".join(sorted(NAMED_UNITARIES))
        raise KeyError(f"unknown unitary name {name!r}; valid names: {valid}") from None


def match_named(u: Unitary2, atol: float = 1e-12) -> str | None:
    """Name of the exactly matching named unitary, if any."""
    for name, ref in NAMED_UNITARIES.items():
        if np.allclose(u.mat, ref.mat, atol=atol):
            return name
    return None


# --- pulse ops ---------------------------------------------------------------


def _check_parity(p: int):
    if p not in (0, 1):
        raise ValueError(f"parity must be 0 or 1, got {p}")


@dataclass(frozen=True, eq=False)
class RamanRotate:
    """Apply the same 1q unitary to every site of the row class."""

    rowset: RowSet
    u: Unitary2


@dataclass(frozen=True)
class HSwap:
    """Swap contents of every column pair (2j+parity, 2j+1+parity) in the row class."""

    rowset: RowSet
    parity: int

    def __post_init__(self):
        _check_parity(self.parity)


@dataclass(frozen=True)
class VSwap:
    """Swap contents of every row pair (2j+parity, 2j+1+parity), all columns."""

    parity: int

    def __post_init__(self):
        _check_parity(self.parity)


@dataclass(frozen=True, eq=False)
class VControlled:
    """Controlled-u on each vertical pair; control is the auxiliary-row site."""

    u: Unitary2
    pairing: int = 0

    def __post_init__(self):
        _check_parity(self.pairing)


@dataclass(frozen=True, eq=False)
class HControlled:
    """Controlled-u on each horizontal pair in the row class; control is the left site."""

    u: Unitary2
    rowset: RowSet = RowSet.REGISTER
    parity: int = 0

    def __post_init__(self):
        _check_parity(self.parity)


@dataclass(frozen=True)
class MeasureAuxAlternate:
    """Projective Z measurement of auxiliary-row sites with col mod 2 == parity."""

    parity: int

    def __post_init__(self):
        _check_parity(self.parity)


@dataclass(frozen=True)
class InitPointer:
    """One-off sigma-x on a single auxiliary site (pointer preparation)."""

    site: Site


PulseOp = (
    RamanRotate | HSwap | VSwap | VControlled | HControlled
    | MeasureAuxAlternate | InitPointer
)

OP_MNEMONICS = {
    RamanRotate: "RAMAN",
    HSwap: "HSWAP",
    VSwap: "VSWAP",
    VControlled: "VCTRL",
    HControlled: "HCTRL",
    MeasureAuxAlternate: "MEASAUX",
    InitPointer: "INITPTR",
}


@dataclass(frozen=True)
class PulseProgram:
    geometry: LatticeGeometry
    ops: tuple[PulseOp, ...]

    def __len__(self):
        return len(self.ops)


def pulse_program(geometry: LatticeGeometry, ops) -> PulseProgram:
    return PulseProgram(geometry, tuple(ops))


# --- validation --------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    severity: str  # "error" | "warning"
    op_index: int | None
    message: str


def validate_program(program: PulseProgram) -> list[Violation]:
    """Static checks. Errors make a program unrunnable, warnings do not."""
    geo = program.geometry
    out: list[Violation] = []

    def warn(i, msg):
        out.append(Violation("warning", i, msg))

    def err(i, msg):
        out.append(Violation("error", i, msg))

    for i, op in enumerate(program.ops):
        if isinstance(op, (HSwap, HControlled)):
            unpaired = geo.unpaired_columns(op.parity)
            if unpaired:
                warn(i, f"columns {unpaired} unpaired under parity {op.parity}; left untouched")
        elif isinstance(op, (VSwap, VControlled)):
            pairing = op.parity if isinstance(op, VSwap) else op.pairing
            pairs = geo.row_pairs(pairing)
            if not pairs:
                warn(i, f"no row pairs exist under pairing {pairing}; op is a no-op")
            elif pairing == 1:
                warn(i, f"rows 0 and {geo.rows - 1} unpaired under pairing 1; left untouched")
        elif isinstance(op, InitPointer):
            s = op.site
            if not (0 <= s.col < geo.columns and 0 <= s.row < geo.rows):
                err(i, f"InitPointer site {s} outside {geo.columns}x{geo.rows} lattice")
            elif geo.row_kind(s.row) is not RowKind.AUXILIARY:
                err(i, f"InitPointer site {s} is not on an auxiliary row")
    return out


def inverse_program(program: PulseProgram) -> PulseProgram:
    """Formal inverse: reversed ops with u -> u dagger. Measurement-free only."""
    inv: list[PulseOp] = []
    for op in reversed(program.ops):
        if isinstance(op, MeasureAuxAlternate):
            raise ValueError("cannot invert a program containing measurements")
        if isinstance(op, RamanRotate):
            inv.append(RamanRotate(op.rowset, op.u.dagger()))
        elif isinstance(op, VControlled):
            inv.append(VControlled(op.u.dagger(), op.pairing))
        elif isinstance(op, HControlled):
            inv.append(HControlled(op.u.dagger(), op.rowset, op.parity))
        else:
            inv.append(op)  # swaps and InitPointer are self-inverse
    return PulseProgram(program.geometry, tuple(inv))


# --- text format --------------------------------------------------------------


def _matrix_token(u: Unitary2) -> str:
    name = u.name or match_named(u)
    if name is not None:
        return name
    vals = []
    for entry in u.mat.reshape(-1):
        vals.append(f"{entry.real:.17g}")
        vals.append(f"{entry.imag:.17g}")
    return " ".join(vals)


def _parse_matrix(tokens: list[str]) -> Unitary2:
    if len(tokens) == 1 and not _is_number(tokens[0]):
        return named_unitary(tokens[0])
    if len(tokens) != 8:
        raise ValueError(f"matrix needs a name or 8 reals, got {len(tokens)} tokens")
    vals = [float(t) for t in tokens]
    mat = np.array([
        [vals[0] + 1j * vals[1], vals[2] + 1j * vals[3]],
        [vals[4] + 1j * vals[5], vals[6] + 1j * vals[7]],
    ])
    return Unitary2(mat)


def _is_number(tok: str) -> bool:
    try:
        float(tok)
        return True
    except ValueError:
        return False


def program_to_text(program: PulseProgram) -> str:
    geo = program.geometry
    lines = [f"GEOM cols={geo.columns} rows={geo.rows}"]
    for op in program.ops:
        if isinstance(op, RamanRotate):
            lines.append(f"RAMAN rowset={op.rowset.value} u={_matrix_token(op.u)}")
        elif isinstance(op, HSwap):
            lines.append(f"HSWAP rowset={op.rowset.value} parity={op.parity}")
        elif isinstance(op, VSwap):
            lines.append(f"VSWAP parity={op.parity}")
        elif isinstance(op, VControlled):
            lines.append(f"VCTRL u={_matrix_token(op.u)} pairing={op.pairing}")
        elif isinstance(op, HControlled):
            lines.append(f"HCTRL u={_matrix_token(op.u)} rowset={op.rowset.value} parity={op.parity}")
        elif isinstance(op, MeasureAuxAlternate):
            lines.append(f"MEASAUX parity={op.parity}")
        elif isinstance(op, InitPointer):
            lines.append(f"INITPTR col={op.site.col} row={op.site.row}")
        else:
            raise TypeError(f"unknown op {op!r}")
    return "\n".join(lines) + "\n"


def _split_fields(body: str) -> tuple[dict[str, str], list[str]]:
    """Split 'k=v ...' tokens; a multi-token u= value swallows following numbers."""
    raw = body.split()
    fields: dict[str, str] = {}
    extras: list[str] = []
    i = 0
    while i < len(raw):
        tok = raw[i]
        if "=" in tok:
            key, val = tok.split("=", 1)
            if key == "u":
                vals = [val]
                while i + 1 < len(raw) and _is_number(raw[i + 1]) and "=" not in raw[i + 1]:
                    i += 1
                    vals.append(raw[i])
                fields["u"] = " ".join(vals)
            else:
                fields[key] = val
        else:
            extras.append(tok)
        i += 1
    return fields, extras


def program_from_text(text: str) -> PulseProgram:
    geometry: LatticeGeometry | None = None
    ops: list[PulseOp] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        mnemonic, _, body = line.partition(" ")
        try:
            fields, extras = _split_fields(body)
            if extras:
                raise ValueError(f"unexpected tokens {extras}")
            if mnemonic == "GEOM":
                geometry = LatticeGeometry(int(fields["cols"]), int(fields["rows"]))
                continue
            if geometry is None:
                raise ValueError("GEOM line must come first")
            if mnemonic == "RAMAN":
                ops.append(RamanRotate(RowSet(fields["rowset"]), _parse_matrix(fields["u"].split())))
            elif mnemonic == "HSWAP":
                ops.append(HSwap(RowSet(fields["rowset"]), int(fields["parity"])))
            elif mnemonic == "VSWAP":
                ops.append(VSwap(int(fields["parity"])))
            elif mnemonic == "VCTRL":
                ops.append(VControlled(_parse_matrix(fields["u"].split()), int(fields.get("pairing", 0))))
            elif mnemonic == "HCTRL":
                ops.append(HControlled(
                    _parse_matrix(fields["u"].split()),
                    RowSet(fields.get("rowset", "REG")),
                    int(fields.get("parity", 0)),
                ))
            elif mnemonic == "MEASAUX":
                ops.append(MeasureAuxAlternate(int(fields["parity"])))
            elif mnemonic == "INITPTR":
                ops.append(InitPointer(Site(int(fields["col"]), int(fields["row"]))))
            else:
                raise ValueError(f"unknown mnemonic {mnemonic!r}")
        except (KeyError, ValueError) as exc:
            raise ValueError(f"line {lineno}: {raw.strip()!r}: {exc}") from exc
    if geometry is None:
        raise ValueError("program text has no GEOM line")
    return PulseProgram(geometry, tuple(ops))


# --- legacy label dialect ------------------------------------------------------
#
# Published command tables for this architecture write ops as e.g. H^SWAP_3 or
# V^c-sz.  The subscript-to-(rowset, parity) mapping is figure-defined there, so
# the table below fixes one concrete convention; it is a dialect choice, not a
# physical one.

LABEL_SUBSCRIPTS: dict[int, tuple[RowSet, int]] = {
    1: (RowSet.AUXILIARY, 0),
    2: (RowSet.AUXILIARY, 1),
    3: (RowSet.REGISTER, 0),
    4: (RowSet.REGISTER, 1),
}

LABEL_GATES: dict[str, Unitary2] = {
    "sx": NAMED_UNITARIES["X"],
    "sz": NAMED_UNITARIES["Z"],
    "sqrtsz": NAMED_UNITARIES["SZ"],
    "H": NAMED_UNITARIES["H"],
    "W": NAMED_UNITARIES["W"],
    "U": NAMED_UNITARIES["U8"],
    "Udag": NAMED_UNITARIES["U8dag"],
    "UdagH": Unitary2(NAMED_UNITARIES["U8dag"].mat @ NAMED_UNITARIES["H"].mat),
}

_LABEL_RE = re.compile(r"^(?P<axis>[HV])\^(?P<kind>SWAP|c-(?P<gate>[A-Za-z]+))(?:_(?P<sub>\d))?$")


def paper_label_to_op(label: str) -> PulseOp:
    """Parse one legacy pulse label into a PulseOp (default dialect table)."""
    m = _LABEL_RE.match(label.strip())
    if not m:
        raise ValueError(f"unparseable pulse label {label!r}")
    axis, kind, gate, sub = m.group("axis", "kind", "gate", "sub")
    if axis == "H":
        if sub is None:
            raise ValueError(f"label {label!r}: horizontal ops need a subscript 1-4")
        try:
            rowset, parity = LABEL_SUBSCRIPTS[int(sub)]
        except KeyError:
            raise ValueError(f"label {label!r}: subscript must be 1-4") from None
        if kind == "SWAP":
            return HSwap(rowset, parity)
        return HControlled(_label_gate(label, gate), rowset, parity)
    if sub is not None:
        raise ValueError(f"label {label!r}: vertical ops take no subscript")
    if kind == "SWAP":
        return VSwap(0)
    return VControlled(_label_gate(label, gate), 0)


def _label_gate(label: str, gate: str) -> Unitary2:
    try:
        return LABEL_GATES[gate]
    except KeyError:
        valid = ", ".join(sorted(LABEL_GATES))
        raise ValueError(f"label {label!r}: unknown gate token {gate!r}; valid: {valid}") from None


def _subscript_of(rowset: RowSet, parity: int) -> int:
    subs = {v: k for k, v in LABEL_SUBSCRIPTS.items()}
    try:
        return subs[(rowset, parity)]
    except KeyError:
        raise ValueError(f"no label subscript for rowset {rowset}, parity {parity}") from None


def op_to_paper_label(op: PulseOp) -> str:
    """Print a PulseOp as a legacy label; raises for ops outside the dialect."""
    if isinstance(op, HSwap):
        return f"H^SWAP_{_subscript_of(op.rowset, op.parity)}"
    if isinstance(op, VSwap):
        if op.parity != 0:
            raise ValueError("label dialect covers VSwap parity 0 only")
        return "V^SWAP"
    if isinstance(op, (HControlled, VControlled)):
        token = None
        for name, ref in LABEL_GATES.items():
            if np.allclose(op.u.mat, ref.mat, atol=1e-12):
                token = name
                break
        if token is None:
            raise ValueError(f"gate matrix of {op!r} has no label token")
        if isinstance(op, HControlled):
            return f"H^c-{token}_{_subscript_of(op.rowset, op.parity)}"
        if op.pairing != 0:
            raise ValueError("label dialect covers VControlled pairing 0 only")
        return f"V^c-{token}"
    raise ValueError(f"op {op!r} has no legacy label")
