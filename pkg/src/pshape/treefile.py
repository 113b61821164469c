"""Text format for HiDM tree specs and LUT contents.

Version 1 layout (one record per line, ``#`` starts a comment line)::

    hidm-tree 1
    labeling gray-4
    shaped-levels 2 3 4 5
    budget 1000 2000            # optional: max DM / invDM stored bits
    layer 1 u=4 r=3 s=1 t=2     # one line per layer, bottom layer first
    layer 2 u=6 r=2 s=2 t=2
    layer 3 u=4 r=0 s=3 t=1
    table 1                     # optional: 2^v rows "<input> <output> <energy>"
    0000 0000 1
    ...
    end

Inputs are written as ``v`` bits with the constraint bits first, outputs as
``u`` bits, energies as integers or ``p/q``. A file without tables is a tree
spec; :func:`dumps` of a parsed file reproduces it byte for byte.
"""

from __future__ import annotations

import re
from fractions import Fraction
from pathlib import Path

import numpy as np

from .hidm import HidmCodec, HidmTreeSpec, LayerSpec, LayerTable, TreeSpecError

FORMAT_VERSION = 1
_LAYER_RE = re.compile(r"layer (\d+) u=(\d+) r=(\d+) s=(\d+) t=(\d+)$")


class TreeFileError(ValueError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


def _fmt_fraction(x: Fraction) -> str:
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def dumps(spec: HidmTreeSpec, tables=None, comments: list[str] | None = None) -> str:
    lines = [f"# {c}" for c in comments or []]
    lines.append(f"hidm-tree {FORMAT_VERSION}")
    lines.append(f"labeling {spec.labeling_id}")
    lines.append("shaped-levels " + " ".join(str(x) for x in spec.shaped_levels))
    if spec.budget is not None:
        lines.append(f"budget {spec.budget[0]} {spec.budget[1]}")
    for i, layer in enumerate(spec.layers, start=1):
        lines.append(f"layer {i} u={layer.u} r={layer.r} s={layer.s} t={layer.t}")
    for i, (layer, tab) in enumerate(zip(spec.layers, tables or []), start=1):
        lines.append(f"table {i}")
        for idx, (word, energy) in enumerate(zip(tab.words, tab.energies)):
            inp = format(idx, f"0{layer.v}b") if layer.v else "-"
            lines.append(f"{inp} {int(word):0{layer.u}b} {_fmt_fraction(energy)}")
    lines.append("end")
    return "\n".join(lines) + "\n"


def loads(text: str) -> tuple[HidmTreeSpec, list[LayerTable] | None]:
    rows = [(n, ln.rstrip("\n")) for n, ln in enumerate(text.splitlines(), start=1)]
    rows = [(n, ln) for n, ln in rows if ln.strip() and not ln.lstrip().startswith("#")]
    it = iter(rows)

    def next_row(expect: str):
        try:
            return next(it)
        except StopIteration:
            raise TreeFileError(rows[-1][0] if rows else 0, f"unexpected end of file, expected {expect}") from None

    n, ln = next_row("header")
    if ln != f"hidm-tree {FORMAT_VERSION}":
        raise TreeFileError(n, f"expected 'hidm-tree {FORMAT_VERSION}', got {ln!r}")
    n, ln = next_row("labeling")
    if not ln.startswith("labeling "):
        raise TreeFileError(n, "expected 'labeling <id>'")
    labeling_id = ln.split(None, 1)[1]
    n, ln = next_row("shaped-levels")
    if not ln.startswith("shaped-levels "):
        raise TreeFileError(n, "expected 'shaped-levels ...'")
    try:
        levels = tuple(int(x) for x in ln.split()[1:])
    except ValueError:
        raise TreeFileError(n, "shaped levels must be integers") from None

    budget = None
    layers: list[LayerSpec] = []
    tables: list[LayerTable] = []
    n, ln = next_row("layer")
    if ln.startswith("budget "):
        parts = ln.split()
        if len(parts) != 3 or not all(p.isdigit() for p in parts[1:]):
            raise TreeFileError(n, "expected 'budget <dm> <invdm>'")
        budget = (int(parts[1]), int(parts[2]))
        n, ln = next_row("layer")
    while ln.startswith("layer "):
        m = _LAYER_RE.match(ln)
        if not m:
            raise TreeFileError(n, f"malformed layer line {ln!r}")
        idx, u, r, s, t = (int(g) for g in m.groups())
        if idx != len(layers) + 1:
            raise TreeFileError(n, f"expected layer {len(layers) + 1}, got {idx}")
        layers.append(LayerSpec(u, r, s, t))
        n, ln = next_row("table or end")
    spec = HidmTreeSpec(tuple(layers), labeling_id, levels, budget)
    try:
        spec.validate()
    except TreeSpecError as exc:
        raise TreeFileError(n, str(exc)) from None

    while ln.startswith("table "):
        idx = int(ln.split()[1])
        if idx != len(tables) + 1 or idx > len(layers):
            raise TreeFileError(n, f"unexpected table {idx}")
        layer = layers[idx - 1]
        words, energies = [], []
        for entry in range(1 << layer.v):
            n, ln = next_row(f"table {idx} entry {entry}")
            parts = ln.split()
            if len(parts) != 3:
                raise TreeFileError(n, f"expected '<input> <output> <energy>', got {ln!r}")
            inp, out, energy = parts
            want = format(entry, f"0{layer.v}b") if layer.v else "-"
            if inp != want:
                raise TreeFileError(n, f"expected input {want}, got {inp}")
            if len(out) != layer.u or set(out) - {"0", "1"}:
                raise TreeFileError(n, f"output must be {layer.u} bits, got {out!r}")
            try:
                energies.append(Fraction(energy))
            except ValueError:
                raise TreeFileError(n, f"bad energy {energy!r}") from None
            words.append(int(out, 2))
        tables.append(LayerTable(np.array(words, dtype=np.int64), tuple(energies)))
        n, ln = next_row("table or end")
    if ln != "end":
        raise TreeFileError(n, f"expected 'end', got {ln!r}")
    if tables and len(tables) != len(layers):
        raise TreeFileError(n, f"{len(tables)} tables for {len(layers)} layers")
    return spec, (tables or None)


def leading_comments(text: str) -> list[str]:
    out = []
    for ln in text.splitlines():
        if not ln.startswith("# "):
            break
        out.append(ln[2:])
    return out


def roundtrip(text: str) -> str:
    spec, tables = loads(text)
    return dumps(spec, tables, leading_comments(text))


def load(path) -> tuple[HidmTreeSpec, list[LayerTable] | None]:
    return loads(Path(path).read_text())


def load_codec(path) -> HidmCodec:
    """Load a tree file; tables are built from the spec when the file has none."""
    from .hidm import build_tree

    spec, tables = load(path)
    if tables is None:
        return build_tree(spec)
    return HidmCodec.from_tables(spec, tables)


def save(path, spec: HidmTreeSpec, tables=None, comments=None) -> None:
    Path(path).write_text(dumps(spec, tables, comments))
