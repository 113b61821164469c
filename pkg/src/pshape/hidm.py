"""Hierarchical distribution matcher (HiDM).

A tree of small look-up tables. The single LUT on the top layer reads fresh
input bits only; every lower LUT reads ``r`` constraint bits from its parent
plus ``s`` fresh bits and emits a ``u``-bit word. Layer-1 words select the
shaped bit levels of a run of PAM symbols. Tables list their words by
increasing expected symbol energy, so upper layers steer the lower ones
towards low-energy outputs.

Layer ``l`` of the tree is ``spec.layers[l - 1]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Sequence

import numpy as np

from .constellation import AmplitudeLabeling, Pmf, labeling_from_ident

_INT64_SAFE = 1 << 62


class TreeSpecError(ValueError):
    """Raised for an inconsistent LUT-tree specification."""


@dataclass(frozen=True)
class LayerSpec:
    u: int  # LUT output bits
    r: int  # constraint bits from the parent LUT
    s: int  # fresh information bits
    t: int = 1  # LUTs on this layer fed by one parent LUT

    @property
    def v(self) -> int:
        return self.r + self.s


@dataclass(frozen=True)
class HidmTreeSpec:
    layers: tuple[LayerSpec, ...]
    labeling_id: str = "gray-4"
    shaped_levels: tuple[int, ...] = (2, 3, 4, 5)
    budget: tuple[int, int] | None = None

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "shaped_levels", tuple(self.shaped_levels))

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def lut_counts(self) -> tuple[int, ...]:
        """T_l for l = 1..L, with T_L = 1 and T_l = t_l T_{l+1}."""
        counts = [1] * self.num_layers
        for i in range(self.num_layers - 2, -1, -1):
            counts[i] = self.layers[i].t * counts[i + 1]
        return tuple(counts)

    @property
    def input_bits(self) -> int:
        """N_u^sb, the number of information bits consumed per DM word."""
        return sum(T * layer.s for T, layer in zip(self.lut_counts, self.layers))

    @property
    def output_bits(self) -> int:
        if not self.layers:
            return 0
        return self.lut_counts[0] * self.layers[0].u

    @property
    def bits_per_amplitude(self) -> int:
        return labeling_from_ident(self.labeling_id).bits_per_amplitude

    @property
    def shaped_per_symbol(self) -> int:
        return len(self.shaped_levels)

    @property
    def num_symbols(self) -> int:
        """PAM symbols whose amplitude the DM word selects."""
        return self.output_bits // self.shaped_per_symbol

    def validate(self) -> None:
        if not self.layers:
            return
        b = self.bits_per_amplitude
        levels = self.shaped_levels
        if not levels or len(set(levels)) != len(levels) or sorted(levels) != list(levels):
            raise TreeSpecError(f"shaped levels must be distinct and increasing, got {levels}")
        if levels[0] < 2 or levels[-1] > b + 1:
            raise TreeSpecError(f"shaped levels must lie in 2..{b + 1} for {self.labeling_id}")
        for idx, layer in enumerate(self.layers, start=1):
            if min(layer.u, layer.r, layer.s) < 0 or layer.u == 0 or layer.t < 1:
                raise TreeSpecError(f"layer {idx}: sizes must be positive")
            if layer.v > layer.u:
                raise TreeSpecError(f"layer {idx}: v = r + s = {layer.v} exceeds u = {layer.u}")
            if idx < self.num_layers:
                upper = self.layers[idx]
                if upper.u != layer.t * layer.r:
                    raise TreeSpecError(
                        f"layer {idx}: parent output u_{idx + 1} = {upper.u} != t*r = {layer.t * layer.r}")
            elif layer.r != 0:
                raise TreeSpecError(f"layer {idx}: top layer must have r = 0")
        if self.layers[0].u % self.shaped_per_symbol:
            raise TreeSpecError(
                f"layer 1: u_1 = {self.layers[0].u} is not a multiple of {self.shaped_per_symbol} shaped bits per symbol")


def storage_bits(spec: HidmTreeSpec) -> tuple[int, int]:
    """Stored LUT bits on the DM side and on the invDM side."""
    dm = sum(T * (1 << layer.v) * layer.u for T, layer in zip(spec.lut_counts, spec.layers))
    invdm = sum(T * (1 << layer.u) * layer.v for T, layer in zip(spec.lut_counts, spec.layers))
    return dm, invdm


@dataclass(frozen=True)
class LayerTable:
    words: np.ndarray  # (2^v,) output words, entry index = (constraint << s) | fresh
    energies: tuple[Fraction, ...]


def shaped_classes(labeling: AmplitudeLabeling, shaped_levels: Sequence[int]) -> list[list[int]]:
    """Amplitude indices selected by each shaped-bit pattern (unshaped levels free)."""
    b = labeling.bits_per_amplitude
    bits = labeling.bit_matrix()
    cols = [lvl - 2 for lvl in shaped_levels]
    k = len(cols)
    classes: list[list[int]] = [[] for _ in range(1 << k)]
    for idx in range(1 << b):
        pat = 0
        for c in cols:
            pat = (pat << 1) | int(bits[idx, c])
        classes[pat].append(idx)
    return classes


def class_energies(labeling: AmplitudeLabeling, shaped_levels: Sequence[int]) -> list[Fraction]:
    out = []
    for members in shaped_classes(labeling, shaped_levels):
        out.append(Fraction(sum((2 * i + 1) ** 2 for i in members), len(members)))
    return out


def _split_chunks(values: np.ndarray, n_chunks: int, width: int) -> np.ndarray:
    """Split ``width*n_chunks``-bit integers into chunks, MSB chunk first."""
    shifts = width * np.arange(n_chunks - 1, -1, -1)
    return (values[..., None] >> shifts) & ((1 << width) - 1)


def _join_chunks(chunks: np.ndarray, width: int) -> np.ndarray:
    n = chunks.shape[-1]
    shifts = width * np.arange(n - 1, -1, -1)
    return np.bitwise_or.reduce(chunks.astype(np.int64) << shifts, axis=-1)


def _select(numerators: np.ndarray, chunk_ranks: np.ndarray, keep: int) -> np.ndarray:
    """Candidate indices ordered by (energy, sorted chunk ranks, word value); first ``keep``."""
    ranks = np.sort(chunk_ranks, axis=1)
    n = numerators.shape[0]
    keys = [np.arange(n)] + [ranks[:, j] for j in range(ranks.shape[1] - 1, -1, -1)] + [numerators]
    order = np.lexsort(keys)
    return order[:keep]


def _candidate_numerators(unit: Sequence[int], n_chunks: int, width: int):
    """Sum of ``unit`` values over the chunks of every ``n_chunks*width``-bit word."""
    unit_arr = np.array([int(x) for x in unit], dtype=object)
    bound = max(abs(int(x)) for x in unit) * n_chunks
    dtype = np.int64 if bound < _INT64_SAFE else object
    unit_arr = unit_arr.astype(dtype)
    words = np.arange(1 << (n_chunks * width), dtype=np.int64)
    chunks = _split_chunks(words, n_chunks, width)
    total = unit_arr[chunks].sum(axis=1)
    return total, chunks


def build_tables(spec: HidmTreeSpec, labeling: AmplitudeLabeling | None = None) -> list[LayerTable]:
    """Energy-sorted LUT contents for every layer, bottom-up."""
    spec.validate()
    if labeling is None:
        labeling = labeling_from_ident(spec.labeling_id)
    elif labeling.ident != spec.labeling_id:
        raise TreeSpecError(f"labeling {labeling.ident} does not match spec {spec.labeling_id}")
    if not spec.layers:
        return []
    k = spec.shaped_per_symbol
    energies = class_energies(labeling, spec.shaped_levels)
    den0 = math.lcm(*(e.denominator for e in energies))
    unit = [int(e * den0) for e in energies]
    # class rank: position in (energy, pattern) order
    order = sorted(range(len(energies)), key=lambda p: (energies[p], p))
    rank = np.empty(len(order), dtype=np.int64)
    rank[order] = np.arange(len(order))

    tables: list[LayerTable] = []
    first = spec.layers[0]
    n_sym = first.u // k
    num, chunks = _candidate_numerators(unit, n_sym, k)
    den = den0 * n_sym
    chosen = _select(num, rank[chunks], 1 << first.v)
    tables.append(LayerTable(chosen.astype(np.int64), tuple(Fraction(int(x), den) for x in num[chosen])))
    prev_num, prev_layer = num[chosen], first

    for layer in spec.layers[1:]:
        regions = prev_num.reshape(1 << prev_layer.r, 1 << prev_layer.s).sum(axis=1)
        num, chunks = _candidate_numerators(list(regions), prev_layer.t, prev_layer.r)
        den = den * (1 << prev_layer.s) * prev_layer.t
        chosen = _select(num, chunks, 1 << layer.v)
        tables.append(LayerTable(chosen.astype(np.int64), tuple(Fraction(int(x), den) for x in num[chosen])))
        prev_num, prev_layer = num[chosen], layer
    return tables


def _nearest_inverse(words: np.ndarray, u: int) -> np.ndarray:
    """Map every u-bit word to the index of the nearest table word (Hamming), ties to lowest index."""
    size = 1 << u
    inv = np.full(size, -1, dtype=np.int64)
    inv[words] = np.arange(len(words))
    frontier = inv >= 0
    while not frontier.all():
        best = np.full(size, np.iinfo(np.int64).max, dtype=np.int64)
        idx = np.arange(size)
        for bit in range(u):
            nb = idx ^ (1 << bit)
            cand = np.where(frontier[nb], inv[nb], np.iinfo(np.int64).max)
            np.minimum(best, cand, out=best)
        newly = (~frontier) & (best < np.iinfo(np.int64).max)
        # an unassigned word can only see neighbours from the previous round
        inv[newly] = best[newly]
        frontier = frontier | newly
    return inv


@dataclass(frozen=True)
class HidmCodec:
    """Fixed-length DM/invDM pair defined by a tree spec and its tables."""

    spec: HidmTreeSpec
    tables: tuple[LayerTable, ...]
    labeling: AmplitudeLabeling = field(compare=False)

    @classmethod
    def from_tables(cls, spec: HidmTreeSpec, tables: Sequence[LayerTable]) -> "HidmCodec":
        spec.validate()
        if len(tables) != spec.num_layers:
            raise TreeSpecError("one table per layer required")
        for idx, (layer, tab) in enumerate(zip(spec.layers, tables), start=1):
            if len(tab.words) != 1 << layer.v:
                raise TreeSpecError(f"layer {idx}: expected {1 << layer.v} entries, got {len(tab.words)}")
            if len(set(int(w) for w in tab.words)) != len(tab.words):
                raise TreeSpecError(f"layer {idx}: duplicate output words")
            if int(np.max(tab.words)) >= 1 << layer.u:
                raise TreeSpecError(f"layer {idx}: word wider than u = {layer.u}")
        return cls(spec, tuple(tables), labeling_from_ident(spec.labeling_id))

    @property
    def input_bits(self) -> int:
        return self.spec.input_bits

    @property
    def output_bits(self) -> int:
        return self.spec.output_bits

    @cached_property
    def _inverse(self) -> tuple[np.ndarray, ...]:
        return tuple(_nearest_inverse(tab.words, layer.u) for tab, layer in zip(self.tables, self.spec.layers))

    @cached_property
    def _fresh_slices(self) -> list[tuple[int, int]]:
        """(offset, T*s) of each layer's fresh bits in the input word; top layer first."""
        out = [None] * self.spec.num_layers
        pos = 0
        for i in range(self.spec.num_layers - 1, -1, -1):
            n = self.spec.lut_counts[i] * self.spec.layers[i].s
            out[i] = (pos, n)
            pos += n
        return out

    def _fresh_values(self, bits: np.ndarray, i: int) -> np.ndarray:
        layer = self.spec.layers[i]
        T = self.spec.lut_counts[i]
        off, n = self._fresh_slices[i]
        if layer.s == 0:
            return np.zeros((bits.shape[0], T), dtype=np.int64)
        chunk = bits[:, off:off + n].reshape(bits.shape[0], T, layer.s).astype(np.int64)
        return _join_chunks(chunk, 1)

    def match(self, info_bits) -> np.ndarray:
        """Map N_u^sb uniform bits (or a batch of rows) to T_1 u_1 shaped bits."""
        bits = np.asarray(info_bits, dtype=np.uint8)
        single = bits.ndim == 1
        bits = np.atleast_2d(bits)
        if bits.shape[1] != self.input_bits:
            raise ValueError(f"expected {self.input_bits} input bits, got {bits.shape[1]}")
        spec = self.spec
        if not spec.layers:
            return bits[0].copy() if single else bits.copy()
        top = spec.num_layers - 1
        words = self.tables[top].words[self._fresh_values(bits, top)]
        for i in range(top - 1, -1, -1):
            layer = spec.layers[i]
            constraint = _split_chunks(words, layer.t, layer.r).reshape(bits.shape[0], -1)
            addr = (constraint << layer.s) | self._fresh_values(bits, i)
            words = self.tables[i].words[addr]
        out = _split_chunks(words, spec.layers[0].u, 1).reshape(bits.shape[0], -1).astype(np.uint8)
        return out[0] if single else out

    def dematch(self, shaped_bits) -> np.ndarray:
        """Inverse of :meth:`match`; never fails on words outside the code set."""
        bits = np.asarray(shaped_bits, dtype=np.uint8)
        single = bits.ndim == 1
        bits = np.atleast_2d(bits)
        if bits.shape[1] != self.output_bits:
            raise ValueError(f"expected {self.output_bits} shaped bits, got {bits.shape[1]}")
        spec = self.spec
        if not spec.layers:
            return bits[0].copy() if single else bits.copy()
        n = bits.shape[0]
        out = np.zeros((n, self.input_bits), dtype=np.uint8)
        u1 = spec.layers[0].u
        words = _join_chunks(bits.reshape(n, -1, u1), 1)
        for i, layer in enumerate(spec.layers):
            idx = self._inverse[i][words]
            fresh = idx & ((1 << layer.s) - 1)
            off, cnt = self._fresh_slices[i]
            if layer.s:
                out[:, off:off + cnt] = _split_chunks(fresh, layer.s, 1).reshape(n, -1)
            if i + 1 < spec.num_layers:
                constraint = (idx >> layer.s).reshape(n, -1, layer.t)
                words = _join_chunks(constraint, layer.r)
        return out[0] if single else out

    def class_distribution(self) -> tuple[Fraction, ...]:
        """Exact probability of each shaped-bit class over uniformly random inputs."""
        k = self.spec.shaped_per_symbol
        n_classes = 1 << k
        first = self.spec.layers[0]
        chunks = _split_chunks(self.tables[0].words, first.u // k, k)
        hist = np.zeros((len(chunks), n_classes), dtype=object)
        for c in range(n_classes):
            hist[:, c] = [Fraction(int(x), first.u // k) for x in (chunks == c).sum(axis=1)]
        prev, prev_layer = hist, first
        for i, layer in enumerate(self.spec.layers[1:], start=1):
            regions = prev.reshape(1 << prev_layer.r, 1 << prev_layer.s, n_classes).sum(axis=1) / (1 << prev_layer.s)
            parts = _split_chunks(self.tables[i].words, prev_layer.t, prev_layer.r)
            prev = regions[parts].sum(axis=1) / prev_layer.t
            prev_layer = layer
        return tuple(Fraction(x) for x in prev.sum(axis=0) / prev.shape[0])

    def amplitude_pmf(self) -> Pmf:
        """Exact one-sided amplitude PMF, unshaped levels uniform."""
        classes = shaped_classes(self.labeling, self.spec.shaped_levels)
        dist = self.class_distribution()
        probs = [Fraction(0)] * (1 << self.labeling.bits_per_amplitude)
        for members, p in zip(classes, dist):
            for idx in members:
                probs[idx] = p / len(members)
        return Pmf(tuple(probs))

    def expected_energy(self) -> Fraction:
        """Mean 1D symbol energy, equal to the average of the top-layer table."""
        top = self.tables[-1].energies
        return sum(top, Fraction(0)) / len(top)


def build_tree(spec: HidmTreeSpec, labeling: AmplitudeLabeling | None = None) -> HidmCodec:
    return HidmCodec.from_tables(spec, build_tables(spec, labeling))


def match(codec, info_bits):
    return codec.match(info_bits)


def dematch(codec, shaped_bits):
    return codec.dematch(shaped_bits)
