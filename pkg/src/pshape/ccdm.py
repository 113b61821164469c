"""Constant-composition distribution matching by multinomial ranking.

Every output word is an arrangement of a fixed multiset of amplitude classes.
The matcher reads its input bits as a big integer and returns the arrangement
with that lexicographic rank; the dematcher computes the rank back. This is
arithmetic coding with exact arithmetic: same code set, same number of input
bits, no precision bookkeeping.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .constellation import Pmf


class InfeasibleComposition(ValueError):
    pass


@dataclass(frozen=True)
class Composition:
    counts: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if any(c < 0 for c in self.counts) or not any(self.counts):
            raise ValueError(f"invalid composition {self.counts}")

    @property
    def word_len(self) -> int:
        return sum(self.counts)

    @property
    def num_classes(self) -> int:
        return len(self.counts)

    def pmf(self) -> Pmf:
        return Pmf.from_counts(self.counts)


def multinomial(counts: Sequence[int]) -> int:
    out, total = 1, 0
    for c in counts:
        total += c
        out *= math.comb(total, c)
    return out


def num_input_bits(composition: Composition) -> int:
    """floor(log2 M) for M the number of arrangements, in exact integer arithmetic."""
    return multinomial(composition.counts).bit_length() - 1


def design_composition(target: Pmf | Sequence[float], word_len: int, *, input_bits: int | None = None,
                       class_energies: Sequence[float] | None = None,
                       max_radius: int = 4) -> Composition:
    """Round ``target * word_len`` to integer counts summing to ``word_len``.

    ``target`` may be a PMF or any non-negative weights (normalized here, so
    PMFs rounded to a few digits work as given). Candidates are the floor/ceil
    roundings of each class, widened by one per ring while none is feasible.
    Among them pick the lowest mean class energy that still carries
    ``input_bits``; remaining ties go to the rounding closest to the target,
    then to the lexicographically smallest count vector.
    """
    if word_len < 1:
        raise ValueError("word_len must be positive")
    weights = [float(p) for p in (target.probs if isinstance(target, Pmf) else target)]
    if not weights or min(weights) < 0 or sum(weights) <= 0:
        raise ValueError("target weights must be non-negative with a positive sum")
    k = len(weights)
    if class_energies is None:
        class_energies = list(range(k))
    ideal = [w / sum(weights) * word_len for w in weights]
    # products within 1e-9 of an integer count as exact
    lo = [round(x) if abs(x - round(x)) < 1e-9 else math.floor(x) for x in ideal]
    hi = [round(x) if abs(x - round(x)) < 1e-9 else math.ceil(x) for x in ideal]
    for radius in range(1, max_radius + 1):
        best = None
        choices = [range(max(a - radius + 1, 0), b + radius) for a, b in zip(lo, hi)]
        for counts in itertools.product(*choices):
            counts = list(counts)
            if sum(counts) != word_len:
                continue
            if input_bits is not None and num_input_bits(Composition(counts)) < input_bits:
                continue
            energy = Fraction(sum(c * Fraction(e) for c, e in zip(counts, class_energies)), word_len)
            dev = sum(abs(c - x) for c, x in zip(counts, ideal))
            key = (energy, dev, counts)
            if best is None or key < best:
                best = key
        if best is not None:
            return Composition(best[2])
    raise InfeasibleComposition(
        f"no composition of length {word_len} near the target carries {input_bits} bits")


def _bits_to_int(bits: np.ndarray) -> int:
    n = len(bits)
    if n == 0:
        return 0
    pad = (-n) % 8
    packed = np.packbits(np.concatenate([np.zeros(pad, np.uint8), bits.astype(np.uint8)]))
    return int.from_bytes(packed.tobytes(), "big")


def _int_to_bits(value: int, n: int) -> np.ndarray:
    if n == 0:
        return np.zeros(0, dtype=np.uint8)
    nbytes = (n + 7) // 8
    raw = np.frombuffer(value.to_bytes(nbytes, "big"), dtype=np.uint8)
    return np.unpackbits(raw)[nbytes * 8 - n:]


def unrank(index: int, counts: Sequence[int]) -> np.ndarray:
    """Arrangement of ``counts`` with lexicographic rank ``index``."""
    n = [int(c) for c in counts]
    rem = sum(n)
    total = multinomial(n)
    if not 0 <= index < total:
        raise ValueError("index out of range")
    out = np.empty(rem, dtype=np.int64)
    for pos in range(len(out)):
        for a, na in enumerate(n):
            if not na:
                continue
            block = total * na // rem
            if index < block:
                out[pos] = a
                total = block
                n[a] -= 1
                rem -= 1
                break
            index -= block
    return out


def rank(sequence: Sequence[int], counts: Sequence[int]) -> int:
    """Lexicographic rank of ``sequence`` among the arrangements of ``counts``."""
    n = [int(c) for c in counts]
    rem = sum(n)
    total = multinomial(n)
    r = 0
    for x in sequence:
        x = int(x)
        for a in range(x):
            if n[a]:
                r += total * n[a] // rem
        total = total * n[x] // rem
        n[x] -= 1
        rem -= 1
    return r


@dataclass(frozen=True)
class CcdmCodec:
    """CCDM over amplitude classes.

    ``class_patterns[c]`` gives the shaped bits (MSB first, ``bits_per_class``
    wide) that select class ``c`` on the channel.
    """

    composition: Composition
    input_bits: int
    class_patterns: tuple[int, ...] = (0b00, 0b01, 0b11, 0b10)
    bits_per_class: int = 2

    def __post_init__(self):
        avail = num_input_bits(self.composition)
        if not 0 <= self.input_bits <= avail:
            raise ValueError(f"composition carries at most {avail} bits, asked for {self.input_bits}")
        if len(self.class_patterns) != self.composition.num_classes:
            raise ValueError("one bit pattern per class required")

    @classmethod
    def from_composition(cls, composition: Composition, input_bits: int | None = None, **kw) -> "CcdmCodec":
        if input_bits is None:
            input_bits = num_input_bits(composition)
        return cls(composition, input_bits, **kw)

    @property
    def word_len(self) -> int:
        return self.composition.word_len

    @property
    def output_bits(self) -> int:
        return self.word_len * self.bits_per_class

    def match(self, info_bits) -> np.ndarray:
        bits = np.asarray(info_bits, dtype=np.uint8)
        if bits.shape != (self.input_bits,):
            raise ValueError(f"expected {self.input_bits} input bits, got shape {bits.shape}")
        return unrank(_bits_to_int(bits), self.composition.counts)

    def dematch(self, class_sequence) -> np.ndarray:
        """Rank the received word within its own composition.

        Corrupted words usually change the composition; ranking them against
        their own counts keeps the dematcher total. Ranks past the input range
        decode to all ones.
        """
        seq = np.asarray(class_sequence, dtype=np.int64)
        if seq.shape != (self.word_len,):
            raise ValueError(f"expected {self.word_len} symbols, got shape {seq.shape}")
        if seq.min() < 0 or seq.max() >= self.composition.num_classes:
            raise ValueError("class index out of range")
        counts = np.bincount(seq, minlength=self.composition.num_classes)
        r = rank(seq, counts)
        if r >= 1 << self.input_bits:
            return np.ones(self.input_bits, dtype=np.uint8)
        return _int_to_bits(r, self.input_bits)

    @property
    def _pattern_bits(self) -> np.ndarray:
        pats = np.asarray(self.class_patterns)
        return ((pats[:, None] >> np.arange(self.bits_per_class - 1, -1, -1)) & 1).astype(np.uint8)

    def classes_to_bits(self, seq) -> np.ndarray:
        return self._pattern_bits[np.asarray(seq)].reshape(-1)

    def bits_to_classes(self, bits) -> np.ndarray:
        inv = np.empty(1 << self.bits_per_class, dtype=np.int64)
        inv[list(self.class_patterns)] = np.arange(len(self.class_patterns))
        b = np.asarray(bits, dtype=np.int64).reshape(-1, self.bits_per_class)
        vals = (b << np.arange(self.bits_per_class - 1, -1, -1)).sum(axis=1)
        return inv[vals]

    def match_bits(self, info_bits) -> np.ndarray:
        """Info bits to the shaped-bit representation of the class word."""
        return self.classes_to_bits(self.match(info_bits))

    def dematch_bits(self, shaped_bits) -> np.ndarray:
        return self.dematch(self.bits_to_classes(shaped_bits))


def ccdm_match(codec: CcdmCodec, info_bits) -> np.ndarray:
    return codec.match(info_bits)


def ccdm_dematch(codec: CcdmCodec, class_sequence) -> np.ndarray:
    return codec.dematch(class_sequence)
