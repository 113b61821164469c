"""PAM amplitude alphabets, Gray labelings and amplitude PMFs.

Amplitudes are the odd integers 1, 3, ..., 2^b - 1 (minimum distance 2 on the
full PAM line). A labeling maps a ``b``-bit pattern, written MSB first, to one
of these amplitudes; the sign bit of a PAM symbol is handled separately.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

D_MIN = 2


@dataclass(frozen=True)
class AmplitudeAlphabet:
    """One-sided PAM amplitude set {1, 3, ..., 2^bits - 1}."""

    bits: int

    def __post_init__(self):
        if not 1 <= self.bits <= 7:
            raise ValueError(f"bits per amplitude must be in 1..7, got {self.bits}")

    @property
    def size(self) -> int:
        return 1 << self.bits

    @property
    def amplitudes(self) -> np.ndarray:
        return np.arange(1, 2 * self.size, 2)

    @property
    def max_amplitude(self) -> int:
        return 2 * self.size - 1


@dataclass(frozen=True)
class AmplitudeLabeling:
    """Bijection between bit patterns and amplitude indices.

    ``patterns[i]`` is the integer label (MSB first) of amplitude ``2*i + 1``.
    """

    bits_per_amplitude: int
    patterns: tuple[int, ...]

    def __post_init__(self):
        if sorted(self.patterns) != list(range(1 << self.bits_per_amplitude)):
            raise ValueError("labeling is not a bijection onto all bit patterns")

    @property
    def alphabet(self) -> AmplitudeAlphabet:
        return AmplitudeAlphabet(self.bits_per_amplitude)

    @property
    def index_of_pattern(self) -> np.ndarray:
        inv = np.empty(len(self.patterns), dtype=np.int64)
        inv[list(self.patterns)] = np.arange(len(self.patterns))
        return inv

    def amplitude(self, pattern: int | str) -> int:
        if isinstance(pattern, str):
            if len(pattern) != self.bits_per_amplitude:
                raise ValueError(f"expected {self.bits_per_amplitude}-bit pattern, got {pattern!r}")
            pattern = int(pattern, 2)
        return 2 * int(self.index_of_pattern[pattern]) + 1

    def pattern(self, amplitude: int) -> str:
        idx, rem = divmod(amplitude - 1, 2)
        if rem or not 0 <= idx < len(self.patterns):
            raise ValueError(f"{amplitude} is not in the alphabet")
        return format(self.patterns[idx], f"0{self.bits_per_amplitude}b")

    def bit_matrix(self) -> np.ndarray:
        """(2^b, b) array: row i holds the label bits of amplitude index i."""
        b = self.bits_per_amplitude
        pats = np.asarray(self.patterns)
        return (pats[:, None] >> np.arange(b - 1, -1, -1)) & 1

    @property
    def ident(self) -> str:
        return f"gray-{self.bits_per_amplitude}"


def build_reflected_gray_labeling(bits_per_amplitude: int) -> AmplitudeLabeling:
    """Binary reflected Gray code over increasing amplitudes.

    For 4 bits this is the 32-PAM absolute-amplitude table: 0000 -> 1,
    0001 -> 3, 0011 -> 5, 0010 -> 7, ..., 1000 -> 31.
    """
    if not 1 <= bits_per_amplitude <= 7:
        raise ValueError(f"bits_per_amplitude must be in 1..7, got {bits_per_amplitude}")
    n = 1 << bits_per_amplitude
    return AmplitudeLabeling(bits_per_amplitude, tuple(i ^ (i >> 1) for i in range(n)))


def labeling_from_ident(ident: str) -> AmplitudeLabeling:
    kind, _, width = ident.partition("-")
    if kind != "gray" or not width.isdigit():
        raise ValueError(f"unknown labeling id {ident!r}")
    return build_reflected_gray_labeling(int(width))


@dataclass(frozen=True)
class Pmf:
    """Probability mass function over an ordered amplitude (or class) alphabet.

    Entries may be :class:`fractions.Fraction` (exact) or floats.
    """

    probs: tuple

    def __post_init__(self):
        probs = tuple(self.probs)
        object.__setattr__(self, "probs", probs)
        if not probs:
            raise ValueError("empty PMF")
        if any(p < 0 for p in probs):
            raise ValueError("negative probability")
        total = sum(probs)
        if self.exact:
            if total != 1:
                raise ValueError(f"exact PMF sums to {total}, not 1")
        elif abs(float(total) - 1.0) > 1e-12:
            raise ValueError(f"PMF sums to {float(total)!r}")

    @property
    def exact(self) -> bool:
        return all(isinstance(p, (int, Fraction)) for p in self.probs)

    def __len__(self):
        return len(self.probs)

    def __getitem__(self, i):
        return self.probs[i]

    def as_array(self) -> np.ndarray:
        return np.array([float(p) for p in self.probs])

    @classmethod
    def from_counts(cls, counts: Sequence[int]) -> "Pmf":
        total = sum(counts)
        return cls(tuple(Fraction(c, total) for c in counts))

    @classmethod
    def uniform(cls, n: int) -> "Pmf":
        return cls(tuple(Fraction(1, n) for _ in range(n)))

    def expand_classes(self, class_size: int) -> "Pmf":
        """Split each class probability uniformly over ``class_size`` members."""
        if self.exact:
            return Pmf(tuple(Fraction(p) / class_size for p in self.probs for _ in range(class_size)))
        return Pmf(tuple(float(p) / class_size for p in self.probs for _ in range(class_size)))


def mb_pmf(lam: float, alphabet: AmplitudeAlphabet) -> Pmf:
    """Maxwell-Boltzmann PMF exp(-lam x^2)/Z over the one-sided amplitudes."""
    if not lam >= 0:
        raise ValueError(f"lambda must be non-negative, got {lam}")
    a = alphabet.amplitudes.astype(float)
    logw = -lam * a**2
    w = np.exp(logw - logw.max())
    p = w / w.sum()
    return Pmf(tuple(float(x) for x in p))


def pmf_energy(pmf: Pmf, alphabet: AmplitudeAlphabet | Sequence[float]):
    """Mean per-dimension symbol energy sum P(a) a^2 (exact for exact PMFs)."""
    amps = alphabet.amplitudes if isinstance(alphabet, AmplitudeAlphabet) else alphabet
    if len(amps) != len(pmf):
        raise ValueError("PMF and alphabet sizes differ")
    if pmf.exact:
        return sum(Fraction(p) * int(a) ** 2 for p, a in zip(pmf.probs, amps))
    return float(sum(float(p) * float(a) ** 2 for p, a in zip(pmf.probs, amps)))


def pmf_entropy(pmf: Pmf) -> float:
    """Entropy in bits of the PMF itself."""
    return -sum(float(p) * math.log2(float(p)) for p in pmf.probs if p > 0)


def entropy_1d(pmf: Pmf) -> float:
    """Entropy of a PAM symbol whose amplitude follows ``pmf`` and whose sign is uniform."""
    return pmf_entropy(pmf) + 1.0


def entropy_2d(pmf: Pmf) -> float:
    """QAM symbol entropy H(X) = 2 H(X_pam) for two independent PAM rails."""
    return 2.0 * entropy_1d(pmf)


def _bisect(f, lo: float, hi: float, tol: float) -> float:
    flo = f(lo)
    if flo == 0:
        return lo
    if flo * f(hi) > 0:
        raise ValueError("target not bracketed")
    while hi - lo > tol * max(1.0, abs(lo)):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def solve_mb_lambda(alphabet: AmplitudeAlphabet, *, entropy_2d_target: float | None = None,
                    energy_target: float | None = None, tol: float = 1e-10) -> float:
    """Find lambda so the MB PMF hits a 2D entropy (bits) or a 1D energy target.

    Exactly one target must be given.
    """
    if (entropy_2d_target is None) == (energy_target is None):
        raise ValueError("give exactly one of entropy_2d_target, energy_target")
    if entropy_2d_target is not None:
        def f(lam):
            return entropy_2d(mb_pmf(lam, alphabet)) - entropy_2d_target
    else:
        def f(lam):
            return pmf_energy(mb_pmf(lam, alphabet), alphabet) - energy_target
    # both targets decrease with lambda; grow the bracket until it closes
    hi = 1.0
    while f(hi) > 0 and hi < 1e6:
        hi *= 10
    return _bisect(f, 0.0, hi, tol)


def class_pmf(pmf: Pmf, class_size: int) -> Pmf:
    """Aggregate consecutive amplitudes into classes of ``class_size``."""
    if len(pmf) % class_size:
        raise ValueError("alphabet size not divisible by class size")
    probs = [sum(pmf.probs[i:i + class_size]) for i in range(0, len(pmf), class_size)]
    if not pmf.exact:
        probs = [float(p) for p in probs]
        s = sum(probs)
        probs = [p / s for p in probs]
    return Pmf(tuple(probs))
