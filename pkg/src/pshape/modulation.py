"""Signal constellations, bit labels and matched soft demapping.

A PAM rail carries one sign bit (0 -> positive) followed by the amplitude
label bits. A square QAM symbol is two independent rails, in-phase first.
The 128-point cross constellation is handled as a genuine 2D set.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import logsumexp

from .constellation import AmplitudeLabeling, Pmf, build_reflected_gray_labeling

LLR_SATURATION = 1e3


@dataclass(frozen=True, eq=False)
class PointSet:
    """Finite constellation: ``points`` (K, d), labels (K, m) and priors (K,)."""

    points: np.ndarray
    labels: np.ndarray
    priors: np.ndarray

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def bits(self) -> int:
        return self.labels.shape[1]

    @property
    def energy(self) -> float:
        """Mean energy per symbol (sum over dimensions)."""
        return float(self.priors @ (self.points**2).sum(axis=1))

    @property
    def entropy(self) -> float:
        p = self.priors[self.priors > 0]
        return float(-(p * np.log2(p)).sum())

    @cached_property
    def label_index(self) -> np.ndarray:
        """Point index for each integer label value (MSB first)."""
        weights = 1 << np.arange(self.bits - 1, -1, -1)
        values = self.labels.astype(np.int64) @ weights
        inv = np.full(1 << self.bits, -1, dtype=np.int64)
        inv[values] = np.arange(len(values))
        return inv

    def map_bits(self, bits) -> np.ndarray:
        """(N, m) label bits -> (N, d) points."""
        b = np.asarray(bits, dtype=np.int64)
        weights = 1 << np.arange(self.bits - 1, -1, -1)
        idx = self.label_index[b @ weights]
        if np.any(idx < 0):
            raise ValueError("label not in constellation")
        return self.points[idx]

    def bit_llrs(self, received, noise_var: float) -> np.ndarray:
        """Exact a-posteriori L-values log P(b=0|y)/P(b=1|y), shape (N, m)."""
        y = np.atleast_2d(np.asarray(received, dtype=np.float64))
        if y.shape[1] != self.dim:
            y = y.reshape(-1, self.dim)
        if noise_var <= 0:
            d2 = ((y[:, None, :] - self.points[None]) ** 2).sum(axis=2)
            d2[:, self.priors == 0] = np.inf
            nearest = np.argmin(d2, axis=1)
            return LLR_SATURATION * (1 - 2 * self.labels[nearest].astype(np.float64))
        with np.errstate(divide="ignore"):
            logp = np.log(self.priors)
        out = np.empty((len(y), self.bits))
        for lo in range(0, len(y), 4096):
            chunk = y[lo:lo + 4096]
            d2 = ((chunk[:, None, :] - self.points[None]) ** 2).sum(axis=2)
            metric = logp[None] - d2 / (2 * noise_var)
            for i in range(self.bits):
                zero = self.labels[:, i] == 0
                out[lo:lo + 4096, i] = (logsumexp(metric[:, zero], axis=1)
                                        - logsumexp(metric[:, ~zero], axis=1))
        return np.clip(out, -LLR_SATURATION, LLR_SATURATION)


def pam_rail(labeling: AmplitudeLabeling, amplitude_pmf: Pmf | np.ndarray) -> PointSet:
    """Signed PAM rail. Label column 0 is the sign bit, the rest the amplitude label."""
    amps = labeling.alphabet.amplitudes.astype(np.float64)
    p = np.asarray(amplitude_pmf.as_array() if isinstance(amplitude_pmf, Pmf) else amplitude_pmf,
                   dtype=np.float64)
    if len(p) != len(amps):
        raise ValueError("PMF and alphabet sizes differ")
    amp_bits = labeling.bit_matrix().astype(np.uint8)
    pts, labs, pri = [], [], []
    for sign in (0, 1):
        pts.append((1 - 2 * sign) * amps)
        labs.append(np.concatenate([np.full((len(amps), 1), sign, np.uint8), amp_bits], axis=1))
        pri.append(p / 2)
    return PointSet(np.concatenate(pts)[:, None], np.concatenate(labs), np.concatenate(pri))


def cross_qam128() -> PointSet:
    """Uniform 128-point cross constellation with a Gray-like labeling.

    Start from a 16 x 8 Gray rectangle (I: sign + 3 amplitude bits, Q: sign +
    2 amplitude bits). The 32 points with |I| in {13, 15} move to the top and
    bottom arms: I' = Q and Q' = sign(I) (|I| - 4). Bits within the moved
    block keep their neighbour structure, so most nearest neighbours still
    differ in one bit.
    """
    gi = build_reflected_gray_labeling(3).bit_matrix()
    gq = build_reflected_gray_labeling(2).bit_matrix()
    pts, labs = [], []
    for si in (0, 1):
        for ai in range(8):
            for sq in (0, 1):
                for aq in range(4):
                    i = (1 - 2 * si) * (2 * ai + 1)
                    q = (1 - 2 * sq) * (2 * aq + 1)
                    if abs(i) > 11:
                        i, q = q, int(np.sign(i)) * (abs(i) - 4)
                    pts.append((i, q))
                    labs.append([si, *gi[ai], sq, *gq[aq]])
    points = np.array(pts, dtype=np.float64)
    if len({tuple(p) for p in pts}) != 128:
        raise AssertionError("cross construction produced duplicate points")
    return PointSet(points, np.array(labs, dtype=np.uint8), np.full(128, 1 / 128))


# ------------------------------------------------------------ quantization

@dataclass(frozen=True)
class UniformQuantizer:
    """Mid-rise uniform quantizer with ``2**bits`` levels spanning [-limit, limit]."""

    bits: int
    limit: float

    def __post_init__(self):
        if self.bits < 1 or not self.limit > 0:
            raise ValueError("quantizer needs bits >= 1 and a positive limit")

    @property
    def levels(self) -> int:
        return 1 << self.bits

    @property
    def step(self) -> float:
        return 2 * self.limit / self.levels

    @property
    def grid(self) -> np.ndarray:
        return -self.limit + self.step * (np.arange(self.levels) + 0.5)

    def index(self, x) -> np.ndarray:
        i = np.floor((np.asarray(x, dtype=np.float64) + self.limit) / self.step)
        return np.clip(i, 0, self.levels - 1).astype(np.int64)

    def __call__(self, x) -> np.ndarray:
        return self.grid[self.index(x)]


def llr_quantizer(bits: int = 4, step: float = 1.0) -> UniformQuantizer:
    """L-value quantizer with levels +-step/2, ..., saturating at the outer level."""
    return UniformQuantizer(bits, step * (1 << (bits - 1)))


@dataclass(frozen=True, eq=False)
class RailDemapper:
    """Quantized-input, quantized-output demapper for one PAM rail.

    With a ``input_bits``-bit receiver front end only ``2**input_bits``
    distinct received values exist per rail, so the exact matched L-values
    are tabulated once per noise level.
    """

    rail: PointSet
    noise_var: float
    input_bits: int = 7
    output_bits: int | None = 4

    @cached_property
    def input_quantizer(self) -> UniformQuantizer:
        amax = float(np.abs(self.rail.points).max())
        return UniformQuantizer(self.input_bits, amax + 4 * np.sqrt(max(self.noise_var, 0.0)))

    @cached_property
    def table(self) -> np.ndarray:
        llr = self.rail.bit_llrs(self.input_quantizer.grid[:, None], self.noise_var)
        if self.output_bits:
            llr = llr_quantizer(self.output_bits)(llr)
        return llr

    def __call__(self, received) -> np.ndarray:
        """(N,) received rail values -> (N, bits) L-values."""
        return self.table[self.input_quantizer.index(received)]


@dataclass(frozen=True, eq=False)
class PlaneDemapper:
    """Same idea for a 2D constellation: the table is indexed by the (I, Q) grid cell."""

    points: PointSet
    noise_var: float
    input_bits: int = 7
    output_bits: int | None = 4

    @cached_property
    def input_quantizer(self) -> UniformQuantizer:
        amax = float(np.abs(self.points.points).max())
        return UniformQuantizer(self.input_bits, amax + 4 * np.sqrt(max(self.noise_var, 0.0)))

    @cached_property
    def table(self) -> np.ndarray:
        g = self.input_quantizer.grid
        gi, gq = np.meshgrid(g, g, indexing="ij")
        llr = self.points.bit_llrs(np.stack([gi.ravel(), gq.ravel()], axis=1), self.noise_var)
        if self.output_bits:
            llr = llr_quantizer(self.output_bits)(llr)
        return llr

    def __call__(self, received) -> np.ndarray:
        y = np.asarray(received, dtype=np.float64).reshape(-1, 2)
        q = self.input_quantizer
        return self.table[q.index(y[:, 0]) * q.levels + q.index(y[:, 1])]


def noise_variance(energy_2d: float, snr_db: float) -> float:
    """Per-dimension noise variance for E_s/N_0 (per 2D symbol) in dB."""
    if not np.isfinite(snr_db):
        if snr_db > 0:
            return 0.0
        raise ValueError(f"non-finite SNR {snr_db}")
    return energy_2d / (2 * 10 ** (snr_db / 10))


def awgn(symbols, snr_db: float, energy_2d: float, rng: np.random.Generator) -> np.ndarray:
    """Add real Gaussian noise per dimension with variance E_2D / (2 SNR)."""
    x = np.asarray(symbols, dtype=np.float64)
    var = noise_variance(energy_2d, snr_db)
    if var == 0:
        return x.copy()
    return x + np.sqrt(var) * rng.standard_normal(x.shape)
