"""Error-insertion tests and closed-form post-dematcher error bounds.

The bounds assume the single-error condition: each DM word that is hit at
all is hit by exactly one shaped-bit error. That is the regime of low
post-FEC BER, and it maximizes the post-dematcher error ratio.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, NamedTuple

import numpy as np

from .ccdm import CcdmCodec
from .hidm import HidmCodec

OTUC_BLOCK_BITS = 130560


@dataclass(frozen=True)
class SingleErrorParams:
    """alpha: dematcher output errors per single shaped-bit error.
    theta: client blocks hit by one FEC codeword error, on the shaped part."""

    alpha: float
    theta: float
    gamma_in: float
    gamma_out: float

    def __post_init__(self):
        if self.alpha < 0 or self.theta < 0:
            raise ValueError("alpha and theta must be non-negative")
        for g in (self.gamma_in, self.gamma_out):
            if not 0 <= g <= 1:
                raise ValueError(f"fraction {g} outside [0, 1]")


@dataclass(frozen=True)
class FrameGeometry:
    """Per-DM-word bookkeeping of a PAS frame.

    ``dm_input_bits`` is N_u^sb, ``total_input_bits`` N_u (shaped plus the
    uniform payload riding along), ``shaped_bits_per_qam`` m^sb.
    """

    dm_input_bits: float
    total_input_bits: float
    shaped_bits_per_qam: int
    code_rate: float
    bits_per_qam: int
    dm_word_pam_len: int

    @classmethod
    def pas(cls, dm_input_bits: float, dm_word_pam_len: int, code_rate: float = 5 / 6,
            bits_per_qam: int = 8, shaped_bits_per_qam: int = 4) -> "FrameGeometry":
        unshaped = (code_rate * bits_per_qam - shaped_bits_per_qam) * dm_word_pam_len / 2
        return cls(dm_input_bits, dm_input_bits + unshaped, shaped_bits_per_qam, code_rate,
                   bits_per_qam, dm_word_pam_len)

    @classmethod
    def bicm(cls, code_rate: float = 5 / 6, bits_per_qam: int = 7) -> "FrameGeometry":
        return cls(0, code_rate * bits_per_qam, 0, code_rate, bits_per_qam, 2)

    @property
    def shaped_output_bits(self) -> float:
        return self.shaped_bits_per_qam * self.dm_word_pam_len / 2

    @property
    def rate_factor(self) -> float:
        """N_u / (R_c m N_s / 2): payload efficiency, below 1 when shaping spends redundancy."""
        return self.total_input_bits / (self.code_rate * self.bits_per_qam * self.dm_word_pam_len / 2)


def compute_gammas(geometry: FrameGeometry) -> tuple[float, float]:
    """(gamma_in, gamma_out) = (N_u^sb / N_u, m^sb / (R_c m))."""
    return (geometry.dm_input_bits / geometry.total_input_bits,
            geometry.shaped_bits_per_qam / (geometry.code_rate * geometry.bits_per_qam))


# ------------------------------------------------------------- insertion

class InsertionResult(NamedTuple):
    ber: float
    alpha: float
    trials: int


def _codec_functions(codec) -> tuple[int, int, Callable, Callable]:
    if isinstance(codec, CcdmCodec):
        return codec.input_bits, codec.output_bits, codec.match_bits, codec.dematch_bits
    if isinstance(codec, HidmCodec):
        return codec.input_bits, codec.output_bits, codec.match, codec.dematch
    raise TypeError(f"unsupported codec {type(codec).__name__}")


def error_insertion_test(codec, n_errors: int, trials: int, rng: np.random.Generator) -> InsertionResult:
    """Flip ``n_errors`` distinct random shaped bits per word and count dematcher errors."""
    n_in, n_out, enc, dec = _codec_functions(codec)
    if not 1 <= n_errors <= n_out:
        raise ValueError(f"n_errors must be in 1..{n_out}")
    if trials < 1:
        raise ValueError("need at least one trial")
    batch = isinstance(codec, HidmCodec)
    info = rng.integers(0, 2, size=(trials, n_in), dtype=np.uint8)
    flips = np.argsort(rng.random((trials, n_out)), axis=1)[:, :n_errors]
    if batch:
        words = enc(info)
        np.put_along_axis(words, flips, 1 - np.take_along_axis(words, flips, axis=1), axis=1)
        errs = (dec(words) != info).sum(axis=1)
    else:
        errs = np.empty(trials, dtype=np.int64)
        for t in range(trials):
            w = enc(info[t]).copy()
            w[flips[t]] ^= 1
            errs[t] = np.count_nonzero(dec(w) != info[t])
    alpha = float(errs.mean())
    return InsertionResult(alpha / n_in, alpha, trials)


def exhaustive_single_error(codec: HidmCodec) -> Fraction:
    """Exact alpha over every input word and every single shaped-bit position."""
    n_in, n_out, enc, dec = _codec_functions(codec)
    info = ((np.arange(1 << n_in)[:, None] >> np.arange(n_in - 1, -1, -1)) & 1).astype(np.uint8)
    words = enc(info)
    total = 0
    for pos in range(n_out):
        hit = words.copy()
        hit[:, pos] ^= 1
        total += int((dec(hit) != info).sum())
    return Fraction(total, (1 << n_in) * n_out)


# ---------------------------------------------------------------- bounds

class DmBound(NamedTuple):
    shaped: float
    total: float


def bound_post_invdm_ber(params: SingleErrorParams, geometry: FrameGeometry, post_fec_ber) -> DmBound:
    """Shaped-part and total post-dematcher BER under single errors per DM word."""
    e = np.asarray(post_fec_ber, dtype=np.float64)
    if geometry.dm_input_bits == 0:
        return DmBound(np.zeros_like(e)[()], e[()])
    sb = np.minimum(params.alpha * geometry.shaped_output_bits / geometry.dm_input_bits * e, 0.5)
    total = params.gamma_in * sb + (1 - params.gamma_in) * e
    return DmBound(sb[()], total[()])


def post_invdm_ratio(params: SingleErrorParams, geometry: FrameGeometry) -> float:
    """Linear-region slope of the total bound: r_E1 at the single-error limit."""
    if geometry.dm_input_bits == 0:
        return 1.0
    return (params.gamma_in * params.alpha * geometry.shaped_output_bits / geometry.dm_input_bits
            + 1 - params.gamma_in)


def required_post_fec_ber(params: SingleErrorParams, geometry: FrameGeometry, target: float) -> float:
    """Largest post-FEC BER whose total post-dematcher bound stays at ``target``."""
    if not 0 < target < 0.5:
        raise ValueError("target must be in (0, 1/2)")
    lo, hi = 0.0, 0.5
    if bound_post_invdm_ber(params, geometry, hi).total <= target:
        return hi
    guess = target / post_invdm_ratio(params, geometry)
    if bound_post_invdm_ber(params, geometry, guess).total == target:
        return guess
    # the bound is piecewise linear; bisection settles the clamped region too
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if bound_post_invdm_ber(params, geometry, mid).total <= target:
            lo = mid
        else:
            hi = mid
    return lo


class BlockBound(NamedTuple):
    bber: float
    fec_fer: float


def bound_bber(params: SingleErrorParams, geometry: FrameGeometry, post_fec_ber, n_block: int,
               k: int) -> BlockBound:
    """FER <= k E and BBER <= N_block (gamma_out theta + 1 - gamma_out) FER / (k rate_factor)."""
    e = np.asarray(post_fec_ber, dtype=np.float64)
    fer = np.minimum(k * e, 1.0)
    spread = params.gamma_out * params.theta + 1 - params.gamma_out
    bber = np.minimum(n_block * spread / (k * geometry.rate_factor) * fer, 1.0)
    return BlockBound(bber[()], fer[()])


class ErrorRatios(NamedTuple):
    r_e1: float | None
    r_e2: float | None


def error_ratios(post_fec_ber: float, post_invdm_ber: float | None, bber: float) -> ErrorRatios:
    """r_E1 = post-invDM / post-FEC BER, r_E2 = BBER / post-invDM BER.

    Without a dematcher (``post_invdm_ber is None``) r_E1 is absent and r_E2
    uses the post-FEC BER. Ratios with a zero denominator are absent.
    """
    if post_invdm_ber is None:
        return ErrorRatios(None, bber / post_fec_ber if post_fec_ber > 0 else None)
    r1 = post_invdm_ber / post_fec_ber if post_fec_ber > 0 else None
    r2 = bber / post_invdm_ber if post_invdm_ber > 0 else None
    return ErrorRatios(r1, r2)


def bber_bound_ratio(a: SingleErrorParams, b: SingleErrorParams) -> float:
    """Ratio of two BBER bounds at equal post-FEC BER and geometry."""
    return ((a.gamma_out * a.theta + 1 - a.gamma_out)
            / (b.gamma_out * b.theta + 1 - b.gamma_out))


# Single-error parameters of the reference 256-QAM and 128-QAM links.
REFERENCE_FRAME = FrameGeometry.pas(1014, 640)
_G_IN, _G_OUT = compute_gammas(REFERENCE_FRAME)
REFERENCE_PARAMS = {
    "ccdm": SingleErrorParams(alpha=507, theta=32, gamma_in=_G_IN, gamma_out=_G_OUT),
    "hidm": SingleErrorParams(alpha=13.4, theta=2, gamma_in=_G_IN, gamma_out=_G_OUT),
    "bicm": SingleErrorParams(alpha=0, theta=1, gamma_in=0, gamma_out=0),
}


def log_interp_crossing(x, y, level: float) -> float | None:
    """First x where y (log-interpolated, decreasing) crosses ``level``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    for i in range(len(x) - 1):
        y0, y1 = y[i], y[i + 1]
        if y0 >= level > y1:
            if y1 <= 0:
                return float(x[i + 1])
            f = (math.log(y0) - math.log(level)) / (math.log(y0) - math.log(y1))
            return float(x[i] + f * (x[i + 1] - x[i]))
    return None


def log_fit_crossing(x, y, level: float, weights=None, span: float = 10.0) -> float | None:
    """x where a weighted least-squares line through log10(y) reaches ``level``.

    Uses the points with ``level / span <= y <= level * span``; ``weights``
    (e.g. frame-error counts) default to one. Needs two distinct x values.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=np.float64)
    keep = (y > 0) & (y >= level / span) & (y <= level * span) & (w > 0)
    if len(np.unique(x[keep])) < 2:
        return None
    slope, icept = np.polyfit(x[keep], np.log10(y[keep]), 1, w=np.sqrt(w[keep]))
    if slope >= 0:
        return None
    return float((math.log10(level) - icept) / slope)
