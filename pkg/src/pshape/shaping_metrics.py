"""Rates and figures of merit for shaped signaling.

All rates are per 2D (QAM) symbol unless a name says ``_1d``. L-value
estimators take struct-of-arrays samples: ``bits`` and ``llrs`` of shape
(N, m), one row per QAM symbol and one column per bit level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .constellation import AmplitudeLabeling, Pmf, entropy_2d
from .modulation import pam_rail

D_MIN = 2.0


@dataclass(frozen=True)
class ShapingRates:
    entropy_2d: float
    code_rate: float
    bits_per_qam: int
    dm_input_bits: float
    dm_word_pam_len: int

    def __post_init__(self):
        if not 0 < self.code_rate <= 1:
            raise ValueError(f"code rate must be in (0, 1], got {self.code_rate}")
        if self.dm_word_pam_len <= 0 or self.dm_word_pam_len % 2:
            raise ValueError("DM word length in PAM symbols must be positive and even")
        if self.dm_input_bits < 0:
            raise ValueError("negative DM input bits")
        cap = self.code_rate * self.bits_per_qam * self.dm_word_pam_len / 2
        if self.dm_input_bits > cap + 1:
            raise ValueError(f"{self.dm_input_bits} input bits exceed the payload capacity {cap:g}")


def unshaped_bits_per_word(code_rate: float, bits_per_qam: int, shaped_bits_per_qam: int,
                           dm_word_pam_len: int) -> float:
    """Uniform payload bits that ride along one DM word: (R_c m - shaped) N_s/2."""
    return (code_rate * bits_per_qam - shaped_bits_per_qam) * dm_word_pam_len / 2


def information_rate(rates: ShapingRates) -> float:
    """N_u / (N_s / 2) in bits per QAM symbol."""
    r = rates.dm_input_bits / (rates.dm_word_pam_len / 2)
    ceiling = rates.entropy_2d - (1 - rates.code_rate) * rates.bits_per_qam
    if r > ceiling + 1e-9:
        raise ValueError(f"rate {r:.6f} exceeds H(X) - (1 - R_c) m = {ceiling:.6f}")
    return r


def rate_loss(rates: ShapingRates) -> float:
    loss = rates.entropy_2d - (1 - rates.code_rate) * rates.bits_per_qam - information_rate(rates)
    if loss < -1e-9:
        raise ValueError(f"negative rate loss {loss}")
    return max(loss, 0.0)


def rate_loss_1d(rates: ShapingRates) -> float:
    return rate_loss(rates) / 2


def constellation_gain(beta: float, energy_2d: float, d_min: float = D_MIN) -> float:
    """10 log10(d^2 (2^beta - 1) / (6 E)) in dB; 0 dB for uniform square 2^beta-QAM."""
    if energy_2d <= 0:
        raise ValueError("energy must be positive")
    return 10 * math.log10(d_min**2 * (2**beta - 1) / (6 * energy_2d))


# --------------------------------------------------------------- AIR (BMD)

class Estimate(NamedTuple):
    value: float
    stderr: float


def _rail(pmf: Pmf, labeling: AmplitudeLabeling):
    rail = pam_rail(labeling, pmf)
    return rail, rail.points[:, 0], rail.labels


def _posterior_weights(y, points, labels, priors, sigma2):
    """Unnormalized posteriors P(x) exp(-(y - x)^2 / 2 sigma^2), row-scaled for stability."""
    with np.errstate(divide="ignore"):
        logp = np.log(priors)
    metric = logp[None] - (y[:, None] - points[None]) ** 2 / (2 * sigma2)
    mx = metric.max(axis=1, keepdims=True)
    w = np.exp(metric - mx)
    return w


def air_bmd(pmf: Pmf, labeling: AmplitudeLabeling, snr_db: float, n_samples: int = 200_000,
            rng: np.random.Generator | None = None) -> Estimate:
    """Monte-Carlo BMD rate H(X) - sum_i H(B_i | Y) per 2D over AWGN.

    The two rails are independent, so the 2D value is twice the rail value.
    """
    if np.isnan(snr_db) or snr_db == -np.inf:
        raise ValueError(f"non-finite SNR {snr_db}")
    rail, pts, labels = _rail(pmf, labeling)
    h2 = entropy_2d(pmf)
    if snr_db == np.inf:
        return Estimate(h2, 0.0)
    sigma2 = rail.energy * 2 / (2 * 10 ** (snr_db / 10))
    rng = rng or np.random.default_rng()
    idx = rng.choice(len(pts), size=n_samples, p=rail.priors)
    y = pts[idx] + math.sqrt(sigma2) * rng.standard_normal(n_samples)
    cond = _cond_entropy_terms(y, idx, pts, labels, rail.priors, sigma2)
    vals = h2 - 2 * cond
    return Estimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_samples)))


def _cond_entropy_terms(y, idx, pts, labels, priors, sigma2):
    """Per-sample sum_i -log2 P(b_i = true bit | y)."""
    out = np.zeros(len(y))
    for lo in range(0, len(y), 8192):
        yy, ii = y[lo:lo + 8192], idx[lo:lo + 8192]
        w = _posterior_weights(yy, pts, labels, priors, sigma2)
        total = w.sum(axis=1)
        acc = np.zeros(len(yy))
        for b in range(labels.shape[1]):
            same = labels[None, :, b] == labels[ii][:, b][:, None]
            acc -= np.log2((w * same).sum(axis=1) / total)
        out[lo:lo + 8192] = acc
    return out


def air_bmd_quadrature(pmf: Pmf, labeling: AmplitudeLabeling, snr_db: float, order: int = 80) -> float:
    """Deterministic Gauss-Hermite evaluation of the same expectation (test oracle)."""
    rail, pts, labels = _rail(pmf, labeling)
    sigma2 = rail.energy * 2 / (2 * 10 ** (snr_db / 10))
    t, w = np.polynomial.hermite.hermgauss(order)
    total = 0.0
    for k, px in enumerate(rail.priors):
        if px == 0:
            continue
        y = pts[k] + math.sqrt(2 * sigma2) * t
        terms = _cond_entropy_terms(y, np.full(len(y), k), pts, labels, rail.priors, sigma2)
        total += px * float(w @ terms) / math.sqrt(math.pi)
    return entropy_2d(pmf) - 2 * total


# ---------------------------------------------------- L-value estimators

def asymmetric_llrs(bits, llrs) -> np.ndarray:
    """L_a = (-1)^B L: positive when the L-value points the right way."""
    b = np.asarray(bits)
    return np.where(b == 0, 1.0, -1.0) * np.asarray(llrs, dtype=np.float64)


def _softplus_neg_log2(la: np.ndarray) -> np.ndarray:
    # log2(1 + exp(-la)), stable for large |la| and exact 0 for la = +inf
    return np.logaddexp(0.0, -la) / math.log(2)


def estimate_ngmi(bits, llrs, m: int | None = None) -> Estimate:
    """NGMI = 1 - sum_i E[log2(1 + exp(-L_a,i))] / m from matched L-values.

    Equivalent to 1 - (H(X) - GMI)/m with GMI = H(X) - sum_i E[...].
    """
    la = np.atleast_2d(asymmetric_llrs(bits, llrs))
    if la.size == 0:
        raise ValueError("empty sample set")
    m = m or la.shape[1]
    per_symbol = _softplus_neg_log2(la).sum(axis=1) / m
    n = len(per_symbol)
    se = float(per_symbol.std(ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
    return Estimate(1.0 - float(per_symbol.mean()), se)


def estimate_gmi(bits, llrs, entropy_2d_bits: float) -> Estimate:
    la = np.atleast_2d(asymmetric_llrs(bits, llrs))
    m = la.shape[1]
    ngmi = estimate_ngmi(bits, llrs, m)
    return Estimate(entropy_2d_bits - m * (1 - ngmi.value), m * ngmi.stderr)


def _binary_cond_entropy(cells: np.ndarray, neg_weight: np.ndarray, n_cells: int,
                         bias_correction: bool) -> float:
    """H(S | cell) for a binary S, with S = 1 weighted by ``neg_weight`` in [0, 1]."""
    n = len(cells)
    cnt = np.bincount(cells, minlength=n_cells).astype(np.float64)
    neg = np.bincount(cells, weights=neg_weight, minlength=n_cells)
    pos = cnt - neg
    h = 0.0
    for c, a, b in zip(cnt, neg, pos):
        if c == 0:
            continue
        for x in (a, b):
            if x > 0:
                h -= x / n * math.log2(x / c)
    if bias_correction:
        joint = np.count_nonzero(neg > 0) + np.count_nonzero(pos > 0)
        marg = np.count_nonzero(cnt)
        h += (joint - marg) / (2 * n * math.log(2))
    return h


def estimate_asi(bits, llrs, n_bins: int = 64) -> float:
    """ASI = 1 - mean_i h(sign L_a,i | |L_a,i|).

    If a level's L-values take at most ``n_bins`` magnitudes (the 4-bit
    receiver output does) the conditional entropy is the exact empirical
    one over that alphabet. Otherwise |L| is split into ``n_bins`` equal-count
    bins by rank (scale free) and a Miller-Madow correction is applied.
    L_a = 0 counts as half right, half wrong.
    """
    la = np.atleast_2d(asymmetric_llrs(bits, llrs))
    if la.size == 0:
        raise ValueError("empty sample set")
    n, m = la.shape
    hs = []
    for i in range(m):
        col = la[:, i]
        mag = np.abs(col)
        neg_weight = np.where(col < 0, 1.0, np.where(col == 0, 0.5, 0.0))
        uniq, inv = np.unique(mag, return_inverse=True)
        if len(uniq) <= n_bins:
            hs.append(_binary_cond_entropy(inv, neg_weight, len(uniq), False))
        else:
            below = np.concatenate([[0], np.cumsum(np.bincount(inv))[:-1]])
            cells = np.minimum(below[inv] * n_bins // n, n_bins - 1)
            hs.append(_binary_cond_entropy(cells, neg_weight, n_bins, True))
    return float(np.clip(1.0 - np.mean(hs), 0.0, 1.0))


class LlrHistogram:
    """Counts of (bit level, quantized L-value, transmitted bit).

    Histograms over the same alphabet add, so partial results from parallel
    workers merge in any order. NGMI and ASI follow exactly from the counts.
    """

    def __init__(self, alphabet, m: int, counts: np.ndarray | None = None):
        self.alphabet = np.asarray(alphabet, dtype=np.float64)
        self.m = m
        shape = (m, len(self.alphabet), 2)
        self.counts = np.zeros(shape, dtype=np.int64) if counts is None else counts
        if self.counts.shape != shape:
            raise ValueError("counts do not match alphabet and level count")

    def add(self, bits, llrs) -> None:
        b = np.asarray(bits, dtype=np.int64).reshape(-1, self.m)
        x = np.asarray(llrs, dtype=np.float64).reshape(-1, self.m)
        idx = np.searchsorted(self.alphabet, x)
        if np.any(idx >= len(self.alphabet)) or np.any(self.alphabet[np.minimum(idx, len(self.alphabet) - 1)] != x):
            raise ValueError("L-value outside the histogram alphabet")
        flat = (np.arange(self.m)[None] * len(self.alphabet) + idx) * 2 + b
        self.counts += np.bincount(flat.ravel(), minlength=self.counts.size).reshape(self.counts.shape)

    def __add__(self, other: "LlrHistogram") -> "LlrHistogram":
        if other.m != self.m or not np.array_equal(other.alphabet, self.alphabet):
            raise ValueError("incompatible histograms")
        return LlrHistogram(self.alphabet, self.m, self.counts + other.counts)

    @property
    def samples(self) -> int:
        return int(self.counts[0].sum())

    def ngmi(self) -> float:
        n = self.samples
        if n == 0:
            return float("nan")
        la = np.stack([self.alphabet, -self.alphabet], axis=1)  # L_a for bit 0 and bit 1
        return 1.0 - float((self.counts * _softplus_neg_log2(la)[None]).sum()) / (n * self.m)

    def asi(self) -> float:
        n = self.samples
        if n == 0:
            return float("nan")
        mags = np.abs(self.alphabet)
        uniq, cell = np.unique(mags, return_inverse=True)
        hs = []
        for i in range(self.m):
            c = self.counts[i]
            # L_a < 0 when L < 0 with bit 0 or L > 0 with bit 1
            wrong = np.where(self.alphabet < 0, c[:, 0], 0) + np.where(self.alphabet > 0, c[:, 1], 0)
            zero = np.where(self.alphabet == 0, c.sum(axis=1), 0)
            neg = np.bincount(cell, weights=wrong + 0.5 * zero, minlength=len(uniq))
            tot = np.bincount(cell, weights=c.sum(axis=1), minlength=len(uniq))
            h = 0.0
            for t, a in zip(tot, neg):
                for x in (a, t - a):
                    if x > 0:
                        h -= x / n * math.log2(x / t)
            hs.append(h)
        return float(np.clip(1.0 - np.mean(hs), 0.0, 1.0))


@dataclass(frozen=True)
class ShapingSummary:
    energy_2d: float
    entropy_2d: float
    beta: float
    information_rate: float
    rate_loss: float
    gain_db: float


def shaping_summary(amplitude_pmf: Pmf, dm_input_bits: float, dm_word_pam_len: int, *,
                    code_rate: float = 5 / 6, bits_per_qam: int = 8,
                    shaped_bits_per_qam: int = 4) -> ShapingSummary:
    """Energy, entropy, rate loss and gain of a PAS scheme.

    ``dm_input_bits`` shaped bits ride on ``dm_word_pam_len`` PAM symbols;
    the remaining amplitude levels and the sign are uniform. ``beta`` is the
    rate at R_c = 1, the reference for the constellation gain.
    """
    from .constellation import pmf_energy

    e2d = 2 * float(pmf_energy(amplitude_pmf, 2 * np.arange(len(amplitude_pmf)) + 1))
    h2d = entropy_2d(amplitude_pmf)
    uniform_per_rail = bits_per_qam // 2 - shaped_bits_per_qam // 2
    beta = 2 * (uniform_per_rail + dm_input_bits / dm_word_pam_len)
    unshaped = unshaped_bits_per_word(code_rate, bits_per_qam, shaped_bits_per_qam, dm_word_pam_len)
    rates = ShapingRates(h2d, code_rate, bits_per_qam, dm_input_bits + unshaped, dm_word_pam_len)
    return ShapingSummary(e2d, h2d, beta, information_rate(rates), rate_loss(rates),
                          constellation_gain(beta, e2d))
