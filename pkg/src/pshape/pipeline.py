"""Reverse-concatenation PS link: framing, mapping, channel, demapping, decoding.

A *group* is the smallest set of FEC codewords that holds a whole number of
DM words. Groups are simulated independently with RNG streams keyed by
(seed, group index), so results do not depend on how groups are scheduled.

Codeword index layout for the square-QAM (PAS) layouts, with ``N`` PAM rails
per codeword and rails ordered symbol by symbol, in-phase first:

* ``[0, 2N)``: least significant amplitude level, one bit per rail;
* ``[2N, 6N)``: shaped levels, two consecutive indices per rail;
* ``[6N, k)``: sign bits carrying uniform payload;
* ``[k, n)``: parity, on the remaining sign bits.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import treefile
from .ccdm import CcdmCodec, Composition
from .config import SimConfig
from .constellation import Pmf, build_reflected_gray_labeling
from .fec import LdpcCode, decode, load_alist
from .hidm import HidmCodec
from .modulation import PlaneDemapper, PointSet, RailDemapper, cross_qam128, llr_quantizer, noise_variance, pam_rail
from .shaping_metrics import LlrHistogram

log = logging.getLogger(__name__)

LAYOUTS = ("ccdm_parallel", "hidm_sequential", "bicm_uniform")
WORKERS_ENV = "PSHAPE_WORKERS"

# significance rank of each label column of the 128-cross labeling
# [sign I, amp I (3 bits), sign Q, amp Q (2 bits)]; signs are the most significant
CROSS128_SIGNIFICANCE = (3, 2, 1, 0, 3, 1, 0)


class GeometryError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FramePlan:
    """Position maps of one group.

    Flat codeword positions are ``c * n + i`` for codeword ``c`` of the group
    and index ``i``. Symbol slots are ``s * m + j`` for symbol ``s`` and
    label column ``j``.
    """

    layout: str
    n: int
    k: int
    bits_per_symbol: int
    codewords_per_group: int
    dm_words_per_group: int
    dm_input_bits: int
    dm_output_bits: int
    shaped_positions: np.ndarray = field(repr=False)    # DM output stream -> flat position
    unshaped_positions: np.ndarray = field(repr=False)  # uniform payload, client order -> flat position
    slot_of_position: np.ndarray = field(repr=False)    # flat position -> symbol slot

    @property
    def coded_bits(self) -> int:
        return self.codewords_per_group * self.n

    @property
    def symbols_per_group(self) -> int:
        return self.coded_bits // self.bits_per_symbol

    @property
    def shaped_client_bits(self) -> int:
        return self.dm_words_per_group * self.dm_input_bits

    @property
    def client_bits(self) -> int:
        return self.shaped_client_bits + len(self.unshaped_positions)

    @property
    def payload_positions(self) -> np.ndarray:
        c = np.arange(self.codewords_per_group)[:, None]
        return (c * self.n + np.arange(self.k)[None]).ravel()

    @property
    def parity_positions(self) -> np.ndarray:
        c = np.arange(self.codewords_per_group)[:, None]
        return (c * self.n + np.arange(self.k, self.n)[None]).ravel()

    def validate(self) -> None:
        total = self.coded_bits
        if sorted(self.slot_of_position.tolist()) != list(range(total)):
            raise GeometryError("codeword-to-slot map is not a bijection")
        used = np.concatenate([self.shaped_positions, self.unshaped_positions])
        if not np.array_equal(np.sort(used), self.payload_positions):
            raise GeometryError("shaped and unshaped positions do not tile the payload")
        if len(self.shaped_positions) != self.dm_words_per_group * self.dm_output_bits:
            raise GeometryError("shaped positions do not match the DM words of a group")
        if self.layout != "bicm_uniform":
            m_r = self.bits_per_symbol // 2
            if np.any(self.slot_of_position[self.parity_positions] % m_r != 0):
                raise GeometryError("parity must land on sign bits")


def _pas_codeword_slots(n: int, k: int, m: int, shaped_per_rail: int) -> np.ndarray:
    """Rail-level slot of every codeword index under the level rule."""
    m_r = m // 2
    rails = 2 * n // m
    lsb_levels = m_r - 1 - shaped_per_rail
    slots = np.empty(n, dtype=np.int64)
    a = lsb_levels * rails
    j = np.arange(a)
    slots[:a] = (j // max(lsb_levels, 1)) * m_r + (m_r - 1 - j % max(lsb_levels, 1))
    b = a + shaped_per_rail * rails
    j = np.arange(b - a)
    slots[a:b] = (j // shaped_per_rail) * m_r + 1 + j % shaped_per_rail
    j = np.arange(n - b)
    slots[b:] = j * m_r
    if k < b:
        raise GeometryError(f"payload of {k} bits does not cover the {b} amplitude positions")
    return slots


def build_frame_plan(layout: str, n: int, k: int, *, dm_input_bits: int = 0, dm_output_bits: int = 0,
                     bits_per_symbol: int = 8, shaped_bits_per_symbol: int = 4,
                     codewords_per_group: int | None = None,
                     significance: tuple[int, ...] | None = None) -> FramePlan:
    if layout not in LAYOUTS:
        raise GeometryError(f"unknown layout {layout!r}")
    m = bits_per_symbol
    if layout == "bicm_uniform":
        base = m // math.gcd(n, m)
        g = codewords_per_group or base
        if g % base:
            raise GeometryError(f"{g} codewords do not fill whole symbols (need a multiple of {base})")
        rank = np.asarray(significance if significance is not None else [0] * m)
        if len(rank) != m:
            raise GeometryError("one significance rank per label column required")
        n_sym = g * n // m
        sym, col = np.divmod(np.arange(n_sym * m), m)
        order = np.lexsort((col, sym, rank[col]))  # slots by ascending significance
        j = np.arange(n_sym * m)
        flat = (j % g) * n + j // g
        slot_of = np.empty(n_sym * m, dtype=np.int64)
        slot_of[flat] = order
        unshaped = np.arange(g)[:, None] * n + np.arange(k)[None]
        plan = FramePlan(layout, n, k, m, g, 0, 0, 0, np.zeros(0, np.int64), unshaped.ravel(), slot_of)
        plan.validate()
        return plan

    if m % 2 or n % m:
        raise GeometryError(f"codeword of {n} bits is not a whole number of {m}-bit symbols")
    if dm_output_bits <= 0 or dm_input_bits <= 0:
        raise GeometryError("PS layouts need DM input and output sizes")
    shaped_per_rail = shaped_bits_per_symbol // 2
    rails = 2 * n // m
    shaped_per_cw = shaped_per_rail * rails
    unit = shaped_per_rail
    if dm_output_bits % unit:
        raise GeometryError("DM words must hold whole shaped symbols")
    lcm = shaped_per_cw * dm_output_bits // math.gcd(shaped_per_cw, dm_output_bits)
    base = lcm // shaped_per_cw
    g = codewords_per_group or base
    if g % base:
        raise GeometryError(f"{g} codewords do not hold a whole number of DM words (need a multiple of {base})")
    w = g * shaped_per_cw // dm_output_bits
    cw_slots = _pas_codeword_slots(n, k, m, shaped_per_rail)
    a = (m // 2 - 1 - shaped_per_rail) * rails
    stream = np.arange(w * dm_output_bits)
    if layout == "hidm_sequential":
        c, off = np.divmod(stream, shaped_per_cw)
    else:
        # whole shaped symbols round-robin over the codewords of the group
        sym, bit = np.divmod(stream, unit)
        s, c = np.divmod(sym, g)
        off = s * unit + bit
    shaped = c * n + a + off
    rail_bits = m // 2
    slot_of = (np.arange(g)[:, None] * rails * rail_bits + cw_slots[None]).ravel()
    idx = np.arange(k)
    uns_idx = idx[(idx < a) | (idx >= a + shaped_per_cw)]
    unshaped = (np.arange(g)[:, None] * n + uns_idx[None]).ravel()
    plan = FramePlan(layout, n, k, m, g, w, dm_input_bits, dm_output_bits, shaped, unshaped, slot_of)
    plan.validate()
    return plan


# ----------------------------------------------------------------- link

@dataclass(eq=False)
class Link:
    """Everything needed to simulate one group, built once per run."""

    plan: FramePlan
    code: LdpcCode
    dm: HidmCodec | CcdmCodec | None
    points: PointSet
    per_rail: bool
    energy_2d: float
    entropy_2d: float


def rail_pmf_of(dm) -> Pmf:
    if isinstance(dm, HidmCodec):
        return dm.amplitude_pmf()
    comp = dm.composition
    return Composition(comp.counts).pmf().expand_classes(2)


def make_link(config: SimConfig, base_dir: Path | None = None) -> Link:
    code = load_alist(config.resolve(config.code, "ldpc_2040_1700.alist", base_dir))
    if config.dm == "none":
        pts = cross_qam128()
        plan = build_frame_plan("bicm_uniform", code.n, code.k, bits_per_symbol=7,
                                codewords_per_group=config.codewords_per_group,
                                significance=CROSS128_SIGNIFICANCE)
        return Link(plan, code, None, pts, False, pts.energy, pts.entropy)
    if config.dm == "hidm":
        dm = treefile.load_codec(config.resolve(config.hidm_tree, "hidm_320.spec", base_dir))
        if dm.spec.bits_per_amplitude != 3 or tuple(dm.spec.shaped_levels) != (2, 3):
            raise GeometryError("the 256-QAM link expects a 16-PAM tree shaping levels 2 and 3")
        layout = "hidm_sequential"
    else:
        comp = Composition(config.ccdm.composition)
        dm = CcdmCodec.from_composition(comp, config.ccdm.input_bits)
        layout = "ccdm_parallel"
    labeling = build_reflected_gray_labeling(3)
    rail = pam_rail(labeling, rail_pmf_of(dm))
    plan = build_frame_plan(layout, code.n, code.k, dm_input_bits=dm.input_bits,
                            dm_output_bits=dm.output_bits, codewords_per_group=config.codewords_per_group)
    return Link(plan, code, dm, rail, True, 2 * rail.energy, 2 * rail.entropy)


@dataclass
class GroupCounts:
    codewords: int = 0
    coded_bits: int = 0
    pre_fec_errors: int = 0
    payload_bits: int = 0
    post_fec_errors: int = 0
    frame_errors: int = 0
    client_bits: int = 0
    post_invdm_errors: int = 0
    errored_blocks: set = field(default_factory=set)
    histogram: LlrHistogram | None = None

    def merge(self, other: "GroupCounts") -> None:
        for name in ("codewords", "coded_bits", "pre_fec_errors", "payload_bits", "post_fec_errors",
                     "frame_errors", "client_bits", "post_invdm_errors"):
            setattr(self, name, getattr(self, name) + getattr(other, name))
        self.errored_blocks |= other.errored_blocks
        if other.histogram is not None:
            self.histogram = other.histogram if self.histogram is None else self.histogram + other.histogram


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *key]))


def dm_match(dm, info: np.ndarray) -> np.ndarray:
    if isinstance(dm, HidmCodec):
        return dm.match(info)
    return np.stack([dm.match_bits(row) for row in info])


def dm_dematch(dm, shaped: np.ndarray) -> np.ndarray:
    if isinstance(dm, HidmCodec):
        return dm.dematch(shaped)
    return np.stack([dm.dematch_bits(row) for row in shaped])


def transmit_bits(link: Link, client: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Client bits of one group -> (codewords (G, n), symbol label grid (S, m))."""
    plan = link.plan
    payload = np.zeros(plan.codewords_per_group * plan.n, dtype=np.uint8)
    if plan.dm_words_per_group:
        info = client[:plan.shaped_client_bits].reshape(plan.dm_words_per_group, plan.dm_input_bits)
        payload[plan.shaped_positions] = dm_match(link.dm, info).ravel()
    payload[plan.unshaped_positions] = client[plan.shaped_client_bits:]
    cw = link.code.encode(payload.reshape(plan.codewords_per_group, plan.n)[:, :plan.k])
    grid = np.empty(plan.coded_bits, dtype=np.uint8)
    grid[plan.slot_of_position] = cw.ravel()
    return cw, grid.reshape(-1, link.points.bits if not link.per_rail else plan.bits_per_symbol)


def modulate(link: Link, grid: np.ndarray) -> np.ndarray:
    """Label grid -> real samples, one row per dimension pair (I, Q)."""
    if link.per_rail:
        return link.points.map_bits(grid.reshape(-1, link.points.bits)).reshape(-1, 2)
    return link.points.map_bits(grid)


def receive_bits(link: Link, llr_grid: np.ndarray) -> np.ndarray:
    """Slot-ordered L-values -> (G, n) codeword L-values."""
    plan = link.plan
    return llr_grid.ravel()[plan.slot_of_position].reshape(plan.codewords_per_group, plan.n)


def recover_client(link: Link, decoded_payload: np.ndarray) -> np.ndarray:
    plan = link.plan
    flat = np.zeros(plan.codewords_per_group * plan.n, dtype=np.uint8)
    flat.reshape(plan.codewords_per_group, plan.n)[:, :plan.k] = decoded_payload
    parts = []
    if plan.dm_words_per_group:
        shaped = flat[plan.shaped_positions].reshape(plan.dm_words_per_group, plan.dm_output_bits)
        parts.append(dm_dematch(link.dm, shaped).ravel())
    parts.append(flat[plan.unshaped_positions])
    return np.concatenate(parts)


@dataclass(frozen=True)
class ReceiverSettings:
    demap_input_bits: int = 7
    llr_bits: int | None = 4
    variant: str = "min-sum"
    max_iter: int = 20
    alpha: float = 0.75
    block_bits: int = 130560


def make_demapper(link: Link, noise_var: float, rx: ReceiverSettings):
    cls = RailDemapper if link.per_rail else PlaneDemapper
    return cls(link.points, noise_var, rx.demap_input_bits, rx.llr_bits)


def simulate_group(link: Link, seed: int, group: int, snr_idx: int, snr_db: float,
                   rx: ReceiverSettings, demapper=None) -> GroupCounts:
    plan = link.plan
    client = _rng(seed, 0, group).integers(0, 2, plan.client_bits, dtype=np.uint8)
    cw, grid = transmit_bits(link, client)
    x = modulate(link, grid)
    var = noise_variance(link.energy_2d, snr_db)
    y = x + math.sqrt(var) * _rng(seed, 1, snr_idx, group).standard_normal(x.shape) if var else x
    demapper = demapper or make_demapper(link, var, rx)
    if link.per_rail:
        llr = demapper(y.ravel())
    else:
        llr = demapper(y)
    llr_cw = receive_bits(link, llr)
    res = decode(link.code, llr_cw, rx.max_iter, rx.variant, rx.alpha)
    out = GroupCounts()
    out.codewords = plan.codewords_per_group
    out.coded_bits = plan.coded_bits
    out.pre_fec_errors = int(np.count_nonzero((llr_cw < 0) != (cw == 1)))
    pay_err = res.payload != cw[:, :plan.k]
    out.payload_bits = pay_err.size
    out.post_fec_errors = int(pay_err.sum())
    out.frame_errors = int(pay_err.any(axis=1).sum())
    rec = recover_client(link, res.payload)
    err = np.nonzero(rec != client)[0]
    out.client_bits = plan.client_bits
    out.post_invdm_errors = len(err)
    out.errored_blocks = set(((group * plan.client_bits + err) // rx.block_bits).tolist())
    if rx.llr_bits:
        hist = LlrHistogram(llr_quantizer(rx.llr_bits).grid, grid.shape[1] if not link.per_rail else plan.bits_per_symbol)
        hist.add(grid.reshape(-1, hist.m), llr.reshape(-1, hist.m))
        out.histogram = hist
    return out


# ------------------------------------------------------------- sweeps

@dataclass
class SnrPoint:
    snr_db: float
    codewords: int
    coded_bits: int
    pre_fec_errors: int
    pre_fec_ber: float
    payload_bits: int
    post_fec_errors: int
    post_fec_ber: float
    post_fec_ber_ci_low: float
    post_fec_ber_ci_high: float
    frame_errors: int
    fer: float
    client_bits: int
    post_invdm_errors: int
    post_invdm_ber: float
    blocks: int
    errored_blocks: int
    bber: float
    asi: float
    ngmi: float
    r_e1: float | None
    r_e2: float | None


CSV_COLUMNS = tuple(SnrPoint.__dataclass_fields__)


def wilson_interval(errors: int, trials: int, z: float = 1.96) -> tuple[float, float]:
    if trials == 0:
        return (0.0, 1.0)
    p = errors / trials
    den = 1 + z * z / trials
    mid = (p + z * z / (2 * trials)) / den
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / den
    return (max(0.0, mid - half), min(1.0, mid + half))


def summarize(snr_db: float, acc: GroupCounts, block_bits: int, has_dm: bool) -> SnrPoint:
    from .analysis import error_ratios

    def rate(e, n):
        return e / n if n else 0.0

    blocks = -(-acc.client_bits // block_bits)
    pre = rate(acc.pre_fec_errors, acc.coded_bits)
    post = rate(acc.post_fec_errors, acc.payload_bits)
    inv = rate(acc.post_invdm_errors, acc.client_bits)
    bber = rate(len(acc.errored_blocks), blocks)
    lo, hi = wilson_interval(acc.post_fec_errors, acc.payload_bits)
    ratios = error_ratios(post, inv if has_dm else None, bber)
    hist = acc.histogram
    return SnrPoint(float(snr_db), acc.codewords, acc.coded_bits, acc.pre_fec_errors, pre,
                    acc.payload_bits, acc.post_fec_errors, post, lo, hi,
                    acc.frame_errors, rate(acc.frame_errors, acc.codewords),
                    acc.client_bits, acc.post_invdm_errors, inv, blocks, len(acc.errored_blocks), bber,
                    hist.asi() if hist else float("nan"), hist.ngmi() if hist else float("nan"),
                    ratios.r_e1, ratios.r_e2)


@dataclass
class SimResult:
    config_digest: str
    energy_2d: float
    entropy_2d: float
    points: list[SnrPoint]

    def to_dict(self) -> dict:
        return {"config_digest": self.config_digest, "energy_2d": self.energy_2d,
                "entropy_2d": self.entropy_2d, "points": [asdict(p) for p in self.points]}


_WORKER_LINK: Link | None = None


def _init_worker(link: Link) -> None:
    global _WORKER_LINK
    _WORKER_LINK = link


def _worker_group(args) -> GroupCounts:
    seed, group, snr_idx, snr_db, rx = args
    return simulate_group(_WORKER_LINK, seed, group, snr_idx, snr_db, rx)


def default_workers() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return 1


def run_link(config: SimConfig, workers: int | None = None, link: Link | None = None,
             base_dir: Path | None = None, progress=None) -> SimResult:
    """Sweep the configured SNR points.

    Groups are processed in fixed-size batches; the stopping rule is checked
    between batches only, so the set of simulated groups (and the result)
    is the same for any worker count.
    """
    link = link or make_link(config, base_dir)
    workers = workers or default_workers()
    rx = ReceiverSettings(config.demap_input_bits, config.llr_bits, config.decoder.variant,
                          config.decoder.max_iter, config.decoder.alpha, config.otuc_block_bits)
    per_group = link.plan.codewords_per_group
    max_groups = -(-config.max_codewords // per_group)
    min_groups = -(-config.min_codewords // per_group)
    pool = ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(link,)) if workers > 1 else None
    points = []
    try:
        for si, snr in enumerate(config.snr_db):
            acc = GroupCounts()
            demapper = make_demapper(link, noise_variance(link.energy_2d, snr), rx)
            done = 0
            while done < max_groups:
                batch = range(done, min(done + config.batch_groups, max_groups))
                if pool is None:
                    parts = [simulate_group(link, config.seed, g, si, snr, rx, demapper) for g in batch]
                else:
                    parts = list(pool.map(_worker_group, [(config.seed, g, si, snr, rx) for g in batch]))
                for p in parts:
                    acc.merge(p)
                done = batch.stop
                if done >= min_groups and acc.post_fec_errors >= config.target_errors:
                    break
            point = summarize(snr, acc, rx.block_bits, link.dm is not None)
            log.info("SNR %.3f dB: %d codewords, post-FEC BER %.3g", snr, acc.codewords, point.post_fec_ber)
            if progress:
                progress(point)
            points.append(point)
    finally:
        if pool is not None:
            pool.shutdown()
    return SimResult(config.digest(), link.energy_2d, link.entropy_2d, points)


def count_bber(error_positions, total_bits: int, otuc_n: int = 1) -> float:
    """Fraction of 130560 n-bit client blocks that contain at least one error."""
    size = 130560 * otuc_n
    blocks = -(-total_bits // size)
    if blocks == 0:
        return 0.0
    pos = np.asarray(error_positions, dtype=np.int64)
    return len(np.unique(pos // size)) / blocks
