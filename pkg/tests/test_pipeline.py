import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pshape.config import SimConfig
from pshape.pipeline import (
    CROSS128_SIGNIFICANCE,
    CSV_COLUMNS,
    GeometryError,
    ReceiverSettings,
    build_frame_plan,
    count_bber,
    make_link,
    recover_client,
    run_link,
    simulate_group,
    transmit_bits,
    wilson_interval,
)


def _check_plan(plan):
    total = plan.coded_bits
    assert np.array_equal(np.sort(plan.slot_of_position), np.arange(total))
    used = np.concatenate([plan.shaped_positions, plan.unshaped_positions])
    assert len(np.unique(used)) == len(used)
    assert np.array_equal(np.sort(used), plan.payload_positions)


@pytest.mark.parametrize("layout,dm_in,dm_out", [("ccdm_parallel", 1014, 1280), ("hidm_sequential", 507, 640)])
def test_reference_frame_plans(layout, dm_in, dm_out):
    plan = build_frame_plan(layout, 2040, 1700, dm_input_bits=dm_in, dm_output_bits=dm_out)
    _check_plan(plan)
    assert plan.dm_words_per_group * dm_out == plan.codewords_per_group * 1020
    # parity rides on sign bits only
    assert np.all(plan.slot_of_position[plan.parity_positions] % 4 == 0)


def test_ccdm_words_spread_over_all_codewords():
    plan = build_frame_plan("ccdm_parallel", 2040, 1700, dm_input_bits=1014, dm_output_bits=1280)
    first_word = plan.shaped_positions[:1280]
    assert len(np.unique(first_word // 2040)) == plan.codewords_per_group


def test_hidm_words_stay_in_one_codeword():
    plan = build_frame_plan("hidm_sequential", 2040, 1700, dm_input_bits=507, dm_output_bits=640)
    cw = plan.shaped_positions.reshape(plan.dm_words_per_group, 640) // 2040
    assert np.all((cw.max(axis=1) - cw.min(axis=1)) <= 1)


def test_bicm_plan_orders_by_significance():
    plan = build_frame_plan("bicm_uniform", 2040, 1700, bits_per_symbol=7, significance=CROSS128_SIGNIFICANCE)
    _check_plan(plan)
    assert plan.codewords_per_group == 7
    cols = plan.slot_of_position % 7
    rank = np.asarray(CROSS128_SIGNIFICANCE)[cols]
    # parity lands on the most significant label columns (the two signs)
    assert np.all(rank[plan.parity_positions] == 3)
    # payload fills the columns from the least significant up
    assert rank[plan.payload_positions[:1700]].tolist() == sorted(rank[plan.payload_positions[:1700]].tolist())


def test_rate_one_bicm_plan_is_a_permutation():
    plan = build_frame_plan("bicm_uniform", 8, 8, bits_per_symbol=8)
    _check_plan(plan)
    assert len(plan.unshaped_positions) == 8


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 24), st.integers(1, 48), st.sampled_from(["ccdm_parallel", "hidm_sequential"]))
def test_frame_plans_are_bijective(symbols, parity, layout):
    # codewords of whole 8-bit symbols, parity on some of the 2 * symbols sign bits
    n = 8 * symbols
    k = n - min(parity, 2 * symbols)
    plan = build_frame_plan(layout, n, k, dm_input_bits=3, dm_output_bits=4)
    _check_plan(plan)


def test_geometry_errors():
    with pytest.raises(GeometryError):
        build_frame_plan("ccdm_parallel", 2040, 1000, dm_input_bits=1014, dm_output_bits=1280)
    with pytest.raises(GeometryError):
        build_frame_plan("hidm_sequential", 2040, 1700, dm_input_bits=507, dm_output_bits=641)
    with pytest.raises(GeometryError):
        build_frame_plan("polar", 2040, 1700)
    with pytest.raises(GeometryError):
        build_frame_plan("bicm_uniform", 2040, 1700, bits_per_symbol=7, codewords_per_group=3)


@pytest.mark.parametrize("dm", ["hidm", "ccdm", "none"])
def test_noiseless_loopback(dm):
    cfg = SimConfig(dm=dm, snr_db=(math.inf,), seed=3, max_codewords=1)
    link = make_link(cfg)
    rx = ReceiverSettings()
    res = simulate_group(link, 3, 0, 0, math.inf, rx)
    assert res.pre_fec_errors == res.post_fec_errors == res.post_invdm_errors == 0
    assert res.client_bits == link.plan.client_bits
    # transmit and recover without the channel
    client = np.random.default_rng(1).integers(0, 2, link.plan.client_bits, dtype=np.uint8)
    cw, _ = transmit_bits(link, client)
    assert np.array_equal(recover_client(link, cw[:, :link.plan.k]), client)


def test_link_geometry_values():
    hidm = make_link(SimConfig(dm="hidm", snr_db=(20.0,), seed=0))
    assert hidm.plan.codewords_per_group == 32 and hidm.plan.dm_words_per_group == 51
    assert hidm.energy_2d == pytest.approx(74.696, abs=1e-3)
    ccdm = make_link(SimConfig(dm="ccdm", snr_db=(20.0,), seed=0))
    assert ccdm.plan.codewords_per_group == 64 and ccdm.plan.dm_words_per_group == 51
    assert ccdm.energy_2d == pytest.approx(72.5)
    bicm = make_link(SimConfig(dm="none", snr_db=(20.0,), seed=0))
    assert bicm.energy_2d == pytest.approx(82.0)


def test_empirical_amplitude_pmf_matches_tree():
    link = make_link(SimConfig(dm="hidm", snr_db=(math.inf,), seed=0))
    rng = np.random.default_rng(7)
    counts = np.zeros(8)
    for _ in range(16):
        client = rng.integers(0, 2, link.plan.client_bits, dtype=np.uint8)
        _, grid = transmit_bits(link, client)
        amps = np.abs(link.points.map_bits(grid.reshape(-1, 4))[:, 0])
        counts += np.bincount((amps.astype(int) - 1) // 2, minlength=8)
    emp = counts / counts.sum()
    ref = np.array([float(p) for p in link.dm.amplitude_pmf().probs])
    assert np.max(np.abs(emp - ref)) < 0.003


def test_low_snr_every_block_errs():
    cfg = SimConfig(dm="hidm", snr_db=(5.0,), seed=1, max_codewords=32, target_errors=1)
    pt = run_link(cfg).points[0]
    assert pt.bber == 1.0 and pt.fer == 1.0
    assert 0.05 < pt.pre_fec_ber < 0.5


def test_results_independent_of_worker_count():
    cfg = SimConfig(dm="ccdm", snr_db=(19.5, 20.0), seed=11, max_codewords=256, target_errors=50, batch_groups=2)
    one = run_link(cfg, workers=1)
    two = run_link(cfg, workers=2)
    assert one.to_dict() == two.to_dict()
    again = run_link(cfg.model_copy(update={"seed": 12}), workers=1)
    assert again.to_dict() != one.to_dict()


def test_result_columns():
    assert CSV_COLUMNS[0] == "snr_db"
    for name in ("pre_fec_ber", "post_fec_ber", "post_invdm_ber", "bber", "asi", "ngmi", "r_e1", "r_e2"):
        assert name in CSV_COLUMNS


def test_count_bber():
    assert count_bber([], 261120) == 0.0
    assert count_bber([0, 5, 130559], 261120) == 0.5
    assert count_bber([0, 130560], 261120) == 1.0
    assert count_bber([0, 130560], 261120, otuc_n=2) == 1.0
    assert count_bber([10], 3 * 130560) == pytest.approx(1 / 3)


def test_wilson_interval():
    lo, hi = wilson_interval(0, 1000)
    assert lo == 0.0 and 0 < hi < 0.005
    lo, hi = wilson_interval(50, 100)
    assert lo < 0.5 < hi
