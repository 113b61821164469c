import math

import numpy as np
import pytest

from pshape.ccdm import Composition
from pshape.constellation import AmplitudeAlphabet, Pmf, build_reflected_gray_labeling, mb_pmf, solve_mb_lambda
from pshape.modulation import RailDemapper, noise_variance, pam_rail
from pshape.shaping_metrics import (
    LlrHistogram,
    ShapingRates,
    air_bmd,
    air_bmd_quadrature,
    constellation_gain,
    estimate_asi,
    estimate_gmi,
    estimate_ngmi,
    information_rate,
    rate_loss,
    rate_loss_1d,
    shaping_summary,
)

GRAY3 = build_reflected_gray_labeling(3)
CCDM_PMF = Composition((318, 208, 89, 25)).pmf().expand_classes(2)


def test_uniform_square_has_zero_gain():
    # uniform 256-QAM: E = 2 * 21 * (256 - 1) / 3 / 16 = 170, beta = 8
    assert constellation_gain(8, 170.0) == pytest.approx(0.0, abs=1e-12)
    assert constellation_gain(6, 42.0) == pytest.approx(0.0, abs=1e-12)


def test_ccdm_scheme_rates():
    s = shaping_summary(CCDM_PMF, 1014, 640)
    assert s.energy_2d == pytest.approx(72.5, abs=1e-12)
    assert s.beta == pytest.approx(2 * (2 + 1014 / 640))
    assert s.information_rate == pytest.approx(5.835, abs=2e-3)
    assert s.entropy_2d == pytest.approx(7.214, abs=2e-3)
    assert s.rate_loss == pytest.approx(0.045, abs=2e-3)
    assert s.gain_db == pytest.approx(1.186, abs=5e-3)


def test_rate_loss_does_not_depend_on_code_rate():
    a = shaping_summary(CCDM_PMF, 1014, 640, code_rate=5 / 6)
    b = shaping_summary(CCDM_PMF, 1014, 640, code_rate=1.0)
    assert a.rate_loss == pytest.approx(b.rate_loss, abs=1e-12)


def test_small_tree_metrics(small_codec):
    pmf = small_codec.amplitude_pmf()
    s = shaping_summary(pmf, 11, 4, code_rate=1.0, bits_per_qam=10, shaped_bits_per_qam=8)
    assert s.energy_2d == 114
    assert s.beta == 7.5
    assert s.entropy_2d / 2 == pytest.approx(3.93, abs=5e-3)
    assert s.rate_loss / 2 == pytest.approx(0.18, abs=0.01)
    assert s.gain_db == pytest.approx(0.22, abs=0.01)


def test_rate_checks():
    rates = ShapingRates(7.0, 5 / 6, 8, 1800.0, 640)
    assert information_rate(rates) == pytest.approx(1800 / 320)
    assert rate_loss_1d(rates) == pytest.approx(rate_loss(rates) / 2)
    with pytest.raises(ValueError):
        information_rate(ShapingRates(6.0, 5 / 6, 8, 1800.0, 640))
    with pytest.raises(ValueError):
        ShapingRates(7.0, 0.0, 8, 100.0, 640)
    with pytest.raises(ValueError):
        ShapingRates(7.0, 0.5, 8, 100.0, 641)


def test_mb_fit_by_entropy():
    alphabet = AmplitudeAlphabet(3)
    beta = 2 * (2 + 1014 / 640)
    lam = solve_mb_lambda(alphabet, entropy_2d_target=beta)
    s = shaping_summary(mb_pmf(lam, alphabet), 1014, 640)
    assert s.entropy_2d == pytest.approx(beta, abs=1e-7)
    assert s.rate_loss == pytest.approx(0.0, abs=1e-7)
    assert s.gain_db == pytest.approx(1.444, abs=5e-3)


def test_air_limits():
    pmf = Pmf.uniform(8)
    h2d = 8.0
    hi = air_bmd(pmf, GRAY3, 45.0, 20_000, np.random.default_rng(0))
    assert hi.value == pytest.approx(h2d, abs=1e-3)
    lo = air_bmd_quadrature(pmf, GRAY3, -20.0)
    assert 0 <= lo < 0.1


def test_air_monte_carlo_agrees_with_quadrature():
    pmf = mb_pmf(0.015, AmplitudeAlphabet(3))
    for snr in (12.0, 18.0):
        exact = air_bmd_quadrature(pmf, GRAY3, snr)
        est = air_bmd(pmf, GRAY3, snr, 100_000, np.random.default_rng(1))
        assert abs(est.value - exact) < 3 * est.stderr + 1e-3


def test_air_grows_with_snr():
    pmf = mb_pmf(0.015, AmplitudeAlphabet(3))
    vals = [air_bmd_quadrature(pmf, GRAY3, s) for s in (8, 12, 16, 20, 24)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_ngmi_and_asi_trivial_cases():
    bits = np.array([[0, 1], [1, 0], [0, 0]])
    perfect = np.where(bits == 0, 1e3, -1e3)
    assert estimate_ngmi(bits, perfect).value == pytest.approx(1.0)
    assert estimate_asi(bits, perfect) == pytest.approx(1.0)
    useless = np.zeros((3, 2))
    assert estimate_ngmi(bits, useless).value == pytest.approx(0.0)
    assert estimate_asi(bits, useless) == pytest.approx(0.0)


def _rail_samples(snr_db, n, seed, output_bits=4):
    pmf = Pmf.uniform(8)
    rail = pam_rail(GRAY3, pmf)
    var = noise_variance(2 * rail.energy, snr_db)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, 16, n)
    y = rail.points[idx, 0] + math.sqrt(var) * rng.standard_normal(n)
    llr = RailDemapper(rail, var, output_bits=output_bits)(y) if output_bits else rail.bit_llrs(y[:, None], var)
    return pmf, rail.labels[idx], llr


def test_ngmi_consistent_with_air():
    pmf, bits, llr = _rail_samples(16.0, 200_000, 2, output_bits=None)
    gmi = estimate_gmi(bits, llr, 4.0)
    # one rail carries half the 2D rate
    assert 2 * gmi.value == pytest.approx(air_bmd_quadrature(pmf, GRAY3, 16.0), abs=4 * 2 * gmi.stderr + 2e-3)


def test_asi_is_scale_free_for_binned_llrs():
    _, bits, llr = _rail_samples(14.0, 50_000, 3, output_bits=None)
    assert estimate_asi(bits, llr) == pytest.approx(estimate_asi(bits, 3.7 * llr), abs=1e-12)


def test_asi_close_to_ngmi_for_matched_llrs():
    _, bits, llr = _rail_samples(14.0, 200_000, 4, output_bits=None)
    assert estimate_asi(bits, llr) == pytest.approx(estimate_ngmi(bits, llr).value, abs=0.01)


def test_histogram_matches_direct_estimators_and_merges():
    _, bits, llr = _rail_samples(13.0, 40_000, 5)
    alphabet = np.arange(-7.5, 8.0)
    whole = LlrHistogram(alphabet, 4)
    whole.add(bits, llr)
    a, b = LlrHistogram(alphabet, 4), LlrHistogram(alphabet, 4)
    a.add(bits[:15_000], llr[:15_000])
    b.add(bits[15_000:], llr[15_000:])
    merged = b + a
    assert np.array_equal(merged.counts, whole.counts)
    assert merged.samples == 40_000
    assert merged.ngmi() == pytest.approx(estimate_ngmi(bits, llr).value, abs=1e-12)
    assert merged.asi() == pytest.approx(estimate_asi(bits, llr), abs=1e-12)
    with pytest.raises(ValueError):
        whole.add(bits[:1], np.full((1, 4), 0.25))
