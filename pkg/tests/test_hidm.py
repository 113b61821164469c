import time
from fractions import Fraction
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pshape import treefile
from pshape.constellation import build_reflected_gray_labeling
from pshape.hidm import (HidmCodec, HidmTreeSpec, LayerSpec, TreeSpecError, build_tables, build_tree,
                         class_energies, storage_bits)

SMALL_TREE_PMF = [Fraction(23, 128)] * 2 + [Fraction(11, 64)] * 2 + [Fraction(3, 32)] * 2 + \
    [Fraction(3, 64)] * 2 + [Fraction(1, 128)] * 2 + [Fraction(0)] * 6


def small_spec():
    return HidmTreeSpec((LayerSpec(4, 3, 1, 2), LayerSpec(6, 2, 2, 2), LayerSpec(4, 0, 3, 1)))


def all_words(n):
    return ((np.arange(1 << n)[:, None] >> np.arange(n - 1, -1, -1)) & 1).astype(np.uint8)


def test_tables_match_fixture(data_dir):
    spec, fixture = treefile.load(data_dir / "small_tree.tree")
    built = build_tables(spec)
    for got, want in zip(built, fixture):
        assert sorted(zip(got.words.tolist(), got.energies)) == sorted(zip(want.words.tolist(), want.energies))
        # row order too: entry address -> word
        assert got.words.tolist() == want.words.tolist()


def test_bottom_table_is_energy_ordered(small_codec):
    # one amplitude per bottom LUT word: entries run through |X|^2 = 1, 9, ..., 961
    e = [int(x) for x in small_codec.tables[0].energies]
    assert e == [(2 * i + 1) ** 2 for i in range(16)]


def test_small_tree_pmf_exact(small_codec):
    assert list(small_codec.amplitude_pmf().probs) == SMALL_TREE_PMF
    assert small_codec.expected_energy() == 57


def test_class_energies_indexed_by_pattern():
    energies = class_energies(build_reflected_gray_labeling(4), (2, 3, 4, 5))
    # pattern 0010 is amplitude 7, 0011 is amplitude 5
    assert energies[:4] == [1, 9, 49, 25]
    coarse = class_energies(build_reflected_gray_labeling(3), (2, 3))
    assert coarse == [5, 37, 197, 101]


def test_exhaustive_bijection(small_codec):
    inputs = all_words(11)
    out = small_codec.match(inputs)
    assert len({row.tobytes() for row in out}) == 1 << 11
    assert np.array_equal(small_codec.dematch(out), inputs)


def test_single_and_batch_agree(small_codec):
    inputs = all_words(11)[::37]
    batch = small_codec.match(inputs)
    for row, want in zip(inputs, batch):
        assert np.array_equal(small_codec.match(row), want)
        assert np.array_equal(small_codec.dematch(want), row)


def test_dematch_is_total(small_codec):
    words = all_words(16)
    out = small_codec.dematch(words)
    assert out.shape == (1 << 16, 11)
    # table words decode to their preimage regardless of neighbours
    enc = small_codec.match(out)
    again = small_codec.dematch(enc)
    assert np.array_equal(again, out)


def test_storage_counts():
    assert storage_bits(small_spec()) == (480, 816)
    single = HidmTreeSpec((LayerSpec(16, 0, 11, 1),))
    assert storage_bits(single) == (32768, 720896)


def test_hidm320_config(hidm320):
    spec = hidm320.spec
    assert spec.lut_counts == (64, 32, 16, 8, 4, 2, 1)
    assert spec.layers[0].u == 10
    assert spec.input_bits == 507
    assert spec.output_bits == 640
    assert spec.num_symbols == 320
    assert 2 * hidm320.expected_energy() == pytest.approx(74.70, abs=0.01)


def test_hidm320_builds_fast(data_dir):
    spec, _ = treefile.load(data_dir / "hidm_320.spec")
    t = time.perf_counter()
    codec = build_tree(spec)
    assert time.perf_counter() - t < 5
    rng = np.random.default_rng(3)
    x = rng.integers(0, 2, (200, 507), dtype=np.uint8)
    assert np.array_equal(codec.dematch(codec.match(x)), x)


def test_hidm320_pmf_near_reference(hidm320):
    ref = [0.2376, 0.2376, 0.1684, 0.1684, 0.0757, 0.0757, 0.0183, 0.0183]
    assert np.max(np.abs(hidm320.amplitude_pmf().as_array() - ref)) < 0.003


@pytest.mark.parametrize("layers, msg", [
    ((LayerSpec(4, 3, 2, 2), LayerSpec(6, 0, 3, 1)), "exceeds"),
    ((LayerSpec(4, 3, 1, 2), LayerSpec(5, 0, 3, 1)), "parent output"),
    ((LayerSpec(4, 3, 1, 2), LayerSpec(6, 1, 3, 1)), "top layer"),
    ((LayerSpec(6, 0, 3, 1),), "multiple"),
])
def test_invalid_specs(layers, msg):
    with pytest.raises(TreeSpecError, match=msg):
        HidmTreeSpec(layers).validate()


def test_from_tables_rejects_duplicates(small_codec):
    tabs = list(small_codec.tables)
    bad = type(tabs[0])(np.zeros_like(tabs[0].words), tabs[0].energies)
    with pytest.raises(TreeSpecError, match="duplicate"):
        HidmCodec.from_tables(small_codec.spec, [bad] + tabs[1:])



@settings(max_examples=25, deadline=None)
@given(st.integers(1, 2), st.integers(0, 2), st.integers(1, 3), st.integers(1, 3))
def test_random_two_layer_trees_are_bijective(sym_pairs, r_extra, s_top, s_bottom):
    # bottom LUTs emit `sym_pairs` 2-bit symbols; two of them feed one top LUT
    u1 = 2 * sym_pairs
    r1 = min(1 + r_extra, u1 - 1)
    s1 = min(s_bottom, u1 - r1)
    u2 = 2 * r1
    s2 = min(s_top, u2)
    spec = HidmTreeSpec((LayerSpec(u1, r1, s1, 2), LayerSpec(u2, 0, s2, 1)), "gray-2", (2, 3))
    codec = build_tree(spec)
    x = all_words(spec.input_bits)
    y = codec.match(x)
    assert len({row.tobytes() for row in y}) == len(x)
    assert np.array_equal(codec.dematch(y), x)
    assert sum(codec.class_distribution()) == 1
