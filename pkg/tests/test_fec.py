import warnings

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from pshape.fec import (
    DUAL_DIAGONAL,
    AlistError,
    DecodeOnlyWarning,
    EncoderUnavailable,
    LdpcCode,
    bundled_code_path,
    construct_qc_ira,
    decode,
    format_alist,
    parse_alist,
    quantize_llr,
)

HAMMING = np.array([[1, 1, 0, 1, 1, 0, 0],
                    [1, 0, 1, 1, 0, 1, 0],
                    [0, 1, 1, 1, 0, 0, 1]])


def test_bundled_code_shape(bundled_code):
    assert (bundled_code.n, bundled_code.k) == (2040, 1700)
    assert bundled_code.structure == DUAL_DIAGONAL
    assert bundled_code.rate == pytest.approx(5 / 6)
    col_w = np.diff(bundled_code.H.tocsc().indptr)
    assert set(col_w[:1700]) == {3}


def test_bundled_file_matches_construction():
    assert format_alist(construct_qc_ira()) == bundled_code_path().read_text()


def test_construction_has_no_four_cycles(bundled_code):
    H = bundled_code.H.astype(np.int64)
    overlap = (H @ H.T).toarray()
    np.fill_diagonal(overlap, 0)
    assert overlap.max() <= 1


def test_encode_zero_and_syndrome(bundled_code):
    rng = np.random.default_rng(1)
    assert not bundled_code.encode(np.zeros(1700, np.uint8)).any()
    u = rng.integers(0, 2, (50, 1700), dtype=np.uint8)
    c = bundled_code.encode(u)
    assert np.array_equal(c[:, :1700], u)
    assert not bundled_code.syndrome(c).any()


def test_encode_is_linear(bundled_code):
    rng = np.random.default_rng(2)
    a, b = rng.integers(0, 2, (2, 1700), dtype=np.uint8)
    assert np.array_equal(bundled_code.encode(a ^ b), bundled_code.encode(a) ^ bundled_code.encode(b))


def test_noiseless_decode_is_identity_without_iterations(bundled_code):
    rng = np.random.default_rng(3)
    c = bundled_code.encode(rng.integers(0, 2, (1000, 1700), dtype=np.uint8))
    res = decode(bundled_code, 7.5 * (1 - 2 * c.astype(np.float64)))
    assert res.converged.all()
    assert not res.iterations.any()
    assert np.array_equal(res.payload, c[:, :1700])


@pytest.mark.parametrize("variant", ["min-sum", "sum-product"])
def test_decode_corrects_awgn(bundled_code, variant):
    rng = np.random.default_rng(4)
    c = bundled_code.encode(rng.integers(0, 2, (20, 1700), dtype=np.uint8))
    sigma = 0.5
    y = (1 - 2 * c.astype(np.float64)) + sigma * rng.standard_normal(c.shape)
    llr = 2 * y / sigma**2
    assert np.any((llr < 0) != c.astype(bool))
    res = decode(bundled_code, llr, variant=variant)
    assert res.converged.all()
    assert np.array_equal(res.bits, c)


def test_converged_words_are_codewords(bundled_code):
    rng = np.random.default_rng(5)
    c = bundled_code.encode(rng.integers(0, 2, (40, 1700), dtype=np.uint8))
    y = (1 - 2 * c.astype(np.float64)) + 0.8 * rng.standard_normal(c.shape)
    res = decode(bundled_code, quantize_llr(2 * y / 0.64))
    assert not bundled_code.syndrome(res.bits[res.converged]).any()
    assert (~res.converged).any()


def test_decode_is_deterministic(bundled_code):
    rng = np.random.default_rng(6)
    llr = rng.normal(2.0, 2.0, (8, 2040))
    a, b = decode(bundled_code, llr), decode(bundled_code, llr)
    assert np.array_equal(a.bits, b.bits) and np.array_equal(a.iterations, b.iterations)


def test_single_word_interface(bundled_code):
    res = decode(bundled_code, np.full(2040, 3.0))
    assert res.bits.shape == (2040,) and res.converged and res.iterations == 0


def test_decode_rejects_bad_input(bundled_code):
    with pytest.raises(ValueError):
        decode(bundled_code, np.zeros(100))
    with pytest.raises(ValueError):
        decode(bundled_code, np.full(2040, np.nan))
    with pytest.raises(ValueError):
        decode(bundled_code, np.zeros(2040), variant="bit-flip")


def test_hamming_dense_code_encodes():
    code = LdpcCode.from_matrix(HAMMING)
    assert code.can_encode
    for u in range(16):
        bits = np.array([(u >> i) & 1 for i in range(4)], np.uint8)
        assert code.is_codeword(code.encode(bits))


def test_dependent_parity_columns_are_decode_only():
    H = np.array([[1, 0, 1, 1], [0, 1, 1, 1]])
    with pytest.warns(DecodeOnlyWarning):
        code = LdpcCode.from_matrix(H)
    with pytest.raises(EncoderUnavailable):
        code.encode([0, 0])


def test_alist_roundtrip_bundled(bundled_code):
    text = bundled_code_path().read_text()
    again = parse_alist(text)
    assert (again.H != bundled_code.H).nnz == 0
    assert format_alist(again) == text


def test_alist_truncated_reports_line():
    text = format_alist(sp.csr_matrix(HAMMING))
    cut = "\n".join(text.splitlines()[:8]) + "\n"
    with pytest.raises(AlistError) as err:
        parse_alist(cut)
    assert err.value.line == 8


def test_alist_bad_index_reports_line():
    lines = format_alist(sp.csr_matrix(HAMMING)).splitlines()
    lines[4] = "9 0 0"
    with pytest.raises(AlistError) as err:
        parse_alist("\n".join(lines))
    assert err.value.line == 5


def test_llr_quantizer_levels():
    q = quantize_llr(np.array([-100.0, -6.2, -0.3, 0.0, 0.2, 1.0, 6.99, 100.0]))
    assert q.tolist() == [-7.5, -6.5, -0.5, 0.5, 0.5, 1.5, 6.5, 7.5]


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=4, max_size=4), st.integers(0, 6))
def test_hamming_decode_single_flip(payload, flip):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        code = LdpcCode.from_matrix(HAMMING)
    c = code.encode(np.array(payload, np.uint8))
    llr = 4.0 * (1 - 2 * c.astype(np.float64))
    llr[flip] = -0.5 * np.sign(llr[flip])
    res = decode(code, llr, variant="sum-product")
    assert res.converged
    assert np.array_equal(res.bits, c)


def test_light_information_words_absent(bundled_code):
    # every single payload bit, and adjacent pairs within a circulant, encode to weight >= 12
    eye = np.eye(1700, dtype=np.uint8)
    assert bundled_code.encode(eye).sum(axis=1).min() >= 12
    pairs = eye[:-1] ^ eye[1:]
    assert bundled_code.encode(pairs).sum(axis=1).min() >= 12
