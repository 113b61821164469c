"""Systematic binary LDPC codes: alist I/O, encoding, belief-propagation decoding.

Codewords are laid out payload first: bits ``0..k-1`` carry the payload and
``k..n-1`` the parity. The parity-check matrix is ``H = [H_s | H_p]`` with
``H_p`` square; encoding solves ``H_p p = H_s u`` over GF(2).

L-values follow the convention ``L = log P(b=0)/P(b=1)``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
from numba import njit

log = logging.getLogger(__name__)

DUAL_DIAGONAL = "dual-diagonal"
LOWER_TRIANGULAR = "lower-triangular"
DENSE = "dense"
DECODE_ONLY = "decode-only"


class AlistError(ValueError):
    def __init__(self, msg: str, line: int | None = None):
        super().__init__(f"line {line}: {msg}" if line else msg)
        self.line = line


class EncoderUnavailable(RuntimeError):
    pass


class DecodeOnlyWarning(UserWarning):
    pass


def _gf2_rank(mat: np.ndarray) -> int:
    a = mat.astype(np.uint8).copy()
    rows, cols = a.shape
    rank = 0
    for c in range(cols):
        pivot = np.nonzero(a[rank:, c])[0]
        if len(pivot) == 0:
            continue
        p = rank + pivot[0]
        if p != rank:
            a[[rank, p]] = a[[p, rank]]
        hit = np.nonzero(a[:, c])[0]
        hit = hit[hit != rank]
        a[hit] ^= a[rank]
        rank += 1
        if rank == rows:
            break
    return rank


def _gf2_inverse(mat: np.ndarray) -> np.ndarray:
    n = mat.shape[0]
    a = np.concatenate([mat.astype(np.uint8), np.eye(n, dtype=np.uint8)], axis=1)
    for c in range(n):
        pivot = np.nonzero(a[c:, c])[0]
        if len(pivot) == 0:
            raise np.linalg.LinAlgError("singular over GF(2)")
        p = c + pivot[0]
        if p != c:
            a[[c, p]] = a[[p, c]]
        hit = np.nonzero(a[:, c])[0]
        hit = hit[hit != c]
        a[hit] ^= a[c]
    return a[:, n:]


@dataclass(frozen=True)
class LdpcCode:
    n: int
    k: int
    H: sp.csr_matrix = field(repr=False)
    structure: str = DECODE_ONLY

    @classmethod
    def from_matrix(cls, H) -> "LdpcCode":
        H = sp.csr_matrix(H, dtype=np.uint8)
        H.sum_duplicates()
        m, n = H.shape
        k = n - m
        if k <= 0:
            raise ValueError(f"H has {m} rows and only {n} columns")
        structure = _detect_structure(H, k)
        if structure == DECODE_ONLY:
            warnings.warn("parity part of H is singular; code usable for decoding only", DecodeOnlyWarning)
        return cls(n, k, H, structure)

    @property
    def m(self) -> int:
        return self.n - self.k

    @property
    def rate(self) -> float:
        return self.k / self.n

    @property
    def can_encode(self) -> bool:
        return self.structure != DECODE_ONLY

    @cached_property
    def _Hs(self) -> sp.csr_matrix:
        return self.H[:, :self.k].tocsr()

    @cached_property
    def _Hp_dense(self) -> np.ndarray:
        return self.H[:, self.k:].toarray().astype(np.uint8)

    @cached_property
    def _Hp_inv(self) -> np.ndarray:
        return _gf2_inverse(self._Hp_dense)

    @cached_property
    def graph(self) -> "TannerGraph":
        return TannerGraph.from_matrix(self.H)

    def syndrome(self, words) -> np.ndarray:
        w = np.atleast_2d(np.asarray(words, dtype=np.int64))
        return (self.H @ w.T).T % 2

    def is_codeword(self, word) -> bool:
        return not self.syndrome(word).any()

    def encode(self, payload) -> np.ndarray:
        """Systematic encoding of one payload (k,) or a batch (B, k)."""
        if not self.can_encode:
            raise EncoderUnavailable("code is decode-only")
        u = np.asarray(payload, dtype=np.uint8)
        single = u.ndim == 1
        u = np.atleast_2d(u)
        if u.shape[1] != self.k:
            raise ValueError(f"expected {self.k} payload bits, got {u.shape[1]}")
        syn = ((self._Hs @ u.T.astype(np.int64)) % 2).astype(np.uint8)  # (m, B)
        if self.structure == DUAL_DIAGONAL:
            parity = np.bitwise_xor.accumulate(syn, axis=0)
        elif self.structure == LOWER_TRIANGULAR:
            parity = _forward_substitute(self._Hp_dense, syn)
        else:
            parity = (self._Hp_inv.astype(np.int64) @ syn) % 2
        out = np.concatenate([u, parity.T.astype(np.uint8)], axis=1)
        return out[0] if single else out


def _forward_substitute(L: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    out = np.zeros_like(rhs)
    for i in range(L.shape[0]):
        acc = rhs[i].copy()
        prev = np.nonzero(L[i, :i])[0]
        if len(prev):
            acc ^= np.bitwise_xor.reduce(out[prev], axis=0)
        out[i] = acc
    return out


def _detect_structure(H: sp.csr_matrix, k: int) -> str:
    Hp = H[:, k:].tocoo()
    m = H.shape[0]
    rows, cols = Hp.row, Hp.col
    if np.all(cols <= rows) and np.count_nonzero(rows == cols) == m:
        if np.all((rows - cols) <= 1) and len(rows) == 2 * m - 1:
            return DUAL_DIAGONAL
        return LOWER_TRIANGULAR
    if _gf2_rank(H[:, k:].toarray()) == m:
        return DENSE
    return DECODE_ONLY


class TannerGraph(NamedTuple):
    """Edge lists grouped by check node, plus a variable-node index into them."""

    n: int
    m: int
    check_ptr: np.ndarray
    edge_var: np.ndarray
    var_ptr: np.ndarray
    var_edges: np.ndarray

    @classmethod
    def from_matrix(cls, H: sp.csr_matrix) -> "TannerGraph":
        H = sp.csr_matrix(H)
        H.sort_indices()
        m, n = H.shape
        check_ptr = H.indptr.astype(np.int64)
        edge_var = H.indices.astype(np.int64)
        order = np.argsort(edge_var, kind="stable")
        var_ptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(edge_var, minlength=n), out=var_ptr[1:])
        return cls(n, m, check_ptr, edge_var, var_ptr, order.astype(np.int64))


class DecodeResult(NamedTuple):
    bits: np.ndarray  # hard decisions on the full word(s)
    converged: np.ndarray | bool
    iterations: np.ndarray | int
    payload: np.ndarray


@njit(cache=True)
def _syndrome_ok(hard, check_ptr, edge_var):
    for c in range(len(check_ptr) - 1):
        acc = 0
        for e in range(check_ptr[c], check_ptr[c + 1]):
            acc ^= hard[edge_var[e]]
        if acc:
            return False
    return True


@njit(cache=True)
def _decode_batch(llrs, check_ptr, edge_var, var_ptr, var_edges, max_iter, sum_product, alpha):
    B, n = llrs.shape
    m = len(check_ptr) - 1
    n_edges = len(edge_var)
    hard_out = np.zeros((B, n), dtype=np.uint8)
    converged = np.zeros(B, dtype=np.bool_)
    iters = np.zeros(B, dtype=np.int64)
    v2c = np.empty(n_edges)
    c2v = np.empty(n_edges)
    total = np.empty(n)
    hard = np.empty(n, dtype=np.uint8)
    for b in range(B):
        ch = llrs[b]
        for v in range(n):
            hard[v] = 1 if ch[v] < 0 else 0
        if _syndrome_ok(hard, check_ptr, edge_var):
            hard_out[b] = hard
            converged[b] = True
            continue
        for e in range(n_edges):
            v2c[e] = ch[edge_var[e]]
        it = 0
        ok = False
        while it < max_iter:
            it += 1
            for c in range(m):
                lo, hi = check_ptr[c], check_ptr[c + 1]
                if sum_product:
                    prod = 1.0
                    for e in range(lo, hi):
                        t = np.tanh(0.5 * v2c[e])
                        if t == 0.0:
                            t = 1e-300
                        prod *= t
                    for e in range(lo, hi):
                        t = np.tanh(0.5 * v2c[e])
                        if t == 0.0:
                            t = 1e-300
                        x = prod / t
                        if x > 0.999999999999:
                            x = 0.999999999999
                        elif x < -0.999999999999:
                            x = -0.999999999999
                        c2v[e] = 2.0 * np.arctanh(x)
                else:
                    min1 = np.inf
                    min2 = np.inf
                    arg = -1
                    sgn = 1.0
                    for e in range(lo, hi):
                        x = v2c[e]
                        if x < 0:
                            sgn = -sgn
                            a = -x
                        else:
                            a = x
                        if a < min1:
                            min2 = min1
                            min1 = a
                            arg = e
                        elif a < min2:
                            min2 = a
                    for e in range(lo, hi):
                        mag = min2 if e == arg else min1
                        s = sgn if v2c[e] >= 0 else -sgn
                        c2v[e] = alpha * s * mag
            for v in range(n):
                acc = ch[v]
                for j in range(var_ptr[v], var_ptr[v + 1]):
                    acc += c2v[var_edges[j]]
                total[v] = acc
                hard[v] = 1 if acc < 0 else 0
                for j in range(var_ptr[v], var_ptr[v + 1]):
                    e = var_edges[j]
                    v2c[e] = acc - c2v[e]
            if _syndrome_ok(hard, check_ptr, edge_var):
                ok = True
                break
        hard_out[b] = hard
        converged[b] = ok
        iters[b] = it
    return hard_out, converged, iters


def decode(code: LdpcCode, llrs, max_iter: int = 20, variant: str = "min-sum",
           alpha: float = 0.75) -> DecodeResult:
    """Flooding-schedule BP decoding with early exit on a zero syndrome.

    ``variant`` is ``"min-sum"`` (normalized by ``alpha``) or ``"sum-product"``.
    Accepts one word ``(n,)`` or a batch ``(B, n)``.
    """
    if variant not in ("min-sum", "sum-product"):
        raise ValueError(f"unknown decoder variant {variant!r}")
    x = np.asarray(llrs, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != code.n:
        raise ValueError(f"expected {code.n} L-values, got {x.shape[1]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("L-values must be finite")
    g = code.graph
    bits, conv, iters = _decode_batch(np.ascontiguousarray(x), g.check_ptr, g.edge_var, g.var_ptr,
                                      g.var_edges, int(max_iter), variant == "sum-product", float(alpha))
    if single:
        return DecodeResult(bits[0], bool(conv[0]), int(iters[0]), bits[0, :code.k])
    return DecodeResult(bits, conv, iters, bits[:, :code.k])


# ---------------------------------------------------------------- alist I/O

def parse_alist(text: str) -> LdpcCode:
    lines = [(i, ln.split()) for i, ln in enumerate(text.splitlines(), start=1)]
    lines = [(i, toks) for i, toks in lines if toks]
    pos = 0

    def ints(count: int | None = None):
        nonlocal pos
        if pos >= len(lines):
            raise AlistError("unexpected end of file", lines[-1][0] if lines else None)
        lineno, toks = lines[pos]
        pos += 1
        try:
            vals = [int(t) for t in toks]
        except ValueError:
            raise AlistError(f"non-integer token in {' '.join(toks)!r}", lineno) from None
        if count is not None and len(vals) != count:
            raise AlistError(f"expected {count} integers, got {len(vals)}", lineno)
        return vals, lineno

    (n, m), ln = ints(2)
    if n <= 0 or m <= 0 or m >= n:
        raise AlistError(f"bad dimensions n={n}, m={m}", ln)
    (max_cw, max_rw), _ = ints(2)
    col_w, _ = ints(n)
    row_w, _ = ints(m)
    rows, cols = [], []
    for v in range(n):
        vals, ln = ints()
        nz = [x for x in vals if x]
        if len(nz) != col_w[v] or len(vals) > max(max_cw, 1):
            raise AlistError(f"column {v + 1}: expected {col_w[v]} entries", ln)
        for c in nz:
            if not 1 <= c <= m:
                raise AlistError(f"column {v + 1}: row index {c} out of range", ln)
            rows.append(c - 1)
            cols.append(v)
    check_pairs = set()
    for c in range(m):
        vals, ln = ints()
        nz = [x for x in vals if x]
        if len(nz) != row_w[c]:
            raise AlistError(f"row {c + 1}: expected {row_w[c]} entries", ln)
        for v in nz:
            if not 1 <= v <= n:
                raise AlistError(f"row {c + 1}: column index {v} out of range", ln)
            check_pairs.add((c, v - 1))
    if check_pairs != set(zip(rows, cols)):
        raise AlistError("row and column lists disagree")
    H = sp.csr_matrix((np.ones(len(rows), dtype=np.uint8), (rows, cols)), shape=(m, n))
    return LdpcCode.from_matrix(H)


def load_alist(path) -> LdpcCode:
    return parse_alist(Path(path).read_text())


def format_alist(code_or_H) -> str:
    H = code_or_H.H if isinstance(code_or_H, LdpcCode) else sp.csr_matrix(code_or_H)
    H = sp.csr_matrix(H)
    H.sort_indices()
    m, n = H.shape
    Hc = H.tocsc()
    Hc.sort_indices()
    col_w = np.diff(Hc.indptr)
    row_w = np.diff(H.indptr)
    out = [f"{n} {m}", f"{col_w.max()} {row_w.max()}",
           " ".join(map(str, col_w)), " ".join(map(str, row_w))]
    for v in range(n):
        idx = list(Hc.indices[Hc.indptr[v]:Hc.indptr[v + 1]] + 1)
        out.append(" ".join(map(str, idx + [0] * (col_w.max() - len(idx)))))
    for c in range(m):
        idx = list(H.indices[H.indptr[c]:H.indptr[c + 1]] + 1)
        out.append(" ".join(map(str, idx + [0] * (row_w.max() - len(idx)))))
    return "\n".join(out) + "\n"


def save_alist(path, code_or_H) -> None:
    Path(path).write_text(format_alist(code_or_H))


# ------------------------------------------------------------- construction

def construct_qc_ira(n: int = 2040, k: int = 1700, lift: int = 17, col_weight: int = 3,
                     seed: int = 2019, min_weight: int = 12) -> sp.csr_matrix:
    """Quasi-cyclic information part plus a dual-diagonal (accumulator) parity part.

    The accumulator runs through the checks in block-interleaved order, so
    neighbouring rows of a circulant are far apart on the parity chain.
    Block columns are placed one at a time on the ``col_weight`` least-used
    block rows. Their shift tuple is the first one (in a seeded order) that
    closes no length-4 cycle, touches no two adjacent checks, and forms no
    codeword lighter than ``min_weight`` alone or together with one column
    already placed.
    """
    m = n - k
    if k % lift or m % lift:
        raise ValueError("k and n - k must be multiples of the lift size")
    mb, kb = m // lift, k // lift
    rng = np.random.default_rng(seed)
    degree = np.zeros(mb, dtype=np.int64)
    placed: list[dict[int, int]] = []
    near: list[list[np.ndarray]] = [[] for _ in range(m)]

    def row_set(col: dict[int, int]) -> np.ndarray:
        # checks touched by each of the lift columns of a block column: (lift, w).
        # Offset t of block row b sits at accumulator position t * mb + b, so
        # neighbouring circulant rows are mb apart along the parity chain.
        x = np.arange(lift)[:, None]
        blocks = np.array(sorted(col))
        return ((x + np.array([col[b] for b in blocks])) % lift) * mb + blocks

    for j in range(kb):
        tie = rng.permutation(mb)
        rows = sorted(np.lexsort((tie, degree))[:col_weight].tolist())
        for code in rng.permutation(lift**col_weight).tolist():
            col = {i: (code // lift**r) % lift for r, i in enumerate(rows)}
            if (_cycle_free(col, placed, lift) and _no_adjacent_rows(row_set(col), m)
                    and _light_words_absent(row_set(col), near, min_weight, m)):
                break
        else:
            raise RuntimeError(f"no admissible shifts for block column {j}")
        placed.append(col)
        for x, checks in enumerate(row_set(col)):
            for c in checks:
                near[c].append(checks)
        for i in col:
            degree[i] += 1

    r_idx, c_idx = [], []
    for j, col in enumerate(placed):
        rs = row_set(col)
        for x in range(lift):
            for r in rs[x]:
                r_idx.append(int(r))
                c_idx.append(j * lift + x)
    for p in range(m):
        r_idx.append(p)
        c_idx.append(k + p)
        if p:
            r_idx.append(p)
            c_idx.append(k + p - 1)
    return sp.csr_matrix((np.ones(len(r_idx), dtype=np.uint8), (r_idx, c_idx)), shape=(m, n))


def _cycle_free(col: dict[int, int], placed: list[dict[int, int]], lift: int) -> bool:
    rows = list(col)
    for other in placed:
        common = [i for i in rows if i in other]
        for a in range(len(common)):
            for b in range(a + 1, len(common)):
                i, i2 = common[a], common[b]
                if (col[i] - col[i2] - other[i] + other[i2]) % lift == 0:
                    return False
    return True


def _accumulated_weight(checks: np.ndarray, m: int) -> int:
    """Parity weight the accumulator needs to cancel a syndrome on ``checks``."""
    c = np.sort(checks)
    w = int((c[1::2] - c[0::2][:len(c) // 2]).sum())
    return w + (m - int(c[-1]) if len(c) % 2 else 0)


def _light_words_absent(rows: np.ndarray, near: list[list[np.ndarray]], min_weight: int, m: int) -> bool:
    """No codeword below ``min_weight`` built from one new column, or from it plus one placed column."""
    for checks in rows:
        if 1 + _accumulated_weight(checks, m) < min_weight:
            return False
        seen = set()
        for c in checks:
            for d in range(max(c - min_weight, 0), min(c + min_weight, m)):
                for other in near[d]:
                    key = id(other)
                    if key in seen:
                        continue
                    seen.add(key)
                    diff = np.setxor1d(checks, other)
                    if 2 + _accumulated_weight(diff, m) < min_weight:
                        return False
    return True


def _no_adjacent_rows(rows: np.ndarray, m: int) -> bool:
    srt = np.sort(rows, axis=1)
    return not np.any(np.diff(srt, axis=1) == 1)


def bundled_code_path() -> Path:
    return Path(__file__).with_name("data") / "ldpc_2040_1700.alist"


def load_bundled_code() -> LdpcCode:
    return load_alist(bundled_code_path())


# 4-bit L-value quantizer used between demapper and decoder
def quantize_llr(llrs, bits: int = 4, step: float = 1.0) -> np.ndarray:
    """Mid-rise uniform quantizer: levels +-step/2, +-3 step/2, ... saturating."""
    top = (1 << (bits - 1)) - 0.5
    q = np.floor(np.asarray(llrs, dtype=np.float64) / step) + 0.5
    return np.clip(q, -top, top) * step
