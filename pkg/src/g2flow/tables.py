"""Combinatorial tables for exterior algebra on a 7-dimensional fiber.

Alternating k-covectors are stored compressed: one coefficient per strictly
increasing multi-index, in lexicographic order, so that

    alpha = sum_{I increasing} alpha_I e^I.

All tables below are built once (cached) and shared; indices are 0-based
internally (axes 1..7 of the public API map to 0..6 here).
"""

from functools import lru_cache
from itertools import combinations, permutations

import numpy as np

DIM = 7


@lru_cache(maxsize=None)
def index_sets(k: int) -> tuple[tuple[int, ...], ...]:
    """Strictly increasing k-tuples from {0..6}, lexicographic."""
    if not 0 <= k <= DIM:
        raise ValueError(f"degree {k} out of range 0..{DIM}")
    return tuple(combinations(range(DIM), k))


@lru_cache(maxsize=None)
def index_position(k: int) -> dict:
    return {idx: pos for pos, idx in enumerate(index_sets(k))}


def num_components(k: int) -> int:
    return len(index_sets(k))


def sort_sign(indices) -> tuple[int, tuple[int, ...]]:
    """Sign of the permutation sorting `indices`; sign 0 on repeats."""
    idx = list(indices)
    if len(set(idx)) != len(idx):
        return 0, ()
    sign = 1
    # insertion sort, counting transpositions
    for i in range(1, len(idx)):
        j = i
        while j > 0 and idx[j - 1] > idx[j]:
            idx[j - 1], idx[j] = idx[j], idx[j - 1]
            sign = -sign
            j -= 1
    return sign, tuple(idx)


@lru_cache(maxsize=None)
def wedge_table(k: int, l: int) -> np.ndarray:
    """Signs W with (a^b)_out = sum W[out, i, j] a_i b_j, shape (C_{k+l}, C_k, C_l)."""
    if k + l > DIM:
        raise ValueError("wedge degree exceeds 7")
    table = np.zeros((num_components(k + l), num_components(k), num_components(l)))
    pos_out = index_position(k + l)
    for pi, I in enumerate(index_sets(k)):
        for pj, J in enumerate(index_sets(l)):
            sign, merged = sort_sign(I + J)
            if sign:
                table[pos_out[merged], pi, pj] = sign
    return table


@lru_cache(maxsize=None)
def interior_table(k: int) -> np.ndarray:
    """Signs T with (X . a)_out = sum T[i, out, in] X^i a_in, shape (7, C_{k-1}, C_k)."""
    if k < 1:
        raise ValueError("interior product needs degree >= 1")
    table = np.zeros((DIM, num_components(k - 1), num_components(k)))
    pos_out = index_position(k - 1)
    for pj, J in enumerate(index_sets(k)):
        for m, axis in enumerate(J):
            rest = J[:m] + J[m + 1:]
            table[axis, pos_out[rest], pj] = (-1.0) ** m
    return table


@lru_cache(maxsize=None)
def ext_d_table(k: int) -> np.ndarray:
    """Signs D with (da)_out = sum_axis D[axis, out, in] (d_axis a)_in."""
    if k >= DIM:
        raise ValueError("cannot raise degree above 7")
    table = np.zeros((DIM, num_components(k + 1), num_components(k)))
    pos_in = index_position(k)
    for pj, J in enumerate(index_sets(k + 1)):
        for m, axis in enumerate(J):
            rest = J[:m] + J[m + 1:]
            table[axis, pj, pos_in[rest]] = (-1.0) ** m
    return table


@lru_cache(maxsize=None)
def expand_table(k: int) -> np.ndarray:
    """Signed (7^k, C_k) matrix mapping compressed storage to the full tensor."""
    full = np.zeros((DIM ** k, num_components(k)))
    for pos, I in enumerate(index_sets(k)):
        for perm in permutations(I):
            sign, _ = sort_sign(perm)
            flat = 0
            for idx in perm:
                flat = flat * DIM + idx
            full[flat, pos] = sign
    return full


@lru_cache(maxsize=None)
def compress_positions(k: int) -> np.ndarray:
    """Flat positions of the increasing multi-indices inside the full 7^k layout."""
    pos = []
    for I in index_sets(k):
        flat = 0
        for idx in I:
            flat = flat * DIM + idx
        pos.append(flat)
    return np.array(pos, dtype=np.intp)


@lru_cache(maxsize=None)
def star_tables(k: int) -> tuple[np.ndarray, np.ndarray]:
    """Complement maps for the Hodge star on k-forms.

    Returns (src, sign) of length C_{7-k} so that, with raised input a^,
    (star a)[out] = sign[out] * a^[src[out]] * sqrt(det g).
    """
    comp_sets = index_sets(DIM - k)
    pos_in = index_position(k)
    src = np.empty(len(comp_sets), dtype=np.intp)
    sign = np.empty(len(comp_sets))
    for pos_out, J in enumerate(comp_sets):
        I = tuple(sorted(set(range(DIM)) - set(J)))
        s, _ = sort_sign(I + J)
        src[pos_out] = pos_in[I]
        sign[pos_out] = s
    return src, sign


@lru_cache(maxsize=None)
def triple_wedge_223() -> np.ndarray:
    """Signs T[A,B,C] of e^A ^ e^B ^ e^C = T e^{1..7} for degrees (2,2,3)."""
    table = np.zeros((num_components(2), num_components(2), num_components(3)))
    for pa, A in enumerate(index_sets(2)):
        for pb, B in enumerate(index_sets(2)):
            for pc, C in enumerate(index_sets(3)):
                sign, merged = sort_sign(A + B + C)
                if sign and merged == tuple(range(DIM)):
                    table[pa, pb, pc] = sign
    return table


@lru_cache(maxsize=None)
def _minor_index_arrays(k: int):
    sets = np.array(index_sets(k), dtype=np.intp)  # (C, k)
    return sets


def compound_matrix(m: np.ndarray, k: int) -> np.ndarray:
    """k-th compound of a batch of 7x7 matrices: all k x k minors.

    Input shape (..., 7, 7), output (..., C_k, C_k) with
    out[I, K] = det(m[rows I, cols K]). Direct Leibniz expansion; only
    k <= 3 is needed (larger degrees go through complementary minors).
    """
    if k == 0:
        return np.ones(m.shape[:-2] + (1, 1))
    if k == 1:
        return m
    rows = _minor_index_arrays(k)  # (C, k)
    cols = rows
    c = rows.shape[0]
    out = np.zeros(m.shape[:-2] + (c, c))
    for perm in permutations(range(k)):
        sign, _ = sort_sign(perm)
        term = np.ones(m.shape[:-2] + (c, c))
        for a in range(k):
            r = rows[:, a][:, None]          # (C, 1)
            cc = cols[:, perm[a]][None, :]   # (1, C)
            term = term * m[..., r, cc]
        out += sign * term
    return out


@lru_cache(maxsize=None)
def complement_positions(k: int) -> np.ndarray:
    """Position in C_{7-k} of the complement of each increasing k-set."""
    pos_c = index_position(DIM - k)
    out = np.empty(num_components(k), dtype=np.intp)
    for pos, I in enumerate(index_sets(k)):
        out[pos] = pos_c[tuple(sorted(set(range(DIM)) - set(I)))]
    return out


@lru_cache(maxsize=None)
def index_sum_signs(k: int) -> np.ndarray:
    """(-1)^(sum of indices) per increasing k-set (1-based index sum, Jacobi)."""
    out = np.empty(num_components(k))
    for pos, I in enumerate(index_sets(k)):
        out[pos] = (-1.0) ** (sum(I) + k)  # 1-based sum = 0-based sum + k
    return out
