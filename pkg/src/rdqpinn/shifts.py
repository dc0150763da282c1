"""Nested parameter-shift evaluation of circuit derivative tables.

Every rotation angle of a circuit occupies one slot, and the expectation value
is a degree-1 trigonometric polynomial in each slot separately. A derivative
of order r with respect to the multi-index (m_1, ..., m_r) is therefore exact:

    D = 2^-r * sum over sign vectors s in {+1,-1}^r of
        prod(s) * f(slots + (pi/2) * sum_i s_i * e_{m_i})

Repeated slots make shifted evaluations collide (net shifts cancel), so the
engine dedupes shifted configurations across all requested multi-indices and
evaluates each distinct configuration once, batched over both configurations
and base points.
"""

from __future__ import annotations

import itertools
from collections import defaultdict

import numpy as np

HALF_PI = np.pi / 2.0


def collect_patterns(multi_indices):
    """Map multi-indices to (pattern column, coefficient) lists.

    Returns (pattern_list, combos) where pattern_list[i] is a tuple of
    (slot, net_shift_count) pairs and combos[mi] is a list of (column, coeff).
    """
    pattern_cols: dict[tuple, int] = {}
    combos: dict[tuple, list] = {}
    for mi in multi_indices:
        r = len(mi)
        acc: dict[tuple, float] = defaultdict(float)
        for signs in itertools.product((1, -1), repeat=r):
            coeff = 1.0
            net: dict[int, int] = defaultdict(int)
            for slot, s in zip(mi, signs):
                net[slot] += s
                coeff *= s
            key = tuple(sorted((slot, k) for slot, k in net.items() if k != 0))
            acc[key] += coeff / (2.0**r)
        entries = []
        for key, coeff in acc.items():
            if key not in pattern_cols:
                pattern_cols[key] = len(pattern_cols)
            entries.append((pattern_cols[key], coeff))
        combos[mi] = entries
    patterns = [None] * len(pattern_cols)
    for key, col in pattern_cols.items():
        patterns[col] = key
    return patterns, combos


def derivative_tables(eval_fn, base_slots: np.ndarray, multi_indices,
                      chunk_rows: int = 65536):
    """Exact derivative tables for a batch of base slot vectors.

    ``eval_fn`` maps a (B, n_slots) batch to (B, K) readouts. Returns
    (tables, n_evals) where tables[mi] has shape (P, K) and holds the
    derivative of every readout w.r.t. the slot multi-index ``mi`` at every
    base point. The empty multi-index () requests plain values.
    """
    base_slots = np.asarray(base_slots, dtype=np.float64)
    n_points, n_slots = base_slots.shape
    multi_indices = [tuple(sorted(mi)) for mi in multi_indices]
    patterns, combos = collect_patterns(multi_indices)
    n_pat = len(patterns)
    shift_mat = np.zeros((n_pat, n_slots))
    for col, key in enumerate(patterns):
        for slot, k in key:
            shift_mat[col, slot] = HALF_PI * k

    pat_per_chunk = max(1, chunk_rows // max(n_points, 1))
    z_cols = None
    for start in range(0, n_pat, pat_per_chunk):
        stop = min(start + pat_per_chunk, n_pat)
        block = base_slots[None, :, :] + shift_mat[start:stop, None, :]
        z = eval_fn(block.reshape(-1, n_slots))
        if z_cols is None:
            z_cols = np.empty((n_pat, n_points, z.shape[1]))
        z_cols[start:stop] = z.reshape(stop - start, n_points, -1)

    tables = {}
    for mi in combos:
        acc = np.zeros((n_points, z_cols.shape[2]))
        for col, coeff in combos[mi]:
            acc += coeff * z_cols[col]
        tables[mi] = acc
    return tables, n_pat * n_points


def first_order(slots: tuple[int, ...]):
    return [(s,) for s in slots]


def second_order(slots_a, slots_b):
    """Unordered pairs (a, b) with a from slots_a, b from slots_b."""
    seen = set()
    out = []
    for a in slots_a:
        for b in slots_b:
            key = tuple(sorted((a, b)))
            if key not in seen:
                seen.add(key)
                out.append(key)
    return out


def third_order(slots_a, slots_b, slots_c):
    seen = set()
    out = []
    for a in slots_a:
        for b in slots_b:
            for c in slots_c:
                key = tuple(sorted((a, b, c)))
                if key not in seen:
                    seen.add(key)
                    out.append(key)
    return out
