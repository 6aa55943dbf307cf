"""
Vectorized building blocks of the counting engines.

Tables are int64 numpy arrays; every count that can outgrow 64 bits is
accumulated through ``exact_dot`` into a Python int.
"""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

INT64_LIMIT = 2 ** 63 - 1
CHUNK_ROWS = 1 << 22


@dataclass
class SideTable:
    """Multiset records of one side: exact keys, window lanes and multinomial weights."""
    keys: np.ndarray
    windows: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return len(self.weights)


def multiset_count(size, m):
    return math.comb(size + m - 1, m)


def enumerate_multisets(columns, m, lead=None):
    """Sums of ``columns`` rows over all m-multisets of row indices.

    With ``lead`` set only multisets whose smallest index is ``lead`` are
    produced.  Rows come out in lexicographic order of the sorted index
    tuple, so concatenating the per-lead outputs in lead order reproduces
    the full enumeration.  Returns (sums, weights) with
    weights = m! / prod(multiplicity!).
    """
    R = columns.shape[0]
    last = np.arange(R, dtype=np.int64) if lead is None else np.array([lead], dtype=np.int64)
    sums = columns[last].copy()
    run = np.ones(len(last), dtype=np.int64)
    denom = np.ones(len(last), dtype=np.int64)
    for _ in range(m - 1):
        counts = R - last
        parent = np.repeat(np.arange(len(last)), counts)
        offsets = np.arange(len(parent)) - np.repeat(np.cumsum(counts) - counts, counts)
        nxt = last[parent] + offsets
        run = np.where(offsets == 0, run[parent] + 1, 1)
        denom = denom[parent] * run
        sums = sums[parent] + columns[nxt]
        last = nxt
    return sums, math.factorial(m) // denom


def enumerate_partitioned(columns, m, workers=1):
    """``enumerate_multisets`` split by leading element across a thread pool."""
    R = columns.shape[0]
    if workers <= 1 or R < 2:
        return enumerate_multisets(columns, m)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(lambda lead: enumerate_multisets(columns, m, lead), range(R)))
    sums = np.concatenate([p[0] for p in parts])
    weights = np.concatenate([p[1] for p in parts])
    return sums, weights


def ordered_tuples(columns, m):
    """Sums of ``columns`` rows over all ordered m-tuples (oracle path)."""
    sums = columns.copy()
    for _ in range(m - 1):
        sums = (sums[:, None, :] + columns[None, :, :]).reshape(-1, columns.shape[1])
    return sums


def cartesian_combine(first, second):
    """Records of two slot groups on one side: lanes add, weights multiply."""
    (sa, wa), (sb, wb) = first, second
    sums = (sa[:, None, :] + sb[None, :, :]).reshape(-1, sa.shape[1])
    weights = (wa[:, None] * wb[None, :]).reshape(-1)
    return sums, weights


def exact_dot(a, b):
    """sum(a * b) for int64 arrays, exact beyond 64 bits."""
    if len(a) == 0:
        return 0
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    bound = int(np.abs(a).max()) * int(np.abs(b).max())
    if bound == 0:
        return 0
    if bound * len(a) <= INT64_LIMIT:
        return int(np.dot(a, b))
    if bound > INT64_LIMIT:
        return int(np.dot(a.astype(object), b.astype(object)))
    step = max(1, INT64_LIMIT // bound)
    return sum(int(np.dot(a[i:i + step], b[i:i + step])) for i in range(0, len(a), step))


def lexsort_rows(keys):
    """Order sorting the rows of a 2-D key array, first column primary."""
    if keys.shape[1] == 0:
        return np.arange(keys.shape[0])
    return np.lexsort(keys.T[::-1])


def reduce_rows(keys, counts):
    """Merge equal key rows, summing their counts."""
    if len(counts) == 0:
        return keys, counts
    order = lexsort_rows(keys)
    keys, counts = keys[order], counts[order]
    if keys.shape[1] == 0:
        return keys[:1], np.array([counts.sum(dtype=np.int64)])
    starts = np.flatnonzero(np.concatenate(([True], np.any(keys[1:] != keys[:-1], axis=1))))
    return keys[starts], np.add.reduceat(counts, starts)


def joint_group_ids(left_keys, right_keys):
    """Dense ids such that two rows share an id iff their keys are equal."""
    keys = np.concatenate([left_keys, right_keys])
    ids = np.zeros(len(keys), dtype=np.int64)
    if keys.shape[1] and len(keys):
        order = lexsort_rows(keys)
        ordered = keys[order]
        fresh = np.concatenate(([False], np.any(ordered[1:] != ordered[:-1], axis=1)))
        ids[order] = np.cumsum(fresh)
    return ids[:len(left_keys)], ids[len(left_keys):]


def window_prefix(data_groups, data_values, data_weights, query_groups, query_values, inclusive):
    """Weight of data strictly before each query in (group, value) order.

    Data (g, v) counts for query (G, V) when g < G, or g == G and v <= V
    (``inclusive``) or v < V (otherwise).  Implemented as a merge: data and
    queries are sorted together and the running data weight is read off at
    each query position.
    """
    nd = len(data_values)
    groups = np.concatenate([data_groups, query_groups])
    values = np.concatenate([data_values, query_values])
    data_first = 0 if inclusive else 1
    kind = np.concatenate([np.full(nd, data_first, dtype=np.int8),
                           np.full(len(query_values), 1 - data_first, dtype=np.int8)])
    order = np.lexsort((kind, values, groups))
    weights = np.concatenate([data_weights, np.zeros(len(query_values), dtype=np.int64)])
    running = np.cumsum(weights[order])
    position = np.empty_like(order)
    position[order] = np.arange(len(order))
    return running[position[nd:]]


def expand_ranges(lo, hi, limit=CHUNK_ROWS):
    """Yield (row, partner) index chunks covering partner in [lo[row], hi[row])."""
    lengths = hi - lo
    if len(lengths) == 0:
        return
    ends = np.cumsum(lengths)
    start = 0
    while start < len(lengths):
        base = ends[start] - lengths[start]
        stop = max(start + 1, int(np.searchsorted(ends, base + limit, side="right")))
        chunk = lengths[start:stop]
        rows = np.repeat(np.arange(start, stop), chunk)
        if len(rows):
            offsets = np.arange(len(rows)) - np.repeat(np.cumsum(chunk) - chunk, chunk)
            yield rows, lo[rows] + offsets
        start = stop
