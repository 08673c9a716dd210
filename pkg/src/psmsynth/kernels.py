"""Numerical hot paths for design-space exploration.

Each kernel has a compiled implementation (numba ``@njit``) and a vectorized
pure-numpy fallback.  Selection: the fallback is used when numba is not
installed or when the ``PSMSYNTH_NO_NUMBA`` environment variable is set to a
non-empty value.  Both paths are exported so benchmarks and tests can compare
them directly regardless of the active default.
"""

from __future__ import annotations

import os

import numpy as np

NUMBA_DISABLED = bool(os.environ.get("PSMSYNTH_NO_NUMBA"))
HAVE_NUMBA = False
if not NUMBA_DISABLED:
    try:
        from numba import njit
        HAVE_NUMBA = True
    except ImportError:  # pragma: no cover - depends on environment
        pass
if not HAVE_NUMBA:
    def njit(*args, **kwargs):  # no-op decorator fallback
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


# --- Brute-force non-dominated mask (the O(n^2) oracle) ----------------------

@njit(cache=True)
def _pareto_mask_brute_jit(xs, ys):  # pragma: no cover - exercised via dispatch
    n = xs.shape[0]
    keep = np.ones(n, dtype=np.bool_)
    for i in range(n):
        for j in range(n):
            if (
                xs[j] <= xs[i]
                and ys[j] <= ys[i]
                and (xs[j] < xs[i] or ys[j] < ys[i])
            ):
                keep[i] = False
                break
    return keep


def _pareto_mask_brute_numpy(xs, ys, chunk: int = 512):
    n = xs.shape[0]
    keep = np.ones(n, dtype=np.bool_)
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        cx = xs[lo:hi, None]
        cy = ys[lo:hi, None]
        dominated = (
            (xs[None, :] <= cx)
            & (ys[None, :] <= cy)
            & ((xs[None, :] < cx) | (ys[None, :] < cy))
        ).any(axis=1)
        keep[lo:hi] = ~dominated
    return keep


def pareto_mask_brute(xs, ys):
    """Exact non-dominated mask by pairwise comparison: a point is removed iff
    another point is <= in both coordinates and < in at least one (exact ties
    are kept).  Quadratic; used as the oracle."""
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    ys = np.ascontiguousarray(ys, dtype=np.float64)
    if HAVE_NUMBA:
        return _pareto_mask_brute_jit(xs, ys)
    return _pareto_mask_brute_numpy(xs, ys)


# --- Sort-and-scan non-dominated mask ----------------------------------------

@njit(cache=True)
def _pareto_scan_jit(xs, ys, order):  # pragma: no cover - exercised via dispatch
    n = xs.shape[0]
    keep = np.ones(n, dtype=np.bool_)
    best_y = np.inf
    best_x = np.inf
    for k in range(n):
        i = order[k]
        if ys[i] > best_y or (ys[i] == best_y and best_x < xs[i]):
            keep[i] = False
        elif ys[i] < best_y:
            best_y = ys[i]
            best_x = xs[i]
    return keep


def _pareto_scan_numpy(xs, ys, order):
    n = xs.shape[0]
    keep = np.ones(n, dtype=np.bool_)
    best_y = np.inf
    best_x = np.inf
    for i in order:
        if ys[i] > best_y or (ys[i] == best_y and best_x < xs[i]):
            keep[i] = False
        elif ys[i] < best_y:
            best_y = ys[i]
            best_x = xs[i]
    return keep


def pareto_mask(xs, ys):
    """Non-dominated mask via lexicographic sort and a single min-scan.
    Identical semantics to `pareto_mask_brute` in O(n log n)."""
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    ys = np.ascontiguousarray(ys, dtype=np.float64)
    order = np.lexsort((ys, xs))
    if HAVE_NUMBA:
        return _pareto_scan_jit(xs, ys, order)
    return _pareto_scan_numpy(xs, ys, order)


# --- Cartesian-product configuration evaluation ------------------------------
#
# Alternatives of all groups are packed into flat arrays; `offsets[g]` is the
# start of group g and `sizes[g]` its length.  A configuration index decodes
# mixed-radix with the last group varying fastest (plain nested-loop order).

@njit(cache=True)
def _evaluate_combos_jit(start, count, offsets, sizes, f_req, f_max, power, area):
    # pragma: no cover - exercised via dispatch
    n_groups = sizes.shape[0]
    out_area = np.empty(count, dtype=np.float64)
    out_energy = np.empty(count, dtype=np.float64)
    out_feasible = np.empty(count, dtype=np.bool_)
    digits = np.empty(n_groups, dtype=np.int64)
    for k in range(count):
        idx = start + k
        for g in range(n_groups - 1, -1, -1):
            digits[g] = idx % sizes[g]
            idx //= sizes[g]
        fc = 0.0
        fm = np.inf
        a = 0.0
        for g in range(n_groups):
            row = offsets[g] + digits[g]
            if f_req[row] > fc:
                fc = f_req[row]
            if f_max[row] < fm:
                fm = f_max[row]
            a += area[row]
        e = 0.0
        for g in range(n_groups):
            row = offsets[g] + digits[g]
            e += power[row] * (fc / f_max[row])
        out_area[k] = a
        out_energy[k] = e
        out_feasible[k] = fc <= fm
    return out_area, out_energy, out_feasible


def _evaluate_combos_numpy(start, count, offsets, sizes, f_req, f_max, power, area):
    n_groups = sizes.shape[0]
    idx = np.arange(start, start + count, dtype=np.int64)
    rows = np.empty((n_groups, count), dtype=np.int64)
    for g in range(n_groups - 1, -1, -1):
        rows[g] = offsets[g] + idx % sizes[g]
        idx //= sizes[g]
    fc = f_req[rows].max(axis=0)
    fm = f_max[rows].min(axis=0)
    out_area = area[rows].sum(axis=0)
    out_energy = (power[rows] * (fc[None, :] / f_max[rows])).sum(axis=0)
    return out_area, out_energy, fc <= fm


def evaluate_combos(start, count, offsets, sizes, f_req, f_max, power, area):
    """Evaluate configurations [start, start+count) of the cartesian product.

    Returns (total area, energy-per-second at the common frequency, feasible)
    arrays; multiply energy by the accounting window outside.
    """
    offsets = np.ascontiguousarray(offsets, dtype=np.int64)
    sizes = np.ascontiguousarray(sizes, dtype=np.int64)
    f_req = np.ascontiguousarray(f_req, dtype=np.float64)
    f_max = np.ascontiguousarray(f_max, dtype=np.float64)
    power = np.ascontiguousarray(power, dtype=np.float64)
    area = np.ascontiguousarray(area, dtype=np.float64)
    if HAVE_NUMBA:
        return _evaluate_combos_jit(start, count, offsets, sizes, f_req, f_max, power, area)
    return _evaluate_combos_numpy(start, count, offsets, sizes, f_req, f_max, power, area)


IMPLEMENTATIONS = {
    "pareto_mask_brute": {
        "compiled": _pareto_mask_brute_jit,
        "numpy": _pareto_mask_brute_numpy,
    },
    "pareto_mask": {
        "compiled": _pareto_scan_jit,
        "numpy": _pareto_scan_numpy,
    },
    "evaluate_combos": {
        "compiled": _evaluate_combos_jit,
        "numpy": _evaluate_combos_numpy,
    },
}
