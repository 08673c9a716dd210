"""Numeric kernels: compiled and pure-numpy paths must agree exactly."""

import itertools

import numpy as np
import pytest

from psmsynth import kernels


def clouds(seed=0, count=50, max_n=600):
    rng = np.random.default_rng(seed)
    for i in range(count):
        n = int(rng.integers(1, max_n))
        xs = rng.random(n)
        ys = rng.random(n)
        if i % 3 == 0:
            # Quantized coordinates produce exact ties and duplicates.
            xs = np.round(xs, 1)
            ys = np.round(ys, 1)
        yield xs, ys


def reference_mask(xs, ys):
    n = len(xs)
    keep = np.ones(n, dtype=bool)
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


def test_brute_mask_matches_python_reference():
    for xs, ys in clouds(seed=1, count=20, max_n=120):
        assert np.array_equal(kernels.pareto_mask_brute(xs, ys), reference_mask(xs, ys))


def test_scan_mask_matches_brute_mask():
    for xs, ys in clouds(seed=2):
        assert np.array_equal(kernels.pareto_mask(xs, ys), kernels.pareto_mask_brute(xs, ys))


def test_exact_ties_are_kept():
    xs = np.array([1.0, 1.0, 2.0])
    ys = np.array([2.0, 2.0, 1.0])
    assert kernels.pareto_mask(xs, ys).all()
    assert kernels.pareto_mask_brute(xs, ys).all()


def test_single_point_and_dominated_point():
    xs = np.array([1.0])
    ys = np.array([1.0])
    assert kernels.pareto_mask(xs, ys).tolist() == [True]
    xs = np.array([1.0, 2.0])
    ys = np.array([1.0, 2.0])
    assert kernels.pareto_mask(xs, ys).tolist() == [True, False]


def _mask_impl_pairs(name):
    impls = kernels.IMPLEMENTATIONS[name]
    return impls["compiled"], impls["numpy"]


def test_both_mask_implementations_agree():
    brute_jit, brute_np = _mask_impl_pairs("pareto_mask_brute")
    scan_jit, scan_np = _mask_impl_pairs("pareto_mask")
    for xs, ys in clouds(seed=3, count=20):
        xs = np.ascontiguousarray(xs)
        ys = np.ascontiguousarray(ys)
        assert np.array_equal(brute_jit(xs, ys), brute_np(xs, ys))
        order = np.lexsort((ys, xs))
        assert np.array_equal(scan_jit(xs, ys, order), scan_np(xs, ys, order))


def _random_space(seed, n_groups=3, group_size=4):
    rng = np.random.default_rng(seed)
    n = n_groups * group_size
    return dict(
        offsets=np.arange(n_groups, dtype=np.int64) * group_size,
        sizes=np.full(n_groups, group_size, dtype=np.int64),
        f_req=rng.uniform(1e6, 2e8, n),
        f_max=rng.uniform(5e7, 2e8, n),
        power=rng.uniform(50.0, 300.0, n),
        area=rng.uniform(100.0, 9000.0, n),
    )


def _combo_reference(space):
    """Plain nested-loop evaluation in itertools.product order."""
    n_groups = len(space["sizes"])
    areas, energies, feasible = [], [], []
    for combo in itertools.product(*(range(s) for s in space["sizes"])):
        rows = [space["offsets"][g] + combo[g] for g in range(n_groups)]
        fc = max(space["f_req"][r] for r in rows)
        fm = min(space["f_max"][r] for r in rows)
        areas.append(sum(space["area"][r] for r in rows))
        energies.append(sum(space["power"][r] * (fc / space["f_max"][r]) for r in rows))
        feasible.append(fc <= fm)
    return np.array(areas), np.array(energies), np.array(feasible)


def test_combo_evaluation_matches_nested_loop_order():
    space = _random_space(4)
    total = int(np.prod(space["sizes"]))
    got_a, got_e, got_f = kernels.evaluate_combos(
        0, total, space["offsets"], space["sizes"],
        space["f_req"], space["f_max"], space["power"], space["area"],
    )
    ref_a, ref_e, ref_f = _combo_reference(space)
    np.testing.assert_allclose(got_a, ref_a, rtol=0, atol=0)
    np.testing.assert_allclose(got_e, ref_e, rtol=1e-12)
    assert np.array_equal(got_f, ref_f)


def test_combo_evaluation_chunking_is_seamless():
    space = _random_space(5)
    total = int(np.prod(space["sizes"]))
    whole = kernels.evaluate_combos(
        0, total, space["offsets"], space["sizes"],
        space["f_req"], space["f_max"], space["power"], space["area"],
    )
    parts = [
        kernels.evaluate_combos(
            start, min(7, total - start), space["offsets"], space["sizes"],
            space["f_req"], space["f_max"], space["power"], space["area"],
        )
        for start in range(0, total, 7)
    ]
    for k in range(3):
        np.testing.assert_array_equal(np.concatenate([p[k] for p in parts]), whole[k])


def test_combo_implementations_agree():
    jit_fn = kernels.IMPLEMENTATIONS["evaluate_combos"]["compiled"]
    np_fn = kernels.IMPLEMENTATIONS["evaluate_combos"]["numpy"]
    space = _random_space(6, n_groups=4, group_size=5)
    total = int(np.prod(space["sizes"]))
    args = (
        space["offsets"], space["sizes"],
        space["f_req"], space["f_max"], space["power"], space["area"],
    )
    a1, e1, f1 = jit_fn(0, total, *args)
    a2, e2, f2 = np_fn(0, total, *args)
    np.testing.assert_array_equal(a1, a2)
    np.testing.assert_allclose(e1, e2, rtol=1e-12)
    assert np.array_equal(f1, f2)


def test_fallback_selection_honors_environment():
    # The env flag is read at import time; a subprocess sees the numpy path.
    import subprocess
    import sys

    code = (
        "import psmsynth.kernels as k; "
        "assert not k.HAVE_NUMBA and k.NUMBA_DISABLED; "
        "import numpy as np; "
        "xs = np.array([1.0, 2.0]); ys = np.array([2.0, 1.0]); "
        "assert k.pareto_mask(xs, ys).all()"
    )
    import os

    env = {**os.environ, "PSMSYNTH_NO_NUMBA": "1"}
    subprocess.run([sys.executable, "-c", code], check=True, env=env)
