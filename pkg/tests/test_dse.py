"""Timing-constrained design-space exploration."""

from fractions import Fraction

import numpy as np
import pytest

from psmsynth import dse, kernels
from psmsynth.cost import MHZ, CostTable, MccAlternative, load_alternatives
from psmsynth.dse import (
    EnvelopeEntry,
    InfeasibleConfigError,
    StreamingFront,
    TimingEnvelope,
    common_frequency,
    config_energy,
    enumerate_configs,
    explore,
    explore_streaming,
    flatten_groups,
    pareto,
    required_frequency,
    synthetic_space,
)

WINDOW = Fraction(1, 10)


def alt(mcc, cycles, fmax_mhz, area, power, unroll=0, lam=None):
    return MccAlternative(
        mcc, "measured", unroll, lam, cycles, fmax_mhz * MHZ, area, power
    )


def env_for(groups, period=WINDOW, **kwargs):
    return TimingEnvelope({n: EnvelopeEntry(period, **kwargs) for n in groups})


def load_groups(path):
    groups = {}
    for row in load_alternatives(path):
        groups.setdefault(row.mcc, []).append(row)
    return groups


# --- Frequency derivation -----------------------------------------------------

def test_required_frequency_is_cycles_over_period():
    a = alt("m", 885_316, 94, 1.0, 1.0)
    assert required_frequency(a, EnvelopeEntry(WINDOW)) == pytest.approx(8.85316 * MHZ)


def test_required_frequency_accounts_for_invocations_and_reserve():
    a = alt("m", 100, 100, 1.0, 1.0)
    entry = EnvelopeEntry(Fraction(1, 1000), invocations=3, reserved_cycles=10)
    assert required_frequency(a, entry) == pytest.approx(3 * 110 / 1e-3)


def test_common_frequency_takes_worst_requirement():
    groups = {"a": [alt("a", 1000, 100, 1, 1)], "b": [alt("b", 5000, 100, 1, 1)]}
    env = env_for(groups)
    f = common_frequency([groups["a"][0], groups["b"][0]], env)
    assert f == pytest.approx(5000 / 0.1)


def test_common_frequency_infeasible_when_above_fmax():
    choices = [alt("a", 20_000_000, 100, 1, 1)]  # needs 200 MHz, rated 100
    with pytest.raises(InfeasibleConfigError):
        common_frequency(choices, env_for({"a": None}))


# --- Energy model -------------------------------------------------------------

def test_energy_scales_power_to_common_frequency():
    a = alt("a", 1000, 100, 1.0, 40.0)  # needs 0.01 MHz
    b = alt("b", 5_000_000, 100, 1.0, 60.0)  # needs 50 MHz
    env = env_for({"a": None, "b": None})
    energy = config_energy([a, b], env, WINDOW)
    # Both scale to 50 MHz: (40 + 60) * 0.5 * 0.1 s = 5 mJ.
    assert energy == pytest.approx(5.0)


def test_static_fraction_limits_scaling_gain():
    a = alt("a", 1000, 100, 1.0, 100.0)
    env = env_for({"a": None})
    full = config_energy([a], env, WINDOW, CostTable(static_fraction=0.0))
    floored = config_energy([a], env, WINDOW, CostTable(static_fraction=0.5))
    assert floored > full
    # delta_s = 0.5 keeps at least half the unscaled power.
    assert floored >= 0.5 * 100.0 * 0.1


# --- Enumeration --------------------------------------------------------------

def test_enumeration_covers_cartesian_product_in_order():
    groups = {
        "a": [alt("a", 1000, 100, 1, 1, unroll=0), alt("a", 900, 100, 2, 2, unroll=4)],
        "b": [alt("b", 1000, 100, 3, 3, lam=1), alt("b", 900, 100, 4, 4, lam=2),
              alt("b", 800, 100, 5, 5, lam=3)],
    }
    configs = list(enumerate_configs(groups, env_for(groups), WINDOW))
    assert len(configs) == 6
    assert [c.config_id for c in configs] == list(range(6))
    # Last group varies fastest.
    assert [c.indices for c in configs] == [
        (0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (1, 2),
    ]
    assert all(c.area == c.choices[0].area + c.choices[1].area for c in configs)


def test_infeasible_configs_emitted_not_dropped():
    groups = {
        "a": [alt("a", 1000, 100, 1, 1), alt("a", 50_000_000, 100, 2, 2)],
    }
    configs = list(enumerate_configs(groups, env_for(groups), WINDOW))
    assert [c.feasible for c in configs] == [True, False]
    assert configs[1].f_common == pytest.approx(500 * MHZ)


def test_group_membership_validated():
    groups = {"a": [alt("b", 1000, 100, 1, 1)]}
    with pytest.raises(dse.DseError):
        list(enumerate_configs(groups, env_for(groups), WINDOW))


def test_independent_clocks_never_cost_more_energy():
    groups = load_groups_wpm()
    env = env_for(groups)
    shared = list(enumerate_configs(groups, env, WINDOW))
    per_clock = list(enumerate_configs(groups, env, WINDOW, independent=True))
    for s, p in zip(shared, per_clock):
        assert p.energy <= s.energy + 1e-12


def load_groups_wpm():
    from conftest import FIXTURES

    return load_groups(FIXTURES / "wpm_lcfds.csv")


# --- Front extraction ---------------------------------------------------------

def test_streaming_front_keeps_ties_and_removes_dominated():
    def point(cid, area, energy):
        cfg = dse.SystemConfig(cid, (), (), 1.0, area, energy, True)
        return dse.ParetoPoint(cfg)

    front = StreamingFront()
    assert front.offer(point(0, 5.0, 5.0))
    assert front.offer(point(1, 5.0, 5.0))  # exact tie kept
    assert not front.offer(point(2, 6.0, 6.0))  # dominated by the ties
    assert front.offer(point(3, 4.0, 6.0))
    assert front.offer(point(4, 3.0, 7.0))
    result = [(p.area, p.energy) for p in front.result()]
    assert result == [(3.0, 7.0), (4.0, 6.0), (5.0, 5.0), (5.0, 5.0)]
    # A strictly better arrival evicts the dominated survivors.
    assert front.offer(point(5, 3.0, 5.0))
    assert [(p.area, p.energy) for p in front.result()] == [(3.0, 5.0)]


def test_pareto_ignores_infeasible_configs():
    groups = {
        "a": [alt("a", 1000, 100, 1, 1), alt("a", 50_000_000, 100, 0.5, 0.5)],
    }
    configs = list(enumerate_configs(groups, env_for(groups), WINDOW))
    front = pareto(configs)
    assert [p.config.config_id for p in front] == [0]


def test_streaming_matches_offline_on_fixture_tables(fixtures):
    groups = load_groups(fixtures / "wpm_lcfds.csv")
    env = env_for(groups)
    configs = list(enumerate_configs(groups, env, WINDOW))
    offline = {(p.area, round(p.energy, 9)) for p in pareto(configs)}
    space = flatten_groups(groups, env)
    fa, fe, _, nfeas = explore_streaming(space, window=float(WINDOW), chunk=5)
    assert {(a, round(e, 9)) for a, e in zip(fa, fe)} == offline
    assert nfeas == sum(c.feasible for c in configs)


def test_streaming_front_invariant_under_enumeration_order():
    space = synthetic_space(n_groups=3, group_size=8, seed=5)
    fa1, fe1, _, n1 = explore_streaming(space, chunk=64)
    perm = np.random.default_rng(9).permutation(space.total)
    fa2, fe2, _, n2 = explore_streaming(space, chunk=64, order=perm)
    assert n1 == n2
    assert np.array_equal(np.sort(fa1), np.sort(fa2))
    assert np.array_equal(np.sort(fe1), np.sort(fe2))


# --- Reports ------------------------------------------------------------------

def test_explore_writes_deterministic_reports(fixtures, tmp_path):
    groups = load_groups(fixtures / "wpm_lcfds.csv")
    env = env_for(groups)
    names = [
        "configs.csv", "pareto.csv", "pareto.json", "scatter.svg", "summary.txt",
    ]
    outputs = []
    for run in ("a", "b"):
        report = explore(groups, env, WINDOW, tmp_path / run)
        assert set(report.files) == set(names)
        outputs.append({n: (tmp_path / run / n).read_bytes() for n in names})
    assert outputs[0] == outputs[1]
    header = outputs[0]["configs.csv"].decode().splitlines()[0]
    assert header == "config_id,mhr,spo2,emg,f_common_mhz,area,energy_mj,feasible"
    assert len(outputs[0]["configs.csv"].decode().splitlines()) == 1 + 32


def test_explore_requires_a_feasible_config(tmp_path):
    groups = {"a": [alt("a", 50_000_000, 100, 1, 1)]}
    with pytest.raises(InfeasibleConfigError):
        explore(groups, env_for(groups), WINDOW, tmp_path)


def test_scatter_svg_is_well_formed(fixtures, tmp_path):
    groups = load_groups(fixtures / "wpm_lcfds.csv")
    report = explore(groups, env_for(groups), WINDOW, tmp_path)
    svg = (tmp_path / "scatter.svg").read_text()
    assert svg.startswith("<svg ") and svg.rstrip().endswith("</svg>")
    assert "Area (LUT+FF)" in svg and "Energy (mJ)" in svg
    assert svg.count("<circle") >= len(report.configs)
