import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats as sps

from rmsimplicity.nets import (
    BoxPair,
    BoxSpec,
    box_lcd_experiment,
    coordinate_sets,
    enumerate_covering_family,
    overlap_of_box_pair,
    sample_box,
)
from rmsimplicity.rng import stream


def _points(s):
    return sorted(v for a, b in s for v in range(a, b + 1))


def test_anchored_set_expansion():
    spec = BoxSpec(1, 2, 2.0, D1=(1,))
    assert _points(coordinate_sets(spec)[0]) == [-4, -3, -2, 2, 3, 4]
    assert spec.sizes().tolist() == [6]
    assert BoxSpec(3, 2, 2.0, D1=(1, 2, 3)).cardinality() == 216


def test_default_and_shell_sets():
    spec = BoxSpec(3, 4, 2.0, D1=(1,), levels=(0, 0, 2))
    sets = coordinate_sets(spec)
    assert _points(sets[1]) == list(range(-4, 5))
    assert _points(sets[2]) == list(range(-16, -8)) + list(range(9, 17))


@given(st.integers(1, 6), st.integers(2, 3), st.data())
def test_cardinality_matches_enumeration(dim, boxN, data):
    anchors = data.draw(st.sets(st.integers(1, dim), max_size=dim))
    spec = BoxSpec(dim, boxN, 2.0, D1=tuple(anchors))
    pts = [_points(s) for s in coordinate_sets(spec)]
    assert spec.cardinality() == sum(1 for _ in itertools.product(*pts))
    assert all(len(p) >= boxN for p in pts)


def test_cap_ratio_reports_rounding_excess():
    # anchored sets have 2(kappa N - N + 1) points, two more than kappa N at kappa 2
    spec = BoxSpec(2, 10, 2.0, D1=(1, 2))
    assert spec.sizes().tolist() == [22, 22]
    assert spec.log_cap_ratio() == pytest.approx(2 * math.log(22 / 20))


def test_uniform_marginals_chi_square():
    spec = BoxSpec(2, 2, 2.0, D1=(1,))
    x = sample_box(spec, stream(1, "box"), size=100_000)
    for j, support in enumerate(_points(s) for s in coordinate_sets(spec)):
        counts = np.array([np.sum(x[:, j] == v) for v in support])
        assert counts.sum() == x.shape[0]
        assert sps.chisquare(counts).pvalue > 1e-3


def test_atom_frequencies_in_binomial_ci():
    from rmsimplicity.stats import clopper_pearson
    spec = BoxSpec(1, 2, 2.0, D1=(1,))
    x = sample_box(spec, stream(2, "freq"), size=100_000)[:, 0]
    for v in (-4, -3, -2, 2, 3, 4):
        lo, hi = clopper_pearson(int(np.sum(x == v)), x.size, 0.99)
        assert lo <= 1 / 6 <= hi


def test_single_sample_in_box():
    spec = BoxSpec(5, 3, 2.0, D2=(2, 4))
    s = sample_box(spec, stream(3), provenance=(3, 0))
    for xi, st_ in zip(s.point, coordinate_sets(spec)):
        assert any(a <= xi <= b for a, b in st_)
    assert s.provenance == (3, 0)


def test_spec_validation_and_json():
    with pytest.raises(ValueError):
        BoxSpec(2, 1)
    with pytest.raises(ValueError):
        BoxSpec(2, 4, kappa=1.5)
    with pytest.raises(ValueError, match="empty"):
        BoxSpec(1, 2, custom_sets=(((3, 2),),))
    spec = BoxSpec(4, 8, 3.0, D1=(1,), D2=(4,), levels=(0, 1, 2, 0))
    assert BoxSpec.from_json(spec.to_json()) == spec
    with pytest.raises(ValueError):
        BoxSpec.from_json({"dim": 2, "boxN": 4, "N": 3})


def test_box_lcd_small_run_has_no_failures():
    rep = box_lcd_experiment(32, 1024, 2.0, 2.0**-24, 1024, 100, stream(4, "lcd"))
    assert rep.failures == 0 and rep.bound == pytest.approx(2.0**-32)
    assert rep.consistent and not rep.bound_vacuous
    assert list(rep.csv_row()) == ["d", "boxN", "kappa", "alpha", "K", "trials", "failures", "bound"]


def test_box_lcd_vacuous_bound_is_reported():
    rep = box_lcd_experiment(32, 16, 2.0, 0.5, 4, 20, stream(5, "lcd"))
    assert rep.bound_vacuous and rep.bound >= 1


def test_box_lcd_hypotheses_asserted():
    with pytest.raises(ValueError, match="2\\^"):
        box_lcd_experiment(4, 1024, 2.0, 2.0**-24, 1024, 10, stream(6))
    with pytest.raises(ValueError, match="alpha"):
        box_lcd_experiment(32, 4, 2.0, 1.0, 64, 10, stream(6))


def test_pair_requires_smaller_second_box():
    with pytest.raises(ValueError):
        BoxPair(BoxSpec(3, 2), BoxSpec(3, 4))


def test_identical_singletons_force_cos_one():
    single = BoxSpec(3, 2, custom_sets=(((1, 1),), ((2, 2),), ((3, 3),)), validate=False)
    pair = BoxPair(single, single)
    rep = overlap_of_box_pair(pair, 50, stream(7), T=0.01)
    assert rep["mean_abs_cos"] == pytest.approx(1.0)
    assert not rep["threshold_vacuous"] and rep["fraction_below"] == 0.0
    default = overlap_of_box_pair(pair, 50, stream(7))
    assert default["threshold_vacuous"] and default["fraction_below"] == 1.0


def test_symmetric_boxes_near_orthogonal():
    pair = BoxPair(BoxSpec(64, 32), BoxSpec(64, 16))
    rep = overlap_of_box_pair(pair, 20_000, stream(8, "ov"))
    assert rep["mean_abs_cos"] <= 3 / math.sqrt(63)
    assert rep["fraction_below"] >= 0.70
    assert abs(rep["mean_inner"]) <= 4 * rep["mean_inner_se"]


def _brute_family(free, budget, max_level=8):
    total = 0
    for seq in itertools.product(range(max_level + 1), repeat=free):
        if sum(4**l for l in seq if l > 0) <= budget:
            total += 1
    return total


def test_covering_tight_budget_is_single_box():
    fam = enumerate_covering_family(3, 4.0, 10.0)
    assert fam.size == 1 and fam.within_bound


@pytest.mark.parametrize("kappa0", [1.0, 2.0, 2.5, 4.0])
def test_covering_matches_brute_force(kappa0):
    fam = enumerate_covering_family(2, 4.0, kappa0, D1=(1,), keep=True)
    assert fam.free_coords == 2
    assert fam.size == _brute_family(2, 32 / kappa0**2) == len(fam.sequences)


def test_covering_bound_kappa_four():
    for kappa0 in (0.5, 1.0, 2.0):
        fam = enumerate_covering_family(3, 4.0, kappa0)
        assert fam.bound == 4.0**6 and fam.within_bound


def test_covering_cap():
    with pytest.raises(ValueError):
        enumerate_covering_family(7, 4.0, 1.0)
