"""
Tests for chance-constrained boxes and their Monte Carlo coverage
"""
import numpy as np
import pytest
from scipy.stats import norm

from conftest import create_sample_document
from mg_planner.chance import Family, LoadDistribution, box_mass, chance_box, verify_coverage
from mg_planner.core_model import parse_case
from mg_planner.exceptions import CaseValidationError, ConfigurationError


def create_distribution(family, p_mean, q_mean, p_disp, q_disp) -> LoadDistribution:
    return LoadDistribution(family=family, p_mean=[[p_mean]], q_mean=[[q_mean]],
                            p_dispersion=[[p_disp]], q_dispersion=[[q_disp]])


def test_single_normal_coordinate():
    dist = create_distribution(Family.NORMAL, 100.0, 0.0, 10.0, 0.0)
    box = chance_box(dist, 0.05)
    half = norm.ppf(0.975) * 10.0
    assert half == pytest.approx(19.6, abs=0.01)
    assert box.p_lo[0, 0] == pytest.approx(100.0 - half)
    assert box.p_hi[0, 0] == pytest.approx(100.0 + half)
    assert box.q_lo[0, 0] == box.q_hi[0, 0] == 0.0
    assert box_mass(dist, box) == pytest.approx(0.95)
    assert verify_coverage(dist, box, samples=100_000, seed=3) == pytest.approx(0.95, abs=0.005)


def test_uniform_coordinates_split_the_mass():
    dist = create_distribution(Family.UNIFORM, 0.5, 0.5, 0.5, 0.5)
    box = chance_box(dist, 0.19)
    # two coordinates at 0.9 each
    assert box.p_lo[0, 0] == pytest.approx(0.05)
    assert box.p_hi[0, 0] == pytest.approx(0.95)
    assert box.q_lo[0, 0] == pytest.approx(0.05)
    assert box.q_hi[0, 0] == pytest.approx(0.95)
    assert box_mass(dist, box) == pytest.approx(0.81)
    assert verify_coverage(dist, box, samples=100_000) == pytest.approx(0.81, abs=0.006)


def test_boxes_shrink_as_epsilon_grows(three_node_case):
    dist = LoadDistribution.from_case(three_node_case)
    assert dist.n_random == 12
    previous = None
    for eps in (0.01, 0.05, 0.1, 0.3):
        box = chance_box(dist, eps)
        assert box_mass(dist, box) == pytest.approx(1.0 - eps, abs=1e-9)
        assert box.contains(dist.p_mean, dist.q_mean)
        if previous is not None:
            assert np.all(box.p_lo >= previous.p_lo) and np.all(box.p_hi <= previous.p_hi)
            assert np.all(box.q_lo >= previous.q_lo) and np.all(box.q_hi <= previous.q_hi)
        previous = box


def test_coverage_is_reproducible(three_node_case):
    dist = LoadDistribution.from_case(three_node_case)
    box = chance_box(dist, 0.1)
    first = verify_coverage(dist, box, samples=20_000, seed=11, blocks=4)
    again = verify_coverage(dist, box, samples=20_000, seed=11, blocks=4, workers=1)
    assert first == again
    assert first == pytest.approx(0.9, abs=0.015)


def test_zero_dispersion_gives_the_point_box():
    dist = create_distribution(Family.NORMAL, 4.0, 1.0, 0.0, 0.0)
    box = chance_box(dist, 0.05)
    assert box.p_lo[0, 0] == box.p_hi[0, 0] == 4.0
    assert box_mass(dist, box) == 1.0


def test_absolute_dispersion_follows_the_power_factor():
    doc = create_sample_document([[4.0], [0.0]], q_loads=[[1.0], [0.0]],
                                 uncertainty={"family": "uniform", "dispersion": [2.0, 1.0]})
    dist = LoadDistribution.from_case(parse_case(doc))
    assert dist.family is Family.UNIFORM
    assert dist.p_dispersion.tolist() == [[2.0], [1.0]]
    assert dist.q_dispersion.tolist() == [[0.5], [0.0]]


def test_invalid_inputs():
    dist = create_distribution(Family.NORMAL, 1.0, 0.0, 0.1, 0.0)
    box = chance_box(dist, 0.1)
    for eps in (0.0, 1.0, -0.2):
        with pytest.raises(ConfigurationError):
            chance_box(dist, eps)
    with pytest.raises(ConfigurationError):
        verify_coverage(dist, box, samples=500)
    with pytest.raises(ConfigurationError):
        create_distribution(Family.NORMAL, 1.0, 0.0, -0.1, 0.0)


@pytest.mark.parametrize("uncertainty, path", [
    (None, "uncertainty"),
    ({"family": "cauchy", "relative_dispersion": 0.1}, "uncertainty.family"),
    ({"family": "normal"}, "uncertainty"),
    ({"family": "normal", "relative_dispersion": -1}, "uncertainty.relative_dispersion"),
    ({"family": "normal", "dispersion": [1.0, 2.0, 3.0]}, "uncertainty.dispersion"),
])
def test_case_section_errors(uncertainty, path):
    case = parse_case(create_sample_document([[1.0], [1.0]], uncertainty=uncertainty))
    with pytest.raises(CaseValidationError) as info:
        LoadDistribution.from_case(case)
    assert info.value.field_path == path
