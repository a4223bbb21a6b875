import math

import numpy as np
import pytest

from gerryopt import lp as L
from gerryopt import model as M
from gerryopt import verify as V


# ---------------------------------------------------------------------------
# refinement of the raw assignment into canonical districts
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("gamma", [0.5, 2.0, 6.0])
def test_refinement_conserves_mass_and_value(solve_cached, gamma):
    inst, sol = solve_cached(gamma)
    refined = V.refine_assignment(sol.assignment)
    assert refined.ok
    total = float(refined.seg_mass.sum() + refined.pair_mass.sum())
    assert total == pytest.approx(1.0, abs=1e-8)
    # per-type masses reproduce the population marginal
    per_type = refined.seg_mass + refined.pair_mass
    assert np.max(np.abs(per_type - inst.type_weights)) < 1e-8
    # re-evaluating the canonical districts reproduces the LP value
    value = sum(m * float(inst.G(d.threshold)) for d, m in
                ((d, d.mass) for d in refined.districts))
    assert value == pytest.approx(sol.objective, abs=1e-7)
    for d in refined.districts:
        if d.kind == "pair":
            assert d.types.size == 2
            assert d.types[0] < d.threshold < d.types[1]
        else:
            assert d.types.size == 1


def test_refinement_threshold_exact_balance(solve_cached):
    inst, sol = solve_cached(6.0)
    refined = V.refine_assignment(sol.assignment)
    for d in refined.districts:
        if d.kind != "pair":
            continue
        mean_vote = float(d.weights @ M.vote_share(inst, d.types, d.threshold))
        assert mean_vote == pytest.approx(0.5 * d.weights.sum(), abs=1e-10)


# ---------------------------------------------------------------------------
# single-dipped districting
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("gamma", [0.5, 1.2, 1.7, 6.0])
def test_optimal_solutions_single_dipped(solve_cached, gamma):
    inst, sol = solve_cached(gamma)
    report = V.check_single_dipped(sol.assignment)
    assert report.ok
    assert report.violations == []


def test_single_dipped_violation_detected():
    # Hand-built infeasible-in-shape assignment: a pair straddling -0.5 has a
    # LOWER threshold than the interior point district at -0.5, so the point
    # type sits strictly inside the span of a weaker district.
    inst = M.ProblemInstance(
        type_grid=np.array([-1.0, -0.5, 0.0]),
        type_weights=np.array([0.4, 0.2, 0.4]),
        taste=M.NORMAL,
        gamma=1.0,
    )
    thresholds = np.array([-0.75, -0.5, 0.0])
    v = M.vote_share(inst, inst.type_grid[:, None], thresholds[None, :])
    pi = np.zeros((3, 3))
    # pair {-1, 0} balanced at threshold -0.75
    lo, hi = v[0, 0] - 0.5, v[2, 0] - 0.5
    rho = hi / (hi - lo)
    pair_mass = 0.4 / rho  # exhaust the low type
    pi[0, 0] = pair_mass * rho
    pi[2, 0] = pair_mass * (1 - rho)
    pi[1, 1] = 0.2          # point district at -0.5, threshold -0.5
    pi[2, 2] = 0.4 - pi[2, 0]  # leftover packed at 0
    assignment = L.AssignmentMatrix(
        pi=pi,
        type_grid=inst.type_grid,
        threshold_grid=thresholds,
        type_weights=inst.type_weights,
        vote=v,
    )
    assert np.max(np.abs(assignment.row_residuals())) < 1e-12
    assert np.max(np.abs(assignment.threshold_residuals())) < 1e-12
    report = V.check_single_dipped(assignment)
    assert not report.ok
    assert len(report.violations) >= 1


# ---------------------------------------------------------------------------
# pack-and-pair decomposition and regime classification
# ---------------------------------------------------------------------------

EXPECTED_REGIMES = {
    0.2: V.RegimeLabel.PMP,
    0.5: V.RegimeLabel.PMP,
    1.0: V.RegimeLabel.PMP,
    1.2: V.RegimeLabel.MIXED_PMP,
    1.4: V.RegimeLabel.MIXED_PMP,
    1.6: V.RegimeLabel.MIXED_POP,
    1.7: V.RegimeLabel.POP,
    3.0: V.RegimeLabel.POP,
    6.0: V.RegimeLabel.POP,
}


@pytest.mark.parametrize("gamma", sorted(EXPECTED_REGIMES))
def test_regime_classification(solve_cached, gamma):
    inst, sol = solve_cached(gamma)
    decomp = V.decompose_pack_and_pair(sol.assignment)
    assert decomp.ok, decomp.reason
    label = V.classify_regime(decomp, assignment=sol.assignment)
    assert label == EXPECTED_REGIMES[gamma]


@pytest.mark.parametrize("gamma", [1.2, 1.4, 1.6])
def test_mixed_regime_bifurcation_near_zero(solve_cached, gamma):
    _, sol = solve_cached(gamma)
    decomp = V.decompose_pack_and_pair(sol.assignment)
    assert decomp.ok
    assert abs(decomp.bifurcation) <= 0.02


def test_decomposition_masses(solve_cached):
    _, sol = solve_cached(6.0)
    decomp = V.decompose_pack_and_pair(sol.assignment)
    assert decomp.ok
    assert float(decomp.seg_mass.sum() + decomp.pair_mass.sum()) == pytest.approx(1.0, abs=1e-8)
    # every pair threshold lies strictly above the bifurcation point
    for r, s1, s2, _mass in decomp.pairs:
        assert r > decomp.bifurcation
        assert s1 <= r <= s2
    for r, _mass in decomp.segregated:
        assert r <= decomp.bifurcation + 1e-12


# ---------------------------------------------------------------------------
# sufficient condition for pack-and-pair optimality (quadruple scan)
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("gamma", [0.5, 2.0, 6.0])
def test_pap_condition_holds_normal(gamma):
    assert V.check_pap_condition(gamma) == []


def test_pap_condition_rejects_bad_gamma():
    with pytest.raises(M.GerryOptError):
        V.check_pap_condition(0.0)
    with pytest.raises(M.GerryOptError):
        V.check_pap_condition(-2.0)


def test_pap_grid_shape():
    grid = V.default_pap_grid(step=0.5, lo=-2, hi=2)
    assert grid[0] == -2 and grid[-1] == 2
    assert np.allclose(np.diff(grid), 0.5)


# ---------------------------------------------------------------------------
# necessary conditions for a Y-shaped (negative assortative top) optimum
# ---------------------------------------------------------------------------


def test_y_conditions_admissible_window():
    # closed-form boundary: admissible iff 1 < gamma <= sqrt(1 + sqrt(3))
    boundary = math.sqrt(1.0 + math.sqrt(3.0))
    assert V.y_necessary_conditions(1.3).admissible
    assert V.y_necessary_conditions(boundary).admissible
    assert not V.y_necessary_conditions(boundary + 1e-6).admissible
    assert not V.y_necessary_conditions(6.0).admissible


def test_y_condition_spot_values():
    rep = V.y_necessary_conditions(1.6)
    assert rep.beta1 == pytest.approx(3 * 1.6**2 / (2 * (1.6**2 - 1)), abs=1e-12)
    assert rep.beta2 == pytest.approx(1.6**2 / 2, abs=1e-12)
    rep17 = V.y_necessary_conditions(1.7)
    assert rep17.beta1 == pytest.approx(2.2937, abs=1e-4)
    assert rep17.beta2 == pytest.approx(1.445, abs=1e-12)
    assert not rep17.admissible


def test_y_conditions_invalid_gamma():
    with pytest.raises(M.GerryOptError):
        V.y_necessary_conditions(1.0)
    with pytest.raises(M.GerryOptError):
        V.y_necessary_conditions(0.0)


# ---------------------------------------------------------------------------
# local swap conditions on segregated / paired blocks
# ---------------------------------------------------------------------------


def test_seg_nad_spot_triples():
    # asymmetric pair {-1, 0.5} pooled at threshold 0: with a steep seat
    # curve splitting wins, with a flat one pooling wins
    triple = [(-1.0, 0.0, 0.5)]
    steep = V.check_seg_nad_conditions(M.uniform_instance(n=11, gamma=6.0), triples=triple)
    assert steep.n_split_preferred == 1 and steep.n_pool_preferred == 0
    flat = V.check_seg_nad_conditions(M.uniform_instance(n=11, gamma=0.5), triples=triple)
    assert flat.n_pool_preferred == 1 and flat.n_split_preferred == 0


@pytest.mark.parametrize("gamma", [2.0, 6.0])
def test_seg_nad_default_sampling(gamma):
    inst = M.uniform_instance(gamma=gamma)
    report = V.check_seg_nad_conditions(inst)
    n = report.n_pool_preferred + report.n_split_preferred
    assert n > 0
    assert len(report.pool_triples) == report.n_pool_preferred
    assert len(report.split_triples) == report.n_split_preferred
    # interior regimes mix both local incentives
    assert report.mixed == (report.n_pool_preferred > 0 and report.n_split_preferred > 0)


# ---------------------------------------------------------------------------
# dual certificate checks
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("gamma", [0.5, 2.0, 6.0])
def test_dual_support_max_attained(solve_cached, gamma):
    inst, sol = solve_cached(gamma)
    report = V.check_dual_support_optimality(inst, sol.assignment, sol.certificate)
    # on the active support, phi(s) attains the max over thresholds
    assert report.part1_ok
    assert report.worst_slack < 1e-8


def test_full_segregation_assignment_classified():
    inst = M.uniform_instance(n=41, gamma=2.0)
    n = inst.type_grid.size
    pi = np.diag(inst.type_weights)
    v = M.vote_share(inst, inst.type_grid[:, None], inst.type_grid[None, :])
    assignment = L.AssignmentMatrix(
        pi=pi,
        type_grid=inst.type_grid,
        threshold_grid=inst.type_grid,
        type_weights=inst.type_weights,
        vote=v,
    )
    decomp = V.decompose_pack_and_pair(assignment)
    assert decomp.ok
    assert decomp.pair_mass == pytest.approx(0.0, abs=1e-12)
    label = V.classify_regime(decomp, assignment=assignment)
    assert label == V.RegimeLabel.SEGREGATION
