import json

import numpy as np
import pytest

from rectldg import RectDomain, make_grid
from rectldg.continuation import (
    BRANCH_CSV_HEADER,
    END_POINT,
    FOLD,
    RANGE_END,
    MissingTransition,
    StepPolicy,
    continue_branch,
    seed_library,
    transition_parameters,
    transitions_json,
)
from rectldg.energy import residual_norm

from helpers import params


@pytest.fixture(scope="module")
def wide_library():
    g = make_grid(RectDomain(1.5, 1.0), 1 / 16)
    p = params(0.02)
    return g, p, seed_library(g, p)


@pytest.fixture(scope="module")
def d1_branch(wide_library):
    _, p, lib = wide_library
    return continue_branch(lib.seeds["D1"], p, (0.02, 0.5), seed_name="D1")


@pytest.fixture(scope="module")
def r2_branch(wide_library):
    _, p, lib = wide_library
    return continue_branch(lib.seeds["R2"], p, (0.02, 0.5), seed_name="R2")


def test_seed_library_contents(wide_library):
    _, _, lib = wide_library
    assert not lib.failed
    assert set(lib.seeds) == {"D1", "D2", "R1", "R2", "R3", "R4", "limit"}
    assert all(bp.stable for bp in lib.seeds.values())
    assert lib.seeds["limit"].class_label.label == "BD2" and lib.seeds["limit"].epsilon == 5.0


def test_seed_library_guards_parameters(wide_library):
    g, p, _ = wide_library
    with pytest.raises(ValueError):
        seed_library(g, p, eps_small=0.1)
    with pytest.raises(ValueError):
        seed_library(g, p, eps_large=1.0)


def test_branch_points_are_equilibria(d1_branch):
    p = d1_branch.params
    for bp in d1_branch.points:
        assert 0.02 <= bp.epsilon <= 0.5 + 1e-12
        assert residual_norm(bp.field, p.with_epsilon(bp.epsilon)) <= 1e-8
        assert bp.stable == (bp.lambda_min > 0)
        assert bp.tag[0] in "su"


def test_d1_pathway_reaches_bd2(d1_branch):
    assert d1_branch.terminated == RANGE_END
    assert [(t.from_tag, t.to_tag) for t in d1_branch.transitions] == [("sD1", "sBD2")]
    assert d1_branch.points[-1].tag == "sBD2"
    eps = d1_branch.epsilons
    assert np.all(np.diff(eps[: d1_branch.transitions[0].lo + 1]) > 0)


def test_r2_pathway_ends_at_fold(r2_branch, d1_branch):
    assert r2_branch.terminated == END_POINT
    assert [(t.from_tag, t.to_tag) for t in r2_branch.transitions] == [("sR2", "uR2")]
    vals = transition_parameters([d1_branch, r2_branch])
    assert vals["eps_sR2_uR2"] < vals["eps_end_R2"] < vals["eps_sD1_sBD2"]


def test_arclength_mode_stops_at_fold(wide_library):
    _, p, lib = wide_library
    br = continue_branch(lib.seeds["R2"], p, (0.02, 0.5), mode="arclength", max_folds=1)
    assert br.terminated == FOLD and len(br.folds) == 1


def test_branch_csv_and_determinism(wide_library, r2_branch):
    _, p, lib = wide_library
    text = r2_branch.to_csv()
    assert text.splitlines()[0] == ",".join(BRANCH_CSV_HEADER)
    assert len(text.splitlines()) == len(r2_branch.points) + 1
    again = continue_branch(lib.seeds["R2"], p, (0.02, 0.5), seed_name="R2")
    assert again.to_csv() == text


def test_step_policy_bounds(wide_library):
    _, p, lib = wide_library
    pol = StepPolicy(initial=0.02, cap=0.02)
    br = continue_branch(lib.seeds["D1"], p, (0.02, 0.1), policy=pol)
    assert np.all(np.diff(br.epsilons) <= 0.02 * 1.5 + 1e-12)


def test_transition_lookup(d1_branch):
    with pytest.raises(MissingTransition):
        transition_parameters([d1_branch], names=["eps_sR3_uR3"])
    vals = transition_parameters([d1_branch], names=["eps_sD1_sBD2"])
    recs = json.loads(transitions_json(vals, d1_branch.grid))
    assert recs[0]["name"] == "eps_sD1_sBD2" and recs[0]["a"] == 1.5 and recs[0]["h"] == 1 / 16
