import math

import pytest

from conftest import converged_record, failed_record
from tcadloop.agent.baseline import (
    BaselineAgent,
    best_record,
    hinge_score,
    propose_baseline,
    record_score,
    score_breakdown,
)
from tcadloop.errors import EmptyHistory, ExhaustedSpace
from tcadloop.params import validate
from tcadloop.postproc import PerformanceMetrics


def test_score_is_zero_when_every_target_is_met(targets):
    m = PerformanceMetrics.from_currents(2.31e-3, 8.26e-9, 60.38)
    assert hinge_score(m, targets) == 0.0


def test_score_adds_one_hinge_per_target(targets):
    m = PerformanceMetrics.from_currents(4.23e-3, 3.40e-5, 144.0)
    breakdown = score_breakdown(m, targets)
    parts = {c.name: c.value for c in breakdown.components}
    assert parts["ss"] == pytest.approx(1.0)
    assert parts["ioff"] == pytest.approx(math.log10(3.40e-5 / 1e-8))
    assert parts["ion"] == 0.0
    assert parts["onoff"] == pytest.approx(4.90 - math.log10(4.23e-3 / 3.40e-5))
    assert breakdown.total == pytest.approx(sum(parts.values()))
    assert breakdown.explanation[0].startswith("score total = ")
    assert len(breakdown.explanation) == 5


def test_non_convergent_records_score_infinity(r1):
    assert record_score(failed_record(0, r1), None) == math.inf


def test_best_record_skips_failures_and_prefers_the_earliest(r1, targets):
    history = [
        failed_record(0, r1),
        converged_record(1, r1.replace(gate_length=10.0), 1e-3, 1e-7, 90.0, targets),
        converged_record(2, r1.replace(gate_length=12.0), 1e-3, 1e-9, 65.0, targets),
        converged_record(3, r1.replace(gate_length=13.0), 1e-3, 1e-9, 65.0, targets),
    ]
    assert best_record(history, targets).index == 2
    assert best_record(history[:1], targets) is None


def test_first_move_is_the_largest_step_on_gate_length(bad_seed, space, targets):
    history = [converged_record(0, bad_seed, 4.23e-3, 3.40e-5, 286.72, targets)]
    proposal = propose_baseline(history, space, targets, seed=bad_seed)
    assert proposal.params.gate_length == pytest.approx(15.5)
    assert proposal.params.replace(gate_length=bad_seed.gate_length) == bad_seed
    assert proposal.rationale.startswith("coordinate search: gate_length +0.25 of its range from iteration 0")


def test_proposals_are_deterministic_and_in_bounds(bad_seed, space, targets):
    history = [converged_record(0, bad_seed, 4.23e-3, 3.40e-5, 286.72, targets)]
    agent = BaselineAgent(space, targets, bad_seed)
    first = agent.propose(history)
    assert agent.propose(history) == first
    assert validate(first.params, space).in_bounds


def test_worse_moves_are_not_repeated(bad_seed, space, targets):
    agent = BaselineAgent(space, targets, bad_seed)
    history = [converged_record(0, bad_seed, 4.23e-3, 3.40e-5, 286.72, targets)]
    worse = agent.propose(history).params
    history.append(converged_record(1, worse, 4.23e-3, 9.0e-5, 300.0, targets))
    second = agent.propose(history).params
    assert second == bad_seed.replace(gate_length=8.0)
    assert validate(second, space).in_bounds


def test_search_runs_dry_on_a_single_step(bad_seed, space, targets):
    agent = BaselineAgent(space, targets, bad_seed, steps=(1.0,))
    history = [converged_record(0, bad_seed, 4.23e-3, 3.40e-5, 286.72, targets)]
    with pytest.raises(ExhaustedSpace):
        for i in range(1, 40):
            proposal = agent.propose(history)
            history.append(converged_record(i, proposal.params, 4.23e-3, 9.0e-5, 300.0, targets))
    assert 1 < len(history) <= 23


def test_failed_centre_falls_back_to_seed(bad_seed, space, targets):
    agent = BaselineAgent(space, targets, bad_seed)
    proposal = agent.propose([failed_record(0, bad_seed)])
    assert "from seed design" in proposal.rationale


def test_recover_reuses_the_poll(bad_seed, space, targets):
    agent = BaselineAgent(space, targets, bad_seed)
    history = [converged_record(0, bad_seed, 4.23e-3, 3.40e-5, 286.72, targets)]
    failed = bad_seed.replace(gate_length=8.0)
    history.append(failed_record(1, failed))
    recovered = agent.recover(history, history[0], failed, "aspect rule: test")
    assert recovered.rationale.startswith("recovery: coordinate search")
    assert recovered.params != failed


def test_shuffled_poll_order_is_seeded(bad_seed, space, targets):
    history = [converged_record(0, bad_seed, 4.23e-3, 3.40e-5, 286.72, targets)]
    a = BaselineAgent(space, targets, bad_seed, shuffle_seed=3).propose(history)
    b = BaselineAgent(space, targets, bad_seed, shuffle_seed=3).propose(history)
    assert a == b


def test_bad_arguments(bad_seed, space, targets):
    with pytest.raises(ValueError):
        BaselineAgent(space, targets, bad_seed, steps=())
    with pytest.raises(ValueError):
        BaselineAgent(space, targets, bad_seed, steps=(0.5, 1.5))
    with pytest.raises(EmptyHistory):
        BaselineAgent(space, targets, bad_seed).propose([])


def test_integer_moves_round_half_up_like_clamp(r1, space, targets):
    agent = BaselineAgent(space, targets, r1, steps=(0.375,))
    assert agent._neighbour(r1, "num_sheets", +1, 0.375).num_sheets == 5
    assert agent._neighbour(r1, "num_sheets", -1, 0.375).num_sheets == 2
