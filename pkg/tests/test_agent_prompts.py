import json

import pytest

from conftest import converged_record, failed_record
from tcadloop.agent.prompts import build_prompt, build_recovery_prompt, output_contract, sci
from tcadloop.agent.proposal import params_block, parse_proposal
from tcadloop.errors import EmptyHistory, NoJsonFound, SchemaError
from tcadloop.history import IterationRecord
from tcadloop.params import FIELD_ORDER, SpecTargets
from tcadloop.postproc import extract_metrics
from tcadloop.surrogate import simulate_iv

TARGET_NUMERALS = ("72 mV/dec", "1.0e-8", "7.87e-4", "4.90")


def _history(r1, targets, n):
    return [converged_record(i, r1.replace(gate_length=10.0 + i), 1e-3, 1e-9, 80.0 - i, targets) for i in range(n)]


def _reply(params, **extra):
    doc = params.to_dict()
    doc.update(extra)
    return json.dumps(doc)


def test_sci_has_no_exponent_padding():
    assert sci(1e-8, 1) == "1.0e-8"
    assert sci(7.87e-4, 2) == "7.87e-4"
    assert sci(2.31e-3, 3) == "2.310e-3"


def test_quantitative_prompt_states_every_gap(bad_seed, idvg, space, targets):
    outcome = simulate_iv(bad_seed, idvg)
    seed = IterationRecord(0, bad_seed, outcome, extract_metrics(outcome.iv, 0.65, targets), "seed")
    prompt = build_prompt([seed], space, targets, "quantitative")
    assert "target <= 72 mV/dec" in prompt
    assert "target <= 1.0e-8 A/um" in prompt
    assert "target >= 7.87e-4 A/um" in prompt
    assert "target >= 4.90" in prompt
    assert "(fail)" in prompt
    assert "(measured at iteration 0)" in prompt


def _section(prompt, title):
    return prompt.split(f"## {title}\n", 1)[1].split("\n## ", 1)[0]


def test_qualitative_prompt_never_names_a_target(r1, space, targets):
    history = _history(r1, targets, 1)
    prompt = build_prompt(history, space, targets, "qualitative")
    objective = _section(prompt, "Objective")
    assert "increase Ion, decrease Ioff" in objective
    assert "target" not in objective.lower()
    for numeral in TARGET_NUMERALS:
        assert numeral not in objective
    other = SpecTargets(ss_max=65.0, ioff_max=1e-9, ion_min=1e-3, onoff_min=5.5)
    assert build_prompt(history, space, other, "qualitative") == prompt
    quantitative = _section(build_prompt(history, space, targets, "quantitative"), "Objective")
    assert all(numeral in quantitative for numeral in TARGET_NUMERALS)


def test_prompts_share_the_parameter_table_and_contract(r1, space, targets):
    history = _history(r1, targets, 2)
    for mode in ("quantitative", "qualitative"):
        prompt = build_prompt(history, space, targets, mode)
        assert "| gate_length | nm | 8 | 30 | linear |" in prompt
        assert "| num_sheets | count | 1 | 5 | integer |" in prompt
        assert prompt.rstrip().endswith(output_contract().rstrip())
        assert "## Metric definitions" in prompt


def test_history_window_keeps_the_latest_records(r1, space, targets):
    prompt = build_prompt(_history(r1, targets, 8), space, targets, "quantitative")
    assert "(last 5 of 8)" in prompt
    assert "### Iteration 2\n" not in prompt
    for i in range(3, 8):
        assert f"### Iteration {i}\n" in prompt
    assert "(measured at iteration 7)" in prompt

    short = build_prompt(_history(r1, targets, 8), space, targets, "quantitative", window=2)
    assert "(last 2 of 8)" in short


def test_prompt_needs_history(r1, space, targets):
    with pytest.raises(EmptyHistory):
        build_prompt([], space, targets, "quantitative")
    with pytest.raises(ValueError):
        build_prompt([failed_record(0, r1)], space, targets, "vague")


def test_prompt_before_any_convergence(bad_seed, space, targets):
    prompt = build_prompt([failed_record(0, bad_seed)], space, targets, "quantitative")
    assert "No design has converged yet." in prompt
    assert "SS <= 72 mV/dec" in prompt
    assert "Outcome: non-convergent (aspect rule: test)" in prompt


def test_band_summary_is_optional(r1, idvg, space, targets):
    outcome = simulate_iv(r1, idvg)
    record = IterationRecord(0, r1, outcome, extract_metrics(outcome.iv, 0.65, targets), "seed")
    assert "Conduction-band barrier" not in build_prompt([record], space, targets, "quantitative")
    with_bands = build_prompt([record], space, targets, "quantitative", include_bands=True)
    assert f"OFF {outcome.bands_off.barrier_height:.3f} eV" in with_bands


def test_recovery_prompt_blocks(r1, space, targets):
    good = converged_record(2, r1, 1e-3, 1e-9, 70.0, targets)
    failed = r1.replace(gate_length=8.0, sheet_thickness=5.0)
    diagnostic = "\n".join(f"line {i:03d}" for i in range(200))
    prompt = build_recovery_prompt(good, failed, diagnostic, space, failed_index=4)

    assert "The design of iteration 4 did not converge" in prompt
    assert "## Last convergent design (iteration 2)" in prompt
    assert params_block(good.params) in prompt
    assert params_block(failed) in prompt
    assert "Metrics: Ion = 1.000e-3 A/um" in prompt
    assert "line 150" in prompt
    assert "line 199" in prompt
    assert "line 149" not in prompt
    assert "between the failed design and the last convergent design" in prompt


def test_recovery_falls_back_to_the_seed(bad_seed, space):
    failed = bad_seed.replace(gate_length=8.0)
    prompt = build_recovery_prompt(None, failed, "solver diverged", space, seed=bad_seed)
    assert "initial seed design" in prompt
    assert "The last proposed design did not converge" in prompt
    assert params_block(bad_seed) in prompt
    with pytest.raises(ValueError):
        build_recovery_prompt(None, failed, "solver diverged", space)


def test_parse_fenced_reply_with_prose(r1, space):
    text = "Sure, here is {my} proposal:\n```json\n" + _reply(r1.replace(gate_length=16.0), rationale=" longer gate ") + "\n```\nGood luck."
    proposal = parse_proposal(text, space)
    assert proposal.params == r1.replace(gate_length=16.0)
    assert proposal.rationale == "longer gate"
    assert proposal.raw_response == text


def test_parse_clamps_and_rounds(r1, space):
    proposal = parse_proposal(_reply(r1.replace(gate_length=45.0, num_sheets=3.7)), space)
    assert proposal.params.gate_length == 30.0
    assert proposal.params.num_sheets == 4
    assert proposal.rationale == ""


def test_parse_rejects_unusable_replies(r1, space):
    with pytest.raises(NoJsonFound):
        parse_proposal("I would make the gate a bit longer.", space)
    with pytest.raises(NoJsonFound):
        parse_proposal("[14, 25, 5]", space)

    doc = r1.to_dict()
    del doc["eot"]
    with pytest.raises(SchemaError, match="missing fields: eot"):
        parse_proposal(json.dumps(doc), space)
    with pytest.raises(SchemaError, match="unknown fields"):
        parse_proposal(_reply(r1, colour="blue"), space)
    with pytest.raises(SchemaError):
        parse_proposal(_reply(r1, gate_length="14 nm"), space)
    with pytest.raises(SchemaError, match="rationale"):
        parse_proposal(_reply(r1, rationale=["a"]), space)


def test_output_contract_lists_every_key():
    contract = output_contract()
    for name in FIELD_ORDER:
        assert name in contract
