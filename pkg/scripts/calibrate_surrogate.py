"""
Grid search over the surrogate's electrostatic coefficients.

A coefficient set is accepted when
  - the reference design meets every IRDS-2024 target,
  - the bad seed passes Ion but fails SS, Ioff and the on-off ratio,
  - the baseline coordinate search reaches SUCCESS from the bad seed
    within 50 iterations.

Accepted sets are printed with the reference-design margins so the most
central one can be copied into SurrogateCoefficients.

Usage:
    python scripts/calibrate_surrogate.py
    python scripts/calibrate_surrogate.py --c1 1.0 1.25 1.5 --c3 6 8 10
"""

import argparse
import itertools
from dataclasses import replace

from tcadloop.agent.baseline import BaselineAgent
from tcadloop.deckgen.sweep import SweepConfig
from tcadloop.errors import ExhaustedSpace, MetricsError
from tcadloop.history import IterationRecord
from tcadloop.params import BAD_SEED_DESIGN, REFERENCE_DESIGN, ParamSpace, SpecTargets
from tcadloop.postproc import extract_metrics
from tcadloop.surrogate import COEFFICIENTS, Converged, NonConvergent, simulate_iv

MAX_ITERATIONS = 50


def evaluate(params, coefficients, targets):
    sweep = SweepConfig().for_supply(params.vdd)
    outcome = simulate_iv(params, sweep, coefficients=coefficients)
    if not isinstance(outcome, Converged):
        return outcome, None
    try:
        return outcome, extract_metrics(outcome.iv, params.vdd, targets)
    except MetricsError as exc:
        return NonConvergent(f"post-processing failed: {exc}"), None


def baseline_iterations(coefficients, space, targets):
    """Iterations the baseline needs from the bad seed, or None."""
    agent = BaselineAgent(space, targets, BAD_SEED_DESIGN)
    history = []
    params, rationale = BAD_SEED_DESIGN, "seed design"
    for index in range(MAX_ITERATIONS):
        outcome, metrics = evaluate(params, coefficients, targets)
        history.append(IterationRecord(index, params, outcome, metrics, rationale))
        if metrics is not None and metrics.meets_all:
            return index
        try:
            proposal = agent.propose(history)
        except ExhaustedSpace:
            return None
        params, rationale = proposal.params, proposal.rationale
    return None


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[1])
    parser.add_argument("--c1", type=float, nargs="+", default=[1.0, 1.25, 1.5])
    parser.add_argument("--c2", type=float, nargs="+", default=[1.5, 2.0, 2.5])
    parser.add_argument("--c3", type=float, nargs="+", default=[6.0, 8.0, 10.0])
    parser.add_argument("--k-on", type=float, nargs="+", default=[0.09, 0.105, 0.12])
    args = parser.parse_args()

    space = ParamSpace.default()
    targets = SpecTargets()
    accepted = 0

    print(f"{'c1':>5} {'c2':>5} {'c3':>5} {'k_on':>6} {'ss':>7} {'ion':>10} {'ioff':>10} {'iters':>5}")
    for c1, c2, c3, k_on in itertools.product(args.c1, args.c2, args.c3, args.k_on):
        coefficients = replace(COEFFICIENTS, c1=c1, c2=c2, c3=c3, k_on=k_on)

        _, ref = evaluate(REFERENCE_DESIGN, coefficients, targets)
        if ref is None or not ref.meets_all:
            continue
        _, bad = evaluate(BAD_SEED_DESIGN, coefficients, targets)
        if bad is None:
            continue
        v = bad.verdicts
        if not (v["ion"] and not v["ss"] and not v["ioff"] and not v["onoff"]):
            continue
        iterations = baseline_iterations(coefficients, space, targets)
        if iterations is None:
            continue

        accepted += 1
        print(f"{c1:5.2f} {c2:5.2f} {c3:5.1f} {k_on:6.3f} {ref.ss:7.2f} {ref.ion:10.3e} {ref.ioff:10.3e} {iterations:5d}")

    print(f"accepted {accepted} coefficient sets")


if __name__ == "__main__":
    main()
