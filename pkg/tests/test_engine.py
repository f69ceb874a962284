"""Cave simulation: stepping, selection law, traces, and Monte Carlo."""

from __future__ import annotations

import json
from collections import deque
from fractions import Fraction
from itertools import combinations

import numpy as np
import pytest

from robinhood import (
    CaveState,
    FunctionSpec,
    RestrictionViolated,
    ScheduleExhausted,
    SpecInvalid,
    StrategyKind,
    apply_removals,
    empirical_survival,
    run_trace,
    select_removals,
    step_day,
    survival_probability,
)
from robinhood.engine import (
    Segment,
    TaggedBag,
    WindowCell,
    _fast_path_probs,
    hypergeom_weights,
    sample_hypergeom,
)
from robinhood.rng import CounterRNG, stream_key, u01_from_word, word

from .conftest import make_instance

DET = StrategyKind.OLDEST_DET
RND = StrategyKind.OLDEST_RND


def advance(state, instance, i, strategy=DET, rng=None):
    step_day(state, instance, i)
    plan = select_removals(state, instance, i, strategy, rng)
    apply_removals(state, plan)
    return plan


def night_rng(seed, i, trial=0):
    return CounterRNG(stream_key(seed, trial, i))


# ---------------------------------------------------------------- stepping


def test_step_day_accumulates_and_merges(memoryless_121) -> None:
    state = CaveState()
    step_day(state, memoryless_121, 1)
    # b = 0: the day's own batch immediately becomes very old.
    assert state.cave_size == 2
    assert state.very_old_count == 2
    assert state.window_counts() == []
    assert state.merge_cutoff == 1


def test_step_day_keeps_window_cells_under_positive_memory() -> None:
    b_spec = FunctionSpec.table([0], FunctionSpec.constant(1))
    inst = make_instance(1, 3, b_spec, horizon_cap=10)
    state = CaveState()
    step_day(state, inst, 1)
    assert state.very_old_count == 3 and state.window_counts() == []
    plan = select_removals(state, inst, 1, DET)
    apply_removals(state, plan)
    step_day(state, inst, 2)
    # b(2) = 1: day 2 stays in the window, day 1 leftovers are already old.
    assert state.window_counts() == [(2, 3)]
    assert state.very_old_count == 2


def test_step_day_rejects_out_of_sequence_calls(memoryless_121) -> None:
    state = CaveState()
    step_day(state, memoryless_121, 1)
    with pytest.raises(SpecInvalid):
        step_day(state, memoryless_121, 3)


def test_step_day_rejects_memory_jump() -> None:
    b_spec = FunctionSpec.table([0, 2], FunctionSpec.constant(2))
    inst = make_instance(1, 9, b_spec, horizon_cap=10)
    state = CaveState()
    advance(state, inst, 1)
    with pytest.raises(RestrictionViolated):
        step_day(state, inst, 2)


def test_step_day_past_horizon_is_exhausted() -> None:
    inst = make_instance(1, 2, 0, horizon_cap=2)
    state = CaveState()
    advance(state, inst, 1)
    advance(state, inst, 2)
    with pytest.raises(ScheduleExhausted):
        step_day(state, inst, 3)


# ------------------------------------------------------------ conservation


def _pool_and_window(state) -> tuple[int, int]:
    pool = sum(seg.end - seg.front for seg in state.segments)
    window = sum(cell.count for cell in state.cells)
    return pool, window


@pytest.mark.parametrize("strategy", [DET, RND])
def test_counts_conserved_across_nights(strategy) -> None:
    b_spec = FunctionSpec.table([0, 1, 2], FunctionSpec.constant(2))
    inst = make_instance(2, FunctionSpec.affine(1, 3), b_spec, horizon_cap=30)
    state = CaveState()
    for i in range(1, 31):
        rng = night_rng(17, i) if strategy is RND else None
        advance(state, inst, i, strategy, rng)
        pool, window = _pool_and_window(state)
        if strategy is DET:
            assert pool == state.very_old_count
        assert state.very_old_count + window == state.cave_size
        assert state.cave_size == inst.cave_level(i)


@pytest.mark.parametrize("strategy", [DET, RND])
def test_very_old_count_equals_level_formula(strategy) -> None:
    """The state's pool size must reproduce Ltilde(i) night after night.

    Holds for any schedule satisfying restriction 1, including nights where
    removals dip into the memory window: oldest-first removal always
    exhausts arrival days in order, which is what the formula's clamp at
    zero encodes.
    """
    cases = [
        make_instance(1, 2, 0, horizon_cap=50),
        make_instance(2, 3, FunctionSpec.table([0], FunctionSpec.constant(1)), horizon_cap=50),
        make_instance(1, 2, FunctionSpec.affine(1, -1), horizon_cap=50),
        make_instance(3, 5, FunctionSpec.table([0, 1, 2, 3], FunctionSpec.constant(3)), horizon_cap=50),
    ]
    for inst in cases:
        state = CaveState()
        for i in range(1, 51):
            step_day(state, inst, i)
            assert state.very_old_count == inst.very_old_level(i)
            rng = night_rng(23, i) if strategy is RND else None
            plan = select_removals(state, inst, i, strategy, rng)
            apply_removals(state, plan)


# -------------------------------------------------------------- selection


def test_partial_very_old_det_takes_front_positions() -> None:
    # Pool: day 1 positions 2..3 (front already advanced), day 2 positions
    # 1..3. Quota 2 -> day-1 positions 2, 3 leave; tagged (1, 2) goes,
    # (2, 1) stays.
    inst = make_instance(2, 9, 0, horizon_cap=5)
    state = CaveState(
        night=2,
        cave_size=5,
        very_old_count=5,
        merge_cutoff=2,
        segments=deque([Segment(day=1, front=2, end=4), Segment(day=2, front=1, end=4)]),
        tagged=[TaggedBag(id=1, day=1, pos=2), TaggedBag(id=2, day=2, pos=1)],
        next_tag_id=3,
    )
    plan = select_removals(state, inst, 3, DET)
    assert plan.very_old_take == 2
    assert plan.window_takes == []
    assert plan.removed_tagged == [1]
    apply_removals(state, plan)
    assert state.very_old_count == 3
    assert state.tagged[0].removed_night == 3
    assert state.tagged[1].in_cave


def test_cascade_spans_whole_cells_then_boundary() -> None:
    # At night 4 the pool holds 1 leftover bag and the window holds day 3
    # (4 bags) and day 4 (8 bags). Quota 7 = 1 + 4 + 2: full pool, full
    # day-3 cell, then 2 of day 4 (deterministic -> front positions).
    r_spec = FunctionSpec.generated([1, 1, 1, 7])
    s_spec = FunctionSpec.generated([2, 2, 4, 8])
    b_spec = FunctionSpec.generated([0, 0, 1, 2])
    inst = make_instance(r_spec, s_spec, b_spec, horizon_cap=4)
    state = CaveState()
    for i in range(1, 4):
        advance(state, inst, i)
    assert state.very_old_count == 1  # 2 + 2 arrivals minus 3 removals
    assert state.window_counts() == [(3, 4)]
    step_day(state, inst, 4)  # b(4) = 2 keeps day 3 inside the window
    assert state.very_old_count == 1
    assert state.window_counts() == [(3, 4), (4, 8)]
    plan = select_removals(state, inst, 4, DET)
    assert plan.very_old_take == 1
    assert plan.window_takes == [(3, 4), (4, 2)]
    apply_removals(state, plan)
    assert state.cave_size == 6
    assert state.window_counts() == [(3, 0), (4, 6)]


def test_cascade_boundary_with_zero_remainder_is_dropped() -> None:
    # Quota exactly consumes the pool plus the first cell: no zero-count
    # entry for the next cell may appear in the plan.
    r_spec = FunctionSpec.generated([1, 1, 1, 5])
    s_spec = FunctionSpec.generated([2, 2, 4, 6])
    b_spec = FunctionSpec.generated([0, 0, 1, 2])
    inst = make_instance(r_spec, s_spec, b_spec, horizon_cap=4)
    state = CaveState()
    for i in range(1, 4):
        advance(state, inst, i)
    step_day(state, inst, 4)
    plan = select_removals(state, inst, 4, DET)
    assert plan.very_old_take == 1
    assert plan.window_takes == [(3, 4)]
    assert plan.removed_cells() == [(0, 1), (3, 4)]


def test_select_rejects_quota_beyond_cave() -> None:
    inst = make_instance(4, 5, 0, horizon_cap=3)
    state = CaveState(night=0, cave_size=3, very_old_count=3)
    with pytest.raises(SpecInvalid):
        select_removals(state, inst, 1, DET)


def test_randomized_strategy_requires_rng(memoryless_121) -> None:
    state = CaveState()
    step_day(state, memoryless_121, 1)
    with pytest.raises(SpecInvalid):
        select_removals(state, memoryless_121, 1, RND, None)


def test_apply_rejects_foreign_or_stale_plans(memoryless_121) -> None:
    state = CaveState()
    step_day(state, memoryless_121, 1)
    plan = select_removals(state, memoryless_121, 1, DET)
    apply_removals(state, plan)
    with pytest.raises(SpecInvalid):
        apply_removals(state, plan)  # same night twice


# ----------------------------------------------------------- hypergeometric


def brute_hypergeom_pmf(v: int, t: int, q: int) -> dict[int, Fraction]:
    """Enumerate all q-subsets of v positions, t of which are tagged."""
    population = list(range(v))
    tagged = set(range(t))
    counts: dict[int, int] = {}
    total = 0
    for subset in combinations(population, q):
        j = len(tagged.intersection(subset))
        counts[j] = counts.get(j, 0) + 1
        total += 1
    return {j: Fraction(c, total) for j, c in counts.items()}


def test_hypergeom_weights_match_exhaustive_enumeration() -> None:
    for v in range(1, 7):
        for t in range(0, v + 1):
            for q in range(0, v + 1):
                weights, total = hypergeom_weights(v, t, q)
                pmf = brute_hypergeom_pmf(v, t, q)
                for j, w in enumerate(weights):
                    assert Fraction(w, total) == pmf.get(j, Fraction(0))


def test_hypergeom_weights_handle_astronomical_populations() -> None:
    v = 10**40
    t = 3
    q = 10**39
    weights, total = hypergeom_weights(v, t, q)
    # P(j = 3) = (q/v)^3 up to O(1/v) corrections; sanity-check the scale.
    p3 = Fraction(weights[3], total)
    assert abs(float(p3) - 0.1**3) < 1e-6
    assert sum(weights) == total


def test_sample_hypergeom_is_exact_for_forced_cases() -> None:
    rng = CounterRNG(0)
    assert sample_hypergeom(5, 0, 3, rng) == 0
    assert sample_hypergeom(5, 2, 0, rng) == 0
    assert sample_hypergeom(5, 2, 5, rng) == 2


def test_sample_hypergeom_frequencies() -> None:
    v, t, q = 6, 3, 3
    rng = CounterRNG(stream_key(404, 0, 1))
    n = 20000
    counts = [0] * (t + 1)
    for _ in range(n):
        counts[sample_hypergeom(v, t, q, rng)] += 1
    pmf = brute_hypergeom_pmf(v, t, q)
    chi2 = 0.0
    for j in range(t + 1):
        expected = float(pmf.get(j, Fraction(0))) * n
        if expected:
            chi2 += (counts[j] - expected) ** 2 / expected
    assert chi2 < 30.0  # 3 dof; p(chi2 > 30) ~ 1e-6


# ----------------------------------------------------------------- traces


def test_trace_digest_is_deterministic(memoryless_121) -> None:
    kw = dict(nights=30, seed=99, tagged_days=[(2, 1), (5, 2)])
    a = run_trace(memoryless_121, RND, **kw)
    b = run_trace(memoryless_121, RND, **kw)
    assert a.digest == b.digest
    assert a.to_jsonl() == b.to_jsonl()


def test_trace_digest_sensitive_to_seed_even_for_det(memoryless_121) -> None:
    a = run_trace(memoryless_121, DET, 10, seed=1)
    b = run_trace(memoryless_121, DET, 10, seed=2)
    assert a.digest != b.digest  # seed is part of the hashed header


def test_trace_digest_sensitive_to_strategy_and_tags(memoryless_121) -> None:
    a = run_trace(memoryless_121, DET, 10, seed=1)
    b = run_trace(memoryless_121, RND, 10, seed=1)
    c = run_trace(memoryless_121, DET, 10, seed=1, tagged_days=[3])
    assert len({a.digest, b.digest, c.digest}) == 3


def test_trace_jsonl_roundtrip_and_trailer(memoryless_121) -> None:
    trace = run_trace(memoryless_121, RND, 5, seed=7, tagged_days=[(1, 2)])
    lines = trace.to_jsonl().splitlines()
    header = json.loads(lines[0])
    assert header["format"] == "rh-trace-v1"
    assert header["rng"] == "rhrng-v1"
    assert header["seed"] == 7
    assert json.loads(lines[-1]) == {"digest": trace.digest}
    assert len(lines) == 5 + 2


def test_trace_det_fifo_removal_nights(memoryless_121) -> None:
    # b = 0, r = 1, s = 2: one removal per night off the front, so bag
    # (d, p) is the (2(d-1) + p)-th arrival and leaves on exactly that night.
    tags = [(d, p) for d in (1, 2, 3, 7) for p in (1, 2)]
    trace = run_trace(memoryless_121, DET, 20, seed=0, tagged_days=tags)
    for bag in trace.tagged:
        assert bag.removed_night == 2 * (bag.day - 1) + bag.pos


def test_trace_sequential_labels_and_random_unit_labels(memoryless_121) -> None:
    seq = run_trace(memoryless_121, RND, 5, seed=3, tagged_days=[(1, 1), (2, 2)])
    assert [bag.label for bag in seq.tagged] == ["1", "2"]
    rnd = run_trace(
        memoryless_121, RND, 5, seed=3, tagged_days=[(1, 1), (2, 2)], label_mode="random-unit"
    )
    floats = [float(bag.label) for bag in rnd.tagged]
    assert all(0.0 <= x < 1.0 for x in floats)
    # Labels come from the reserved night-0 stream of the same seed/trial.
    label_rng = CounterRNG(stream_key(3, 0, 0))
    assert floats == [label_rng.u01(), label_rng.u01()]
    # Labels are cosmetic: dynamics identical, headers differ.
    assert [b.removed_night for b in rnd.tagged] == [b.removed_night for b in seq.tagged]


def test_trace_rejects_bad_tags(memoryless_121) -> None:
    with pytest.raises(SpecInvalid):
        run_trace(memoryless_121, DET, 5, seed=0, tagged_days=[(0, 1)])
    with pytest.raises(SpecInvalid):
        run_trace(memoryless_121, DET, 5, seed=0, tagged_days=[(1, 0)])
    with pytest.raises(SpecInvalid):
        run_trace(memoryless_121, DET, 5, seed=0, tagged_days=[(1, 3)])  # s(1) = 2


def test_trace_record_counts_match_levels(memoryless_121) -> None:
    trace = run_trace(memoryless_121, RND, 15, seed=11)
    for rec in trace.records:
        i = rec["i"]
        assert int(rec["cave_after"]) == memoryless_121.cave_level(i)
        removed = sum(int(c) for _, c in map(tuple, rec["removed_cells"]))
        assert removed == memoryless_121.r_at(i)


# ------------------------------------------------------------- Monte Carlo


def test_fast_path_probabilities(memoryless_121) -> None:
    probs = _fast_path_probs(memoryless_121, 3, 10)
    assert probs == [(i, 1.0 / (i + 1)) for i in range(3, 11)]


def test_fast_path_declines_on_window_dips() -> None:
    # Full-memory schedule: the pool is always empty, never covers r.
    inst = make_instance(1, 2, FunctionSpec.affine(1, 0), horizon_cap=10)
    assert _fast_path_probs(inst, 1, 10) is None


def test_fast_path_matches_scalar_streams(memoryless_121) -> None:
    # The vectorized key chain must equal stream_key(seed, t, i) draws.
    seed, trials, nights = 5, 4, 6
    est, _, _ = empirical_survival(memoryless_121, 1, nights, trials, seed)
    survivors = 0
    for t in range(trials):
        alive = True
        for i in range(1, nights + 1):
            p = 1.0 / (i + 1)
            u = u01_from_word(word(stream_key(seed, t, i), 0))
            if u < p:
                alive = False
                break
        survivors += alive
    assert est == survivors / trials


def test_empirical_survival_agrees_with_exact(memoryless_121) -> None:
    exact = float(survival_probability(memoryless_121, 1, 60, mode="exact_strategy").value)
    est, se, n = empirical_survival(memoryless_121, 1, 60, 40000, seed=21)
    assert n == 40000
    assert abs(est - exact) < 4 * max(se, 1e-4)


def test_trace_machinery_reproduces_the_closed_product_law() -> None:
    # Drive the full per-trial trace machinery (what the Monte Carlo
    # fallback runs) on a positive-memory schedule and compare against the
    # exact product the closed law predicts for it.
    b_spec = FunctionSpec.table([0], FunctionSpec.constant(1))
    inst = make_instance(1, 3, b_spec, horizon_cap=25)
    exact = float(survival_probability(inst, 2, 25, mode="exact_strategy").value)
    trials = 3000
    survivors = 0
    for t in range(trials):
        trace = run_trace(inst, RND, 25, seed=31, tagged_days=[(2, 1)], trial_index=t)
        survivors += trace.tagged[0].in_cave
    est = survivors / trials
    se = (est * (1 - est) / trials) ** 0.5
    assert abs(est - exact) < 4 * max(se, 1e-3)


def test_full_memory_kills_every_bag() -> None:
    inst = make_instance(1, 2, FunctionSpec.affine(1, 0), horizon_cap=60)
    est, se, _ = empirical_survival(inst, 1, 60, 200, seed=2)
    assert est == 0.0 and se == 0.0


def test_no_nights_after_day_means_certain_survival(memoryless_121) -> None:
    assert empirical_survival(memoryless_121, 5, 4, 100, seed=0) == (1.0, 0.0, 100)


def test_empirical_survival_validates_inputs(memoryless_121) -> None:
    with pytest.raises(SpecInvalid):
        empirical_survival(memoryless_121, 0, 5, 10, seed=0)
    with pytest.raises(SpecInvalid):
        empirical_survival(memoryless_121, 1, 5, 0, seed=0)
    with pytest.raises(ScheduleExhausted):
        empirical_survival(memoryless_121, 1, 10**6, 10, seed=0)
