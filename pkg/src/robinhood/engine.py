"""Night-by-night simulation of the cave game.

State is count-based: anonymous bags are stored as exact integer counts per
partition cell, so cells of astronomical size cost nothing. Only explicitly
tagged bags are materialized, and their joint removal law is preserved
exactly by hypergeometric draws inside any partially removed cell.

The partition on night i is: the very-old pool (arrival day <= i - b(i)),
then one cell per remembered arrival day, oldest first. Removal follows the
oldest-first cascade — find the minimal prefix of the partition whose total
strictly exceeds the night's quota r(i); every earlier cell is emptied and
the remainder is drawn from the boundary cell, either by lowest internal id
(deterministic variant) or as a uniform subset (randomized variant).
Internal ids order bags by arrival day, then by position within the day's
batch, so the deterministic variant is exactly FIFO.

Randomness is addressable: the draw stream for night i of trial t under
master seed S has key ``stream_key(S, t, i)`` (stream 0 is reserved for bag
labels), which makes traces reproducible and lets the vectorized Monte
Carlo path evaluate any (trial, night) cell independently.
"""

from __future__ import annotations

import hashlib
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Any, Iterable

import numpy as np

from .errors import (
    RestrictionViolated,
    ScheduleExhausted,
    SpecInvalid,
)
from .rng import (
    RNG_VERSION,
    CounterRNG,
    child_keys_many,
    child_keys_vec,
    stream_key,
    words_vec,
)
from .schedule import GameInstance, canonical_dumps, decimal_str

TRACE_FORMAT = "rh-trace-v1"

#: Day key used for the very-old pool in removal records (real days are >= 1).
VERY_OLD_KEY = 0


class StrategyKind(str, Enum):
    OLDEST_DET = "oldest-det"
    OLDEST_RND = "oldest-rnd"


def as_strategy(value: "StrategyKind | str") -> StrategyKind:
    if isinstance(value, StrategyKind):
        return value
    try:
        return StrategyKind(value)
    except ValueError:
        raise SpecInvalid(f"unknown strategy {value!r}; expected oldest-det or oldest-rnd") from None


@dataclass
class TaggedBag:
    """A materialized bag: ``pos`` is its 1-based slot in the day's batch."""

    id: int
    day: int
    pos: int
    removed_night: int | None = None
    label: str = ""

    @property
    def in_cave(self) -> bool:
        return self.removed_night is None

    def as_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "day": self.day,
            "pos": decimal_str(self.pos),
            "removed_night": self.removed_night,
            "label": self.label,
        }


@dataclass
class WindowCell:
    """Bags from one remembered arrival day; positions [front, end) remain.

    Only the deterministic strategy consumes positions from the front; for
    the randomized strategy the width end - front is just a count.
    """

    day: int
    front: int
    end: int

    @property
    def count(self) -> int:
        return self.end - self.front


@dataclass
class Segment:
    """A merged span of the very-old pool, kept in arrival order for FIFO."""

    day: int
    front: int
    end: int


@dataclass
class CaveState:
    """Mutable game state owned by a single run.

    ``night`` is the last completed night; ``merge_cutoff`` is the largest
    arrival day already merged into the very-old pool. ``segments`` carries
    the arrival-ordered structure of the very-old pool; only the
    deterministic strategy reads it.
    """

    night: int = 0
    cave_size: int = 0
    very_old_count: int = 0
    merge_cutoff: int = 0
    segments: deque[Segment] = field(default_factory=deque)
    cells: deque[WindowCell] = field(default_factory=deque)
    tagged: list[TaggedBag] = field(default_factory=list)
    pending_tags: dict[int, list[int]] = field(default_factory=dict)
    next_tag_id: int = 1

    def window_counts(self) -> list[tuple[int, int]]:
        return [(cell.day, cell.count) for cell in self.cells]


def step_day(state: CaveState, instance: GameInstance, i: int) -> CaveState:
    """Apply day i: add the new batch, then age the memory window.

    Arrival days at or below i - b(i) merge into the very-old pool. A memory
    bound that grows by more than one per night would require a forgotten
    day to re-enter the window, which the count-based state cannot represent
    — that raises RestrictionViolated.
    """
    if i != state.night + 1:
        raise SpecInvalid(f"step_day for day {i} but last completed night is {state.night}")
    if i > instance.horizon_cap:
        raise ScheduleExhausted(f"day {i} beyond instance horizon_cap {instance.horizon_cap}")
    _, s_i, b_i = instance.evaluate(i)

    state.cells.append(WindowCell(day=i, front=1, end=s_i + 1))
    state.cave_size += s_i

    for pos in state.pending_tags.pop(i, ()):  # created in position order
        if not (1 <= pos <= s_i):
            raise SpecInvalid(f"tag position {pos} outside day {i}'s batch of size {s_i}")
        state.tagged.append(TaggedBag(id=state.next_tag_id, day=i, pos=pos))
        state.next_tag_id += 1

    cutoff = i - b_i
    if cutoff < state.merge_cutoff:
        raise RestrictionViolated(
            f"memory bound at night {i} would re-admit forgotten days"
            f" (cutoff {cutoff} < previously merged {state.merge_cutoff})"
        )
    while state.cells and state.cells[0].day <= cutoff:
        cell = state.cells.popleft()
        if cell.count > 0:
            state.segments.append(Segment(day=cell.day, front=cell.front, end=cell.end))
            state.very_old_count += cell.count
    state.merge_cutoff = cutoff
    return state


def hypergeom_weights(v: int, t: int, q: int) -> tuple[list[int], int]:
    """Unnormalized pmf of 'tagged among removed' for a uniform q-of-v draw.

    With t tagged bags in a cell of v and q removed uniformly, the number j
    of removed tagged bags has probability weights[j] / total where::

        weights[j] = C(t, j) * perm(q, j) * perm(v - q, t - j)
        total      = perm(v, t)

    Only t + 1 short products of big integers — no factorials of v — so the
    law stays exact for astronomically large cells.
    """
    if not (0 <= t <= v and 0 <= q <= v):
        raise ValueError(f"invalid hypergeometric parameters v={v} t={t} q={q}")
    weights = [
        math.comb(t, j) * math.perm(q, j) * math.perm(v - q, t - j) for j in range(t + 1)
    ]
    return weights, math.perm(v, t)


def sample_hypergeom(v: int, t: int, q: int, rng: CounterRNG) -> int:
    """Exact draw of how many of t tagged bags fall in a uniform q-subset."""
    if t == 0 or q == 0:
        return 0
    if q == v:
        return t
    weights, total = hypergeom_weights(v, t, q)
    u = rng.below(total)
    acc = 0
    for j, w in enumerate(weights):
        acc += w
        if u < acc:
            return j
    raise AssertionError("hypergeometric weights did not cover the draw")


def _choose_uniform_subset(count: int, take: int, rng: CounterRNG) -> list[int]:
    """Uniform ``take``-subset of range(count); no draw when forced."""
    if take == 0:
        return []
    if take == count:
        return list(range(count))
    idx = list(range(count))
    for x in range(take):
        y = x + rng.below(count - x)
        idx[x], idx[y] = idx[y], idx[x]
    return sorted(idx[:take])


@dataclass
class RemovalPlan:
    """Outcome of one night's selection, not yet applied to the state."""

    night: int
    quota: int
    strategy: StrategyKind
    very_old_take: int
    window_takes: list[tuple[int, int]]  # (arrival day, count), oldest first
    removed_tagged: list[int]  # tagged bag ids

    def removed_cells(self) -> list[tuple[int, int]]:
        cells: list[tuple[int, int]] = []
        if self.very_old_take:
            cells.append((VERY_OLD_KEY, self.very_old_take))
        cells.extend(self.window_takes)
        return cells


def _very_old_tags(state: CaveState) -> list[TaggedBag]:
    return [b for b in state.tagged if b.in_cave and b.day <= state.merge_cutoff]


def _cell_tags(state: CaveState, day: int) -> list[TaggedBag]:
    return [b for b in state.tagged if b.in_cave and b.day == day]


def _det_very_old_removals(state: CaveState, q: int) -> list[int]:
    """Tagged ids hit when q lowest-id bags leave the very-old pool."""
    removed: list[int] = []
    q_left = q
    for seg in state.segments:
        if q_left == 0:
            break
        take = min(q_left, seg.end - seg.front)
        upper = seg.front + take
        for bag in state.tagged:
            if bag.in_cave and bag.day == seg.day and seg.front <= bag.pos < upper:
                removed.append(bag.id)
        q_left -= take
    if q_left:
        raise AssertionError("very-old pool shorter than its recorded count")
    return removed


def select_removals(
    state: CaveState,
    instance: GameInstance,
    i: int,
    strategy: "StrategyKind | str",
    rng: CounterRNG | None = None,
) -> RemovalPlan:
    """Plan night i's removals without mutating the state.

    Walks the partition oldest-first, emptying whole cells until the quota
    r(i) lands strictly inside one boundary cell; the boundary remainder is
    taken by lowest id (deterministic) or uniformly (randomized). Tagged
    bags inside a uniformly drawn remainder are resolved by an exact
    hypergeometric draw, then a uniform choice of which tagged ones go.
    """
    strategy = as_strategy(strategy)
    if i != state.night + 1:
        raise SpecInvalid(f"select_removals for night {i} but last completed night is {state.night}")
    quota = instance.r_at(i)
    if quota > state.cave_size:
        raise SpecInvalid(f"night {i} quota {quota} exceeds cave size {state.cave_size}")
    if strategy is StrategyKind.OLDEST_RND and rng is None:
        raise SpecInvalid("randomized strategy needs an rng stream")

    removed_tagged: list[int] = []
    vo = state.very_old_count

    if quota < vo:
        # Boundary inside the very-old pool: nothing else is touched.
        if strategy is StrategyKind.OLDEST_DET:
            removed_tagged = _det_very_old_removals(state, quota)
        else:
            tags = _very_old_tags(state)
            j = sample_hypergeom(vo, len(tags), quota, rng)
            removed_tagged = [tags[k].id for k in _choose_uniform_subset(len(tags), j, rng)]
        return RemovalPlan(
            night=i,
            quota=quota,
            strategy=strategy,
            very_old_take=quota,
            window_takes=[],
            removed_tagged=removed_tagged,
        )

    # The whole very-old pool goes; continue the cascade through the window.
    removed_tagged.extend(b.id for b in _very_old_tags(state))
    window_takes: list[tuple[int, int]] = []
    cum = vo
    for cell in state.cells:
        if cum == quota:
            break
        count = cell.count
        if quota < cum + count:
            q = quota - cum
            if q:
                window_takes.append((cell.day, q))
                tags = _cell_tags(state, cell.day)
                if strategy is StrategyKind.OLDEST_DET:
                    upper = cell.front + q
                    removed_tagged.extend(
                        b.id for b in tags if cell.front <= b.pos < upper
                    )
                else:
                    j = sample_hypergeom(count, len(tags), q, rng)
                    removed_tagged.extend(
                        tags[k].id for k in _choose_uniform_subset(len(tags), j, rng)
                    )
            cum = quota
            break
        if count:
            window_takes.append((cell.day, count))
            removed_tagged.extend(b.id for b in _cell_tags(state, cell.day))
            cum += count
    if cum != quota:
        raise AssertionError("cascade failed to cover the quota despite a large enough cave")

    return RemovalPlan(
        night=i,
        quota=quota,
        strategy=strategy,
        very_old_take=vo,
        window_takes=window_takes,
        removed_tagged=removed_tagged,
    )


def apply_removals(state: CaveState, plan: RemovalPlan) -> CaveState:
    """Commit a removal plan produced by select_removals on this state."""
    if plan.night != state.night + 1:
        raise SpecInvalid(f"plan for night {plan.night} but last completed night is {state.night}")

    q_left = plan.very_old_take
    state.very_old_count -= q_left
    if plan.strategy is StrategyKind.OLDEST_DET:
        while q_left and state.segments:
            seg = state.segments[0]
            take = min(q_left, seg.end - seg.front)
            seg.front += take
            q_left -= take
            if seg.front == seg.end:
                state.segments.popleft()
    else:
        # Counts suffice for the randomized strategy; drop structure lazily.
        if state.very_old_count == 0:
            state.segments.clear()

    cell_iter = iter(state.cells)
    for day, take in plan.window_takes:
        for cell in cell_iter:
            if cell.day == day:
                if take > cell.count:
                    raise SpecInvalid(f"plan removes {take} from day {day} cell of {cell.count}")
                cell.front += take
                break
        else:
            raise SpecInvalid(f"plan references day {day} not present in the window")

    by_id = {b.id: b for b in state.tagged}
    for bag_id in plan.removed_tagged:
        bag = by_id[bag_id]
        if not bag.in_cave:
            raise SpecInvalid(f"plan removes tagged bag {bag_id} twice")
        bag.removed_night = plan.night

    state.cave_size -= plan.quota
    state.night = plan.night
    return state


@dataclass
class Trace:
    """Full record of one simulated run plus its content digest."""

    header: dict[str, Any]
    records: list[dict[str, Any]]
    tagged: list[TaggedBag]
    digest: str
    final_state: CaveState

    def to_jsonl(self) -> str:
        lines = [canonical_dumps(self.header)]
        lines.extend(canonical_dumps(rec) for rec in self.records)
        lines.append(canonical_dumps({"digest": self.digest}))
        return "\n".join(lines) + "\n"


def _normalize_tags(tagged_days: Iterable[int | tuple[int, int]]) -> dict[int, list[int]]:
    pending: dict[int, list[int]] = {}
    for item in tagged_days:
        if isinstance(item, tuple):
            day, pos = item
        else:
            day, pos = item, 1
        if day < 1:
            raise SpecInvalid(f"tag day must be >= 1, got {day}")
        if pos < 1:
            raise SpecInvalid(f"tag position must be >= 1, got {pos}")
        pending.setdefault(day, []).append(pos)
    for positions in pending.values():
        positions.sort()
    return pending


def run_trace(
    instance: GameInstance,
    strategy: "StrategyKind | str",
    nights: int,
    seed: int,
    tagged_days: Iterable[int | tuple[int, int]] = (),
    label_mode: str = "sequential",
    trial_index: int = 0,
) -> Trace:
    """Simulate nights 1..nights and return the full trace.

    Deterministic given (instance, strategy, nights, seed, tags): night i
    draws from the stream keyed by ``stream_key(seed, trial_index, i)``.
    ``label_mode`` controls the cosmetic bag labels on tagged bags:
    ``sequential`` uses the internal id, ``random-unit`` draws a uniform
    label in [0, 1) from the reserved label stream. Labels never affect
    dynamics.
    """
    strategy = as_strategy(strategy)
    if nights < 0:
        raise SpecInvalid(f"nights must be >= 0, got {nights}")
    if nights > instance.horizon_cap:
        raise ScheduleExhausted(f"nights {nights} beyond instance horizon_cap {instance.horizon_cap}")
    if label_mode not in ("sequential", "random-unit"):
        raise SpecInvalid(f"unknown label mode {label_mode!r}")

    pending = _normalize_tags(tagged_days)
    state = CaveState(pending_tags={d: list(ps) for d, ps in pending.items()})
    label_rng = CounterRNG(stream_key(seed, trial_index, 0))

    header = {
        "format": TRACE_FORMAT,
        "rng": RNG_VERSION,
        "seed": seed,
        "trial": trial_index,
        "strategy": strategy.value,
        "nights": nights,
        "label_mode": label_mode,
        "schedule": instance.spec.to_obj(),
        "tags": sorted([day, str(pos)] for day, ps in pending.items() for pos in ps),
    }
    hasher = hashlib.sha256()
    hasher.update(canonical_dumps(header).encode("ascii"))
    hasher.update(b"\n")

    records: list[dict[str, Any]] = []
    labeled_through = 0
    for i in range(1, nights + 1):
        step_day(state, instance, i)
        while labeled_through < len(state.tagged):
            bag = state.tagged[labeled_through]
            bag.label = str(bag.id) if label_mode == "sequential" else repr(label_rng.u01())
            labeled_through += 1
        cave_before = state.cave_size
        rng = CounterRNG(stream_key(seed, trial_index, i)) if strategy is StrategyKind.OLDEST_RND else None
        plan = select_removals(state, instance, i, strategy, rng)
        apply_removals(state, plan)
        by_id = {b.id: b for b in state.tagged}
        record = {
            "i": i,
            "cave_before": decimal_str(cave_before),
            "cave_after": decimal_str(state.cave_size),
            "removed_cells": [[day, decimal_str(count)] for day, count in plan.removed_cells()],
            "tagged_events": [
                {
                    "id": bag_id,
                    "day": by_id[bag_id].day,
                    "pos": decimal_str(by_id[bag_id].pos),
                    "night": i,
                }
                for bag_id in sorted(plan.removed_tagged)
            ],
        }
        records.append(record)
        hasher.update(canonical_dumps(record).encode("ascii"))
        hasher.update(b"\n")

    return Trace(
        header=header,
        records=records,
        tagged=list(state.tagged),
        digest=hasher.hexdigest(),
        final_state=state,
    )


def _fast_path_probs(instance: GameInstance, d: int, nights: int) -> list[tuple[int, float]] | None:
    """Per-night removal probabilities for a lone day-d bag, if the closed
    law applies on the whole prefix: the memory gap never shrinks and the
    very-old pool always covers the quota (removals never touch the window).
    """
    if instance.first_invalid_index is not None:
        return None
    for i in range(1, nights):
        if instance.b_at(i + 1) > instance.b_at(i) + 1:
            return None
    probs: list[tuple[int, float]] = []
    for i in range(1, nights + 1):
        ltilde = instance.very_old_level(i)
        if ltilde < instance.r_at(i):
            return None
        if i >= d and d <= i - instance.b_at(i):
            probs.append((i, float(Fraction(instance.r_at(i), ltilde))))
    return probs


def empirical_survival(
    instance: GameInstance,
    d: int,
    nights: int,
    trials: int,
    seed: int,
    strategy: "StrategyKind | str" = StrategyKind.OLDEST_RND,
) -> tuple[float, float, int]:
    """Monte Carlo estimate of a day-d bag's survival through ``nights``.

    Trial t draws night i from the stream keyed by stream_key(seed, t, i).
    When the closed per-night law applies (randomized strategy, very-old
    pool always covering the quota), trials are evaluated vectorized — the
    counter-based streams make every (trial, night) draw addressable, so
    the fan-out over trials needs no shared state. Otherwise each trial
    runs a full trace. Returns (estimate, stderr, trials) with
    stderr = sqrt(p*(1-p)/trials).
    """
    strategy = as_strategy(strategy)
    if trials < 1:
        raise SpecInvalid(f"trials must be >= 1, got {trials}")
    if d < 1:
        raise SpecInvalid(f"day must be >= 1, got {d}")
    if nights < d:
        return (1.0, 0.0, trials)
    if nights > instance.horizon_cap:
        raise ScheduleExhausted(f"nights {nights} beyond instance horizon_cap {instance.horizon_cap}")

    probs = _fast_path_probs(instance, d, nights) if strategy is StrategyKind.OLDEST_RND else None
    if probs is not None:
        root = seed & ((1 << 64) - 1)
        trial_keys = child_keys_vec(root, np.arange(trials, dtype=np.uint64))
        alive = np.ones(trials, dtype=bool)
        for i, p in probs:
            if p >= 1.0:
                alive[:] = False
                break
            if p <= 0.0 or not alive.any():
                continue
            night_keys = child_keys_many(trial_keys, i)
            u = (words_vec(night_keys, 0) >> np.uint64(11)) * 2.0**-53
            alive &= u >= p
        survivors = int(alive.sum())
    else:
        survivors = 0
        for t in range(trials):
            trace = run_trace(
                instance,
                strategy,
                nights,
                seed,
                tagged_days=[(d, 1)],
                trial_index=t,
            )
            if trace.tagged[0].in_cave:
                survivors += 1

    estimate = survivors / trials
    stderr = math.sqrt(estimate * (1.0 - estimate) / trials)
    return (estimate, stderr, trials)
