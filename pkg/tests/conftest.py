"""Shared fixtures and small builders used across the test modules."""

from __future__ import annotations

import pytest

from robinhood import FunctionSpec, GameInstance, ScheduleSpec


def make_spec(r, s, b) -> ScheduleSpec:
    """ScheduleSpec from ints (constants) or ready FunctionSpec objects."""

    def lift(x) -> FunctionSpec:
        return FunctionSpec.constant(x) if isinstance(x, int) else x

    return ScheduleSpec(r_spec=lift(r), s_spec=lift(s), b_spec=lift(b))


def make_instance(r, s, b, horizon_cap: int = 200, **kwargs) -> GameInstance:
    return GameInstance(make_spec(r, s, b), horizon_cap=horizon_cap, **kwargs)


@pytest.fixture
def memoryless_121() -> GameInstance:
    """The classic divergent example: r=1, s=2, b=0."""
    return make_instance(1, 2, 0, horizon_cap=2000)
