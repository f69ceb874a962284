"""Schedules for the cave game and their derived level quantities.

A game is driven by three integer functions on days i = 1, 2, ...:

* ``r(i)`` — bags Robin removes on night i (validity demands 1 <= r(i) < s(i)),
* ``s(i)`` — bags the Sheriff adds on day i,
* ``b(i)`` — Robin's memory bound: on night i only bags that arrived in the
  last ``b(i)`` days can still be told apart. Values are clamped to
  ``min(b(i), i)`` so the bound never exceeds the number of elapsed days.

From these the module derives

* the cave level ``L(i)`` — bags in the cave after night i, and
* the very-old level ``Ltilde(i)`` — bags that arrived on days 1..i-b(i)
  and are still in the cave when night i begins (clamped at zero).

``GameInstance`` materializes a schedule on a finite index range with eager
prefix sums, exact arbitrary-precision arithmetic, and a digit budget that
aborts runaway growth. ``check_restrictions`` reports, relative to a horizon,
the two structural conditions the analysis layer relies on:

* restriction 1 — ``b(i+1) <= b(i) + 1``, i.e. ``i - b(i)`` never decreases
  (Robin never regains forgotten information);
* restriction 2 — ``Ltilde(i) > r(i)`` for all but finitely many i (the
  very-old pool eventually always covers the night's quota).
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from typing import Any, Mapping

from .errors import (
    DEFAULT_DIGIT_BUDGET,
    IndexBeyondHorizon,
    SpecInvalid,
    guard_digits,
)

#: Default evaluation range for schedules with no intrinsic horizon.
DEFAULT_HORIZON_CAP = 10_000

_KINDS = ("constant", "affine", "table", "generated")


def decimal_str(n: int) -> str:
    """``str(n)`` with the interpreter's int-to-str digit cap lifted.

    Generated schedules carry values far past the default 4300-digit cap,
    so serialization must not depend on it. Not thread-safe (the cap is
    process-global while lifted), which is fine for this package's usage.
    """
    limit = sys.get_int_max_str_digits()
    sys.set_int_max_str_digits(0)
    try:
        return str(n)
    finally:
        sys.set_int_max_str_digits(limit)


def parse_decimal(text: str) -> int:
    """``int(text, 10)`` with the str-to-int digit cap lifted."""
    limit = sys.get_int_max_str_digits()
    sys.set_int_max_str_digits(0)
    try:
        return int(text, 10)
    finally:
        sys.set_int_max_str_digits(limit)


def _require_int(value: Any, path: str) -> int:
    # bool is an int subclass; reject it explicitly.
    if isinstance(value, bool) or not isinstance(value, int):
        raise SpecInvalid(f"{path}: expected an integer, got {value!r}")
    return value


def _require_decimal_string(value: Any, path: str) -> int:
    if not isinstance(value, str):
        raise SpecInvalid(f"{path}: expected a decimal string, got {value!r}")
    try:
        return parse_decimal(value)
    except ValueError:
        raise SpecInvalid(f"{path}: not a decimal integer: {value!r}") from None


@dataclass(frozen=True)
class FunctionSpec:
    """One schedule function in closed or tabulated form.

    Exactly one representation is active, selected by ``kind``:

    * ``constant`` — ``value`` at every index;
    * ``affine`` — ``a * i + c``;
    * ``table`` — explicit ``values`` for i = 1..len(values), then the
      ``tail`` spec evaluated at the original index i;
    * ``generated`` — explicit ``values`` only; evaluation beyond the last
      entry refuses with IndexBeyondHorizon rather than extrapolating.
    """

    kind: str
    value: int | None = None
    a: int | None = None
    c: int | None = None
    values: tuple[int, ...] | None = None
    tail: "FunctionSpec | None" = None

    @staticmethod
    def constant(value: int) -> "FunctionSpec":
        return FunctionSpec(kind="constant", value=value)

    @staticmethod
    def affine(a: int, c: int) -> "FunctionSpec":
        return FunctionSpec(kind="affine", a=a, c=c)

    @staticmethod
    def table(values: list[int] | tuple[int, ...], tail: "FunctionSpec") -> "FunctionSpec":
        return FunctionSpec(kind="table", values=tuple(values), tail=tail)

    @staticmethod
    def generated(values: list[int] | tuple[int, ...]) -> "FunctionSpec":
        return FunctionSpec(kind="generated", values=tuple(values))

    def value_at(self, i: int) -> int:
        """Raw function value at day i >= 1 (no clamping applied)."""
        if i < 1:
            raise IndexBeyondHorizon(f"index {i} is below 1")
        if self.kind == "constant":
            return self.value  # type: ignore[return-value]
        if self.kind == "affine":
            return self.a * i + self.c  # type: ignore[operator]
        if self.kind == "table":
            if i <= len(self.values):  # type: ignore[arg-type]
                return self.values[i - 1]  # type: ignore[index]
            return self.tail.value_at(i)  # type: ignore[union-attr]
        if self.kind == "generated":
            if i <= len(self.values):  # type: ignore[arg-type]
                return self.values[i - 1]  # type: ignore[index]
            raise IndexBeyondHorizon(
                f"generated values end at index {len(self.values)}; refusing index {i}"  # type: ignore[arg-type]
            )
        raise SpecInvalid(f"unknown function kind {self.kind!r}")

    def hard_horizon(self) -> int | None:
        """Largest defined index, or None when defined for all i >= 1."""
        if self.kind in ("constant", "affine"):
            return None
        if self.kind == "generated":
            return len(self.values)  # type: ignore[arg-type]
        if self.kind == "table":
            th = self.tail.hard_horizon()  # type: ignore[union-attr]
            if th is None:
                return None
            return max(len(self.values), th)  # type: ignore[arg-type]
        raise SpecInvalid(f"unknown function kind {self.kind!r}")

    def eventually_constant(self) -> tuple[int, int] | None:
        """(value, from_index) if provably constant from some index on."""
        if self.kind == "constant":
            return (self.value, 1)  # type: ignore[return-value]
        if self.kind == "affine":
            if self.a == 0:
                return (self.c, 1)  # type: ignore[return-value]
            return None
        if self.kind == "table":
            ec = self.tail.eventually_constant()  # type: ignore[union-attr]
            if ec is None:
                return None
            value, from_index = ec
            return (value, max(from_index, len(self.values) + 1))  # type: ignore[arg-type]
        return None

    def to_obj(self) -> dict[str, Any]:
        """JSON-ready dict (generated values become decimal strings)."""
        if self.kind == "constant":
            return {"kind": "constant", "value": self.value}
        if self.kind == "affine":
            return {"kind": "affine", "a": self.a, "c": self.c}
        if self.kind == "table":
            return {
                "kind": "table",
                "values": list(self.values),  # type: ignore[arg-type]
                "tail": self.tail.to_obj(),  # type: ignore[union-attr]
            }
        if self.kind == "generated":
            return {"kind": "generated", "values": [decimal_str(v) for v in self.values]}  # type: ignore[union-attr]
        raise SpecInvalid(f"unknown function kind {self.kind!r}")


def parse_function(obj: Any, path: str) -> FunctionSpec:
    """Parse one function spec from its JSON form, with field-path errors."""
    if not isinstance(obj, dict):
        raise SpecInvalid(f"{path}: expected an object, got {type(obj).__name__}")
    kind = obj.get("kind")
    if kind not in _KINDS:
        raise SpecInvalid(f"{path}.kind: unknown kind {kind!r}; expected one of {_KINDS}")
    allowed = {
        "constant": {"kind", "value"},
        "affine": {"kind", "a", "c"},
        "table": {"kind", "values", "tail"},
        "generated": {"kind", "values"},
    }[kind]
    extra = set(obj) - allowed
    if extra:
        raise SpecInvalid(f"{path}: unexpected fields {sorted(extra)} for kind {kind!r}")
    missing = allowed - set(obj)
    if missing:
        raise SpecInvalid(f"{path}: missing fields {sorted(missing)} for kind {kind!r}")

    if kind == "constant":
        value = _require_int(obj["value"], f"{path}.value")
        if value < 0:
            raise SpecInvalid(f"{path}.value: constant must be nonnegative, got {value}")
        return FunctionSpec.constant(value)
    if kind == "affine":
        a = _require_int(obj["a"], f"{path}.a")
        c = _require_int(obj["c"], f"{path}.c")
        return FunctionSpec.affine(a, c)
    if kind == "table":
        raw = obj["values"]
        if not isinstance(raw, list):
            raise SpecInvalid(f"{path}.values: expected a list")
        values = [_require_int(v, f"{path}.values[{k}]") for k, v in enumerate(raw)]
        tail = parse_function(obj["tail"], f"{path}.tail")
        return FunctionSpec.table(values, tail)
    # generated
    raw = obj["values"]
    if not isinstance(raw, list):
        raise SpecInvalid(f"{path}.values: expected a list")
    values = [_require_decimal_string(v, f"{path}.values[{k}]") for k, v in enumerate(raw)]
    return FunctionSpec.generated(values)


@dataclass(frozen=True)
class ScheduleSpec:
    """The three schedule functions, plus optional generator provenance.

    ``provenance`` is an opaque JSON object carried through parse/dump
    round-trips. The classifier only ever treats it as a hint: any claim it
    makes is re-verified by recomputation before influencing a verdict.
    """

    r_spec: FunctionSpec
    s_spec: FunctionSpec
    b_spec: FunctionSpec
    provenance: Mapping[str, Any] | None = field(default=None, compare=False)

    def to_obj(self) -> dict[str, Any]:
        obj: dict[str, Any] = {
            "r": self.r_spec.to_obj(),
            "s": self.s_spec.to_obj(),
            "b": self.b_spec.to_obj(),
        }
        if self.provenance is not None:
            obj["provenance"] = dict(self.provenance)
        return obj


def parse_schedule(obj: Any) -> ScheduleSpec:
    """Parse a full schedule from its JSON form."""
    if not isinstance(obj, dict):
        raise SpecInvalid(f"schedule: expected an object, got {type(obj).__name__}")
    extra = set(obj) - {"r", "s", "b", "provenance"}
    if extra:
        raise SpecInvalid(f"schedule: unexpected top-level fields {sorted(extra)}")
    for key in ("r", "s", "b"):
        if key not in obj:
            raise SpecInvalid(f"schedule: missing required field {key!r}")
    provenance = obj.get("provenance")
    if provenance is not None and not isinstance(provenance, dict):
        raise SpecInvalid("provenance: expected an object")
    return ScheduleSpec(
        r_spec=parse_function(obj["r"], "r"),
        s_spec=parse_function(obj["s"], "s"),
        b_spec=parse_function(obj["b"], "b"),
        provenance=provenance,
    )


def canonical_dumps(obj: Any) -> str:
    """Canonical JSON: sorted keys, no insignificant whitespace."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def load_schedule(path: str) -> ScheduleSpec:
    """Read and parse a schedule JSON file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise SpecInvalid(f"cannot read schedule file {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SpecInvalid(f"{path}: malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return parse_schedule(obj)


@dataclass(frozen=True)
class RestrictionReport:
    """Horizon-relative validity and restriction findings for one schedule.

    ``restriction2_last_violation`` is the largest checked i with
    ``Ltilde(i) <= r(i)``; restriction 2 is only semi-decidable, so the
    report never claims anything beyond ``horizon``.
    """

    horizon: int
    validity_ok: bool
    first_invalid_index: int | None
    restriction1_ok: bool
    restriction1_first_violation: int | None
    restriction2_last_violation: int | None
    i_minus_b_max: int
    i_minus_b_grew: bool

    def as_dict(self) -> dict[str, Any]:
        return {
            "horizon": self.horizon,
            "validity_ok": self.validity_ok,
            "first_invalid_index": self.first_invalid_index,
            "restriction1_ok": self.restriction1_ok,
            "restriction1_first_violation": self.restriction1_first_violation,
            "restriction2_last_violation": self.restriction2_last_violation,
            "i_minus_b_max": self.i_minus_b_max,
            "i_minus_b_grew": self.i_minus_b_grew,
        }


class GameInstance:
    """A schedule materialized on indices 1..horizon_cap.

    Values and prefix sums are computed eagerly at construction (exact
    integers, guarded by ``digit_budget``), so the instance is immutable
    afterwards and safe for concurrent readers.

    A value-level validity violation (r(i) < 1, r(i) >= s(i), or a negative
    raw memory bound) does not fail construction; instead
    ``first_invalid_index`` records the earliest offending day and any
    evaluation at or beyond it raises SpecInvalid. This keeps the valid
    prefix usable, in particular for restriction reports on broken specs.
    """

    __slots__ = (
        "spec",
        "horizon_cap",
        "digit_budget",
        "first_invalid_index",
        "_r",
        "_s",
        "_b",
        "_sum_s",
        "_sum_r",
    )

    def __init__(
        self,
        spec: ScheduleSpec,
        horizon_cap: int | None = None,
        digit_budget: int = DEFAULT_DIGIT_BUDGET,
    ):
        self.spec = spec
        self.digit_budget = digit_budget

        hard = None
        for fs in (spec.r_spec, spec.s_spec, spec.b_spec):
            h = fs.hard_horizon()
            if h is not None:
                hard = h if hard is None else min(hard, h)
        cap = DEFAULT_HORIZON_CAP if horizon_cap is None else horizon_cap
        if hard is not None:
            cap = min(cap, hard)
        if cap < 0:
            raise SpecInvalid(f"horizon_cap must be nonnegative, got {cap}")
        self.horizon_cap = cap

        # Index 0 is a placeholder so value arrays are 1-based like the game.
        r_vals: list[int] = [0] * (cap + 1)
        s_vals: list[int] = [0] * (cap + 1)
        b_vals: list[int] = [0] * (cap + 1)
        sum_s: list[int] = [0] * (cap + 1)
        sum_r: list[int] = [0] * (cap + 1)
        first_invalid: int | None = None

        acc_s = 0
        acc_r = 0
        for i in range(1, cap + 1):
            ri = spec.r_spec.value_at(i)
            si = spec.s_spec.value_at(i)
            bi_raw = spec.b_spec.value_at(i)
            if first_invalid is None and not (1 <= ri < si and bi_raw >= 0):
                first_invalid = i
            r_vals[i] = ri
            s_vals[i] = si
            # Clamp to [0, i]; the raw value is only needed for validity.
            b_vals[i] = min(bi_raw, i) if bi_raw >= 0 else 0
            acc_s += si
            acc_r += ri
            guard_digits(acc_s, digit_budget, context=f"sum of arrivals through day {i}")
            guard_digits(acc_r, digit_budget, context=f"sum of removals through night {i}")
            sum_s[i] = acc_s
            sum_r[i] = acc_r

        self._r = r_vals
        self._s = s_vals
        self._b = b_vals
        self._sum_s = sum_s
        self._sum_r = sum_r
        self.first_invalid_index = first_invalid

    def _check_index(self, i: int, low: int) -> None:
        if not (low <= i <= self.horizon_cap):
            raise IndexBeyondHorizon(
                f"index {i} outside [{low}, {self.horizon_cap}] for this instance"
            )
        if self.first_invalid_index is not None and i >= self.first_invalid_index:
            raise SpecInvalid(
                f"schedule invalid from day {self.first_invalid_index}"
                " (needs 1 <= r(i) < s(i) and b(i) >= 0)"
            )

    def r_at(self, i: int) -> int:
        self._check_index(i, 1)
        return self._r[i]

    def s_at(self, i: int) -> int:
        self._check_index(i, 1)
        return self._s[i]

    def b_at(self, i: int) -> int:
        """Memory bound at night i, clamped to min(b(i), i)."""
        self._check_index(i, 1)
        return self._b[i]

    def evaluate(self, i: int) -> tuple[int, int, int]:
        """(r(i), s(i), clamped b(i)) for 1 <= i <= horizon_cap."""
        self._check_index(i, 1)
        return (self._r[i], self._s[i], self._b[i])

    def cave_level(self, i: int) -> int:
        """L(i): bags in the cave after night i; L(0) = 0."""
        self._check_index(i, 0)
        return self._sum_s[i] - self._sum_r[i]

    def very_old_level(self, i: int) -> int:
        """Ltilde(i): very-old bags present when night i begins."""
        self._check_index(i, 1)
        return max(0, self._sum_s[i - self._b[i]] - self._sum_r[i - 1])

    def very_old_level_unclamped(self, i: int) -> int:
        """The inner sum of Ltilde(i) before the max-with-zero clamp."""
        self._check_index(i, 1)
        return self._sum_s[i - self._b[i]] - self._sum_r[i - 1]

    def check_restrictions(self, horizon: int) -> RestrictionReport:
        """Scan [1, horizon] for validity and the two restrictions."""
        if not (1 <= horizon <= self.horizon_cap):
            raise IndexBeyondHorizon(
                f"horizon {horizon} outside [1, {self.horizon_cap}] for this instance"
            )

        first_invalid = self.first_invalid_index
        if first_invalid is not None and first_invalid > horizon:
            first_invalid = None
        validity_ok = first_invalid is None

        r1_violation: int | None = None
        for i in range(1, horizon):
            if self._b[i + 1] > self._b[i] + 1:
                r1_violation = i
                break

        # Restriction 2 only makes sense where the game itself is defined.
        valid_end = horizon if first_invalid is None else first_invalid - 1
        r2_last: int | None = None
        for i in range(1, valid_end + 1):
            ltilde = max(0, self._sum_s[i - self._b[i]] - self._sum_r[i - 1])
            if ltilde <= self._r[i]:
                r2_last = i

        gaps = [i - self._b[i] for i in range(1, horizon + 1)]
        gap_max = max(gaps)
        grew = gap_max > min(gaps)

        return RestrictionReport(
            horizon=horizon,
            validity_ok=validity_ok,
            first_invalid_index=first_invalid,
            restriction1_ok=r1_violation is None,
            restriction1_first_violation=r1_violation,
            restriction2_last_violation=r2_last,
            i_minus_b_max=gap_max,
            i_minus_b_grew=grew,
        )


def spec_plus_one(fs: FunctionSpec) -> FunctionSpec:
    """A function spec whose clamped value is min(b(i) + 1, i) when ``fs`` yields b.

    Adding 1 to every raw value commutes with the min(., i) clamp:
    min(min(v, i) + 1, i) = min(v + 1, i) for all i >= 1.
    """
    if fs.kind == "constant":
        return FunctionSpec.constant(fs.value + 1)  # type: ignore[operator]
    if fs.kind == "affine":
        return FunctionSpec.affine(fs.a, fs.c + 1)  # type: ignore[operator,arg-type]
    if fs.kind == "table":
        return FunctionSpec.table(
            [v + 1 for v in fs.values],  # type: ignore[union-attr]
            spec_plus_one(fs.tail),  # type: ignore[arg-type]
        )
    if fs.kind == "generated":
        return FunctionSpec.generated([v + 1 for v in fs.values])  # type: ignore[union-attr]
    raise SpecInvalid(f"unknown function kind {fs.kind!r}")


def bounded_memory_gap(fs: FunctionSpec, start_i: int = 1) -> int | None:
    """Supremum of i - min(b(i), i) over i >= start_i, when the family proves one.

    Returns the bound for specs where the gap is provably bounded (affine
    slope >= 1, possibly behind a finite table prefix), else None. Constant
    and generated specs never prove boundedness.
    """
    if fs.kind == "affine":
        if fs.a is None or fs.a < 1:
            return None
        raw = fs.a * start_i + fs.c  # type: ignore[operator]
        # Gap i - (a*i + c) is nonincreasing for a >= 1: sup is at start_i.
        return max(start_i - raw, 0)
    if fs.kind == "table":
        n = len(fs.values)  # type: ignore[arg-type]
        tail_bound = bounded_memory_gap(fs.tail, max(start_i, n + 1))  # type: ignore[arg-type]
        if tail_bound is None:
            return None
        prefix = 0
        for i in range(start_i, n + 1):
            v = fs.values[i - 1]  # type: ignore[index]
            prefix = max(prefix, i - min(v, i) if v >= 0 else i)
        return max(prefix, tail_bound)
    return None
