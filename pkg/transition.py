"""
Transition-probability tables for the smart kinetic walk.
Classifies the local blocking pattern around the walker and samples the next move.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from enum import Enum
from typing import Mapping

SUM_TOLERANCE = 1e-12

TABLE_FIELDS = ("a1", "a2", "a3", "b1", "b2", "c1", "c2", "d1", "d2")


class TransitionTableError(ValueError):
    """Raised when a transition table is not a valid set of probabilities."""


class RelativeDirection(Enum):
    FRONT = "front"
    LEFT = "left"
    RIGHT = "right"


class CaseKind(Enum):
    NBLOCK = "nblock"
    LEFT_BLOCKED = "left_blocked"
    RIGHT_BLOCKED = "right_blocked"
    FRONT_BLOCKED = "front_blocked"
    SINGLE_ALLOWABLE = "single_allowable"
    DEAD_END = "dead_end"


@dataclass(frozen=True)
class StepCase:
    kind: CaseKind
    direction: RelativeDirection | None = None


@dataclass(frozen=True)
class TransitionTable:
    """
    Per-case move probabilities relative to the previous heading.

    - a1, a2, a3: front, left, right when nothing is blocked
    - b1, b2: front, right when left is blocked
    - c1, c2: front, left when right is blocked
    - d1, d2: left, right when front is blocked
    """

    a1: float = 1.0 / 3.0
    a2: float = 1.0 / 3.0
    a3: float = 1.0 / 3.0
    b1: float = 0.5
    b2: float = 0.5
    c1: float = 0.5
    c2: float = 0.5
    d1: float = 0.5
    d2: float = 0.5

    def __post_init__(self) -> None:
        for name in TABLE_FIELDS:
            value = float(getattr(self, name))
            if not 0.0 <= value <= 1.0:
                raise TransitionTableError(f"{name}={value} is outside [0, 1]")
            object.__setattr__(self, name, value)

        groups = {
            "a1 + a2 + a3": self.a1 + self.a2 + self.a3,
            "b1 + b2": self.b1 + self.b2,
            "c1 + c2": self.c1 + self.c2,
            "d1 + d2": self.d1 + self.d2,
        }
        for label, total in groups.items():
            if abs(total - 1.0) > SUM_TOLERANCE:
                raise TransitionTableError(f"{label} = {total!r}, expected 1")


def uniform_table() -> TransitionTable:
    """The original SKW rule: every allowable neighbour equally likely."""
    return TransitionTable()


def table_from_mapping(values: Mapping[str, float] | None) -> TransitionTable:
    """Build a table from named fields; omitted fields keep their uniform value."""
    values = dict(values or {})
    unknown = sorted(set(values) - set(TABLE_FIELDS))
    if unknown:
        raise TransitionTableError(f"Unknown transition table fields: {', '.join(unknown)}")
    try:
        return TransitionTable(**{name: float(value) for name, value in values.items()})
    except (TypeError, ValueError) as exc:
        if isinstance(exc, TransitionTableError):
            raise
        raise TransitionTableError(f"Transition table entries must be numbers: {exc}") from exc


def table_to_dict(table: TransitionTable) -> dict[str, float]:
    return asdict(table)


def mirrored_table(table: TransitionTable) -> TransitionTable:
    """Exchange the left and right roles of every case."""
    return TransitionTable(
        a1=table.a1,
        a2=table.a3,
        a3=table.a2,
        b1=table.c1,
        b2=table.c2,
        c1=table.b1,
        c2=table.b2,
        d1=table.d2,
        d2=table.d1,
    )


def is_symmetric(table: TransitionTable) -> bool:
    """Left/right reflection invariance: a2 = a3, b1 = c1, d1 = d2 = 1/2."""
    return (
        abs(table.a2 - table.a3) <= SUM_TOLERANCE
        and abs(table.b1 - table.c1) <= SUM_TOLERANCE
        and abs(table.d1 - 0.5) <= SUM_TOLERANCE
        and abs(table.d2 - 0.5) <= SUM_TOLERANCE
    )


def table_label(table: TransitionTable) -> str:
    """Compact label listing only the entries that differ from the uniform table."""
    uniform = table_to_dict(uniform_table())
    changed = [
        f"{name}={value:g}"
        for name, value in table_to_dict(table).items()
        if abs(value - uniform[name]) > SUM_TOLERANCE
    ]
    return ",".join(changed) if changed else "uniform"


def classify_step(front_blocked: bool, left_blocked: bool, right_blocked: bool) -> StepCase:
    blocked_count = int(front_blocked) + int(left_blocked) + int(right_blocked)

    if blocked_count == 0:
        return StepCase(CaseKind.NBLOCK)
    if blocked_count == 3:
        return StepCase(CaseKind.DEAD_END)
    if blocked_count == 2:
        if not front_blocked:
            return StepCase(CaseKind.SINGLE_ALLOWABLE, RelativeDirection.FRONT)
        if not left_blocked:
            return StepCase(CaseKind.SINGLE_ALLOWABLE, RelativeDirection.LEFT)
        return StepCase(CaseKind.SINGLE_ALLOWABLE, RelativeDirection.RIGHT)

    if left_blocked:
        return StepCase(CaseKind.LEFT_BLOCKED)
    if right_blocked:
        return StepCase(CaseKind.RIGHT_BLOCKED)
    return StepCase(CaseKind.FRONT_BLOCKED)


def sample_step(table: TransitionTable, case: StepCase, u: float) -> RelativeDirection:
    """
    Pick a direction from one uniform deviate.

    Candidates are laid out on [0, 1) in the fixed order front, left, right, so a
    given deviate always maps to the same move.
    """

    kind = case.kind
    if kind is CaseKind.NBLOCK:
        if u < table.a1:
            return RelativeDirection.FRONT
        if u < table.a1 + table.a2:
            return RelativeDirection.LEFT
        return RelativeDirection.RIGHT
    if kind is CaseKind.LEFT_BLOCKED:
        return RelativeDirection.FRONT if u < table.b1 else RelativeDirection.RIGHT
    if kind is CaseKind.RIGHT_BLOCKED:
        return RelativeDirection.FRONT if u < table.c1 else RelativeDirection.LEFT
    if kind is CaseKind.FRONT_BLOCKED:
        return RelativeDirection.LEFT if u < table.d1 else RelativeDirection.RIGHT
    if kind is CaseKind.SINGLE_ALLOWABLE and case.direction is not None:
        return case.direction

    raise RuntimeError(f"Cannot sample a move for step case {case!r}")
