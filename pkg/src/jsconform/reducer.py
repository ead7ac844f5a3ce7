"""Fixpoint shrinking of bug-exposing test cases.

The reducer walks the scanned statement tree and repeatedly deletes the
largest substructures whose removal keeps the differential verdict
signature (outcome plus deviant set) intact, then retries smaller grains:
whole statements first (nested ones included), then expressions collapsed
to a neutral literal. Candidates that break the lightweight syntax check
are skipped without spending oracle calls. Iteration stops at a fixpoint:
a full sweep in which no removal survives, which is exactly 1-minimality
over the candidate grammar.

Every surviving candidate is re-confirmed once before being accepted;
an oracle that answers differently for the same input aborts the run
(FlakyOracle) rather than producing an unreproducible "minimal" case.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from . import harness, jssyntax
from .datagen import DRIVER_BANNER

log = logging.getLogger(__name__)

NEUTRAL_LITERAL = "0"


class FlakyOracle(RuntimeError):
    """The oracle flipped on identical input during a confirmation re-run."""


class OracleNotSatisfied(ValueError):
    """The original case does not satisfy the oracle; nothing to reduce."""


@dataclass
class ReductionOracle:
    """Target verdict signature plus the replay function that re-checks it."""

    target_outcome: str
    target_deviants: frozenset
    replay: Callable[[str], harness.Verdict]

    def holds(self, source: str) -> bool:
        verdict = self.replay(source)
        return (verdict.outcome == self.target_outcome
                and frozenset(verdict.deviants) == self.target_deviants)

    @classmethod
    def for_verdict(cls, verdict: harness.Verdict,
                    replay: Callable[[str], harness.Verdict]) -> "ReductionOracle":
        return cls(verdict.outcome, frozenset(verdict.deviants), replay)


def matrix_replay(testbeds: Sequence[harness.Testbed], policy: harness.TimeoutPolicy,
                  jobs: Optional[int] = None) -> Callable[[str], harness.Verdict]:
    """Replay function that re-runs a candidate source on the full testbed set."""
    workers = jobs or len(testbeds) or 1

    def replay(source: str) -> harness.Verdict:
        case = harness._MatrixCase(id="reduction-candidate", source=source)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(
                lambda tb: harness.run_testbed(tb, case, policy), testbeds))
        return harness.classify(results, policy)

    return replay


@dataclass
class ReductionResult:
    source: str
    oracle_calls: int
    removals: int
    budget_exhausted: bool = False


def _protected_start(source: str) -> int:
    """Offset where the appended driver begins; everything after is kept."""
    pos = source.find(DRIVER_BANNER)
    return pos if pos != -1 else len(source)


def _candidates(source: str) -> list[tuple]:
    """(start, end, replacement) edits to try, statements first, biggest first."""
    model = jssyntax.scan_program(source)
    if not model.ok:
        return []
    limit = _protected_start(source)
    out: list[tuple] = []
    entry = model.entry_function()
    statements = []
    for st in model.flat:
        if st.end > limit:
            continue
        if entry is not None and st is entry:
            continue  # the driver invokes the entry function; keep its shell
        statements.append(st)
    statements.sort(key=lambda st: st.end - st.start, reverse=True)
    out.extend((st.start, st.end, "") for st in statements)
    # expression tier: initializers and call arguments collapse to a literal
    exprs: list[tuple] = []
    for st in model.flat:
        if st.end > limit:
            continue
        if st.init_start is not None and st.init_end is not None:
            span = source[st.init_start:st.init_end].strip()
            if span != NEUTRAL_LITERAL and len(span) > len(NEUTRAL_LITERAL):
                exprs.append((st.init_start, st.init_end, " " + NEUTRAL_LITERAL))
    for call in jssyntax.find_calls(source, model):
        if call.rparen > limit:
            continue
        for arg in call.args:
            text = source[arg.start:arg.end].strip()
            if text != NEUTRAL_LITERAL and len(text) > len(NEUTRAL_LITERAL):
                exprs.append((arg.start, arg.end, NEUTRAL_LITERAL))
    exprs.sort(key=lambda e: e[1] - e[0], reverse=True)
    out.extend(exprs)
    return out


def reduce_case(source: str, oracle: ReductionOracle,
                budget: int = 2000) -> ReductionResult:
    """Shrink source to a 1-minimal form that still satisfies the oracle."""
    calls = 0

    def check(candidate: str) -> bool:
        nonlocal calls
        calls += 1
        return oracle.holds(candidate)

    if not check(source):
        raise OracleNotSatisfied("original case does not reproduce the target verdict")

    current = source
    removals = 0
    exhausted = False
    progress = True
    while progress and not exhausted:
        progress = False
        for start, end, replacement in _candidates(current):
            if calls + 2 > budget:
                exhausted = True
                break
            candidate = jssyntax.splice(current, start, end, replacement)
            if len(candidate) >= len(current):
                continue
            if not jssyntax.check_syntax(candidate)[0]:
                continue
            if not check(candidate):
                continue
            if not check(candidate):  # confirmation re-run on identical input
                raise FlakyOracle(
                    "oracle flipped on identical input during confirmation")
            current = candidate
            removals += 1
            progress = True
            break  # respan against the new source
    if exhausted:
        log.warning("reduction budget exhausted after %d oracle calls", calls)
    return ReductionResult(current, calls, removals, exhausted)
