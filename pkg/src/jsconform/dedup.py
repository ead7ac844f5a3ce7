"""Three-layer knowledge tree that filters repeated miscompilation behaviors.

Every deviating verdict is summarized as one signature per deviant engine:
(engine, API-or-none, behavior class). The behavior layer canonicalizes the
deviant's symptom: the exception class from the driver's stable ``EXC
<Name>`` line when one is present, ``Crash``/``TimeOut`` for those
outcomes, a parse rejection as ``SyntaxError``, and otherwise a
``WrongValue(...)`` token built from the *shape* of the divergence
(deviant line count, majority line count, first differing line index)
rather than the raw output, so near-identical value bugs on different
inputs collapse into one leaf.

Signatures live in a tree engine -> api -> behavior whose leaves carry hit
counters; a signature is Novel exactly when its path did not exist before.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import total_ordering
from importlib import resources
from typing import Iterable, Optional

from .harness import (INCONSISTENT_PARSE, RUNTIME_CRASH, RUNTIME_TIMEOUT,
                      WRONG_OUTPUT, Verdict)
from .utils import canonical_json

NONE_API = "__none__"

NOVEL = "Novel"
DUPLICATE = "Duplicate"

DEVIATING_OUTCOMES = (INCONSISTENT_PARSE, WRONG_OUTPUT, RUNTIME_CRASH, RUNTIME_TIMEOUT)

_BEHAVIORS: Optional[dict] = None


def _behavior_table() -> dict:
    global _BEHAVIORS
    if _BEHAVIORS is None:
        text = resources.files("jsconform.data").joinpath("behaviors.json").read_text("utf-8")
        _BEHAVIORS = json.loads(text)
    return _BEHAVIORS


@total_ordering
@dataclass(frozen=True)
class BugSignature:
    engine_id: str
    api: Optional[str]  # None when the case exercises no known API
    behavior: str

    def _key(self):
        return (self.engine_id, self.api or "", self.behavior)

    def __lt__(self, other):
        return self._key() < other._key()


def _first_diff_line(a: list[str], b: list[str]) -> int:
    for i, (x, y) in enumerate(zip(a, b)):
        if x != y:
            return i
    return min(len(a), len(b))


def _wrong_output_behavior(deviant_text: str, majority_text: str) -> str:
    table = _behavior_table()
    dev_lines = deviant_text.splitlines()
    maj_lines = majority_text.splitlines()
    i = _first_diff_line(dev_lines, maj_lines)
    if i < len(dev_lines) and dev_lines[i].startswith("EXC "):
        name = dev_lines[i][4:].strip()
        if name in table["known_exceptions"]:
            return name
        return f"OtherException({name})"
    return f"WrongValue({len(dev_lines)},{len(maj_lines)},{i})"


def signature_of(verdict: Verdict, case_meta: Optional[dict] = None) -> list[BugSignature]:
    """Signatures for one deviating verdict, one per deviant engine."""
    if verdict.outcome not in DEVIATING_OUTCOMES:
        raise ValueError(f"verdict {verdict.outcome} carries nothing to sign")
    table = _behavior_table()
    api = (case_meta or {}).get("api")
    sigs: list[BugSignature] = []
    for ref in verdict.deviants:
        engine = ref.split(":", 1)[0]
        if verdict.outcome == RUNTIME_CRASH:
            behavior = table["crash"]
        elif verdict.outcome == RUNTIME_TIMEOUT:
            behavior = table["timeout"]
        elif verdict.outcome == INCONSISTENT_PARSE:
            behavior = table["parse_deviation"]
        else:
            behavior = _wrong_output_behavior(
                verdict.deviant_outputs.get(ref, ""), verdict.majority_output or "")
        sigs.append(BugSignature(engine, api, behavior))
    return sorted(set(sigs))


@dataclass
class KnowledgeBase:
    """Persistent engine -> api -> behavior tree with per-leaf counters."""

    tree: dict = field(default_factory=dict)

    @property
    def leaf_count(self) -> int:
        return sum(len(behaviors)
                   for apis in self.tree.values() for behaviors in apis.values())

    def contains(self, sig: BugSignature) -> bool:
        api_key = sig.api or NONE_API
        return sig.behavior in self.tree.get(sig.engine_id, {}).get(api_key, {})

    def insert(self, sig: BugSignature, case_id: Optional[str] = None):
        """Returns (NOVEL, leaf) on first sight, (DUPLICATE, leaf) afterwards."""
        api_key = sig.api or NONE_API
        apis = self.tree.setdefault(sig.engine_id, {})
        behaviors = apis.setdefault(api_key, {})
        leaf = behaviors.get(sig.behavior)
        if leaf is None:
            leaf = {"count": 1, "first_seen_case": case_id}
            behaviors[sig.behavior] = leaf
            return NOVEL, leaf
        leaf["count"] += 1
        return DUPLICATE, leaf

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(canonical_json(self.tree))

    @classmethod
    def load(cls, path: str) -> "KnowledgeBase":
        with open(path, "r", encoding="utf-8") as fh:
            return cls(tree=json.load(fh))


@dataclass
class FilterOutcome:
    novel: list  # [(Verdict, [BugSignature])]
    suppressed: int
    ignored: int  # non-deviating verdicts (Pass/Discarded/NoMajority)


def filter_stream(kb: KnowledgeBase,
                  verdicts: Iterable[tuple]) -> FilterOutcome:
    """Split a (verdict, case meta) stream into novel and suppressed.

    A verdict is novel iff any of its signatures opens a new leaf. Verdicts
    without a deviant to blame (Pass, Discarded, NoMajority) pass through
    neither list; NoMajority stays visible in the verdict log for manual
    triage but never suppresses or seeds the tree.
    """
    novel: list = []
    suppressed = 0
    ignored = 0
    for verdict, meta in verdicts:
        if verdict.outcome not in DEVIATING_OUTCOMES:
            ignored += 1
            continue
        sigs = signature_of(verdict, meta)
        any_novel = False
        for sig in sigs:
            kind, _ = kb.insert(sig, case_id=verdict.case_id)
            if kind == NOVEL:
                any_novel = True
        if any_novel:
            novel.append((verdict, sigs))
        else:
            suppressed += 1
    return FilterOutcome(novel, suppressed, ignored)
