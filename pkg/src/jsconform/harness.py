"""Differential execution of test cases across engine testbeds.

A testbed is one (engine, version, execution mode) triple; strict-mode
testbeds run the same binary with the source prefixed by the strict-mode
directive. Each execution lands in its own scratch directory with output
size caps and an absolute wall-clock cap.

Classification follows a fixed ladder over the per-engine results of one
test case: parsing agreement first, then the timeout rule (an engine is
slow iff it ran longer than ``slow_ratio`` times the slowest of the other
engines that finished, never below a floor that keeps scheduler noise from
fabricating timeouts), then crashes, then output majority voting. Ties
yield NoMajority instead of blaming an arbitrary engine.
"""

from __future__ import annotations

import json
import logging
import os
import re
import shutil
import subprocess
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional, Sequence

from .utils import short_hash

log = logging.getLogger(__name__)

# the seven classification outcomes
PASS = "Pass"
DISCARDED = "Discarded"
INCONSISTENT_PARSE = "InconsistentParse"
WRONG_OUTPUT = "WrongOutput"
RUNTIME_CRASH = "RuntimeCrash"
RUNTIME_TIMEOUT = "RuntimeTimeout"
NO_MAJORITY = "NoMajority"

OUTCOMES = (PASS, DISCARDED, INCONSISTENT_PARSE, WRONG_OUTPUT,
            RUNTIME_CRASH, RUNTIME_TIMEOUT, NO_MAJORITY)

PHASE_PARSE_FAIL = "parse_fail"
PHASE_RAN = "ran"

EXIT_EXITED = "exited"
EXIT_CRASHED = "crashed"
EXIT_TIMEOUT = "timeout"

STRICT_DIRECTIVE = '"use strict";\n'

NORMAL = "normal"
STRICT = "strict"


class TestbedError(RuntimeError):
    """A testbed cannot run at all (missing or unrunnable binary)."""


class ClassifyError(ValueError):
    """Differential classification is undefined (fewer than two results)."""


@dataclass(frozen=True)
class Testbed:
    engine_id: str
    version: str
    binary: str
    argv_template: tuple = ()
    mode: str = NORMAL
    supported_edition: Optional[str] = None
    env: tuple = ()

    @property
    def ref(self) -> str:
        return f"{self.engine_id}:{self.version}:{self.mode}"

    def argv(self, file_path: str) -> list[str]:
        if not self.argv_template:
            return [self.binary, file_path]
        args = [a.replace("{FILE}", file_path) for a in self.argv_template]
        return [self.binary] + args


def load_testbeds(path: str) -> list[Testbed]:
    """Read the testbed config file; each engine entry expands per mode."""
    with open(path, "r", encoding="utf-8") as fh:
        entries = json.load(fh)
    testbeds: list[Testbed] = []
    seen = set()
    for entry in entries:
        modes = entry.get("modes", [NORMAL, STRICT])
        supported = entry.get("supported_edition")
        if supported is None and entry.get("editions"):
            # list form ("editions": ["ES2018", "ES2019"]): newest wins
            supported = max(entry["editions"],
                            key=lambda tag: edition_year(tag) or 0)
        for mode in modes:
            if mode not in (NORMAL, STRICT):
                raise ValueError(f"unknown mode {mode!r} for {entry.get('engine_id')}")
            tb = Testbed(
                engine_id=entry["engine_id"],
                version=str(entry.get("version", "unknown")),
                binary=entry["binary"],
                argv_template=tuple(entry.get("argv_template", [])),
                mode=mode,
                supported_edition=supported,
                env=tuple(sorted((entry.get("env") or {}).items())),
            )
            key = (tb.engine_id, tb.version, tb.mode)
            if key in seen:
                raise ValueError(f"duplicate testbed {key}")
            seen.add(key)
            testbeds.append(tb)
    return testbeds


@dataclass
class TimeoutPolicy:
    absolute_cap_ms: int = 600_000  # ten minutes unless scaled down by config
    slow_ratio: float = 2.0
    min_timeout_ms: int = 1000  # floor below which the slow rule never fires
    output_cap_bytes: int = 1_000_000


@dataclass
class ExecutionResult:
    testbed: str  # testbed ref
    case_id: str
    phase: str
    exit_kind: str
    exit_code: Optional[int]
    signal: Optional[int]
    stdout: str
    stderr: str
    duration_ms: int


@dataclass
class Verdict:
    case_id: str
    outcome: str
    deviants: list[str] = field(default_factory=list)
    majority_output: Optional[str] = None
    deviant_outputs: dict = field(default_factory=dict)
    durations: dict = field(default_factory=dict)
    note: Optional[str] = None

    def record(self, deterministic: bool = False) -> dict:
        """Log-record form (line-delimited JSON)."""
        durations = {k: 0 for k in self.durations} if deterministic else dict(self.durations)
        rec = {
            "case": self.case_id,
            "outcome": self.outcome,
            "deviants": sorted(self.deviants),
            "majority_output_hash": short_hash(self.majority_output)
            if self.majority_output is not None else None,
            "durations": durations,
            "majority_output": self.majority_output,
            "deviant_outputs": {k: self.deviant_outputs[k]
                                for k in sorted(self.deviant_outputs)},
        }
        if self.note:
            rec["note"] = self.note
        return rec


def verdict_from_record(rec: dict) -> Verdict:
    return Verdict(
        case_id=rec["case"],
        outcome=rec["outcome"],
        deviants=list(rec.get("deviants", [])),
        majority_output=rec.get("majority_output"),
        deviant_outputs=dict(rec.get("deviant_outputs", {})),
        durations=dict(rec.get("durations", {})),
        note=rec.get("note"),
    )


_PARSE_PATTERNS: Optional[dict] = None


def _parse_patterns() -> dict:
    global _PARSE_PATTERNS
    if _PARSE_PATTERNS is None:
        text = resources.files("jsconform.data").joinpath("parse_errors.json").read_text("utf-8")
        _PARSE_PATTERNS = {k: [re.compile(p, re.M) for p in v]
                           for k, v in json.loads(text).items()}
    return _PARSE_PATTERNS


def canonicalize_output(text: str) -> str:
    """Per-line trailing-whitespace normalization; trailing blank lines dropped."""
    lines = [line.rstrip() for line in text.splitlines()]
    while lines and not lines[-1]:
        lines.pop()
    return "\n".join(lines)


def _looks_like_parse_failure(tb: Testbed, exit_code: Optional[int],
                              stdout: str, stderr: str) -> bool:
    if not exit_code:  # parse errors exit nonzero on every engine we drive
        return False
    patterns = _parse_patterns().get(tb.engine_id) or _parse_patterns()["default"]
    return any(p.search(stderr) or p.search(stdout) for p in patterns)


def run_testbed(tb: Testbed, tc, caps: TimeoutPolicy) -> ExecutionResult:
    """Execute one case on one testbed inside a scratch working directory."""
    source = getattr(tc, "final_source", None) or getattr(tc, "source")
    case_id = tc.id
    if tb.mode == STRICT:
        source = STRICT_DIRECTIVE + source
    if not (shutil.which(tb.binary) or os.path.exists(tb.binary)):
        raise TestbedError(f"binary not found for {tb.ref}: {tb.binary}")
    workdir = tempfile.mkdtemp(prefix="jsconform-run-")
    try:
        path = os.path.join(workdir, case_id + ".js")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(source)
        env = dict(os.environ)
        env.update(dict(tb.env))
        started = time.perf_counter()
        try:
            proc = subprocess.run(
                tb.argv(path), cwd=workdir, env=env, capture_output=True,
                timeout=caps.absolute_cap_ms / 1000.0)
            duration_ms = int((time.perf_counter() - started) * 1000)
            stdout = proc.stdout[:caps.output_cap_bytes].decode("utf-8", "replace")
            stderr = proc.stderr[:caps.output_cap_bytes].decode("utf-8", "replace")
            if proc.returncode is not None and proc.returncode < 0:
                exit_kind, exit_code, sig = EXIT_CRASHED, None, -proc.returncode
            else:
                exit_kind, exit_code, sig = EXIT_EXITED, proc.returncode, None
        except subprocess.TimeoutExpired as exc:
            duration_ms = caps.absolute_cap_ms
            stdout = (exc.stdout or b"")[:caps.output_cap_bytes].decode("utf-8", "replace")
            stderr = (exc.stderr or b"")[:caps.output_cap_bytes].decode("utf-8", "replace")
            exit_kind, exit_code, sig = EXIT_TIMEOUT, None, None
        except OSError as exc:
            raise TestbedError(f"cannot execute {tb.ref}: {exc}") from exc
        stdout = canonicalize_output(stdout)
        phase = PHASE_PARSE_FAIL if (
            exit_kind == EXIT_EXITED
            and _looks_like_parse_failure(tb, exit_code, stdout, stderr)
        ) else PHASE_RAN
        return ExecutionResult(tb.ref, case_id, phase, exit_kind, exit_code, sig,
                               stdout, stderr, duration_ms)
    finally:
        shutil.rmtree(workdir, ignore_errors=True)


def _observed(result: ExecutionResult) -> str:
    """Human-readable observed behavior for reports and dedup."""
    if result.phase == PHASE_PARSE_FAIL:
        first = result.stderr.strip().splitlines()
        return "[parse failed] " + (first[0] if first else "")
    if result.exit_kind == EXIT_CRASHED:
        return f"[crashed: signal {result.signal}] " + result.stdout
    if result.exit_kind == EXIT_TIMEOUT:
        return "[timed out] " + result.stdout
    return result.stdout


def classify(results: Sequence[ExecutionResult], policy: TimeoutPolicy) -> Verdict:
    """Fold one case's per-testbed results into a single Verdict."""
    if len(results) < 2:
        raise ClassifyError("differential classification needs at least two results")
    case_id = results[0].case_id
    durations = {r.testbed: r.duration_ms for r in results}

    def verdict(outcome, deviants=(), majority=None, note=None):
        return Verdict(
            case_id=case_id,
            outcome=outcome,
            deviants=sorted(r.testbed for r in deviants),
            majority_output=majority,
            deviant_outputs={r.testbed: _observed(r) for r in deviants},
            durations=durations,
            note=note,
        )

    parse_failers = [r for r in results if r.phase == PHASE_PARSE_FAIL]
    if len(parse_failers) == len(results):
        return verdict(DISCARDED, note="rejected by every parser")
    if parse_failers:
        return verdict(INCONSISTENT_PARSE, parse_failers)

    capped = [r for r in results if r.exit_kind == EXIT_TIMEOUT]
    if len(capped) == len(results):
        return verdict(DISCARDED, note="no engine finished within the absolute cap")
    slow = []
    for r in results:
        others = [o.duration_ms for o in results
                  if o is not r and o.exit_kind != EXIT_TIMEOUT]
        if r.exit_kind == EXIT_TIMEOUT:
            slow.append(r)
        elif others and r.duration_ms > max(policy.slow_ratio * max(others),
                                            policy.min_timeout_ms):
            slow.append(r)
    if slow:
        return verdict(RUNTIME_TIMEOUT, slow)

    crashed = [r for r in results if r.exit_kind == EXIT_CRASHED]
    if crashed:
        return verdict(RUNTIME_CRASH, crashed)

    groups: dict[str, list[ExecutionResult]] = {}
    for r in results:
        groups.setdefault(r.stdout, []).append(r)
    majority_text, majority_members = max(groups.items(), key=lambda kv: len(kv[1]))
    if len(majority_members) == len(results):
        return verdict(PASS, majority=majority_text)
    if len(majority_members) * 2 > len(results):
        deviants = [r for r in results if r.stdout != majority_text]
        return verdict(WRONG_OUTPUT, deviants, majority=majority_text)
    return verdict(NO_MAJORITY, note="no strict majority among outputs")


# ---------------------------------------------------------------------------
# Matrix execution


_EDITION_YEARS = {1: 1997, 2: 1998, 3: 1999, 5: 2009, 6: 2015, 7: 2016,
                  8: 2017, 9: 2018, 10: 2019, 11: 2020, 12: 2021}


def edition_year(tag: Optional[str]) -> Optional[int]:
    """Order editions by year; accepts 'ES2019', 'ES6', 'ES5.1' style tags."""
    if not tag:
        return None
    m = re.match(r"^ES(\d+(?:\.\d+)?)$", tag.strip(), re.I)
    if not m:
        return None
    num = float(m.group(1))
    if num >= 1000:
        return int(num)
    if num == 5.1:
        return 2011
    return _EDITION_YEARS.get(int(num))


def testbed_supports(tb: Testbed, case_edition: Optional[str]) -> bool:
    need = edition_year(case_edition)
    has = edition_year(tb.supported_edition)
    if need is None or has is None:
        return True
    return has >= need


@dataclass
class _MatrixCase:
    id: str
    source: str

    @property
    def final_source(self):
        return self.source


def run_matrix(testbeds: Sequence[Testbed], cases: Sequence[tuple],
               policy: TimeoutPolicy, jobs: int = 4,
               errors: Optional[list] = None) -> list[Verdict]:
    """Run (testbed x case), classify each case once; errors never abort.

    ``cases`` holds (case_id, source, meta) triples; meta may carry the
    spec edition the case depends on, which excludes too-old testbeds.
    Verdicts come back sorted by case id so logs are reproducible.
    """
    errors = errors if errors is not None else []
    dead: set[str] = set()
    verdicts: list[Verdict] = []

    def run_one(tb: Testbed, case: _MatrixCase) -> Optional[ExecutionResult]:
        if tb.ref in dead:
            return None
        try:
            return run_testbed(tb, case, policy)
        except TestbedError as exc:
            dead.add(tb.ref)
            errors.append(str(exc))
            log.error("%s", exc)
            return None

    ordered = sorted(cases, key=lambda c: c[0])
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        for case_id, source, meta in ordered:
            case = _MatrixCase(case_id, source)
            eligible = [tb for tb in testbeds
                        if testbed_supports(tb, (meta or {}).get("edition"))]
            futures = [pool.submit(run_one, tb, case) for tb in eligible]
            results = [f.result() for f in futures]
            results = [r for r in results if r is not None]
            if len(results) < 2:
                verdicts.append(Verdict(case_id=case_id, outcome=DISCARDED,
                                        note="fewer than two eligible testbeds"))
                continue
            verdicts.append(classify(results, policy))
    return verdicts


def write_verdict_log(verdicts: Sequence[Verdict], path: str,
                      deterministic: bool = False) -> None:
    """Line-delimited JSON log, one record per verdict, sorted by case id."""
    with open(path, "w", encoding="utf-8") as fh:
        for v in sorted(verdicts, key=lambda v: v.case_id):
            fh.write(json.dumps(v.record(deterministic), sort_keys=True,
                                ensure_ascii=False) + "\n")


def read_verdict_log(path: str) -> list[Verdict]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(verdict_from_record(json.loads(line)))
    return out
