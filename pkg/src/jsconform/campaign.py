"""End-to-end campaign orchestration.

Wires the pipeline spec-db -> program generation -> data mutation ->
differential execution -> dedup -> reduction -> reporting over a persistent
output tree:

    <output_root>/
      programs/   generated programs, one <content-hash>.js each
      cases/      mutated cases plus sidecar meta
      verdicts/   line-delimited verdict log
      kb/         the dedup knowledge tree
      minimized/  reduced sources for novel deviating cases
      reports/    markdown per divergence, CSV summaries, figures/
      state/      per-phase completion markers (config-hash stamped)

Artifacts are content-addressed and every phase writes a marker carrying
the campaign config hash, so an interrupted campaign resumes by re-running
the same command: completed phases are skipped, half-written artifact sets
are re-derived deterministically from the seed.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import time
from dataclasses import dataclass, field
from typing import Optional

from . import datagen, dedup, harness, progen, reducer, reporting, specdb
from .utils import canonical_json, child_seed

log = logging.getLogger(__name__)

PHASES = ("generate", "mutate", "execute", "dedup", "reduce", "report")


class ConfigError(ValueError):
    """The campaign config is unusable."""


class ConfigMismatchError(ConfigError):
    """Existing campaign state was produced under a different config."""


class PhaseFailure(RuntimeError):
    def __init__(self, phase: str, cause: Exception):
        super().__init__(f"phase {phase} failed: {cause}")
        self.phase = phase
        self.cause = cause


@dataclass
class CampaignConfig:
    specdb: Optional[str]
    testbeds: str
    output_root: str
    seed: int = 0
    program_count: int = 50
    jobs: int = os.cpu_count() or 4
    external_cmd: Optional[list] = None
    max_words: int = 5000
    top_k: int = 10
    keep_invalid_fraction: float = 0.2
    random_per_site: int = 3
    edition: Optional[str] = None
    absolute_cap_ms: int = 600_000
    min_timeout_ms: int = 1000
    slow_ratio: float = 2.0
    reduce_budget: int = 2000
    deterministic_logs: bool = False
    phases: dict = field(default_factory=lambda: {p: True for p in PHASES})

    @classmethod
    def from_file(cls, path: str) -> "CampaignConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        generator = raw.pop("generator", {})
        mutation = raw.pop("mutation", {})
        caps = raw.pop("caps", {})
        cfg = cls(
            specdb=raw.get("specdb"),
            testbeds=raw.get("testbeds", ""),
            output_root=raw.get("output_root", "campaign-out"),
            seed=raw.get("seed", 0),
            program_count=raw.get("program_count", 50),
            jobs=raw.get("jobs", os.cpu_count() or 4),
            external_cmd=generator.get("external_cmd"),
            max_words=generator.get("max_words", 5000),
            top_k=generator.get("top_k", 10),
            keep_invalid_fraction=generator.get("keep_invalid_fraction", 0.2),
            random_per_site=mutation.get("random_per_site", 3),
            edition=mutation.get("edition"),
            absolute_cap_ms=caps.get("absolute_cap_ms", 600_000),
            min_timeout_ms=caps.get("min_timeout_ms", 1000),
            slow_ratio=caps.get("slow_ratio", 2.0),
            reduce_budget=raw.get("reduce_budget", 2000),
            deterministic_logs=raw.get("deterministic_logs", False),
        )
        toggles = raw.get("phases") or {}
        for name, enabled in toggles.items():
            if name not in PHASES:
                raise ConfigError(f"unknown phase toggle {name!r}")
            cfg.phases[name] = bool(enabled)
        return cfg

    def config_hash(self) -> str:
        """Hash of the effective configuration.

        File-path fields hash by referenced content, so equivalent campaigns
        in different directories compare equal and resume survives moves.
        """
        payload = {k: v for k, v in self.__dict__.items() if k != "output_root"}
        for field_name in ("specdb", "testbeds"):
            path = payload.get(field_name)
            if path and os.path.exists(path):
                with open(path, "rb") as fh:
                    payload[field_name] = hashlib.sha256(fh.read()).hexdigest()
        return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()

    def policy(self) -> harness.TimeoutPolicy:
        return harness.TimeoutPolicy(absolute_cap_ms=self.absolute_cap_ms,
                                     min_timeout_ms=self.min_timeout_ms,
                                     slow_ratio=self.slow_ratio)

    def validate(self) -> list[harness.Testbed]:
        if not self.testbeds:
            raise ConfigError("no testbed file configured")
        if not os.path.exists(self.testbeds):
            raise ConfigError(f"testbed file not found: {self.testbeds}")
        testbeds = harness.load_testbeds(self.testbeds)
        if len(testbeds) < 2:
            raise ConfigError("differential testing needs at least two testbeds")
        if self.specdb and not os.path.exists(self.specdb):
            raise ConfigError(f"spec database not found: {self.specdb}")
        if self.program_count < 0:
            raise ConfigError("program_count must be >= 0")
        return testbeds


@dataclass
class CampaignReport:
    config_hash: str
    counts: dict = field(default_factory=dict)
    timings_ms: dict = field(default_factory=dict)
    errors: list = field(default_factory=list)
    manifest: list = field(default_factory=list)
    failed: bool = False

    def payload(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "counts": self.counts,
            "timings_ms": self.timings_ms,
            "errors": self.errors,
            "failed": self.failed,
            "manifest": self.manifest,
        }


def _subdirs(root: str) -> dict:
    names = ("programs", "cases", "verdicts", "kb", "minimized", "reports", "state")
    paths = {name: os.path.join(root, name) for name in names}
    paths["figures"] = os.path.join(paths["reports"], "figures")
    return paths


def _marker_path(dirs: dict, phase: str) -> str:
    return os.path.join(dirs["state"], f"{phase}.json")


def _read_marker(dirs: dict, phase: str) -> Optional[dict]:
    path = _marker_path(dirs, phase)
    if not os.path.exists(path):
        return None
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _write_marker(dirs: dict, phase: str, config_hash: str, counts: dict) -> None:
    payload = {"config_hash": config_hash, "completed": True, "counts": counts}
    with open(_marker_path(dirs, phase), "w", encoding="utf-8") as fh:
        fh.write(canonical_json(payload))


def check_state(cfg: CampaignConfig, dirs: dict) -> None:
    """Refuse to mix artifacts produced under a different configuration."""
    want = cfg.config_hash()
    for phase in PHASES:
        marker = _read_marker(dirs, phase)
        if marker and marker.get("config_hash") != want:
            raise ConfigMismatchError(
                f"existing state for phase {phase!r} was produced by config "
                f"{marker.get('config_hash', '?')[:12]}, current is {want[:12]}")


# ---------------------------------------------------------------------------
# Phases


def _phase_generate(cfg: CampaignConfig, dirs: dict) -> dict:
    db = specdb.load(cfg.specdb) if cfg.specdb else None
    gen_cfg = progen.GenConfig(
        top_k=cfg.top_k, max_words=cfg.max_words,
        keep_invalid_fraction=cfg.keep_invalid_fraction,
        rng_seed=cfg.seed,
        api_pool=progen.api_pool_from_db(db) if db else progen.DEFAULT_API_POOL,
    )
    rng = random.Random(child_seed(cfg.seed, "generate"))
    batch: list[progen.TestProgram] = []
    if cfg.external_cmd:
        with progen.ExternalGenerator(cfg.external_cmd) as gen:
            for _ in range(cfg.program_count):
                header = progen.pick_seed_header(gen_cfg.seed_header_corpus, rng)
                batch.append(gen.generate(header, gen_cfg))
    else:
        for _ in range(cfg.program_count):
            batch.append(progen.generate_builtin(gen_cfg, rng))
    filter_rng = random.Random(child_seed(cfg.seed, "filter"))
    result = progen.syntax_filter(batch, None, gen_cfg, filter_rng)
    kept = result.kept_valid + result.kept_invalid
    progen.save_programs(kept, dirs["programs"])
    return {"generated": len(batch), **result.counts()}


def _phase_mutate(cfg: CampaignConfig, dirs: dict) -> dict:
    if not cfg.specdb:
        return {"cases": 0, "programs_with_sites": 0}
    db = specdb.load(cfg.specdb)
    mut_cfg = datagen.MutationConfig(random_cases_per_site=cfg.random_per_site,
                                     edition=cfg.edition)
    programs = progen.load_programs(dirs["programs"])
    with_sites = 0
    for prog in sorted(programs, key=lambda p: p.id):
        rng = random.Random(child_seed(cfg.seed, "mutate", prog.id))
        cases = datagen.mutate_program(prog, db, mut_cfg, rng)
        if cases:
            with_sites += 1
            datagen.save_cases(cases, dirs["cases"])
    # identical cases across programs share one content-addressed file
    total = sum(1 for name in os.listdir(dirs["cases"]) if name.endswith(".js"))
    return {"cases": total, "programs_with_sites": with_sites}


def _phase_execute(cfg: CampaignConfig, dirs: dict) -> dict:
    testbeds = harness.load_testbeds(cfg.testbeds)
    cases = datagen.load_cases(dirs["cases"])
    errors: list = []
    verdicts = harness.run_matrix(testbeds, cases, cfg.policy(),
                                  jobs=cfg.jobs, errors=errors)
    log_path = os.path.join(dirs["verdicts"], "verdicts.jsonl")
    harness.write_verdict_log(verdicts, log_path,
                              deterministic=cfg.deterministic_logs)
    counts = {"executed": len(verdicts), "testbed_errors": len(errors)}
    for outcome in harness.OUTCOMES:
        counts[outcome] = sum(1 for v in verdicts if v.outcome == outcome)
    if errors:
        counts["errors"] = errors
    return counts


def _load_metas(dirs: dict) -> dict:
    metas = {}
    for case_id, source, meta in datagen.load_cases(dirs["cases"]):
        metas[case_id] = (source, meta)
    return metas


def _phase_dedup(cfg: CampaignConfig, dirs: dict) -> dict:
    log_path = os.path.join(dirs["verdicts"], "verdicts.jsonl")
    verdicts = harness.read_verdict_log(log_path) if os.path.exists(log_path) else []
    metas = _load_metas(dirs)
    kb_path = os.path.join(dirs["kb"], "kb.json")
    kb = dedup.KnowledgeBase.load(kb_path) if os.path.exists(kb_path) \
        else dedup.KnowledgeBase()
    stream = ((v, metas.get(v.case_id, ("", {}))[1]) for v in verdicts)
    outcome = dedup.filter_stream(kb, stream)
    kb.save(kb_path)
    novel_payload = {
        v.case_id: [[s.engine_id, s.api, s.behavior] for s in sigs]
        for v, sigs in outcome.novel
    }
    with open(os.path.join(dirs["kb"], "novel.json"), "w", encoding="utf-8") as fh:
        fh.write(canonical_json(novel_payload))
    return {"novel": len(outcome.novel), "suppressed": outcome.suppressed,
            "ignored": outcome.ignored, "kb_leaves": kb.leaf_count}


def _novel_case_ids(dirs: dict) -> list[str]:
    path = os.path.join(dirs["kb"], "novel.json")
    if not os.path.exists(path):
        return []
    with open(path, "r", encoding="utf-8") as fh:
        return sorted(json.load(fh))


def _phase_reduce(cfg: CampaignConfig, dirs: dict) -> dict:
    log_path = os.path.join(dirs["verdicts"], "verdicts.jsonl")
    if not os.path.exists(log_path):
        return {"minimized": 0}
    verdicts = {v.case_id: v for v in harness.read_verdict_log(log_path)}
    testbeds = harness.load_testbeds(cfg.testbeds)
    replay = reducer.matrix_replay(testbeds, cfg.policy(), jobs=cfg.jobs)
    minimized = 0
    budget_exhausted = 0
    for case_id in _novel_case_ids(dirs):
        out_path = os.path.join(dirs["minimized"], case_id + ".min.js")
        if os.path.exists(out_path):
            minimized += 1
            continue
        verdict = verdicts.get(case_id)
        case_path = os.path.join(dirs["cases"], case_id + ".js")
        if verdict is None or not os.path.exists(case_path):
            continue
        source, _ = datagen.load_case(case_path)
        oracle = reducer.ReductionOracle.for_verdict(verdict, replay)
        try:
            result = reducer.reduce_case(source, oracle, budget=cfg.reduce_budget)
        except (reducer.OracleNotSatisfied, reducer.FlakyOracle) as exc:
            log.warning("reduction of %s skipped: %s", case_id[:16], exc)
            continue
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(result.source)
        minimized += 1
        budget_exhausted += int(result.budget_exhausted)
    return {"minimized": minimized, "budget_exhausted": budget_exhausted}


def _phase_report(cfg: CampaignConfig, dirs: dict) -> dict:
    log_path = os.path.join(dirs["verdicts"], "verdicts.jsonl")
    verdicts = harness.read_verdict_log(log_path) if os.path.exists(log_path) else []
    metas = _load_metas(dirs)
    kb_path = os.path.join(dirs["kb"], "kb.json")
    kb = dedup.KnowledgeBase.load(kb_path) if os.path.exists(kb_path) \
        else dedup.KnowledgeBase()
    spec_sections = {}
    if cfg.specdb:
        for api in specdb.load(cfg.specdb):
            spec_sections[api.name] = api.source_section
    novel_ids = set(_novel_case_ids(dirs))
    novel = []
    for v in verdicts:
        if v.case_id in novel_ids and v.outcome in dedup.DEVIATING_OUTCOMES:
            meta = metas.get(v.case_id, ("", {}))[1]
            novel.append((v, dedup.signature_of(v, meta)))
    minimized_sources = {}
    for v, _sigs in novel:
        path = os.path.join(dirs["minimized"], v.case_id + ".min.js")
        if os.path.exists(path):
            with open(path, "r", encoding="utf-8") as fh:
                minimized_sources[v.case_id] = fh.read()
    written = reporting.write_case_reports(dirs["reports"], novel, metas,
                                           minimized_sources, spec_sections)
    reporting.write_summary_csv(os.path.join(dirs["reports"], "summary.csv"), verdicts)
    reporting.write_signature_csv(os.path.join(dirs["reports"], "signatures.csv"), kb)
    reporting.render_figures(dirs["figures"], verdicts, kb)
    return {"reports": len(written)}


_PHASE_FNS = {
    "generate": _phase_generate,
    "mutate": _phase_mutate,
    "execute": _phase_execute,
    "dedup": _phase_dedup,
    "reduce": _phase_reduce,
    "report": _phase_report,
}


def _collect_manifest(root: str) -> list[str]:
    # report.json/report.md are written after the walk; list them explicitly
    out = ["report.json", "report.md"]
    for dirpath, _dirnames, filenames in os.walk(root):
        for name in filenames:
            rel = os.path.relpath(os.path.join(dirpath, name), root)
            if rel in ("report.json", "report.md"):
                continue
            out.append(rel.replace(os.sep, "/"))
    return sorted(out)


def run_campaign(cfg: CampaignConfig) -> CampaignReport:
    """Run (or resume) every enabled phase; artifacts land under output_root."""
    cfg.validate()
    dirs = _subdirs(cfg.output_root)
    for path in dirs.values():
        os.makedirs(path, exist_ok=True)
    check_state(cfg, dirs)

    config_hash = cfg.config_hash()
    report = CampaignReport(config_hash=config_hash)
    for phase in PHASES:
        if not cfg.phases.get(phase, True):
            report.counts[phase] = {"skipped": "disabled"}
            continue
        marker = _read_marker(dirs, phase)
        if marker and marker.get("completed"):
            report.counts[phase] = marker["counts"]
            report.timings_ms[phase] = 0
            continue
        started = time.perf_counter()
        try:
            counts = _PHASE_FNS[phase](cfg, dirs)
        except Exception as exc:  # noqa: BLE001 - phase errors become report entries
            report.errors.append(f"{phase}: {exc}")
            report.failed = True
            log.exception("campaign phase %s failed", phase)
            break
        elapsed = 0 if cfg.deterministic_logs else int(
            (time.perf_counter() - started) * 1000)
        report.counts[phase] = counts
        report.timings_ms[phase] = elapsed
        _write_marker(dirs, phase, config_hash, counts)

    report.manifest = _collect_manifest(cfg.output_root)
    _write_report(cfg, report)
    return report


def _write_report(cfg: CampaignConfig, report: CampaignReport) -> None:
    path = os.path.join(cfg.output_root, "report.json")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_json(report.payload()))
    lines = ["# Campaign report", "", f"- config hash: `{report.config_hash[:16]}`",
             f"- failed: {report.failed}", ""]
    lines.append("| phase | counts |")
    lines.append("| --- | --- |")
    for phase in PHASES:
        counts = report.counts.get(phase)
        if counts is None:
            continue
        rendered = ", ".join(f"{k}={v}" for k, v in sorted(counts.items())
                             if not isinstance(v, list))
        lines.append(f"| {phase} | {rendered} |")
    if report.errors:
        lines.append("")
        lines.append("## Errors")
        lines.append("")
        for err in report.errors:
            lines.append(f"- {err}")
    with open(os.path.join(cfg.output_root, "report.md"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def resume(cfg: CampaignConfig) -> CampaignReport:
    """Continue a prior run; refuses when the config hash does not match."""
    dirs = _subdirs(cfg.output_root)
    if not os.path.isdir(dirs["state"]):
        raise ConfigError(f"no prior campaign state under {cfg.output_root}")
    markers = [p for p in PHASES if _read_marker(dirs, p)]
    if not markers:
        raise ConfigError(f"no prior campaign state under {cfg.output_root}")
    check_state(cfg, dirs)
    return run_campaign(cfg)
