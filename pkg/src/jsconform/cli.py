"""Command-line interface: extract, generate, mutate, fuzz, reduce, report, campaign."""

from __future__ import annotations

import json
import logging
import os
import random
import shlex
import sys

import click

from . import campaign as campaign_mod
from . import datagen, dedup, harness, progen, reducer, reporting, specdb
from .utils import child_seed

log = logging.getLogger(__name__)


@click.group()
@click.option("--verbose", is_flag=True, help="Enable debug logging.")
def main(verbose: bool):
    """Differential conformance-fuzzing toolkit for JavaScript engines."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True),
              help="ECMAScript spec document (HTML).")
@click.option("--out", "out_path", required=True, type=click.Path(),
              help="Output spec-database JSON file.")
@click.option("--patterns", "patterns_path", type=click.Path(exists=True),
              help="Alternative extraction-pattern table.")
@click.option("--report", "show_report", is_flag=True,
              help="Print the extraction coverage summary.")
def extract(spec_path, out_path, patterns_path, show_report):
    """Parse spec HTML into the canonical API-rule database."""
    with open(spec_path, "r", encoding="utf-8") as fh:
        doc = fh.read()
    patterns = specdb.load_patterns(patterns_path)
    try:
        db = specdb.parse_spec_document(doc, patterns)
    except specdb.SpecParseError as exc:
        raise click.ClickException(str(exc)) from exc
    specdb.save(db, out_path)
    click.echo(f"extracted {len(db)} API sections -> {out_path}")
    if show_report:
        rep = specdb.coverage_report(db)
        click.echo(f"coverage: {rep['extracted']}/{rep['total_sections']} "
                   f"(ratio {rep['ratio']:.3f})")


@main.command()
@click.option("--count", default=100, show_default=True, help="Programs to generate.")
@click.option("--out", "outdir", required=True, type=click.Path())
@click.option("--external-cmd", help="External generator command (wire protocol).")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--keep-invalid", default=0.2, show_default=True, type=float,
              help="Fraction of syntactically invalid programs to keep.")
@click.option("--specdb", "specdb_path", type=click.Path(exists=True),
              help="Spec database that seeds the generator's API pool.")
@click.option("--max-words", default=5000, show_default=True, type=int)
@click.option("--top-k", default=10, show_default=True, type=int)
def generate(count, outdir, external_cmd, seed, keep_invalid, specdb_path,
             max_words, top_k):
    """Generate JS test programs and keep the syntax-filtered batch."""
    pool = progen.api_pool_from_db(specdb.load(specdb_path)) if specdb_path \
        else progen.DEFAULT_API_POOL
    cfg = progen.GenConfig(top_k=top_k, max_words=max_words,
                           keep_invalid_fraction=keep_invalid,
                           rng_seed=seed, api_pool=pool)
    rng = random.Random(child_seed(seed, "generate"))
    batch = []
    if external_cmd:
        with progen.ExternalGenerator(shlex.split(external_cmd)) as gen:
            for _ in range(count):
                header = progen.pick_seed_header(cfg.seed_header_corpus, rng)
                batch.append(gen.generate(header, cfg))
    else:
        for _ in range(count):
            batch.append(progen.generate_builtin(cfg, rng))
    result = progen.syntax_filter(batch, None, cfg, random.Random(child_seed(seed, "filter")))
    kept = result.kept_valid + result.kept_invalid
    progen.save_programs(kept, outdir)
    click.echo(f"generated {count}: kept {len(result.kept_valid)} valid, "
               f"{len(result.kept_invalid)} invalid, dropped {len(result.dropped)}")


@main.command()
@click.option("--programs", "programs_dir", required=True, type=click.Path(exists=True))
@click.option("--specdb", "specdb_path", required=True, type=click.Path(exists=True))
@click.option("--out", "outdir", required=True, type=click.Path())
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--random-per-site", default=3, show_default=True, type=int)
@click.option("--edition", default=None, help="Spec edition stamped into case meta.")
def mutate(programs_dir, specdb_path, outdir, seed, random_per_site, edition):
    """Derive boundary/random/arity test cases for every known API call site."""
    db = specdb.load(specdb_path)
    cfg = datagen.MutationConfig(random_cases_per_site=random_per_site, edition=edition)
    total = 0
    for prog in sorted(progen.load_programs(programs_dir), key=lambda p: p.id):
        rng = random.Random(child_seed(seed, "mutate", prog.id))
        cases = datagen.mutate_program(prog, db, cfg, rng)
        datagen.save_cases(cases, outdir)
        total += len(cases)
    click.echo(f"wrote {total} test cases -> {outdir}")


@main.command()
@click.option("--testbeds", "testbeds_path", required=True, type=click.Path(exists=True))
@click.option("--cases", "cases_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "outdir", required=True, type=click.Path())
@click.option("--cap-ms", default=600_000, show_default=True, type=int,
              help="Absolute per-engine wall-clock cap.")
@click.option("--min-timeout-ms", default=1000, show_default=True, type=int)
@click.option("--jobs", default=os.cpu_count() or 4, show_default=True, type=int)
@click.option("--deterministic-logs", is_flag=True,
              help="Zero volatile fields (durations) in the verdict log.")
def fuzz(testbeds_path, cases_dir, outdir, cap_ms, min_timeout_ms, jobs,
         deterministic_logs):
    """Run every case across every testbed and classify the divergences."""
    testbeds = harness.load_testbeds(testbeds_path)
    if len(testbeds) < 2:
        raise click.ClickException("differential testing needs at least two testbeds")
    cases = datagen.load_cases(cases_dir)
    policy = harness.TimeoutPolicy(absolute_cap_ms=cap_ms,
                                   min_timeout_ms=min_timeout_ms)
    errors: list = []
    verdicts = harness.run_matrix(testbeds, cases, policy, jobs=jobs, errors=errors)
    os.makedirs(outdir, exist_ok=True)
    log_path = os.path.join(outdir, "verdicts.jsonl")
    harness.write_verdict_log(verdicts, log_path, deterministic=deterministic_logs)
    for err in errors:
        click.echo(f"testbed error: {err}", err=True)
    by_outcome = {o: sum(1 for v in verdicts if v.outcome == o)
                  for o in harness.OUTCOMES}
    click.echo(f"classified {len(verdicts)} cases -> {log_path}")
    click.echo(", ".join(f"{o}={n}" for o, n in by_outcome.items() if n))


def _parse_target_verdict(text: str) -> harness.Verdict:
    if os.path.exists(text):
        with open(text, "r", encoding="utf-8") as fh:
            text = fh.readline()
    try:
        return harness.verdict_from_record(json.loads(text))
    except (json.JSONDecodeError, KeyError) as exc:
        raise click.ClickException(f"not a verdict log record: {exc}") from exc


@main.command()
@click.option("--case", "case_path", required=True, type=click.Path(exists=True))
@click.option("--testbeds", "testbeds_path", required=True, type=click.Path(exists=True))
@click.option("--target-verdict", required=True,
              help="Verdict log record (inline JSON or a file holding one line).")
@click.option("--budget", default=2000, show_default=True, type=int)
@click.option("--cap-ms", default=600_000, show_default=True, type=int)
@click.option("--min-timeout-ms", default=1000, show_default=True, type=int)
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Output path (defaults to <case>.min.js next to the input).")
def reduce(case_path, testbeds_path, target_verdict, budget, cap_ms,
           min_timeout_ms, out_path):
    """Shrink a bug-exposing case while preserving its verdict signature."""
    testbeds = harness.load_testbeds(testbeds_path)
    policy = harness.TimeoutPolicy(absolute_cap_ms=cap_ms,
                                   min_timeout_ms=min_timeout_ms)
    verdict = _parse_target_verdict(target_verdict)
    source, _meta = datagen.load_case(case_path)
    oracle = reducer.ReductionOracle.for_verdict(
        verdict, reducer.matrix_replay(testbeds, policy))
    try:
        result = reducer.reduce_case(source, oracle, budget=budget)
    except reducer.OracleNotSatisfied as exc:
        raise click.ClickException(str(exc)) from exc
    except reducer.FlakyOracle as exc:
        raise click.ClickException(f"aborted: {exc}") from exc
    if out_path is None:
        stem = case_path[:-3] if case_path.endswith(".js") else case_path
        out_path = stem + ".min.js"
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(result.source)
    click.echo(f"reduced {len(source)} -> {len(result.source)} bytes "
               f"({result.oracle_calls} oracle calls) -> {out_path}")


@main.command()
@click.option("--kb", "kb_path", required=True, type=click.Path(),
              help="Knowledge-base JSON (created when missing).")
@click.option("--verdicts", "verdicts_path", required=True, type=click.Path(exists=True))
@click.option("--out", "outdir", required=True, type=click.Path())
@click.option("--cases", "cases_dir", type=click.Path(exists=True),
              help="Case directory supplying sources and meta for reports.")
@click.option("--specdb", "specdb_path", type=click.Path(exists=True),
              help="Spec database supplying section references.")
@click.option("--minimized", "minimized_dir", type=click.Path(exists=True),
              help="Directory of <id>.min.js files to embed in reports.")
def report(kb_path, verdicts_path, outdir, cases_dir, specdb_path, minimized_dir):
    """Filter repeated miscompilations and render reports for novel ones."""
    verdicts = harness.read_verdict_log(verdicts_path)
    kb = dedup.KnowledgeBase.load(kb_path) if os.path.exists(kb_path) \
        else dedup.KnowledgeBase()
    metas: dict = {}
    if cases_dir:
        for case_id, source, meta in datagen.load_cases(cases_dir):
            metas[case_id] = (source, meta)
    outcome = dedup.filter_stream(
        kb, ((v, metas.get(v.case_id, ("", {}))[1]) for v in verdicts))
    kb.save(kb_path)
    spec_sections = {}
    if specdb_path:
        for api in specdb.load(specdb_path):
            spec_sections[api.name] = api.source_section
    minimized_sources = {}
    if minimized_dir:
        for v, _ in outcome.novel:
            path = os.path.join(minimized_dir, v.case_id + ".min.js")
            if os.path.exists(path):
                with open(path, "r", encoding="utf-8") as fh:
                    minimized_sources[v.case_id] = fh.read()
    os.makedirs(outdir, exist_ok=True)
    written = reporting.write_case_reports(outdir, outcome.novel, metas,
                                           minimized_sources, spec_sections)
    reporting.write_summary_csv(os.path.join(outdir, "summary.csv"), verdicts)
    reporting.write_signature_csv(os.path.join(outdir, "signatures.csv"), kb)
    figures = reporting.render_figures(os.path.join(outdir, "figures"), verdicts, kb)
    click.echo(f"{len(outcome.novel)} novel, {outcome.suppressed} suppressed, "
               f"{outcome.ignored} non-deviating; {len(written)} reports, "
               f"{len(figures)} figures -> {outdir}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--dry-run", is_flag=True, help="Validate the config and exit.")
def campaign(config_path, dry_run):
    """Run the full pipeline as one resumable campaign."""
    try:
        cfg = campaign_mod.CampaignConfig.from_file(config_path)
        cfg.validate()
    except campaign_mod.ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)
    if dry_run:
        click.echo(f"config ok (hash {cfg.config_hash()[:16]})")
        return
    try:
        rep = campaign_mod.run_campaign(cfg)
    except campaign_mod.ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)
    for phase, counts in rep.counts.items():
        rendered = ", ".join(f"{k}={v}" for k, v in sorted(counts.items())
                             if not isinstance(v, list))
        click.echo(f"{phase}: {rendered}")
    if rep.failed:
        for err in rep.errors:
            click.echo(f"error: {err}", err=True)
        sys.exit(3)


if __name__ == "__main__":
    main()
