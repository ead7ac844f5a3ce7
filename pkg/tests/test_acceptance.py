"""Acceptance suite: one test per release criterion, tolerances pinned.

Each test prints one `ACCEPTANCE PASS: <criterion>` line on success; a
failing criterion shows up as a failed test. Run with `pytest -v
tests/test_acceptance.py` for the per-criterion report.
"""

import json
import os
import random
import shutil
import subprocess
import sys
import time
from pathlib import Path

import pytest

from jsconform import (campaign, datagen, dedup, harness, jssyntax, progen,
                       reducer, specdb)

from conftest import FIXTURES, fast_policy, make_case, write_testbeds
from test_campaign import campaign_config, read_artifacts
from test_dedup import synthetic_stream
from test_reducer import build_fixture_case, trigger_testbeds




def ok(criterion: str):
    print(f"\nACCEPTANCE PASS: {criterion}")


# ---------------------------------------------------------------------------
# 1. spec extraction golden test


def test_spec_extraction_golden():
    started = time.perf_counter()
    doc = (FIXTURES / "substr.html").read_text(encoding="utf-8")
    db = specdb.parse_spec_document(doc)
    serialized_a = specdb.serialize(db)
    serialized_b = specdb.serialize(specdb.parse_spec_document(doc))
    elapsed = time.perf_counter() - started

    assert len(db) == 1
    api = db[0]
    assert api.name == "String.prototype.substr"
    assert len(api.parameters) == 2
    assert [p.name for p in api.parameters] == ["start", "length"]
    length = api.param("length")
    assert length.optional
    assert any(b.predicate == "IsUndefined" and b.target == "length"
               for b in length.boundaries)
    assert serialized_a == serialized_b, "serialization is not byte-stable"
    payload = json.loads(serialized_a)
    assert set(payload) == {"apis"}
    assert elapsed < 1.0, f"golden extraction took {elapsed:.2f}s (budget 1s)"
    ok("spec extraction golden test (substr fixture, byte-stable, <1s)")


# ---------------------------------------------------------------------------
# 2. extraction coverage


def test_extraction_coverage():
    doc = (FIXTURES / "corpus50.html").read_text(encoding="utf-8")
    db = specdb.parse_spec_document(doc)
    rep = specdb.coverage_report(db)
    hand_counted = 41  # sections with pseudo-code in the bundled fixture
    assert rep["total_sections"] == 50
    assert rep["extracted"] == hand_counted
    assert rep["ratio"] == hand_counted / 50
    full_spec = os.environ.get("JSCONFORM_FULL_SPEC_HTML")
    if full_spec and os.path.exists(full_spec):
        full_db = specdb.parse_spec_document(
            Path(full_spec).read_text(encoding="utf-8"))
        full_rep = specdb.coverage_report(full_db)
        print(f"\nfull-document coverage (reported, not asserted): "
              f"{full_rep['extracted']}/{full_rep['total_sections']} "
              f"= {full_rep['ratio']:.3f}")
    ok(f"extraction coverage on fixture corpus ({rep['extracted']}/50 = "
       f"{rep['ratio']:.2f} exactly)")


# ---------------------------------------------------------------------------
# 3. generator validity + invalid-keep fraction


def test_generator_validity_10k():
    started = time.perf_counter()
    cfg = progen.GenConfig(rng_seed=20260810)
    rng = random.Random(cfg.rng_seed)
    total = 10_000
    valid = 0
    for _ in range(total):
        prog = progen.generate_builtin(cfg, rng)
        if jssyntax.check_syntax(prog.source)[0]:
            valid += 1
    rate = valid / total
    assert rate >= 0.95, f"validity rate {rate:.4f} below 0.95"

    invalid_batch = [progen.TestProgram(source=f"function b{i}( {{",
                                        origin="builtin", seed_header="")
                     for i in range(1000)]
    res = progen.syntax_filter(invalid_batch, None, cfg, random.Random(4242))
    kept = len(res.kept_invalid)
    # binomial n=1000 p=0.2: 5 sigma = 63.2, so [137, 263]
    assert 137 <= kept <= 263, f"kept {kept} outside the 5-sigma band"
    elapsed = time.perf_counter() - started
    assert elapsed < 300, f"took {elapsed:.0f}s (budget 5 min)"
    ok(f"generator validity ({rate:.1%} of 10k valid, "
       f"invalid-keep {kept}/1000 within 5σ of 0.2, {elapsed:.0f}s)")


# ---------------------------------------------------------------------------
# 4. test-data generation oracle (Algorithm 1 behavior)


def test_algorithm1_boundary_and_substr_oracle():
    tofixed_db = specdb.parse_spec_document(
        (FIXTURES / "tofixed.html").read_text(encoding="utf-8"))
    values = specdb.boundary_values(tofixed_db[0], "fractionDigits")
    from jsconform.jsvalues import UNDEFINED
    assert {-1, 0, 20, 21} <= {v for v in values if isinstance(v, int)}
    assert UNDEFINED in values

    # mutate the toFixed wrapper and confirm the emitted value set
    src = ("function foo() {\n  var num = 3.25;\n  var digits = 2;\n"
           "  var out = num.toFixed(digits);\n  return out;\n}\n")
    prog = progen.TestProgram(source=src, origin="builtin", seed_header="",
                              syntactically_valid="valid")
    sites = datagen.find_api_calls(prog, tofixed_db)
    cases = datagen.mutate_test_data(prog, sites[0], tofixed_db[0],
                                     datagen.MutationConfig(), random.Random(0))
    emitted = {c.mutation_origin["value"] for c in cases
               if c.mutation_origin["kind"] == "boundary"}
    assert {"-1", "0", "20", "21", "undefined"} <= emitted

    if shutil.which("node") is None:
        pytest.skip("no reference engine (node) available for the substr oracle")
    substr_db = specdb.parse_spec_document(
        (FIXTURES / "substr.html").read_text(encoding="utf-8"))
    src = ("function foo() {\n  var str = \"Albert\";\n  var start = 0;\n"
           "  var len = 6;\n  var res = str.substr(start, len);\n  return res;\n}\n")
    prog = progen.TestProgram(source=src, origin="builtin", seed_header="",
                              syntactically_valid="valid")
    sites = datagen.find_api_calls(prog, substr_db)
    cases = datagen.mutate_test_data(prog, sites[0], substr_db[0],
                                     datagen.MutationConfig(), random.Random(0))
    target = next(c for c in cases
                  if c.mutation_origin.get("param") == "length"
                  and c.mutation_origin.get("value") == "undefined")
    proc = subprocess.run(["node", "-e", target.final_source],
                          capture_output=True, text=True, timeout=30)
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.strip() == "Albert"
    ok("test-data oracle (toFixed probes ⊇ {-1,0,20,21,undefined}; "
       "substr undefined-length case prints Albert under node)")


# ---------------------------------------------------------------------------
# 5. classifier matrix: 30 scripted fixtures over all seven outcomes


def _matrix_scenarios():
    A, B, C, D, E = "engA", "engB", "engC", "engD", "engE"

    def refs(*engines):
        return [f"{e}:1.0:normal" for e in engines]

    plain3 = (A, B, C)
    plain4 = (A, B, C, D)
    plain5 = (A, B, C, D, E)
    return [
        # name, engines, source, expected outcome, expected deviants
        ("pass_identical_print", plain3, "//@mock * print same\n", harness.PASS, []),
        ("pass_default_hash", plain3, "var x = 1;\n", harness.PASS, []),
        ("pass_empty_output", plain3, "//@mock * exit 0\n", harness.PASS, []),
        ("pass_uniform_exception", plain3, "//@mock * print EXC TypeError\n",
         harness.PASS, []),
        ("pass_trailing_spaces", plain3,
         "//@mock engA print x  \n//@mock engB print x\n//@mock engC print x \n",
         harness.PASS, []),
        ("pass_four_engines", plain4, "//@mock * print steady\n", harness.PASS, []),
        ("wrong_output_first_engine", plain3,
         "//@mock engA print odd\n//@mock engB print even\n//@mock engC print even\n",
         harness.WRONG_OUTPUT, refs(A)),
        ("wrong_output_last_engine", plain3,
         "//@mock engC print odd\n//@mock * print even\n",
         harness.WRONG_OUTPUT, refs(C)),
        ("wrong_output_4v1", plain5,
         "//@mock engE print minority\n//@mock * print majority\n",
         harness.WRONG_OUTPUT, refs(E)),
        ("wrong_output_3v2_majority", plain5,
         "//@mock engD print minority\n//@mock engE print minority\n"
         "//@mock * print majority\n",
         harness.WRONG_OUTPUT, refs(D, E)),
        ("wrong_output_multiline", plain3,
         "//@mock engB print l1\n//@mock engB print l2-dev\n"
         "//@mock engA print l1\n//@mock engA print l2\n"
         "//@mock engC print l1\n//@mock engC print l2\n",
         harness.WRONG_OUTPUT, refs(B)),
        ("wrong_output_exception_vs_value", plain3,
         "//@mock engA print EXC RangeError\n//@mock engB print EXC RangeError\n"
         "//@mock engC print -634619\n",
         harness.WRONG_OUTPUT, refs(C)),
        ("wrong_output_value_vs_exception", plain3,
         "//@mock engB print EXC TypeError\n//@mock * print 42\n",
         harness.WRONG_OUTPUT, refs(B)),
        ("wrong_output_empty_deviant", plain3,
         "//@mock engA exit 0\n//@mock engB print full\n//@mock engC print full\n",
         harness.WRONG_OUTPUT, refs(A)),
        ("discarded_all_parse_fail", plain3, "//@mock * parsefail\n",
         harness.DISCARDED, []),
        ("discarded_all_parse_fail_4", plain4, "//@mock * parsefail\n",
         harness.DISCARDED, []),
        ("inconsistent_parse_single", plain3,
         "//@mock engA parsefail\n//@mock * print fine\n",
         harness.INCONSISTENT_PARSE, refs(A)),
        ("inconsistent_parse_pair", plain4,
         "//@mock engA parsefail\n//@mock engB parsefail\n//@mock * print fine\n",
         harness.INCONSISTENT_PARSE, refs(A, B)),
        ("parse_precedence_over_crash", plain3,
         "//@mock engA parsefail\n//@mock engB crash\n//@mock engC print ok\n",
         harness.INCONSISTENT_PARSE, refs(A)),
        ("runtime_crash_single", plain3,
         "//@mock engB crash\n//@mock * print ok\n",
         harness.RUNTIME_CRASH, refs(B)),
        ("runtime_crash_pair", plain4,
         "//@mock engB crash\n//@mock engC crash\n//@mock * print ok\n",
         harness.RUNTIME_CRASH, refs(B, C)),
        ("runtime_crash_after_print", plain3,
         "//@mock engA print partial\n//@mock engA crash\n//@mock * print partial\n",
         harness.RUNTIME_CRASH, refs(A)),
        ("crash_precedence_over_output", plain4,
         "//@mock engA crash\n//@mock engB print x\n//@mock engC print y\n"
         "//@mock engD print x\n",
         harness.RUNTIME_CRASH, refs(A)),
        ("no_majority_tie", plain4,
         "//@mock engA print left\n//@mock engB print left\n"
         "//@mock engC print right\n//@mock engD print right\n",
         harness.NO_MAJORITY, []),
        ("no_majority_three_way", plain3,
         "//@mock engA print one\n//@mock engB print two\n//@mock engC print three\n",
         harness.NO_MAJORITY, []),
        ("no_majority_2v2v1", plain5,
         "//@mock engA print p\n//@mock engB print p\n//@mock engC print q\n"
         "//@mock engD print q\n//@mock engE print r\n",
         harness.NO_MAJORITY, []),
        ("timeout_2t_sleeper", plain3,
         "//@mock engA sleep 900\n//@mock engB sleep 300\n//@mock engC sleep 300\n"
         "//@mock * print done\n",
         harness.RUNTIME_TIMEOUT, refs(A)),
        ("timeout_absolute_cap_single", plain3,
         "//@mock engB sleep 60000\n//@mock * print quick\n",
         harness.RUNTIME_TIMEOUT, refs(B)),
        ("timeout_precedence_over_crash", plain3,
         "//@mock engA sleep 900\n//@mock engB sleep 250\n//@mock engB crash\n"
         "//@mock engC sleep 300\n//@mock * print done\n",
         harness.RUNTIME_TIMEOUT, refs(A)),
        ("discarded_absolute_cap_all", plain3,
         "//@mock * sleep 60000\n//@mock * print never\n",
         harness.DISCARDED, []),
    ]


def test_classifier_matrix_30_fixtures(tmp_path):
    scenarios = _matrix_scenarios()
    assert len(scenarios) == 30
    policy = harness.TimeoutPolicy(absolute_cap_ms=2000, min_timeout_ms=500)
    testbed_cache = {}
    failures = []
    covered = set()
    for name, engines, source, expected_outcome, expected_deviants in scenarios:
        if engines not in testbed_cache:
            cfg = write_testbeds(tmp_path / f"tb{len(engines)}.json",
                                 [(e, []) for e in engines])
            testbed_cache[engines] = harness.load_testbeds(str(cfg))
        testbeds = testbed_cache[engines]
        case = make_case(f"fixture-{name}", source)
        results = [harness.run_testbed(tb, case, policy) for tb in testbeds]
        verdict = harness.classify(results, policy)
        covered.add(verdict.outcome)
        if (verdict.outcome, verdict.deviants) != (expected_outcome,
                                                   sorted(expected_deviants)):
            failures.append((name, verdict.outcome, verdict.deviants,
                             expected_outcome, expected_deviants))
    assert not failures, failures
    assert covered == set(harness.OUTCOMES), f"outcomes not all covered: {covered}"
    ok("classifier matrix (30/30 scripted fixtures exact, all seven outcomes, "
       "2t rule and 2s absolute cap verified)")


# ---------------------------------------------------------------------------
# 6. reducer


def test_reducer_acceptance(tmp_path):
    case = build_fixture_case(filler_statements=48)
    # 50 statements inside the entry function: 48 fillers + trigger + return
    model = jssyntax.scan_program(case.program.source)
    assert len(model.entry_function().body) == 50

    testbeds = trigger_testbeds(tmp_path)
    replay = reducer.matrix_replay(testbeds, fast_policy())
    verdict = replay(case.final_source)
    assert verdict.outcome == harness.WRONG_OUTPUT
    oracle = reducer.ReductionOracle.for_verdict(verdict, replay)

    started = time.perf_counter()
    result = reducer.reduce_case(case.final_source, oracle, budget=2000)
    elapsed = time.perf_counter() - started

    program = result.source[:result.source.find(datagen.DRIVER_BANNER)]
    core_statements = [ln for ln in program.splitlines() if ln.strip()]
    assert "TRIGGER_X" in program
    assert len(core_statements) <= 3, core_statements
    assert oracle.holds(result.source), "verdict not preserved"
    assert result.oracle_calls <= 2000
    assert elapsed < 60, f"reduction took {elapsed:.1f}s (budget 60s)"

    # 1-minimality: every remaining candidate removal breaks the oracle
    for start, end, replacement in reducer._candidates(result.source):
        candidate = result.source[:start] + replacement + result.source[end:]
        if len(candidate) >= len(result.source):
            continue
        if not jssyntax.check_syntax(candidate)[0]:
            continue
        assert not oracle.holds(candidate)

    again = reducer.reduce_case(result.source, oracle, budget=2000)
    assert again.source == result.source and again.removals == 0
    ok(f"reducer (50-statement fixture -> {len(core_statements)}-statement core, "
       f"{result.oracle_calls} oracle calls, {elapsed:.1f}s, 1-minimal, idempotent)")


# ---------------------------------------------------------------------------
# 7. dedup


def test_dedup_acceptance(tmp_path):
    stream = synthetic_stream(count=1000, distinct=12)
    kb = dedup.KnowledgeBase()
    outcome = dedup.filter_stream(kb, stream)
    assert len(outcome.novel) == 12, f"expected 12 novel, got {len(outcome.novel)}"
    assert kb.leaf_count == 12

    kb_path = tmp_path / "kb.json"
    kb.save(str(kb_path))
    reloaded = dedup.KnowledgeBase.load(str(kb_path))
    replay = dedup.filter_stream(reloaded, stream)
    assert replay.novel == []
    assert replay.suppressed == 1000
    ok("dedup (1000 verdicts over 12 signatures -> exactly 12 novel; "
       "persistence round-trip suppresses the full replay)")


# ---------------------------------------------------------------------------
# 8. end-to-end determinism


def test_end_to_end_determinism(tmp_path):
    runs = []
    for out_name in ("det-a", "det-b"):
        cfg_path = campaign_config(tmp_path, out_name=out_name)
        cfg = campaign.CampaignConfig.from_file(str(cfg_path))
        report = campaign.run_campaign(cfg)
        assert not report.failed, report.errors
        runs.append(read_artifacts(Path(cfg.output_root)))
    first, second = runs
    assert set(first) == set(second)
    for rel in first:
        assert first[rel] == second[rel], f"artifact {rel} differs between runs"
    ok(f"end-to-end determinism (fixture campaign twice; "
       f"{len(first)} artifacts byte-identical, incl. verdict log and reports)")


# ---------------------------------------------------------------------------
# 9. live smoke (environment-gated)


# ---------------------------------------------------------------------------
# 10. secondary: generator-adapter protocol conformance


def test_secondary_adapter_protocol_conformance():
    adapter_main = Path(__file__).parent.parent / "genadapter" / "dist" / "main.js"
    if shutil.which("node") is None or not adapter_main.exists():
        pytest.skip("secondary adapter not built or node unavailable")
    headers = ["var a = function (assert) {", "function foo() {",
               "var check = function (value) {"]
    caps = (15, 80, 5000)
    served = 0
    with progen.ExternalGenerator(["node", str(adapter_main),
                                   "--backend", "stub"]) as gen:
        for i in range(100):
            cfg = progen.GenConfig(max_words=caps[i % 3])
            header = headers[i % 3]
            prog = gen.generate(header, cfg)
            assert prog.source.startswith(header), "header not echoed"
            assert jssyntax.words(prog.source) <= cfg.max_words
            served += 1
    assert served == 100
    ok("secondary adapter protocol conformance (stub backend served 100 GEN "
       "requests; frames valid, headers echoed, caps respected)")


_ENGINE_CANDIDATES = ("node", "nodejs", "d8", "v8", "js", "jsc", "qjs",
                      "quickjs", "hermes", "jerry", "graaljs", "ch")


def _real_engines():
    found = {}
    seen_real = set()
    for name in _ENGINE_CANDIDATES:
        path = shutil.which(name)
        if not path:
            continue
        real = os.path.realpath(path)
        if real in seen_real:
            continue  # aliases (nodejs -> node) are not a second engine
        seen_real.add(real)
        found[name] = path
    return found


def test_live_smoke_real_engines(tmp_path):
    engines = _real_engines()
    if len(engines) < 2:
        pytest.skip(f"live smoke needs >=2 real JS engines, found {sorted(engines)}")
    entries = [{"engine_id": name, "version": "local", "binary": path,
                "argv_template": ["{FILE}"], "modes": ["normal"]}
               for name, path in engines.items()]
    tb_path = tmp_path / "real.json"
    tb_path.write_text(json.dumps(entries))
    testbeds = harness.load_testbeds(str(tb_path))

    gen_cfg = progen.GenConfig(rng_seed=1)
    rng = random.Random(1)
    cases = []
    while len(cases) < 100:
        prog = progen.generate_builtin(gen_cfg, rng)
        if not jssyntax.check_syntax(prog.source)[0]:
            continue
        case = datagen.synthesize_driver(prog, [])
        cases.append((case.id, case.final_source, {}))
    errors: list = []
    policy = harness.TimeoutPolicy(absolute_cap_ms=20_000, min_timeout_ms=2000)
    verdicts = harness.run_matrix(testbeds, cases, policy, jobs=8, errors=errors)
    assert errors == [], errors
    assert len(verdicts) == 100
    divergent = [v for v in verdicts if v.outcome in dedup.DEVIATING_OUTCOMES]
    for v in divergent:
        from jsconform import reporting
        body = reporting.render_case_report(v, {}, None)
        assert v.case_id[:16] in body
    ok(f"live smoke ({len(engines)} engines, 100 cases, zero harness errors, "
       f"{len(divergent)} divergences reported)")
