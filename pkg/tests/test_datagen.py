import math
import random
import subprocess
import sys

import pytest

from jsconform import datagen, jssyntax, specdb
from jsconform.jsvalues import UNDEFINED
from jsconform.progen import TestProgram

from conftest import require_node

SUBSTR_WRAPPER = """\
function foo() {
  var str = "Albert";
  var start = 0;
  var len = 6;
  var res = str.substr(start, len);
  return res;
}
"""

TOFIXED_WRAPPER = """\
var a = function (assert) {
  var num = 3.25;
  var digits = 2;
  var out = num.toFixed(digits);
  return out;
};
"""


def program(source):
    return TestProgram(source=source, origin="builtin", seed_header="",
                       syntactically_valid="valid")


def run_node(source: str) -> str:
    require_node()
    proc = subprocess.run(["node", "-e", source], capture_output=True, text=True,
                          timeout=30)
    assert proc.returncode == 0, proc.stderr
    return proc.stdout.strip()


# ---------------------------------------------------------------------------
# call-site location


def test_find_substr_call_with_variable_bindings(substr_db):
    sites = datagen.find_api_calls(program(SUBSTR_WRAPPER), substr_db)
    assert len(sites) == 1
    site = sites[0]
    assert site.api_name == "String.prototype.substr"
    assert [a.param_name for a in site.args] == ["start", "length"]
    assert all(a.definition == "variable" for a in site.args)
    assert site.args[0].current_value == 0
    assert site.args[1].current_value == 6
    assert site.receiver_binding is not None
    assert site.receiver_binding.current_value == "Albert"


def test_no_api_calls_yields_empty(substr_db):
    sites = datagen.find_api_calls(program("var x = 1;\n"), substr_db)
    assert sites == []


def test_unparseable_program_yields_empty(substr_db):
    sites = datagen.find_api_calls(program("function ("), substr_db)
    assert sites == []


def test_branch_assignment_is_opaque():
    db = [specdb.ApiSpec(name="f", receiver_type="global",
                         parameters=[specdb.ParamSpec(name="x")],
                         steps=[], source_section="s")]
    src = "var x = 1;\nif (c) { x = 2; }\nvar r = f(x);\n"
    sites = datagen.find_api_calls(program(src), db)
    assert len(sites) == 1
    assert sites[0].args[0].definition == "opaque"


def test_straight_line_redefinition_cleans_poison():
    db = [specdb.ApiSpec(name="f", receiver_type="global",
                         parameters=[specdb.ParamSpec(name="x")],
                         steps=[], source_section="s")]
    src = "var x = 1;\nif (c) { x = 2; }\nx = 3;\nvar r = f(x);\n"
    sites = datagen.find_api_calls(program(src), db)
    assert sites[0].args[0].definition == "variable"
    assert sites[0].args[0].current_value == 3


def test_receiver_type_disambiguates_method(substr_db, tofixed_db):
    db = list(substr_db) + list(tofixed_db)
    sites = datagen.find_api_calls(program(TOFIXED_WRAPPER), db)
    assert [s.api_name for s in sites] == ["Number.prototype.toFixed"]
    # a string receiver must not match the Number prototype API
    src = 'var s = "x";\nvar r = s.toFixed(2);\n'
    assert datagen.find_api_calls(program(src), db) == []


# ---------------------------------------------------------------------------
# mutation


def _cases_by_kind(cases):
    out = {}
    for c in cases:
        out.setdefault(c.mutation_origin["kind"], []).append(c)
    return out


def test_mutate_tofixed_covers_range_probes(tofixed_db):
    prog = program(TOFIXED_WRAPPER)
    sites = datagen.find_api_calls(prog, tofixed_db)
    cases = datagen.mutate_test_data(prog, sites[0], tofixed_db[0],
                                     datagen.MutationConfig(), random.Random(0))
    boundary_values = {c.mutation_origin["value"] for c in cases
                       if c.mutation_origin["kind"] == "boundary"}
    assert {"-1", "0", "20", "21", "undefined"} <= boundary_values
    kinds = _cases_by_kind(cases)
    assert "as_generated" in kinds and "arity_extra" in kinds
    # fractionDigits is optional, so an arity-drop case exists
    assert "arity_drop" in kinds


def test_mutate_substr_undefined_length_prints_albert(substr_db):
    prog = program(SUBSTR_WRAPPER)
    sites = datagen.find_api_calls(prog, substr_db)
    cases = datagen.mutate_test_data(prog, sites[0], substr_db[0],
                                     datagen.MutationConfig(), random.Random(0))
    target = next(c for c in cases
                  if c.mutation_origin.get("param") == "length"
                  and c.mutation_origin.get("value") == "undefined")
    assert "var len = undefined;" in target.final_source
    assert run_node(target.final_source) == "Albert"


def test_as_generated_case_differs_only_by_driver(substr_db):
    prog = program(SUBSTR_WRAPPER)
    sites = datagen.find_api_calls(prog, substr_db)
    cases = datagen.mutate_test_data(prog, sites[0], substr_db[0],
                                     datagen.MutationConfig(), random.Random(0))
    as_gen = next(c for c in cases if c.mutation_origin["kind"] == "as_generated")
    assert as_gen.final_source == prog.source + as_gen.driver
    assert run_node(as_gen.final_source) == "Albert"


def test_boundary_completeness_counts(substr_db):
    src = SUBSTR_WRAPPER.replace("var start = 0;", "var start = 5;")
    prog = program(src)
    sites = datagen.find_api_calls(prog, substr_db)
    cases = datagen.mutate_test_data(prog, sites[0], substr_db[0],
                                     datagen.MutationConfig(random_cases_per_site=0),
                                     random.Random(0))
    for pname in ("start", "length"):
        expected = len(specdb.boundary_values(substr_db[0], pname))
        got = sum(1 for c in cases if c.mutation_origin.get("kind") == "boundary"
                  and c.mutation_origin.get("param") == pname)
        assert got == expected, pname


def test_zero_parameter_spec_gets_asgen_and_extra_only():
    db = [specdb.ApiSpec(name="String.prototype.trim", receiver_type="String",
                         parameters=[], steps=[], source_section="s")]
    src = 'function foo() {\n  var s = " x ";\n  var r = s.trim();\n  return r;\n}\n'
    prog = program(src)
    sites = datagen.find_api_calls(prog, db)
    cases = datagen.mutate_test_data(prog, sites[0], db[0],
                                     datagen.MutationConfig(), random.Random(0))
    kinds = sorted(c.mutation_origin["kind"] for c in cases)
    assert kinds == ["arity_extra", "as_generated"]


def test_opaque_param_skipped_with_note():
    db = [specdb.ApiSpec(name="f", receiver_type="global",
                         parameters=[specdb.ParamSpec(name="x")],
                         steps=[], source_section="s")]
    src = "var x = 1;\nif (c) { x = 2; }\nvar r = f(x);\n"
    prog = program(src)
    sites = datagen.find_api_calls(prog, db)
    cases = datagen.mutate_test_data(prog, sites[0], db[0],
                                     datagen.MutationConfig(), random.Random(0))
    kinds = {c.mutation_origin["kind"] for c in cases}
    assert "boundary" not in kinds
    assert any("opaque" in note for c in cases for note in c.notes)


def test_mutation_determinism(substr_db):
    prog = program(SUBSTR_WRAPPER)
    ids_a = [c.id for c in datagen.mutate_program(prog, substr_db,
                                                  datagen.MutationConfig(),
                                                  random.Random(9))]
    ids_b = [c.id for c in datagen.mutate_program(prog, substr_db,
                                                  datagen.MutationConfig(),
                                                  random.Random(9))]
    assert ids_a == ids_b and ids_a


def test_emitted_cases_stay_syntactically_valid(substr_db, tofixed_db):
    db = list(substr_db) + list(tofixed_db)
    for src in (SUBSTR_WRAPPER, TOFIXED_WRAPPER):
        prog = program(src)
        for case in datagen.mutate_program(prog, db, datagen.MutationConfig(),
                                           random.Random(4)):
            ok, reason = jssyntax.check_syntax(case.final_source)
            assert ok, (reason, case.final_source)


# ---------------------------------------------------------------------------
# driver synthesis


def test_driver_with_explicit_bindings_prints_one_line(substr_db):
    src = "function wrapper(s, start, len) {\n  return s.substr(start, len);\n}\n"
    case = datagen.synthesize_driver(program(src),
                                     [("s", "Albert Einstein"), ("start", 0),
                                      ("len", UNDEFINED)])
    assert 'var s = "Albert Einstein";' in case.driver
    assert "var len = undefined;" in case.driver
    assert run_node(case.final_source) == "Albert Einstein"


def test_driver_empty_bindings_only_invokes_and_prints():
    src = "function foo() {\n  return 42;\n}\n"
    case = datagen.synthesize_driver(program(src), [])
    assert case.bindings == ()
    assert run_node(case.final_source) == "42"


def test_driver_nan_binding_prints_nan():
    src = "function echo(v) {\n  return v;\n}\n"
    case = datagen.synthesize_driver(program(src), [("v", math.nan)])
    assert "var v = NaN;" in case.driver
    assert run_node(case.final_source) == "NaN"


def test_driver_prints_canonical_exception_line():
    src = "function boom() {\n  null.f();\n  return 1;\n}\n"
    case = datagen.synthesize_driver(program(src), [])
    assert run_node(case.final_source) == "EXC TypeError"


def test_driver_unserializable_binding_raises():
    src = "function foo() { return 1; }\n"
    with pytest.raises(TypeError):
        datagen.synthesize_driver(program(src), [("x", object())])


def test_save_and_load_cases_round_trip(tmp_path, substr_db):
    prog = program(SUBSTR_WRAPPER)
    cases = datagen.mutate_program(prog, substr_db, datagen.MutationConfig(),
                                   random.Random(3))
    ids = datagen.save_cases(cases, str(tmp_path))
    loaded = datagen.load_cases(str(tmp_path))
    assert {cid for cid, _, _ in loaded} == set(ids)
    for cid, source, meta in loaded:
        assert meta["program_id"] == prog.id
        assert meta["api"] == "String.prototype.substr"
        assert "mutation_origin" in meta
