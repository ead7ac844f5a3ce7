"""Spec-guided test-data generation for located API call sites.

For every statement that invokes an API known to the spec database, the
argument variables are traced back to their definitions through the
straight-line flow of the enclosing scope (anything crossing a branch,
loop, or closure boundary is Opaque and left alone). Each resolvable
argument is then mutated: once per boundary value the database derives for
the matching parameter, plus a configurable number of random-value cases,
an untouched as-generated case, and arity probes (dropping optional
trailing arguments, adding one extra).

Every emitted case carries a driver that invokes the entry function,
prints the return value through a canonical stringifier, and folds thrown
exceptions into a single stable line (`EXC <ErrorName>`), so downstream
differential comparison does not trip over engine-specific wording.
"""

from __future__ import annotations

import logging
import os
import random
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

from . import jssyntax, specdb
from .jsvalues import js_type_of, random_value, to_js_literal
from .progen import TestProgram, UNCHECKED, VALID
from .utils import canonical_json, content_id

log = logging.getLogger(__name__)

DRIVER_BANNER = "// driver: bind test data, invoke entry point, print observable result"

_PRINT_SHIM = """\
var __cfprint = (typeof print === "function") ? print : function (s) { console.log(s); };
function __cffmt(v) {
  if (v === undefined) { return "undefined"; }
  if (v === null) { return "null"; }
  if (typeof v === "number") { return (v !== v) ? "NaN" : String(v); }
  if (typeof v === "boolean") { return String(v); }
  if (typeof v === "string") { return v; }
  if (Object.prototype.toString.call(v) === "[object Array]") {
    var parts = [];
    for (var i = 0; i < v.length; i++) { parts.push(__cffmt(v[i])); }
    return "[" + parts.join(",") + "]";
  }
  if (typeof v === "function") { return "function"; }
  return "object";
}
"""


@dataclass
class MutationConfig:
    random_cases_per_site: int = 3
    edition: Optional[str] = None
    max_boundary_cases_per_param: int = 16


@dataclass
class ArgBinding:
    param_name: str
    definition: str  # "literal" | "variable" | "opaque"
    def_stmt: Optional[int] = None
    rewrite_span: Optional[tuple] = None  # (start, end) to splice a new literal into
    current_value: Any = None

    @property
    def mutable(self) -> bool:
        return self.definition in ("literal", "variable") and self.rewrite_span is not None


@dataclass
class CallSite:
    api_name: str
    location: tuple  # (statement index, call ordinal within statement)
    args: list[ArgBinding]
    receiver_binding: Optional[ArgBinding]
    lparen: int
    rparen: int
    arg_spans: list[tuple]


@dataclass
class TestCase:
    program: TestProgram
    bindings: tuple  # ((name, js literal text), ...)
    driver: str
    mutation_origin: dict
    api: Optional[str] = None
    edition: Optional[str] = None
    notes: list[str] = field(default_factory=list)
    source_program_id: Optional[str] = None  # the pre-mutation program

    @property
    def final_source(self) -> str:
        return self.program.source + self.driver

    @property
    def id(self) -> str:
        return content_id(self.final_source)

    def meta(self) -> dict:
        payload = {
            "program_id": self.source_program_id or self.program.id,
            "api": self.api,
            "mutation_origin": self.mutation_origin,
            "bindings": {name: literal for name, literal in self.bindings},
        }
        if self.edition:
            payload["edition"] = self.edition
        if self.notes:
            payload["notes"] = list(self.notes)
        return payload


# ---------------------------------------------------------------------------
# Definition resolution


def _def_events(model: jssyntax.ProgramModel):
    """Yield (flat index, statement, conditional?) for every def-like statement."""
    conditional_ids = set()

    def mark(sts, conditional):
        for st in sts:
            if conditional:
                conditional_ids.add(id(st))
            # function bodies restart a straight-line region; branch/loop
            # bodies are conditional all the way down
            nested_conditional = conditional or st.kind in ("if", "loop", "other")
            mark(st.body, nested_conditional if not st.is_function else False)

    mark(model.statements, False)
    for idx, st in enumerate(model.flat):
        if st.kind in ("var", "assign") and st.var_name:
            yield idx, st, id(st) in conditional_ids


def _env_at(model: jssyntax.ProgramModel, source: str, upto: int) -> dict:
    """Straight-line variable environment just before flat statement `upto`."""
    env: dict[str, dict] = {}
    for idx, st, conditional in _def_events(model):
        if idx >= upto:
            break
        if conditional:
            if st.var_name in env:
                env[st.var_name]["poisoned"] = True
            else:
                env[st.var_name] = {"poisoned": True, "def_stmt": idx, "span": None,
                                    "value": None, "type": None}
            continue
        value = None
        jstype = None
        span = None
        if st.init_start is not None and st.init_end is not None:
            span = (st.init_start, st.init_end)
            info = jssyntax.classify_span(source, st.init_start, st.init_end)
            if info is not None and info.kind == "literal":
                value = info.value
                try:
                    jstype = js_type_of(value)
                except TypeError:
                    jstype = None
        env[st.var_name] = {"poisoned": False, "def_stmt": idx, "span": span,
                            "value": value, "type": jstype}
    return env


def _bind(env: dict, arg: jssyntax.ArgInfo, param_name: str) -> ArgBinding:
    if arg.kind == "literal":
        return ArgBinding(param_name, "literal", rewrite_span=(arg.start, arg.end),
                          current_value=arg.value)
    if arg.kind == "var":
        record = env.get(arg.name)
        if record is None or record["poisoned"] or record["span"] is None:
            return ArgBinding(param_name, "opaque")
        return ArgBinding(param_name, "variable", def_stmt=record["def_stmt"],
                          rewrite_span=record["span"], current_value=record["value"])
    return ArgBinding(param_name, "opaque")


def _match_api(call: jssyntax.CallInfo, env: dict,
               by_method: dict[str, list[specdb.ApiSpec]]) -> Optional[specdb.ApiSpec]:
    dotted = ".".join(call.callee)
    method = call.callee[-1]
    candidates = by_method.get(method, [])
    for api in candidates:
        if api.name == dotted:
            return api
    if len(call.callee) < 2:
        return None
    protos = [api for api in candidates if api.name.endswith(".prototype." + method)]
    if not protos:
        return None
    recv = call.callee[0] if len(call.callee) == 2 else None
    record = env.get(recv) if recv else None
    recv_type = record["type"] if record and not record["poisoned"] else None
    if recv_type:
        for api in protos:
            if api.receiver_type == recv_type:
                return api
        return None
    return protos[0] if len(protos) == 1 else None


def find_api_calls(prog: TestProgram, db: Sequence[specdb.ApiSpec]) -> list[CallSite]:
    """Locate call sites whose callee matches a spec-database API."""
    model = jssyntax.scan_program(prog.source)
    if not model.ok:
        return []
    by_method = specdb.index_by_method(list(db))
    sites: list[CallSite] = []
    for call in jssyntax.find_calls(prog.source, model):
        if call.stmt_index < 0:
            continue
        env = _env_at(model, prog.source, call.stmt_index)
        api = _match_api(call, env, by_method)
        if api is None:
            continue
        max_args = len(api.parameters) + 2
        args = []
        spans = []
        for i, arg in enumerate(call.args[:max_args]):
            pname = api.parameters[i].name if i < len(api.parameters) else f"_extra{i}"
            args.append(_bind(env, arg, pname))
            spans.append((arg.start, arg.end))
        receiver_binding = None
        if len(call.callee) == 2 and api.name.endswith(".prototype." + call.callee[-1]):
            record = env.get(call.callee[0])
            if record and not record["poisoned"] and record["span"]:
                receiver_binding = ArgBinding("receiver", "variable",
                                              def_stmt=record["def_stmt"],
                                              rewrite_span=record["span"],
                                              current_value=record["value"])
            else:
                receiver_binding = ArgBinding("receiver", "opaque")
        sites.append(CallSite(api.name, (call.stmt_index, call.ordinal), args,
                              receiver_binding, call.lparen, call.rparen, spans))
    return sites


# ---------------------------------------------------------------------------
# Driver synthesis


def synthesize_driver(prog: TestProgram, bindings: Sequence[tuple],
                      origin: Optional[dict] = None,
                      api: Optional[str] = None,
                      edition: Optional[str] = None,
                      source_program_id: Optional[str] = None) -> TestCase:
    """Append driver code: set variables, invoke the entry function, print."""
    model = jssyntax.scan_program(prog.source)
    entry = model.entry_function()
    lines = ["", DRIVER_BANNER, _PRINT_SHIM.rstrip("\n")]
    literal_bindings: list[tuple] = []
    bound_names = set()
    for name, value in bindings:
        literal = to_js_literal(value)  # raises TypeError on unserializable input
        literal_bindings.append((name, literal))
        bound_names.add(name)
        lines.append(f"var {name} = {literal};")
    if entry is not None and entry.func_name:
        params = list(entry.params)
        call_args = [p if p in bound_names else "undefined" for p in params]
        while call_args and call_args[-1] == "undefined" and params[len(call_args) - 1] not in bound_names:
            call_args.pop()
        invocation = f"{entry.func_name}({', '.join(call_args)})"
        lines.append("try { __cfprint(__cffmt(" + invocation + ")); } "
                     "catch (e) { __cfprint(\"EXC \" + ((e && e.name) ? e.name : String(e))); }")
    else:
        lines.append("__cfprint(__cffmt(undefined));")
    driver = "\n".join(lines) + "\n"
    if not prog.source.endswith("\n"):
        driver = "\n" + driver
    return TestCase(program=prog, bindings=tuple(literal_bindings), driver=driver,
                    mutation_origin=origin or {"kind": "as_generated"},
                    api=api, edition=edition, source_program_id=source_program_id)


# ---------------------------------------------------------------------------
# Mutation


def _rewrite(source: str, edits: Sequence[tuple]) -> str:
    """Apply (start, end, text) edits; later offsets first so spans stay valid."""
    out = source
    for start, end, text in sorted(edits, key=lambda e: e[0], reverse=True):
        out = jssyntax.splice(out, start, end, text)
    return out


def _mutant(prog: TestProgram, new_source: str) -> TestProgram:
    validity = VALID if prog.syntactically_valid == VALID else UNCHECKED
    return TestProgram(source=new_source, origin=prog.origin,
                       seed_header=prog.seed_header, syntactically_valid=validity)


def mutate_test_data(prog: TestProgram, site: CallSite, spec: specdb.ApiSpec,
                     cfg: MutationConfig, rng: random.Random) -> list[TestCase]:
    """Emit the mutation set for one call site (Algorithm 1's mutate step)."""
    if site.api_name != spec.name:
        raise ValueError(f"call site {site.api_name} does not match spec {spec.name}")
    cases: list[TestCase] = []
    notes: list[str] = []

    def add(case: TestCase):
        case.notes.extend(notes)
        cases.append(case)

    # the untouched program is kept as its own case
    add(synthesize_driver(prog, [], origin={"kind": "as_generated"},
                          api=spec.name, edition=cfg.edition,
                          source_program_id=prog.id))

    bound_params = [b for b in site.args if b.param_name in
                    {p.name for p in spec.parameters}]
    for binding in bound_params:
        if not binding.mutable:
            notes.append(f"param {binding.param_name} skipped: opaque definition")
            log.info("site %s: cannot rewrite %s (opaque definition)",
                     spec.name, binding.param_name)

    # boundary-value cases, one parameter at a time
    for binding in bound_params:
        if not binding.mutable:
            continue
        values = specdb.boundary_values(spec, binding.param_name)
        for value in values[:cfg.max_boundary_cases_per_param]:
            literal = to_js_literal(value)
            start, end = binding.rewrite_span
            new_source = _rewrite(prog.source, [(start, end, " " + literal
                                                 if prog.source[start - 1] == "=" else literal)])
            origin = {"kind": "boundary", "param": binding.param_name, "value": literal}
            add(synthesize_driver(_mutant(prog, new_source), [], origin=origin,
                                  api=spec.name, edition=cfg.edition,
                          source_program_id=prog.id))

    # random-value cases across all mutable parameters at once
    mutable = [b for b in bound_params if b.mutable]
    param_types = {p.name: sorted(p.declared_types) for p in spec.parameters}
    for _ in range(cfg.random_cases_per_site):
        edits = []
        assigned = {}
        taken_spans = set()
        for binding in mutable:
            if binding.rewrite_span in taken_spans:
                continue
            taken_spans.add(binding.rewrite_span)
            types = param_types.get(binding.param_name) or ["Number", "String"]
            value = random_value(rng.choice(types), rng)
            literal = to_js_literal(value)
            assigned[binding.param_name] = literal
            start, end = binding.rewrite_span
            edits.append((start, end, " " + literal
                          if prog.source[start - 1] == "=" else literal))
        if not edits:
            break
        new_source = _rewrite(prog.source, edits)
        origin = {"kind": "random", "values": assigned}
        add(synthesize_driver(_mutant(prog, new_source), [], origin=origin,
                              api=spec.name, edition=cfg.edition,
                          source_program_id=prog.id))

    # arity probes: drop optional trailing arguments, then add one extra
    spans = site.arg_spans
    n_args = min(len(spans), len(spec.parameters))
    k = n_args
    while k > 0 and spec.parameters[k - 1].optional:
        k -= 1
        if k == 0:
            start = site.lparen + 1
        else:
            start = spans[k - 1][1]
        new_source = _rewrite(prog.source, [(start, spans[-1][1], "")])
        origin = {"kind": "arity_drop", "param": spec.parameters[k].name}
        add(synthesize_driver(_mutant(prog, new_source), [], origin=origin,
                              api=spec.name, edition=cfg.edition,
                          source_program_id=prog.id))
    insert_at = site.rparen - 1
    extra = ", 0" if spans else "0"
    new_source = _rewrite(prog.source, [(insert_at, insert_at, extra)])
    add(synthesize_driver(_mutant(prog, new_source), [], origin={"kind": "arity_extra"},
                          api=spec.name, edition=cfg.edition,
                          source_program_id=prog.id))

    # identical rewrites (boundary value equal to the original literal) collapse
    unique: dict[str, TestCase] = {}
    for case in cases:
        unique.setdefault(case.id, case)
    return list(unique.values())


def mutate_program(prog: TestProgram, db: Sequence[specdb.ApiSpec],
                   cfg: MutationConfig, rng: random.Random) -> list[TestCase]:
    """All mutation cases for all recognized call sites of one program."""
    by_name = {api.name: api for api in db}
    out: list[TestCase] = []
    sites = find_api_calls(prog, db)
    if not sites:
        return out
    for site in sites:
        out.extend(mutate_test_data(prog, site, by_name[site.api_name], cfg, rng))
    unique: dict[str, TestCase] = {}
    for case in out:
        unique.setdefault(case.id, case)
    return list(unique.values())


# ---------------------------------------------------------------------------
# Storage


def save_cases(cases: Sequence[TestCase], outdir: str) -> list[str]:
    """Write <id>.js plus <id>.meta.json for each case; returns ids."""
    os.makedirs(outdir, exist_ok=True)
    ids = []
    for case in cases:
        cid = case.id
        js_path = os.path.join(outdir, cid + ".js")
        if not os.path.exists(js_path):
            with open(js_path, "w", encoding="utf-8") as fh:
                fh.write(case.final_source)
            with open(os.path.join(outdir, cid + ".meta.json"), "w",
                      encoding="utf-8") as fh:
                fh.write(canonical_json(case.meta()))
        ids.append(cid)
    return ids


def load_case(path: str) -> tuple[str, dict]:
    """Read a stored case (.js) and its sidecar meta; meta may be missing."""
    with open(path, "r", encoding="utf-8") as fh:
        source = fh.read()
    meta_path = path[:-3] + ".meta.json" if path.endswith(".js") else path + ".meta.json"
    meta: dict = {}
    if os.path.exists(meta_path):
        import json
        with open(meta_path, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
    return source, meta


def load_cases(srcdir: str) -> list[tuple[str, str, dict]]:
    """All stored cases in a directory as (case id, source, meta)."""
    out = []
    for name in sorted(os.listdir(srcdir)):
        if not name.endswith(".js"):
            continue
        source, meta = load_case(os.path.join(srcdir, name))
        out.append((name[:-3], source, meta))
    return out
