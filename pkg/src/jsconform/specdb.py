"""Extraction of API rules from ECMAScript-specification HTML.

The extractor walks a spec document, detects function/class/object sections,
turns their numbered pseudo-code steps into structured records, and tags
boundary conditions (undefined checks, numeric ranges, type guards) that the
test-data generator later concretizes. The result is a queryable database
with a canonical JSON form.

The pattern table lives in ``data/patterns.json`` and is deliberately
extensible: pseudo-code constructs it does not know degrade to ``Unparsed``
steps with the raw text preserved, never to dropped lines.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from html.parser import HTMLParser
from importlib import resources
from typing import Any, Optional

from .jsvalues import ABSTRACT_TYPES, TYPE_REPRESENTATIVES, UNDEFINED

log = logging.getLogger(__name__)

STEP_KINDS = ("Let", "If", "Return", "Throw", "Call", "Unparsed")
PREDICATES = ("IsUndefined", "Equals", "LessThan", "GreaterThan", "InRange", "IsType")

RECEIVER = "receiver"

# declared_types fallback when no conversion operation gives a signal
_DEFAULT_TYPES = frozenset({"Number", "String"})


class SpecParseError(ValueError):
    """Document-level parse failure, carrying the byte offset of the defect."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset


class SchemaError(ValueError):
    """Canonical-JSON violation, naming the offending path."""


class UnknownParamError(LookupError):
    """Lookup of a parameter that does not exist on the ApiSpec."""


@dataclass(frozen=True)
class BoundaryCondition:
    target: str  # parameter name or "receiver"
    predicate: str
    value: Any  # None | scalar | (lo, hi) | type name
    origin_step: int


@dataclass
class ParamSpec:
    name: str
    declared_types: frozenset = _DEFAULT_TYPES
    optional: bool = False
    boundaries: list[BoundaryCondition] = field(default_factory=list)
    value_range: Optional[tuple] = None


@dataclass
class SpecStep:
    index: int
    kind: str
    var: Optional[str]
    func: Optional[str]
    raw_text: str
    boundary_tag: bool = False


@dataclass
class ApiSpec:
    name: str
    receiver_type: str
    parameters: list[ParamSpec]
    steps: list[SpecStep]
    source_section: str
    prose_only: bool = False

    def param(self, name: str) -> ParamSpec:
        for p in self.parameters:
            if p.name == name:
                return p
        raise UnknownParamError(f"{self.name} has no parameter {name!r}")

    @property
    def method_name(self) -> str:
        return self.name.rsplit(".", 1)[-1]


_BUNDLED_PATTERNS: Optional[dict] = None


def load_patterns(path: Optional[str] = None) -> dict:
    """Load the extraction-pattern table (bundled default or a user file)."""
    global _BUNDLED_PATTERNS
    if path:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    if _BUNDLED_PATTERNS is None:
        text = resources.files("jsconform.data").joinpath("patterns.json").read_text("utf-8")
        _BUNDLED_PATTERNS = json.loads(text)
    return _BUNDLED_PATTERNS


# ---------------------------------------------------------------------------
# HTML handling


class _Element:
    __slots__ = ("tag", "attrs", "children", "parent")

    def __init__(self, tag, attrs, parent):
        self.tag = tag
        self.attrs = dict(attrs)
        self.children: list = []  # _Element or str
        self.parent = parent

    def text(self) -> str:
        parts = []
        for child in self.children:
            parts.append(child.text() if isinstance(child, _Element) else child)
        return "".join(parts)

    def iter(self):
        yield self
        for child in self.children:
            if isinstance(child, _Element):
                yield from child.iter()


_VOID_TAGS = {"br", "hr", "img", "input", "meta", "link", "wbr", "col", "source"}


class _TreeBuilder(HTMLParser):
    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.root = _Element("#root", [], None)
        self.cursor = self.root

    def handle_starttag(self, tag, attrs):
        if tag in _VOID_TAGS:
            return
        # HTML allows an open <li> to be closed by the next one
        if tag == "li" and self.cursor.tag == "li":
            self.cursor = self.cursor.parent
        el = _Element(tag, attrs, self.cursor)
        self.cursor.children.append(el)
        self.cursor = el

    def handle_endtag(self, tag):
        node = self.cursor
        while node is not None and node.tag != tag:
            node = node.parent
        if node is not None and node.parent is not None:
            self.cursor = node.parent

    def handle_data(self, data):
        if data:
            self.cursor.children.append(data)


# Structural tags whose nesting must balance for the document to be usable.
_STRUCTURAL = ("emu-clause", "emu-alg", "ol", "section")


def _check_wellformed(doc: str) -> None:
    stack: list[tuple[str, int]] = []
    for m in re.finditer(r"<(/?)([a-zA-Z][a-zA-Z0-9-]*)", doc):
        closing, tag = m.group(1), m.group(2).lower()
        if tag not in _STRUCTURAL:
            continue
        if not closing:
            stack.append((tag, m.start()))
        else:
            if not stack or stack[-1][0] != tag:
                raise SpecParseError(f"mismatched </{tag}>", m.start())
            stack.pop()
    if stack:
        tag, offset = stack[-1]
        raise SpecParseError(f"unclosed <{tag}>", offset)


_HEADING_RE = re.compile(
    r"^\s*(?P<sec>(?:[A-Z]\.)?\d+(?:\.\d+)*)?\s*"
    r"(?P<name>[A-Za-z_$%][\w$%]*(?:\s*\.\s*[A-Za-z_$%][\w$%]*)*)\s*"
    r"(?:\((?P<params>[^)]*)\))?\s*$"
)

_HEAD_TAGS = {"h1", "h2", "h3", "h4", "h5", "h6"}


def _parse_heading(text: str):
    """Split a section heading into (section number, API name, param list)."""
    m = _HEADING_RE.match(" ".join(text.split()))
    if not m or "." not in text and m.group("params") is None and " " in m.group("name"):
        return None
    name = re.sub(r"\s*\.\s*", ".", m.group("name"))
    if " " in name:
        return None
    params: list[tuple[str, bool]] = []
    raw = m.group("params")
    if raw:
        depth = 0
        current = ""
        items: list[tuple[str, int]] = []
        for ch in raw:
            if ch == "[":
                depth += 1
            elif ch == "]":
                depth -= 1
            elif ch == ",":
                items.append((current, depth))
                current = ""
            else:
                current += ch
        items.append((current, depth))
        for text_item, depth_at_end in items:
            pname = text_item.strip().lstrip(". ").strip()
            if not pname:
                continue
            optional = depth_at_end > 0 or "[" in text_item
            params.append((pname, optional))
    return m.group("sec"), name, params


def _receiver_type(name: str) -> str:
    head = name.split(".", 1)[0].strip("%")
    return head if "." in name or name != head else "global"


# ---------------------------------------------------------------------------
# Step extraction


def extract_step(line: str, index: int = 1, patterns: Optional[dict] = None) -> SpecStep:
    """Turn one pseudo-code line into a SpecStep; unmatched lines become Unparsed."""
    patterns = patterns or load_patterns()
    text = " ".join(line.split())
    for entry in patterns["step_kinds"]:
        m = re.match(entry["regex"], text)
        if not m:
            continue
        groups = m.groupdict()
        return SpecStep(
            index=index,
            kind=entry["kind"],
            var=groups.get("var"),
            func=groups.get("func"),
            raw_text=line,
        )
    return SpecStep(index=index, kind="Unparsed", var=None, func=None, raw_text=line)


def _scan_boundaries(text: str, patterns: dict):
    """All boundary-pattern hits in one step's text, earliest-and-most-specific first."""
    hits = []
    used: list[tuple[int, int]] = []
    for entry in patterns["boundaries"]:
        for m in re.finditer(entry["regex"], text):
            span = m.span()
            if any(not (span[1] <= s or span[0] >= e) for s, e in used):
                continue
            used.append(span)
            groups = m.groupdict()
            predicate = entry["predicate"]
            if predicate == "InRange":
                value: Any = (_num(groups["lo"]), _num(groups["hi"]))
            elif predicate in ("LessThan", "GreaterThan"):
                value = _num(groups["value"])
            elif predicate == "IsType":
                value = entry.get("type") or groups.get("type")
            elif predicate == "Equals":
                value = _parse_scalar(groups["value"])
            else:
                value = None
            hits.append((groups["target"], predicate, value))
    return hits


def _num(text: str):
    return float(text) if "." in text else int(text)


def _parse_scalar(text: str):
    if text == "true":
        return True
    if text == "false":
        return False
    if text == "null":
        return None
    return _num(text)


def _update_aliases(aliases: dict, text: str, param_names: set, patterns: dict,
                    declared: dict) -> None:
    converters = patterns.get("converter_types", {})
    for entry in patterns.get("aliases", []):
        for m in re.finditer(entry["regex"], text):
            var, func, args = m.group("var"), m.group("func"), m.group("args")
            first = args.split(",")[0].strip()
            target = None
            if first == "this value":
                target = RECEIVER
            elif first in param_names:
                target = first
            elif first in aliases:
                target = aliases[first]
            if target is None:
                continue
            aliases[var] = target
            jstype = converters.get(func)
            if jstype and target != RECEIVER:
                declared.setdefault(target, set()).add(jstype)


def _build_api(section: str, name: str, raw_params, step_lines, patterns) -> ApiSpec:
    param_names = {p for p, _ in raw_params}
    aliases: dict[str, str] = {}
    declared: dict[str, set] = {}
    steps: list[SpecStep] = []
    boundaries: dict[str, list[BoundaryCondition]] = {p: [] for p in param_names}
    boundaries[RECEIVER] = []
    ranges: dict[str, tuple] = {}
    optional_from_steps: set[str] = set()

    for idx, line in enumerate(step_lines, start=1):
        text = " ".join(line.split())
        step = extract_step(line, index=idx, patterns=patterns)
        _update_aliases(aliases, text, param_names, patterns, declared)
        if step.kind in ("If", "Let"):
            for target, predicate, value in _scan_boundaries(text, patterns):
                resolved = target if target in param_names else aliases.get(target)
                if resolved is None or (resolved != RECEIVER and resolved not in param_names):
                    continue
                step.boundary_tag = True
                boundaries[resolved].append(
                    BoundaryCondition(resolved, predicate, value, idx))
                if predicate == "IsUndefined" and resolved != RECEIVER:
                    optional_from_steps.add(resolved)
                if predicate == "InRange" and resolved != RECEIVER:
                    ranges[resolved] = value
        steps.append(step)

    params = []
    for pname, bracket_optional in raw_params:
        types = declared.get(pname)
        params.append(ParamSpec(
            name=pname,
            declared_types=frozenset(types) if types else _DEFAULT_TYPES,
            optional=bracket_optional or pname in optional_from_steps,
            boundaries=boundaries.get(pname, []),
            value_range=ranges.get(pname),
        ))
    # receiver-targeted conditions have no parameter of their own; keep them
    # on the first parameter's list (the target field disambiguates)
    if boundaries[RECEIVER]:
        if params:
            params[0].boundaries.extend(boundaries[RECEIVER])
            params[0].boundaries.sort(key=lambda b: b.origin_step)
        else:
            log.debug("dropping receiver boundary on zero-parameter API %s", name)
    return ApiSpec(
        name=name,
        receiver_type=_receiver_type(name),
        parameters=params,
        steps=steps,
        source_section=section,
        prose_only=not steps,
    )


def _section_candidates(root: _Element):
    """Yield (container, heading element) pairs for API-looking sections."""
    clauses = [el for el in root.iter() if el.tag in ("emu-clause", "section")]
    if clauses:
        for clause in clauses:
            heading = next((c for c in clause.children
                            if isinstance(c, _Element) and c.tag in _HEAD_TAGS), None)
            if heading is not None:
                yield clause, heading
        return
    # flat documents: heading followed by siblings until the next heading
    for heading in (el for el in root.iter() if el.tag in _HEAD_TAGS):
        yield None, heading


def _step_lines_under(container: _Element) -> list[str]:
    lines = []
    for el in container.iter():
        if el is container:
            continue
        if el.tag in ("emu-clause", "section"):
            break  # nested clauses own their steps
        if el.tag == "li":
            own_text = "".join(
                c.text() if isinstance(c, _Element) and c.tag != "ol" else
                (c if isinstance(c, str) else "")
                for c in el.children
            ).strip()
            if own_text:
                lines.append(own_text)
    return lines


def _flat_step_lines(root: _Element, heading: _Element) -> list[str]:
    """Steps for flat documents: <li> items between this heading and the next."""
    parent = heading.parent
    if parent is None:
        return []
    seen = False
    lines: list[str] = []
    for child in parent.children:
        if child is heading:
            seen = True
            continue
        if not isinstance(child, _Element):
            continue
        if seen and child.tag in _HEAD_TAGS:
            break
        if seen:
            for el in child.iter():
                if el.tag == "li":
                    text = el.text().strip()
                    if text:
                        lines.append(text)
    return lines


def parse_spec_document(doc: str, patterns: Optional[dict] = None) -> list[ApiSpec]:
    """Parse spec HTML into ApiSpecs, one per detected API section."""
    patterns = patterns or load_patterns()
    _check_wellformed(doc)
    builder = _TreeBuilder()
    builder.feed(doc)
    builder.close()

    apis: list[ApiSpec] = []
    for fallback_idx, (container, heading) in enumerate(
            _section_candidates(builder.root), start=1):
        parsed = _parse_heading(heading.text())
        if parsed is None:
            continue
        sec, name, raw_params = parsed
        section = (container.attrs.get("id") if container is not None else None) \
            or sec or f"#{fallback_idx}"
        if container is not None:
            step_lines = _step_lines_under(container)
        else:
            step_lines = _flat_step_lines(builder.root, heading)
        apis.append(_build_api(section, name, raw_params, step_lines, patterns))
    if not apis:
        log.warning("no API sections detected in document")
    return apis


# ---------------------------------------------------------------------------
# Boundary concretization


def _mismatched_type(declared: frozenset) -> str:
    for candidate in ("String", "Number", "Boolean", "Object"):
        if candidate not in declared:
            return candidate
    return "Null"


def boundary_values(spec: ApiSpec, param: str) -> list:
    """Concrete probe values for one parameter, in deterministic order.

    Boundary-derived values come first (ranges expanded one past each bound),
    then one representative per declared type, then one mismatched-type value.
    """
    if param == RECEIVER:
        target_boundaries = [b for p in spec.parameters for b in p.boundaries
                             if b.target == RECEIVER]
        declared = frozenset({spec.receiver_type} if spec.receiver_type in ABSTRACT_TYPES
                             else {"Object"})
        optional = False
    else:
        pspec = spec.param(param)
        target_boundaries = pspec.boundaries
        declared = pspec.declared_types
        optional = pspec.optional

    values: list = []

    def push(v):
        key = (type(v).__name__, repr(v))
        if key not in seen:
            seen.add(key)
            values.append(v)

    seen: set = set()
    if optional:
        push(UNDEFINED)
    for b in target_boundaries:
        if b.predicate == "IsUndefined":
            push(UNDEFINED)
        elif b.predicate == "InRange":
            lo, hi = b.value
            for v in (lo - 1, lo, hi, hi + 1):
                push(v)
        elif b.predicate == "LessThan":
            push(b.value - 1)
            push(b.value)
        elif b.predicate == "GreaterThan":
            push(b.value)
            push(b.value + 1)
        elif b.predicate == "Equals":
            push(b.value)
        elif b.predicate == "IsType":
            if b.value in TYPE_REPRESENTATIVES:
                push(TYPE_REPRESENTATIVES[b.value])
    for abstract in ABSTRACT_TYPES:
        if abstract in declared:
            push(TYPE_REPRESENTATIVES[abstract])
    push(TYPE_REPRESENTATIVES[_mismatched_type(declared)])
    return values


def coverage_report(db: list[ApiSpec]) -> dict:
    """Share of detected sections whose pseudo-code was actually extracted."""
    total = len(db)
    extracted = sum(1 for api in db if api.steps and not api.prose_only)
    return {
        "total_sections": total,
        "extracted": extracted,
        "ratio": (extracted / total) if total else 0.0,
    }


# ---------------------------------------------------------------------------
# Canonical JSON serialization

_API_KEYS = {"name", "receiver", "section", "params", "steps", "prose_only"}
_PARAM_KEYS = {"name", "types", "optional", "boundaries", "range"}
_BOUNDARY_KEYS = {"target", "predicate", "value", "step"}
_STEP_KEYS = {"i", "kind", "var", "func", "raw", "boundary"}


def _boundary_payload(b: BoundaryCondition) -> dict:
    payload: dict[str, Any] = {"target": b.target, "predicate": b.predicate,
                               "step": b.origin_step}
    if b.predicate == "InRange":
        payload["value"] = [b.value[0], b.value[1]]
    elif b.value is not None or b.predicate == "Equals":
        payload["value"] = b.value
    return payload


def serialize(db: list[ApiSpec]) -> str:
    """Canonical JSON text: sorted keys, two-space indent, UTF-8, stable bytes."""
    apis = []
    for api in db:
        params = []
        for p in api.parameters:
            entry: dict[str, Any] = {
                "name": p.name,
                "types": sorted(p.declared_types),
                "optional": p.optional,
                "boundaries": [_boundary_payload(b) for b in p.boundaries],
            }
            if p.value_range is not None:
                entry["range"] = [p.value_range[0], p.value_range[1]]
            params.append(entry)
        steps = []
        for s in api.steps:
            row: dict[str, Any] = {"i": s.index, "kind": s.kind, "raw": s.raw_text,
                                   "boundary": s.boundary_tag}
            if s.var is not None:
                row["var"] = s.var
            if s.func is not None:
                row["func"] = s.func
            steps.append(row)
        apis.append({
            "name": api.name,
            "receiver": api.receiver_type,
            "section": api.source_section,
            "params": params,
            "steps": steps,
            "prose_only": api.prose_only,
        })
    return json.dumps({"apis": apis}, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _require_keys(obj: dict, allowed: set, required: set, path: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise SchemaError(f"unknown field(s) {sorted(unknown)} at {path}")
    missing = required - set(obj)
    if missing:
        raise SchemaError(f"missing field(s) {sorted(missing)} at {path}")


def deserialize(text: str) -> list[ApiSpec]:
    """Parse canonical JSON back into a database, enforcing the schema strictly."""
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise SchemaError("top-level value must be an object at $")
    _require_keys(payload, {"apis"}, {"apis"}, "$")
    db: list[ApiSpec] = []
    for ai, api in enumerate(payload["apis"]):
        path = f"apis[{ai}]"
        _require_keys(api, _API_KEYS, _API_KEYS - {"prose_only"}, path)
        steps = []
        tagged_steps = set()
        for si, s in enumerate(api["steps"]):
            spath = f"{path}.steps[{si}]"
            _require_keys(s, _STEP_KEYS, {"i", "kind", "raw", "boundary"}, spath)
            if s["kind"] not in STEP_KINDS:
                raise SchemaError(f"unknown step kind {s['kind']!r} at {spath}")
            steps.append(SpecStep(s["i"], s["kind"], s.get("var"), s.get("func"),
                                  s["raw"], s["boundary"]))
            if s["boundary"]:
                tagged_steps.add(s["i"])
        step_indices = {s.index for s in steps}
        params = []
        names_seen = set()
        for pi, p in enumerate(api["params"]):
            ppath = f"{path}.params[{pi}]"
            _require_keys(p, _PARAM_KEYS, _PARAM_KEYS - {"range"}, ppath)
            if p["name"] in names_seen:
                raise SchemaError(f"duplicate parameter {p['name']!r} at {ppath}")
            names_seen.add(p["name"])
            value_range = None
            if "range" in p:
                lo, hi = p["range"]
                if lo > hi:
                    raise SchemaError(f"range low > high at {ppath}.range")
                value_range = (lo, hi)
            boundaries = []
            for bi, b in enumerate(p["boundaries"]):
                bpath = f"{ppath}.boundaries[{bi}]"
                _require_keys(b, _BOUNDARY_KEYS, {"target", "predicate", "step"}, bpath)
                if b["predicate"] not in PREDICATES:
                    raise SchemaError(f"unknown predicate {b['predicate']!r} at {bpath}")
                if b["step"] not in step_indices:
                    raise SchemaError(f"origin step {b['step']} does not exist at {bpath}")
                if b["step"] not in tagged_steps:
                    raise SchemaError(f"origin step {b['step']} is not boundary-tagged "
                                      f"at {bpath}")
                value = b.get("value")
                if b["predicate"] == "InRange":
                    value = (value[0], value[1])
                boundaries.append(BoundaryCondition(b["target"], b["predicate"],
                                                    value, b["step"]))
                if b["target"] != RECEIVER and b["target"] != p["name"]:
                    raise SchemaError(f"boundary target {b['target']!r} does not match "
                                      f"parameter at {bpath}")
            params.append(ParamSpec(p["name"], frozenset(p["types"]), p["optional"],
                                    boundaries, value_range))
        db.append(ApiSpec(api["name"], api["receiver"], params, steps,
                          api["section"], api.get("prose_only", False)))
    return db


def save(db: list[ApiSpec], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize(db))


def load(path: str) -> list[ApiSpec]:
    with open(path, "r", encoding="utf-8") as fh:
        return deserialize(fh.read())


def index_by_method(db: list[ApiSpec]) -> dict[str, list[ApiSpec]]:
    """Map unqualified method name -> candidate ApiSpecs (for call-site lookup)."""
    out: dict[str, list[ApiSpec]] = {}
    for api in db:
        out.setdefault(api.method_name, []).append(api)
    for candidates in out.values():
        candidates.sort(key=lambda a: a.name)
    return out
