"""Lightweight JavaScript lexing and statement-structure scanning.

This is not a full parser. It provides exactly what the pipeline needs:

* a tokenizer that understands strings, templates, comments and regex
  literals well enough to find real brackets and real statement boundaries;
* a syntax checker (balanced delimiters plus a small statement grammar)
  used to filter generated programs;
* a statement/structure scanner with byte spans, used to locate API call
  sites, rewrite variable definitions, and enumerate removal candidates
  during test-case reduction.

Anything it cannot model degrades to an opaque statement span; it must
never crash on engine-bound input.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

from .jsvalues import NULL, UNDEFINED

KEYWORDS = {
    "break", "case", "catch", "class", "const", "continue", "debugger",
    "default", "delete", "do", "else", "export", "extends", "finally",
    "for", "function", "if", "import", "in", "instanceof", "let", "new",
    "of", "return", "static", "super", "switch", "this", "throw", "try",
    "typeof", "var", "void", "while", "with", "yield",
}

# Tokens after which a '/' starts a regex literal rather than division.
_REGEX_PRECEDERS = set("([{,;:=!&|?+-*%^~<>") | {
    "return", "typeof", "case", "in", "of", "instanceof", "new", "delete",
    "void", "do", "else", "throw", "yield",
}

_PUNCT3 = ("===", "!==", "**=", "...", ">>>", "<<=", ">>=", "&&=", "||=", "??=")
_PUNCT2 = ("==", "!=", "<=", ">=", "&&", "||", "??", "=>", "++", "--", "+=",
           "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<", ">>", "**", "?.")


class JsSyntaxError(ValueError):
    """Lexing-level defect (unterminated string/comment, bracket mismatch)."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


@dataclass
class Token:
    kind: str  # ident | keyword | number | string | template | regex | punct
    text: str
    start: int
    end: int
    line: int


def _scan_string(src: str, i: int, quote: str) -> int:
    j = i + 1
    while j < len(src):
        c = src[j]
        if c == "\\":
            j += 2
            continue
        if c == quote:
            return j + 1
        if c == "\n" and quote != "`":
            raise JsSyntaxError("unterminated string literal", i)
        j += 1
    raise JsSyntaxError("unterminated string literal", i)


def _scan_template(src: str, i: int) -> int:
    j = i + 1
    depth = 0
    while j < len(src):
        c = src[j]
        if c == "\\":
            j += 2
            continue
        if src.startswith("${", j):
            depth += 1
            j += 2
            continue
        if c == "}" and depth > 0:
            depth -= 1
            j += 1
            continue
        if c == "`" and depth == 0:
            return j + 1
        j += 1
    raise JsSyntaxError("unterminated template literal", i)


def _scan_regex(src: str, i: int) -> int:
    j = i + 1
    in_class = False
    while j < len(src):
        c = src[j]
        if c == "\\":
            j += 2
            continue
        if c == "\n":
            raise JsSyntaxError("unterminated regex literal", i)
        if c == "[":
            in_class = True
        elif c == "]":
            in_class = False
        elif c == "/" and not in_class:
            j += 1
            while j < len(src) and (src[j].isalpha()):
                j += 1
            return j
        j += 1
    raise JsSyntaxError("unterminated regex literal", i)


def tokenize(source: str) -> list[Token]:
    """Tokenize JS source; raises JsSyntaxError on lexing-level defects."""
    tokens: list[Token] = []
    i = 0
    line = 1
    prev: Optional[Token] = None
    n = len(source)
    while i < n:
        c = source[i]
        if c == "\n":
            line += 1
            i += 1
            continue
        if c.isspace():
            i += 1
            continue
        if source.startswith("//", i):
            j = source.find("\n", i)
            i = n if j == -1 else j
            continue
        if source.startswith("/*", i):
            j = source.find("*/", i)
            if j == -1:
                raise JsSyntaxError("unterminated block comment", i)
            line += source.count("\n", i, j)
            i = j + 2
            continue
        if c in "'\"":
            end = _scan_string(source, i, c)
            tok = Token("string", source[i:end], i, end, line)
        elif c == "`":
            end = _scan_template(source, i)
            line += source.count("\n", i, end)
            tok = Token("template", source[i:end], i, end, line)
        elif c == "/" and (prev is None or prev.text in _REGEX_PRECEDERS
                           or (prev.kind == "punct" and prev.text not in (")", "]", "}"))):
            end = _scan_regex(source, i)
            tok = Token("regex", source[i:end], i, end, line)
        elif c.isdigit() or (c == "." and i + 1 < n and source[i + 1].isdigit()):
            j = i + 1
            while j < n and (source[j].isalnum() or source[j] in "._"
                             or (source[j] in "+-" and source[j - 1] in "eE")):
                j += 1
            tok = Token("number", source[i:j], i, j, line)
        elif c.isalpha() or c in "_$":
            j = i + 1
            while j < n and (source[j].isalnum() or source[j] in "_$"):
                j += 1
            text = source[i:j]
            tok = Token("keyword" if text in KEYWORDS else "ident", text, i, j, line)
        else:
            for group in (_PUNCT3, _PUNCT2):
                match = next((p for p in group if source.startswith(p, i)), None)
                if match:
                    tok = Token("punct", match, i, i + len(match), line)
                    break
            else:
                tok = Token("punct", c, i, i + 1, line)
        tokens.append(tok)
        prev = tok
        i = tok.end
    return tokens


_OPEN = {"(": ")", "[": "]", "{": "}"}
_CLOSE = {v: k for k, v in _OPEN.items()}

_LITERAL_KINDS = {"number", "string", "template", "regex"}


def check_syntax(source: str) -> tuple[bool, str]:
    """Decide syntactic validity: balanced delimiters plus statement-shape rules.

    Returns (ok, reason). Deliberately permissive: it must accept everything
    the built-in generator emits and everything a conforming engine parses
    in the fixture corpus, while rejecting structurally broken programs.
    """
    try:
        tokens = tokenize(source)
    except JsSyntaxError as exc:
        return False, str(exc)

    stack: list[Token] = []
    for idx, tok in enumerate(tokens):
        if tok.kind == "punct" and tok.text in _OPEN:
            stack.append(tok)
        elif tok.kind == "punct" and tok.text in _CLOSE:
            if not stack or _OPEN[stack[-1].text] != tok.text:
                return False, f"unbalanced '{tok.text}' at offset {tok.start}"
            stack.pop()
        nxt = tokens[idx + 1] if idx + 1 < len(tokens) else None
        if tok.kind == "keyword" and tok.text in ("var", "let", "const"):
            if nxt is None or not (nxt.kind == "ident"
                                   or (nxt.kind == "punct" and nxt.text in ("[", "{"))):
                return False, f"declaration without binding at offset {tok.start}"
        if tok.kind == "keyword" and tok.text in ("if", "for", "while", "switch", "catch"):
            if nxt is None or nxt.text != "(":
                return False, f"'{tok.text}' without '(' at offset {tok.start}"
        if tok.kind == "keyword" and tok.text == "function":
            if nxt is None or not (nxt.kind == "ident" or nxt.text in ("(", "*")):
                return False, f"malformed function at offset {tok.start}"
        if (tok.kind in _LITERAL_KINDS and nxt is not None and nxt.line == tok.line
                and nxt.kind in (_LITERAL_KINDS | {"ident"})):
            return False, f"adjacent literals at offset {nxt.start}"
    if stack:
        top = stack[-1]
        return False, f"unclosed '{top.text}' at offset {top.start}"
    return True, "ok"


@dataclass
class Statement:
    """One scanned statement with byte span and optional nested structure."""

    kind: str  # var | assign | expr | if | loop | return | function | other
    start: int
    end: int
    var_name: Optional[str] = None
    init_start: Optional[int] = None
    init_end: Optional[int] = None
    is_function: bool = False
    func_name: Optional[str] = None
    params: list[str] = field(default_factory=list)
    body: list["Statement"] = field(default_factory=list)
    body_start: Optional[int] = None
    body_end: Optional[int] = None


@dataclass
class ArgInfo:
    """One argument expression at a call site."""

    start: int
    end: int
    kind: str  # literal | var | complex
    text: str
    value: Any = None
    name: Optional[str] = None


@dataclass
class CallInfo:
    """A located call expression with rewritable spans."""

    callee: tuple[str, ...]
    stmt_index: int
    ordinal: int
    args: list[ArgInfo]
    lparen: int
    rparen: int


@dataclass
class ProgramModel:
    """Scanned program: statement tree plus a flat pre-order index."""

    source: str
    statements: list[Statement]
    ok: bool
    flat: list[Statement] = field(default_factory=list)

    def entry_function(self) -> Optional[Statement]:
        """First function declaration (or var-bound function expression)."""
        for st in self.statements:
            if st.is_function:
                return st
        return None


def _match_paren(tokens: list[Token], i: int) -> int:
    """Index of the token closing the bracket opened at tokens[i]."""
    depth = 0
    open_text = tokens[i].text
    close_text = _OPEN[open_text]
    for j in range(i, len(tokens)):
        t = tokens[j]
        if t.kind != "punct":
            continue
        if t.text == open_text:
            depth += 1
        elif t.text == close_text:
            depth -= 1
            if depth == 0:
                return j
    return len(tokens) - 1


def _stmt_end(tokens: list[Token], i: int) -> int:
    """Scan to the token index terminating a simple statement (its ';')."""
    depth = 0
    j = i
    while j < len(tokens):
        t = tokens[j]
        if t.kind == "punct":
            if t.text in _OPEN:
                depth += 1
            elif t.text in _CLOSE:
                if depth == 0:
                    return j - 1  # ends before enclosing '}'
                depth -= 1
            elif t.text == ";" and depth == 0:
                return j
        j += 1
    return len(tokens) - 1


def _parse_function(tokens, i, source, declared_name=None, span_start=None):
    """Parse 'function [name] (params) { body }' starting at the keyword."""
    start = span_start if span_start is not None else tokens[i].start
    j = i + 1
    name = declared_name
    if j < len(tokens) and tokens[j].kind == "ident":
        name = tokens[j].text
        j += 1
    params: list[str] = []
    if j < len(tokens) and tokens[j].text == "(":
        close = _match_paren(tokens, j)
        params = [t.text for t in tokens[j + 1:close] if t.kind == "ident"]
        j = close + 1
    body: list[Statement] = []
    body_start = body_end = None
    if j < len(tokens) and tokens[j].text == "{":
        close = _match_paren(tokens, j)
        body_start = tokens[j].end
        body_end = tokens[close].start
        body, _ = _parse_statements(tokens, j + 1, close, source)
        j = close + 1
    # swallow a trailing ';' (function expressions in var statements)
    end = tokens[j].end if j < len(tokens) and tokens[j].text == ";" else tokens[j - 1].end
    if j < len(tokens) and tokens[j].text == ";":
        j += 1
    st = Statement("function", start, end, is_function=True, func_name=name,
                   params=params, body=body, body_start=body_start, body_end=body_end)
    return st, j


def _parse_block_or_single(tokens, i, source):
    """Parse '{ ... }' or a single statement; returns (body, body_span, next_i)."""
    if i < len(tokens) and tokens[i].text == "{":
        close = _match_paren(tokens, i)
        body, _ = _parse_statements(tokens, i + 1, close, source)
        return body, (tokens[i].end, tokens[close].start), close + 1
    body, j = _parse_statements(tokens, i, None, source, single=True)
    span = (tokens[i].start, tokens[j - 1].end) if body else (tokens[i].start, tokens[i].start)
    return body, span, j


def _parse_statements(tokens, i, stop, source, single=False):
    out: list[Statement] = []
    n = len(tokens)
    while i < n and (stop is None or i < stop):
        t = tokens[i]
        if t.kind == "punct" and t.text == ";":
            i += 1
            continue
        if t.kind == "punct" and t.text == "}":
            break
        if t.kind == "keyword" and t.text == "function":
            st, i = _parse_function(tokens, i, source)
            out.append(st)
        elif t.kind == "keyword" and t.text in ("var", "let", "const"):
            name = tokens[i + 1].text if i + 1 < n and tokens[i + 1].kind == "ident" else None
            # function expression initializer gets parsed as a function
            eq = i + 2
            if (name and eq < n and tokens[eq].text == "="
                    and eq + 1 < n and tokens[eq + 1].text == "function"):
                st, i = _parse_function(tokens, eq + 1, source,
                                        declared_name=name, span_start=t.start)
                out.append(st)
            else:
                end_idx = _stmt_end(tokens, i)
                init_start = init_end = None
                if name and eq < n and eq <= end_idx and tokens[eq].text == "=":
                    init_start = tokens[eq].end
                    last = tokens[end_idx]
                    init_end = last.start if last.text == ";" else last.end
                st = Statement("var", t.start, tokens[end_idx].end, var_name=name,
                               init_start=init_start, init_end=init_end)
                out.append(st)
                i = end_idx + 1
        elif t.kind == "keyword" and t.text == "if":
            close = _match_paren(tokens, i + 1) if i + 1 < n and tokens[i + 1].text == "(" else i + 1
            body, _, j = _parse_block_or_single(tokens, close + 1, source)
            else_body: list[Statement] = []
            if j < n and tokens[j].kind == "keyword" and tokens[j].text == "else":
                else_body, _, j = _parse_block_or_single(tokens, j + 1, source)
            st = Statement("if", t.start, tokens[j - 1].end, body=body + else_body)
            out.append(st)
            i = j
        elif t.kind == "keyword" and t.text in ("for", "while"):
            close = _match_paren(tokens, i + 1) if i + 1 < n and tokens[i + 1].text == "(" else i + 1
            body, _, j = _parse_block_or_single(tokens, close + 1, source)
            st = Statement("loop", t.start, tokens[j - 1].end, body=body)
            out.append(st)
            i = j
        elif t.kind == "keyword" and t.text == "return":
            end_idx = _stmt_end(tokens, i)
            out.append(Statement("return", t.start, tokens[end_idx].end))
            i = end_idx + 1
        elif t.kind == "keyword" and t.text in ("try",):
            # try { .. } catch (e) { .. } — treat as one opaque nested region
            end_idx = i
            j = i + 1
            body: list[Statement] = []
            while j < n and tokens[j].text == "{" or (j < n and tokens[j].kind == "keyword"
                                                      and tokens[j].text in ("catch", "finally")):
                if tokens[j].text == "{":
                    close = _match_paren(tokens, j)
                    sub, _ = _parse_statements(tokens, j + 1, close, source)
                    body.extend(sub)
                    end_idx = close
                    j = close + 1
                else:
                    j += 1
                    if j < n and tokens[j].text == "(":
                        j = _match_paren(tokens, j) + 1
            out.append(Statement("other", t.start, tokens[end_idx].end, body=body))
            i = max(j, end_idx + 1)
        else:
            end_idx = _stmt_end(tokens, i)
            kind = "expr"
            var_name = init_start = init_end = None
            if (t.kind == "ident" and i + 1 <= end_idx and i + 1 < n
                    and tokens[i + 1].kind == "punct" and tokens[i + 1].text == "="):
                kind = "assign"
                var_name = t.text
                init_start = tokens[i + 1].end
                last = tokens[end_idx]
                init_end = last.start if last.text == ";" else last.end
            out.append(Statement(kind, t.start, tokens[end_idx].end, var_name=var_name,
                                 init_start=init_start, init_end=init_end))
            i = end_idx + 1
        if single:
            break
    return out, i


def scan_program(source: str) -> ProgramModel:
    """Scan source into a statement tree; never raises on engine-bound input."""
    try:
        tokens = tokenize(source)
        statements, _ = _parse_statements(tokens, 0, None, source)
        model = ProgramModel(source, statements, True)
    except JsSyntaxError:
        return ProgramModel(source, [], False)
    flat: list[Statement] = []

    def walk(sts):
        for st in sts:
            flat.append(st)
            walk(st.body)

    walk(statements)
    model.flat = flat
    return model


def _literal_value(tok: Token):
    if tok.kind == "number":
        text = tok.text
        try:
            if text.lower().startswith("0x"):
                return int(text, 16)
            return int(text) if "." not in text and "e" not in text.lower() else float(text)
        except ValueError:
            return None
    if tok.kind == "string":
        body = tok.text[1:-1]
        return body.encode("utf-8").decode("unicode_escape") if "\\" in body else body
    if tok.text == "true":
        return True
    if tok.text == "false":
        return False
    if tok.text == "null":
        return NULL
    if tok.text == "undefined":
        return UNDEFINED
    return None


def _classify_arg(tokens: list[Token], source: str) -> ArgInfo:
    start = tokens[0].start
    end = tokens[-1].end
    text = source[start:end]
    if len(tokens) == 1:
        t = tokens[0]
        if t.kind in ("number", "string") or t.text in ("true", "false", "null", "undefined"):
            return ArgInfo(start, end, "literal", text, value=_literal_value(t))
        if t.kind == "ident":
            return ArgInfo(start, end, "var", text, name=t.text)
    if (len(tokens) == 2 and tokens[0].text == "-" and tokens[1].kind == "number"):
        val = _literal_value(tokens[1])
        return ArgInfo(start, end, "literal", text, value=-val if val is not None else None)
    return ArgInfo(start, end, "complex", text)


def find_calls(source: str, model: Optional[ProgramModel] = None) -> list[CallInfo]:
    """Locate call expressions `a.b.c(args)` / `f(args)` with argument spans."""
    model = model or scan_program(source)
    if not model.ok:
        return []
    try:
        tokens = tokenize(source)
    except JsSyntaxError:
        return []
    stmt_spans = [(st.start, st.end) for st in model.flat]

    def stmt_of(offset: int) -> int:
        best = -1
        best_width = None
        for idx, (s, e) in enumerate(stmt_spans):
            if s <= offset < e and (best_width is None or e - s <= best_width):
                best, best_width = idx, e - s
        return best

    calls: list[CallInfo] = []
    per_stmt_counts: dict[int, int] = {}
    i = 0
    n = len(tokens)
    while i < n:
        t = tokens[i]
        if t.kind != "ident":
            i += 1
            continue
        # collect dotted chain
        chain = [t.text]
        j = i + 1
        while j + 1 < n and tokens[j].text == "." and tokens[j + 1].kind in ("ident", "keyword"):
            chain.append(tokens[j + 1].text)
            j += 2
        if j < n and tokens[j].kind == "punct" and tokens[j].text == "(":
            close = _match_paren(tokens, j)
            args: list[ArgInfo] = []
            depth = 0
            current: list[Token] = []
            for k in range(j + 1, close):
                tk = tokens[k]
                if tk.kind == "punct" and tk.text in _OPEN:
                    depth += 1
                elif tk.kind == "punct" and tk.text in _CLOSE:
                    depth -= 1
                if tk.kind == "punct" and tk.text == "," and depth == 0:
                    if current:
                        args.append(_classify_arg(current, source))
                    current = []
                else:
                    current.append(tk)
            if current:
                args.append(_classify_arg(current, source))
            sidx = stmt_of(t.start)
            ordinal = per_stmt_counts.get(sidx, 0)
            per_stmt_counts[sidx] = ordinal + 1
            calls.append(CallInfo(tuple(chain), sidx, ordinal, args,
                                  tokens[j].start, tokens[close].end))
            i = j + 1
        else:
            i = j
    return calls


def classify_span(source: str, start: int, end: int) -> Optional[ArgInfo]:
    """Classify an arbitrary expression span like a call argument."""
    try:
        tokens = tokenize(source[start:end])
    except JsSyntaxError:
        return None
    if not tokens:
        return None
    info = _classify_arg(tokens, source[start:end])
    info.start += start
    info.end += start
    return info


def splice(source: str, start: int, end: int, replacement: str) -> str:
    """Replace source[start:end] with replacement."""
    return source[:start] + replacement + source[end:]


def words(source: str) -> int:
    """Whitespace-delimited word count (the generation cap unit)."""
    return len(source.split())
