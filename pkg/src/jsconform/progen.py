"""Test-program production: built-in grammar generator and external generators.

Programs come from two sources behind one contract: a weighted statement
grammar good enough for desk-scale pipelines, and arbitrary external
generator processes speaking a line-oriented wire protocol:

    harness ->  GEN <max_words> <top_k> <base64(seed_header)>\\n
    generator-> PROG <byte_count>\\n<byte_count bytes of UTF-8 source>
             |  ERR <message>\\n

Both paths enforce the same stop rules (balanced brackets, an explicit end
token, or the word cap) and feed the same syntax filter, which keeps every
valid program and a configured fraction of the invalid ones.
"""

from __future__ import annotations

import base64
import dataclasses
import logging
import os
import random
import select
import subprocess
import threading
import time
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable, Optional, Sequence, Union

from . import jssyntax
from .jsvalues import to_js_literal
from .utils import content_id

log = logging.getLogger(__name__)

END_TOKEN = "<EOF>"

VALID = "valid"
INVALID = "invalid"
UNCHECKED = "unchecked"


class GeneratorError(RuntimeError):
    """External generator failed: bad frame, crash, or exceeded its budget."""


def load_default_headers() -> list[str]:
    text = resources.files("jsconform.data").joinpath("headers.txt").read_text("utf-8")
    return [line for line in text.splitlines() if line.strip()]


@dataclass(frozen=True)
class TestProgram:
    source: str
    origin: str  # "builtin" | "external:<cmd>"
    seed_header: str
    syntactically_valid: str = UNCHECKED

    @property
    def id(self) -> str:
        return content_id(self.source)

    @property
    def entry_name(self) -> Optional[str]:
        model = jssyntax.scan_program(self.source)
        entry = model.entry_function()
        return entry.func_name if entry else None


@dataclass(frozen=True)
class ApiPoolEntry:
    """One callable API the generator may exercise."""

    name: str  # qualified, e.g. "String.prototype.substr" or "parseInt"
    receiver_type: str  # "String" | "Number" | "Array" | "Math" | "global" | ...
    param_count: int


# fallback pool when no spec database is wired in
DEFAULT_API_POOL = (
    ApiPoolEntry("String.prototype.substr", "String", 2),
    ApiPoolEntry("String.prototype.charAt", "String", 1),
    ApiPoolEntry("String.prototype.indexOf", "String", 2),
    ApiPoolEntry("String.prototype.slice", "String", 2),
    ApiPoolEntry("String.prototype.concat", "String", 1),
    ApiPoolEntry("Number.prototype.toFixed", "Number", 1),
    ApiPoolEntry("Number.prototype.toString", "Number", 1),
    ApiPoolEntry("Array.prototype.join", "Array", 1),
    ApiPoolEntry("Array.prototype.indexOf", "Array", 1),
    ApiPoolEntry("Math.abs", "Math", 1),
    ApiPoolEntry("Math.max", "Math", 2),
    ApiPoolEntry("parseInt", "global", 2),
)


def api_pool_from_db(db) -> list[ApiPoolEntry]:
    """Build the generator's API pool from a parsed spec database."""
    pool = []
    for api in db:
        if api.prose_only:
            continue
        pool.append(ApiPoolEntry(api.name, api.receiver_type, len(api.parameters)))
    return pool or list(DEFAULT_API_POOL)


@dataclass
class GenConfig:
    top_k: int = 10
    max_words: int = 5000
    keep_invalid_fraction: float = 0.2
    seed_header_corpus: list[str] = field(default_factory=load_default_headers)
    rng_seed: int = 0
    statement_range: tuple = (1, 8)
    api_pool: Sequence[ApiPoolEntry] = DEFAULT_API_POOL

    def __post_init__(self):
        if self.top_k <= 0:
            raise ValueError("top_k must be positive")
        if self.max_words <= 0:
            raise ValueError("max_words must be positive")
        if not 0.0 <= self.keep_invalid_fraction <= 1.0:
            raise ValueError("keep_invalid_fraction must be in [0, 1]")


def pick_seed_header(corpus: Sequence[str], rng: random.Random) -> str:
    """Uniform, seed-reproducible choice of a generation header."""
    if not corpus:
        raise ValueError("seed header corpus is empty")
    return corpus[rng.randrange(len(corpus))]


def worker_rng(cfg: GenConfig, worker_index: int) -> random.Random:
    """Independent rng stream for one generation worker."""
    from .utils import child_seed
    return random.Random(child_seed(cfg.rng_seed, "worker", worker_index))


_ENTRY_NAME_PATTERNS = ("var ", "function ")


def _entry_name_of_header(header: str) -> str:
    head = header.strip()
    if head.startswith("var "):
        return head.split()[1].rstrip("=")
    if head.startswith("function"):
        rest = head[len("function"):].strip()
        return rest.split("(")[0].strip() or "anonymous"
    return "anonymous"


class _ProgramBuilder:
    """Weighted statement grammar walked under one rng stream."""

    def __init__(self, cfg: GenConfig, rng: random.Random):
        self.cfg = cfg
        self.rng = rng
        self.counter = 0
        self.vars_by_type: dict[str, list[str]] = {}
        self.lines: list[str] = []

    def fresh(self, js_type: str) -> str:
        name = f"v{self.counter}"
        self.counter += 1
        self.vars_by_type.setdefault(js_type, []).append(name)
        return name

    def literal(self, js_type: str) -> str:
        rng = self.rng
        if js_type == "Number":
            if rng.random() < 0.3:
                return str(round(rng.uniform(-100, 100), 2))
            return str(rng.randint(-20, 120))
        if js_type == "String":
            length = rng.randint(0, 12)
            alphabet = "abcdefghijklmnopqrstuvwxyz 0123456789"
            return to_js_literal("".join(rng.choice(alphabet) for _ in range(length)))
        if js_type == "Boolean":
            return "true" if rng.random() < 0.5 else "false"
        if js_type == "Array":
            n = rng.randint(0, 3)
            return "[" + ", ".join(str(rng.randint(0, 9)) for _ in range(n)) + "]"
        if js_type == "Object":
            n = rng.randint(0, 2)
            return "{" + ", ".join(f"k{i}: {rng.randint(0, 9)}" for i in range(n)) + "}"
        if js_type == "Null":
            return "null"
        if js_type == "Undefined":
            return "undefined"
        return "function () {}"

    def ensure_var(self, js_type: str) -> str:
        have = self.vars_by_type.get(js_type)
        if have and self.rng.random() < 0.7:
            return self.rng.choice(have)
        name = self.fresh(js_type)
        self.lines.append(f"  var {name} = {self.literal(js_type)};")
        return name

    def stmt_decl(self):
        js_type = self.rng.choice(
            ("Number", "Number", "String", "String", "Boolean", "Array",
             "Object", "Null", "Undefined", "Function"))
        name = self.fresh(js_type)
        self.lines.append(f"  var {name} = {self.literal(js_type)};")

    def stmt_arith(self):
        a = self.ensure_var("Number")
        b = self.ensure_var("Number")
        op = self.rng.choice(("+", "-", "*", "%"))
        name = self.fresh("Number")
        self.lines.append(f"  var {name} = {a} {op} {b};")

    def stmt_concat(self):
        a = self.ensure_var("String")
        b = self.ensure_var(self.rng.choice(("String", "Number")))
        name = self.fresh("String")
        self.lines.append(f"  var {name} = {a} + {b};")

    def stmt_api_call(self):
        api = self.rng.choice(list(self.cfg.api_pool))
        arg_names = []
        for _ in range(min(api.param_count, 3)):
            arg_type = self.rng.choice(("Number", "Number", "String"))
            arg_names.append(self.ensure_var(arg_type))
        result = self.fresh("Unknown")
        args = ", ".join(arg_names)
        if api.receiver_type in ("Math", "JSON", "global") or "." not in api.name:
            self.lines.append(f"  var {result} = {api.name}({args});")
        elif ".prototype." in api.name:
            recv = self.ensure_var(api.receiver_type)
            method = api.name.rsplit(".", 1)[-1]
            self.lines.append(f"  var {result} = {recv}.{method}({args});")
        else:
            self.lines.append(f"  var {result} = {api.name}({args});")

    def stmt_if(self):
        n = self.ensure_var("Number")
        limit = self.rng.randint(0, 50)
        self.lines.append(f"  if ({n} > {limit}) {{ {n} = {n} - 1; }}")

    def stmt_for(self):
        n = self.ensure_var("Number")
        i = self.fresh("Number")
        bound = self.rng.randint(2, 5)
        self.lines.append(
            f"  for (var {i} = 0; {i} < {bound}; {i} = {i} + 1) {{ {n} = {n} + {i}; }}")

    def stmt_assign(self):
        n = self.ensure_var("Number")
        self.lines.append(f"  {n} = {n} * {self.rng.randint(1, 9)};")

    _WEIGHTED = (
        (stmt_decl, 3), (stmt_arith, 2), (stmt_concat, 1), (stmt_api_call, 3),
        (stmt_if, 1), (stmt_for, 1), (stmt_assign, 1),
    )

    def emit_statement(self):
        total = sum(w for _, w in self._WEIGHTED)
        pick = self.rng.randrange(total)
        acc = 0
        for fn, w in self._WEIGHTED:
            acc += w
            if pick < acc:
                fn(self)
                return


def generate_builtin(cfg: GenConfig, rng: random.Random) -> TestProgram:
    """Generate one program from the built-in grammar; total and deterministic."""
    header = pick_seed_header(cfg.seed_header_corpus, rng)
    closer = "};" if header.lstrip().startswith("var ") else "}"
    builder = _ProgramBuilder(cfg, rng)
    target = rng.randint(*cfg.statement_range)
    emitted = 0
    return_line = None
    while emitted < target:
        builder.emit_statement()
        emitted += 1
        current = jssyntax.words("\n".join([header] + builder.lines + [closer]))
        if current >= cfg.max_words - 8:
            break
    if builder.counter and rng.random() < 0.8:
        candidates = sorted(v for vs in builder.vars_by_type.values() for v in vs)
        if candidates:
            return_line = f"  return {rng.choice(candidates)};"
    lines = [header] + builder.lines
    if return_line and jssyntax.words("\n".join(lines + [return_line, closer])) <= cfg.max_words:
        lines.append(return_line)
    lines.append(closer)
    source = "\n".join(lines) + "\n"
    if jssyntax.words(source) > cfg.max_words:
        # degenerate caps: fall back to the smallest closed form
        source = "\n".join([header, closer]) + "\n"
    return TestProgram(source=source, origin="builtin", seed_header=header)


def _enforce_stop_rules(source: str, cfg: GenConfig) -> tuple[str, str]:
    """Harness-side safety cap for external output; returns (source, validity)."""
    if END_TOKEN in source:
        source = source.split(END_TOKEN, 1)[0]
    if jssyntax.words(source) > cfg.max_words:
        source = " ".join(source.split()[:cfg.max_words])
        return source, UNCHECKED
    return source, UNCHECKED


class ExternalGenerator:
    """Client for one external generator process speaking the wire protocol."""

    def __init__(self, cmd: Sequence[str], request_timeout: float = 30.0):
        self.cmd = list(cmd)
        self.request_timeout = request_timeout
        self.proc: Optional[subprocess.Popen] = None
        self._buffer = b""
        self._stderr_chunks: list[bytes] = []
        self._stderr_thread: Optional[threading.Thread] = None

    def __enter__(self):
        self.start()
        return self

    def __exit__(self, *exc):
        self.close()

    def start(self):
        try:
            self.proc = subprocess.Popen(
                self.cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                stderr=subprocess.PIPE)
        except OSError as exc:
            raise GeneratorError(f"cannot start generator {self.cmd!r}: {exc}") from exc
        self._stderr_thread = threading.Thread(target=self._drain_stderr, daemon=True)
        self._stderr_thread.start()

    def close(self):
        if self.proc and self.proc.poll() is None:
            self.proc.terminate()
            try:
                self.proc.wait(timeout=2)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()

    def _drain_stderr(self):
        assert self.proc is not None and self.proc.stderr is not None
        while True:
            chunk = self.proc.stderr.read(4096)
            if not chunk:
                return
            self._stderr_chunks.append(chunk)
            del self._stderr_chunks[:-64]

    def _stderr_tail(self) -> str:
        return b"".join(self._stderr_chunks[-8:]).decode("utf-8", "replace").strip()

    def _read_raw(self, deadline: float) -> None:
        assert self.proc is not None and self.proc.stdout is not None
        fd = self.proc.stdout.fileno()
        budget = deadline - time.monotonic()
        if budget <= 0:
            raise GeneratorError(f"generator timed out; stderr: {self._stderr_tail()}")
        ready, _, _ = select.select([fd], [], [], budget)
        if not ready:
            raise GeneratorError(f"generator timed out; stderr: {self._stderr_tail()}")
        chunk = os.read(fd, 65536)
        if not chunk:
            code = self.proc.poll()
            raise GeneratorError(
                f"generator closed stream (exit={code}); stderr: {self._stderr_tail()}")
        self._buffer += chunk

    def _read_line(self, deadline: float) -> str:
        while b"\n" not in self._buffer:
            self._read_raw(deadline)
        line, self._buffer = self._buffer.split(b"\n", 1)
        return line.decode("utf-8", "replace").rstrip("\r")

    def _read_exact(self, n: int, deadline: float) -> bytes:
        while len(self._buffer) < n:
            self._read_raw(deadline)
        payload, self._buffer = self._buffer[:n], self._buffer[n:]
        return payload

    def generate(self, header: str, cfg: GenConfig) -> TestProgram:
        """Issue one GEN request and return the produced program."""
        if self.proc is None:
            self.start()
        assert self.proc is not None and self.proc.stdin is not None
        if self.proc.poll() is not None:
            raise GeneratorError(
                f"generator exited with {self.proc.returncode}; "
                f"stderr: {self._stderr_tail()}")
        b64 = base64.b64encode(header.encode("utf-8")).decode("ascii")
        request = f"GEN {cfg.max_words} {cfg.top_k} {b64}\n"
        try:
            self.proc.stdin.write(request.encode("utf-8"))
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise GeneratorError(
                f"generator pipe closed: {exc}; stderr: {self._stderr_tail()}") from exc
        deadline = time.monotonic() + self.request_timeout
        frame = self._read_line(deadline)
        if frame.startswith("ERR "):
            raise GeneratorError(f"generator error: {frame[4:]}")
        if not frame.startswith("PROG "):
            raise GeneratorError(f"malformed frame: {frame[:80]!r}")
        try:
            count = int(frame.split()[1])
        except (IndexError, ValueError) as exc:
            raise GeneratorError(f"malformed frame: {frame[:80]!r}") from exc
        payload = self._read_exact(count, deadline)
        source = payload.decode("utf-8", "replace")
        source, validity = _enforce_stop_rules(source, cfg)
        origin = "external:" + " ".join(self.cmd)
        return TestProgram(source=source, origin=origin, seed_header=header,
                           syntactically_valid=validity)


def generate_external(cmd: Sequence[str], header: str, cfg: GenConfig,
                      request_timeout: float = 30.0) -> TestProgram:
    """One-shot convenience wrapper around ExternalGenerator."""
    with ExternalGenerator(cmd, request_timeout) as gen:
        return gen.generate(header, cfg)


Checker = Union[None, Callable[[str], Optional[bool]], Sequence[str]]


@dataclass
class FilterResult:
    kept_valid: list[TestProgram]
    kept_invalid: list[TestProgram]  # includes unchecked programs kept on checker crash
    dropped: list[TestProgram]

    def counts(self) -> dict:
        return {"kept_valid": len(self.kept_valid),
                "kept_invalid": len(self.kept_invalid),
                "dropped": len(self.dropped)}


def _external_check(argv: Sequence[str], program: TestProgram,
                    workdir: str) -> Optional[bool]:
    path = os.path.join(workdir, program.id + ".js")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(program.source)
    cmd = [a.replace("{FILE}", path) for a in argv]
    if "{FILE}" not in " ".join(argv):
        cmd.append(path)
    try:
        proc = subprocess.run(cmd, capture_output=True, timeout=30)
        return proc.returncode == 0
    except (subprocess.TimeoutExpired, OSError):
        return None
    finally:
        try:
            os.unlink(path)
        except OSError:
            pass


def syntax_filter(batch: Sequence[TestProgram], checker: Checker,
                  cfg: GenConfig, rng: random.Random,
                  workdir: Optional[str] = None) -> FilterResult:
    """Partition a batch by syntax: keep valid, keep a fraction of invalid."""
    import tempfile

    result = FilterResult([], [], [])
    own_dir = None
    if isinstance(checker, (list, tuple)) and workdir is None:
        own_dir = tempfile.mkdtemp(prefix="jsconform-check-")
        workdir = own_dir
    try:
        for prog in batch:
            if checker is None:
                verdict: Optional[bool] = jssyntax.check_syntax(prog.source)[0]
            elif callable(checker):
                verdict = checker(prog.source)
            else:
                verdict = _external_check(checker, prog, workdir)
            if verdict is True:
                result.kept_valid.append(dataclasses.replace(
                    prog, syntactically_valid=VALID))
            elif verdict is False:
                tagged = dataclasses.replace(prog, syntactically_valid=INVALID)
                if rng.random() < cfg.keep_invalid_fraction:
                    result.kept_invalid.append(tagged)
                else:
                    result.dropped.append(tagged)
            else:
                log.warning("syntax checker crashed on %s; keeping unchecked", prog.id)
                result.kept_invalid.append(dataclasses.replace(
                    prog, syntactically_valid=UNCHECKED))
    finally:
        if own_dir:
            import shutil
            shutil.rmtree(own_dir, ignore_errors=True)
    return result


def save_programs(programs: Sequence[TestProgram], outdir: str) -> list[str]:
    """Write one <content-hash>.js per program; returns the ids written."""
    os.makedirs(outdir, exist_ok=True)
    ids = []
    for prog in programs:
        path = os.path.join(outdir, prog.id + ".js")
        if not os.path.exists(path):
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(prog.source)
        ids.append(prog.id)
    return ids


def load_programs(srcdir: str) -> list[TestProgram]:
    """Load programs from a directory of .js files (origin is lost, ids hold)."""
    out = []
    for name in sorted(os.listdir(srcdir)):
        if not name.endswith(".js") or name.endswith(".min.js"):
            continue
        with open(os.path.join(srcdir, name), "r", encoding="utf-8") as fh:
            source = fh.read()
        out.append(TestProgram(source=source, origin="loaded", seed_header=""))
    return out
