"""Abstract JavaScript values and their literal serialization.

Test data travels through the pipeline as Python values tagged with a JS
type; everything here must serialize to a literal a real engine will parse.
"""

from __future__ import annotations

import math
import json
import random
from typing import Any


class _Undefined:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "undefined"


class _Null:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "null"


class FunctionStub:
    """Placeholder for a function-typed argument; serializes as an empty function."""

    def __repr__(self):
        return "function(){}"

    def __eq__(self, other):
        return isinstance(other, FunctionStub)

    def __hash__(self):
        return hash(FunctionStub)


UNDEFINED = _Undefined()
NULL = _Null()

# Abstract JS types a parameter may declare, in canonical order.
ABSTRACT_TYPES = (
    "Undefined",
    "Null",
    "Boolean",
    "Number",
    "String",
    "Object",
    "Array",
    "Function",
)

# One canonical value per abstract type, used for type-representative probes.
TYPE_REPRESENTATIVES = {
    "Undefined": UNDEFINED,
    "Null": NULL,
    "Boolean": True,
    "Number": 1,
    "String": "a",
    "Object": {"a": 1},
    "Array": [1, 2],
    "Function": FunctionStub(),
}


def js_type_of(value: Any) -> str:
    """Return the abstract JS type name of a pipeline value."""
    if value is UNDEFINED or isinstance(value, _Undefined):
        return "Undefined"
    if value is NULL or isinstance(value, _Null):
        return "Null"
    if isinstance(value, bool):
        return "Boolean"
    if isinstance(value, (int, float)):
        return "Number"
    if isinstance(value, str):
        return "String"
    if isinstance(value, list):
        return "Array"
    if isinstance(value, dict):
        return "Object"
    if isinstance(value, FunctionStub):
        return "Function"
    raise TypeError(f"not an abstract JS value: {value!r}")


def _number_literal(value) -> str:
    if isinstance(value, int):
        return str(value)
    if math.isnan(value):
        return "NaN"
    if math.isinf(value):
        return "Infinity" if value > 0 else "-Infinity"
    if value == 0 and math.copysign(1.0, value) < 0:
        return "-0"
    if value == int(value) and abs(value) < 2**53:
        return str(int(value))
    return repr(value)


def to_js_literal(value: Any) -> str:
    """Serialize a value to JS literal (or literal-like expression) syntax."""
    kind = js_type_of(value)
    if kind == "Undefined":
        return "undefined"
    if kind == "Null":
        return "null"
    if kind == "Boolean":
        return "true" if value else "false"
    if kind == "Number":
        return _number_literal(value)
    if kind == "String":
        # json escaping (with ensure_ascii) is a valid, engine-portable JS
        # string literal for any input text
        return json.dumps(value, ensure_ascii=True)
    if kind == "Array":
        return "[" + ", ".join(to_js_literal(v) for v in value) + "]"
    if kind == "Object":
        parts = [f"{json.dumps(str(k))}: {to_js_literal(v)}" for k, v in value.items()]
        return "{" + ", ".join(parts) + "}"
    return "function(){}"


# Numeric strata for random test data; each must remain reachable so that
# special values (NaN, signed zero, infinities) keep showing up in campaigns.
_NUMBER_STRATA = (
    "small_int",
    "large_int",
    "zero",
    "infinity",
    "nan",
    "decimal",
)

_ASCII_ALPHABET = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789 _.,!?-"
_UNICODE_ALPHABET = "éü世界Жאαω☃\U0001f600"


def random_number(rng: random.Random):
    """Draw a number from a stratified mixture of ordinary and edge values."""
    stratum = rng.choice(_NUMBER_STRATA)
    if stratum == "small_int":
        return rng.randint(-10, 100)
    if stratum == "large_int":
        return rng.choice([2**31 - 1, -(2**31), 2**53 - 1, -(2**53 - 1), 10**9])
    if stratum == "zero":
        return rng.choice([0, -0.0])
    if stratum == "infinity":
        return rng.choice([math.inf, -math.inf])
    if stratum == "nan":
        return math.nan
    return round(rng.uniform(-1000, 1000), rng.randint(1, 6))


def random_string(rng: random.Random) -> str:
    """Draw a string of length <= 64 from an ASCII or a Unicode stratum."""
    length = rng.randint(0, 64)
    alphabet = _UNICODE_ALPHABET if rng.random() < 0.25 else _ASCII_ALPHABET
    return "".join(rng.choice(alphabet) for _ in range(length))


def random_value(js_type: str, rng: random.Random, depth: int = 0) -> Any:
    """Draw a random value of the given abstract JS type, deterministic under seed."""
    if js_type == "Undefined":
        return UNDEFINED
    if js_type == "Null":
        return NULL
    if js_type == "Boolean":
        return rng.random() < 0.5
    if js_type == "Number":
        return random_number(rng)
    if js_type == "String":
        return random_string(rng)
    if js_type == "Array":
        if depth >= 2:
            return []
        n = rng.randint(0, 4)
        kinds = ("Number", "String", "Boolean", "Null", "Undefined")
        return [random_value(rng.choice(kinds), rng, depth + 1) for _ in range(n)]
    if js_type == "Object":
        if depth >= 2:
            return {}
        n = rng.randint(0, 3)
        kinds = ("Number", "String", "Boolean")
        return {f"k{i}": random_value(rng.choice(kinds), rng, depth + 1) for i in range(n)}
    if js_type == "Function":
        return FunctionStub()
    raise ValueError(f"unknown abstract JS type: {js_type}")


def number_stratum(value) -> str:
    """Classify a number back into its generation stratum (for coverage tests)."""
    if isinstance(value, float) and math.isnan(value):
        return "nan"
    if isinstance(value, float) and math.isinf(value):
        return "infinity"
    if value == 0:
        return "zero"
    if isinstance(value, int):
        return "large_int" if abs(value) > 10**6 else "small_int"
    return "decimal"
