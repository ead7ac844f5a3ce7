import math
import random

import pytest

from jsconform.jsvalues import (ABSTRACT_TYPES, NULL, TYPE_REPRESENTATIVES,
                                UNDEFINED, FunctionStub, js_type_of,
                                number_stratum, random_value, to_js_literal)


def test_type_representatives_cover_all_abstract_types():
    assert set(TYPE_REPRESENTATIVES) == set(ABSTRACT_TYPES)
    for js_type, value in TYPE_REPRESENTATIVES.items():
        assert js_type_of(value) == js_type


@pytest.mark.parametrize("value,literal", [
    (UNDEFINED, "undefined"),
    (NULL, "null"),
    (True, "true"),
    (False, "false"),
    (0, "0"),
    (-1, "-1"),
    (math.nan, "NaN"),
    (math.inf, "Infinity"),
    (-math.inf, "-Infinity"),
    (-0.0, "-0"),
    (3.14, "3.14"),
    (2**53 - 1, str(2**53 - 1)),
    ("a\"b", '"a\\"b"'),
    ([1, "x", UNDEFINED], '[1, "x", undefined]'),
    ({"k": NULL}, '{"k": null}'),
    (FunctionStub(), "function(){}"),
])
def test_to_js_literal(value, literal):
    assert to_js_literal(value) == literal


def test_literal_unicode_is_ascii_safe():
    assert to_js_literal("世") == '"\\u4e16"'


def test_random_value_deterministic_under_seed():
    a = [random_value("Number", random.Random(5)) for _ in range(50)]
    b = [random_value("Number", random.Random(5)) for _ in range(50)]
    assert [to_js_literal(v) for v in a] == [to_js_literal(v) for v in b]


def test_number_strata_all_covered_in_1000_draws():
    rng = random.Random(123)
    seen = {number_stratum(random_value("Number", rng)) for _ in range(1000)}
    assert seen == {"small_int", "large_int", "zero", "infinity", "nan", "decimal"}


def test_string_strata_and_length_cap():
    rng = random.Random(7)
    values = [random_value("String", rng) for _ in range(500)]
    assert all(len(v) <= 64 for v in values)
    assert any(any(ord(c) > 127 for c in v) for v in values), "unicode stratum missing"
    assert any(v and all(ord(c) <= 127 for c in v) for v in values), "ascii stratum missing"


def test_boolean_and_container_values():
    rng = random.Random(9)
    booleans = {random_value("Boolean", rng) for _ in range(50)}
    assert booleans == {True, False}
    arr = random_value("Array", rng)
    assert js_type_of(arr) == "Array"
    obj = random_value("Object", rng)
    assert js_type_of(obj) == "Object"
    # every random value serializes to literal syntax
    for js_type in ABSTRACT_TYPES:
        for _ in range(25):
            to_js_literal(random_value(js_type, rng))


def test_js_type_of_rejects_foreign_values():
    with pytest.raises(TypeError):
        js_type_of(object())
