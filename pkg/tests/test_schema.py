"""Schema gate: exact names, strict kinds, aliases, defaults, ordering."""

from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from labgate import schema as sg
from labgate.server import _pl_schema, _sem_schema

from helpers import SEM_UUID


@pytest.fixture
def sem_schema():
    return _sem_schema()


def call(schema, **args):
    return sg.validate_call(schema, sg.ToolCall(schema.tool_name, args))


def test_sem_valid_call(sem_schema):
    report = call(sem_schema, file_id=SEM_UUID, mag_label="x40000")
    assert report.valid
    assert report.violations == ()
    assert list(report.args) == ["file_id", "mag_label"]


def test_alias_rejected_with_suggestion(sem_schema):
    report = call(sem_schema, file_id=SEM_UUID, magnification="x40000")
    assert not report.valid
    codes = {v.param: v for v in report.violations}
    assert codes["magnification"].code == sg.KNOWN_ALIAS
    assert codes["magnification"].suggested_canonical == "mag_label"
    # missing mag_label is reported too: the alias does not stand in for it
    assert codes["mag_label"].code == sg.MISSING_REQUIRED


def test_alias_round_trip_to_valid(sem_schema):
    bad = {"file_id": SEM_UUID, "magnification": "x40000", "analyze_particles": True}
    report = call(sem_schema, **bad)
    assert not report.valid
    repaired = {}
    for name, value in bad.items():
        suggestion = [v.suggested_canonical for v in report.violations
                      if v.param == name and v.code == sg.KNOWN_ALIAS]
        repaired[suggestion[0] if suggestion else name] = value
    assert call(sem_schema, **repaired).valid


def test_alias_completeness(sem_schema):
    for alias, canonical in sem_schema.rejected_aliases.items():
        args = {"file_id": SEM_UUID, "mag_label": "x40000"}
        args.pop(canonical, None)
        args[alias] = "x40000" if canonical == "mag_label" else SEM_UUID
        report = call(sem_schema, **args)
        found = [v for v in report.violations if v.param == alias]
        assert found and found[0].code == sg.KNOWN_ALIAS
        assert found[0].suggested_canonical == canonical


def test_zero_required_schema_accepts_empty():
    schema = sg.TypedSchema("t", (sg.param("flag", "boolean", default=False),))
    report = call(schema)
    assert report.valid
    assert sg.apply_defaults(schema, report.args) == {"flag": False}


def test_unknown_param_rejected_not_dropped(sem_schema):
    report = call(sem_schema, file_id=SEM_UUID, mag_label="x40000", roi="all")
    assert not report.valid
    assert report.violations[0].code == sg.UNKNOWN_PARAM
    assert report.args is None


def test_missing_required(sem_schema):
    report = call(sem_schema, mag_label="x40000")
    assert [v.code for v in report.violations] == [sg.MISSING_REQUIRED]
    assert report.violations[0].param == "file_id"


def test_type_mismatches(sem_schema):
    report = call(sem_schema, file_id=SEM_UUID, mag_label=40000)
    assert [v.code for v in report.violations] == [sg.TYPE_MISMATCH]
    report = call(sem_schema, file_id="not-a-uuid", mag_label="x40000")
    assert [v.code for v in report.violations] == [sg.TYPE_MISMATCH]
    report = call(sem_schema, file_id=SEM_UUID, mag_label="x40000",
                  particle_analysis="yes")
    assert [v.code for v in report.violations] == [sg.TYPE_MISMATCH]


def test_uuid_lowercased(sem_schema):
    report = call(sem_schema, file_id=SEM_UUID.upper(), mag_label="x40000")
    assert report.valid
    assert report.args["file_id"] == SEM_UUID


def test_enum_value_not_allowed():
    schema = _pl_schema()
    report = sg.validate_call(schema, sg.ToolCall(
        "pl.run_campaign", {"file_id": SEM_UUID, "profile_kind": "parabola"}))
    assert [v.code for v in report.violations] == [sg.VALUE_NOT_ALLOWED]


def test_number_widens_integer_but_not_reverse():
    schema = sg.TypedSchema("t", (sg.param("x", "number", required=True),
                                  sg.param("n", "integer", required=True)))
    ok = call(schema, x=3, n=2)
    assert ok.valid and isinstance(ok.args["x"], float)
    assert not call(schema, x=1.0, n=2.0).valid
    # booleans are not numbers
    assert not call(schema, x=True, n=2).valid


def test_defaults_applied_in_schema_order(sem_schema):
    report = call(sem_schema, mag_label="x40000", file_id=SEM_UUID)
    final = sg.apply_defaults(sem_schema, report.args)
    assert list(final) == ["file_id", "mag_label", "particle_analysis"]
    assert final["particle_analysis"] is False


def test_all_given_is_reordered_identity(sem_schema):
    report = call(sem_schema, particle_analysis=True, mag_label="x40000",
                  file_id=SEM_UUID)
    final = sg.apply_defaults(sem_schema, report.args)
    assert list(final) == ["file_id", "mag_label", "particle_analysis"]
    assert final["particle_analysis"] is True


def test_validate_idempotent(sem_schema):
    c = sg.ToolCall("sem_fft", {"file_id": SEM_UUID, "mag": "x1"})
    assert sg.validate_call(sem_schema, c) == sg.validate_call(sem_schema, c)


@given(st.permutations(["file_id", "mag_label", "particle_analysis"]))
def test_order_canonicalization(order):
    schema = _sem_schema()
    values = {"file_id": SEM_UUID, "mag_label": "x40000", "particle_analysis": True}
    report = call(schema, **{k: values[k] for k in order})
    assert report.valid
    assert list(report.args) == ["file_id", "mag_label", "particle_analysis"]


@given(st.dictionaries(st.text(min_size=1, max_size=12),
                       st.one_of(st.none(), st.booleans(), st.integers(),
                                 st.floats(allow_nan=True), st.text(max_size=8),
                                 st.lists(st.integers(), max_size=3)),
                       max_size=6))
def test_gate_never_raises(args):
    schema = _sem_schema()
    report = sg.validate_call(schema, sg.ToolCall("sem_fft", args))
    assert report.valid == (not report.violations)


def test_schema_invariants_enforced():
    with pytest.raises(ValueError):
        sg.ParamSpec("x", "enum")  # enum without values
    with pytest.raises(ValueError):
        sg.param("x", "boolean", required=True, default=False)
    with pytest.raises(ValueError):
        sg.TypedSchema("t", (sg.param("a", "string"),), {"a": "a"})
    with pytest.raises(ValueError):
        sg.TypedSchema("t", (sg.param("a", "string"), sg.param("a", "integer")))
    with pytest.raises(ValueError):
        sg.TypedSchema("", (sg.param("a", "string"),))
