"""Typed schema gate.

Every tool call is validated against a :class:`TypedSchema` before any
workflow code runs.  Validation is strict: parameter names must match
exactly, unknown parameters are rejected (never dropped), and known
wrong names from the rejected-aliases table are reported together with
the canonical spelling so a caller can repair the call.  The gate never
raises on bad input; all failures are data in the returned report.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any, Mapping

KINDS = ("string", "integer", "number", "boolean", "uuid", "enum")

UNKNOWN_PARAM = "UNKNOWN_PARAM"
KNOWN_ALIAS = "KNOWN_ALIAS"
TYPE_MISMATCH = "TYPE_MISMATCH"
MISSING_REQUIRED = "MISSING_REQUIRED"
VALUE_NOT_ALLOWED = "VALUE_NOT_ALLOWED"

_UUID_RE = re.compile(
    r"^[0-9a-fA-F]{8}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-[0-9a-fA-F]{12}$"
)
_IDENT_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_.]*$")


@dataclass(frozen=True)
class ParamSpec:
    """One schema row: a parameter's name, kind and constraints."""

    name: str
    kind: str
    required: bool = False
    allowed_values: tuple | None = None
    default: Any = None
    has_default: bool = False

    def __post_init__(self):
        if not _IDENT_RE.match(self.name):
            raise ValueError(f"invalid parameter name {self.name!r}")
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r} for {self.name!r}")
        if self.kind == "enum" and not self.allowed_values:
            raise ValueError(f"enum param {self.name!r} needs allowed_values")
        if self.kind != "enum" and self.allowed_values is not None:
            raise ValueError(f"allowed_values is enum-only ({self.name!r})")
        if self.required and self.has_default:
            raise ValueError(f"required param {self.name!r} must not have a default")
        if self.has_default:
            ok, _ = _check_value(self, self.default)
            if not ok:
                raise ValueError(f"default for {self.name!r} fails its own kind check")


def param(name: str, kind: str, *, required: bool = False,
          allowed_values: tuple | None = None, **kw) -> ParamSpec:
    """Convenience constructor; pass ``default=`` to attach a default."""
    if "default" in kw:
        return ParamSpec(name, kind, required, allowed_values, kw.pop("default"), True)
    return ParamSpec(name, kind, required, allowed_values)


@dataclass(frozen=True)
class TypedSchema:
    """The contract between caller and tool: ordered params plus the
    table of known-wrong aliases that are rejected with a hint."""

    tool_name: str
    params: tuple[ParamSpec, ...]
    rejected_aliases: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.tool_name:
            raise ValueError("tool_name must be non-empty")
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate param names in {self.tool_name}")
        for alias, canonical in self.rejected_aliases.items():
            if alias in names:
                raise ValueError(f"alias {alias!r} shadows a canonical param")
            if canonical not in names:
                raise ValueError(f"alias {alias!r} points at unknown param {canonical!r}")

    def find(self, name: str) -> ParamSpec | None:
        for p in self.params:
            if p.name == name:
                return p
        return None


@dataclass(frozen=True)
class ToolCall:
    """Raw call as received: nothing is assumed valid yet."""

    tool_name: str
    args: Mapping[str, Any]


@dataclass(frozen=True)
class Violation:
    param: str
    code: str
    message: str
    suggested_canonical: str | None = None

    def to_dict(self) -> dict:
        d = {"param": self.param, "code": self.code, "message": self.message}
        if self.suggested_canonical is not None:
            d["suggested_canonical"] = self.suggested_canonical
        return d


@dataclass(frozen=True)
class ValidationReport:
    valid: bool
    violations: tuple[Violation, ...]
    # canonicalized args in schema order; None when the call is invalid
    args: dict | None

    def __post_init__(self):
        assert self.valid == (len(self.violations) == 0)


def _check_value(spec: ParamSpec, value: Any):
    """Kind check; returns (ok, canonical_value)."""
    kind = spec.kind
    if kind == "string":
        return isinstance(value, str), value
    if kind == "boolean":
        return isinstance(value, bool), value
    if kind == "integer":
        return isinstance(value, int) and not isinstance(value, bool), value
    if kind == "number":
        # integer literals widen to number; booleans never do
        if isinstance(value, bool):
            return False, value
        if isinstance(value, int):
            return True, float(value)
        if isinstance(value, float):
            return value == value and value not in (float("inf"), float("-inf")), value
        return False, value
    if kind == "uuid":
        if isinstance(value, str) and _UUID_RE.match(value):
            return True, value.lower()
        return False, value
    if kind == "enum":
        return value in spec.allowed_values, value
    raise AssertionError(kind)


def validate_call(schema: TypedSchema, call: ToolCall) -> ValidationReport:
    """Gate a raw call against the schema.

    On success the report carries the canonicalized arguments reordered
    to schema order (caller order is discarded); UUIDs are lowercased
    and integer literals for number params are widened.
    """
    violations: list[Violation] = []
    seen: dict[str, Any] = {}
    for name, value in call.args.items():
        spec = schema.find(name)
        if spec is None:
            if name in schema.rejected_aliases:
                canonical = schema.rejected_aliases[name]
                violations.append(Violation(
                    name, KNOWN_ALIAS,
                    f"{name!r} is not accepted; use {canonical!r}",
                    suggested_canonical=canonical))
            else:
                violations.append(Violation(
                    name, UNKNOWN_PARAM, f"{name!r} is not a parameter of {schema.tool_name}"))
            continue
        ok, canonical_value = _check_value(spec, value)
        if not ok:
            code = VALUE_NOT_ALLOWED if spec.kind == "enum" else TYPE_MISMATCH
            violations.append(Violation(
                name, code, f"{name!r} does not satisfy kind {spec.kind}"))
            continue
        seen[name] = canonical_value
    for spec in schema.params:
        if spec.required and spec.name not in seen:
            # a bad value above already reported the param; missing means absent
            if spec.name not in call.args:
                violations.append(Violation(
                    spec.name, MISSING_REQUIRED, f"{spec.name!r} is required"))
    if violations:
        return ValidationReport(False, tuple(violations), None)
    ordered = {p.name: seen[p.name] for p in schema.params if p.name in seen}
    return ValidationReport(True, (), ordered)


def apply_defaults(schema: TypedSchema, validated_args: Mapping[str, Any]) -> dict:
    """Fill absent optional params with their defaults, in schema order.

    Must only be called with args that passed :func:`validate_call`.
    Optional params without a default simply stay absent.
    """
    out: dict[str, Any] = {}
    for spec in schema.params:
        if spec.name in validated_args:
            out[spec.name] = validated_args[spec.name]
        elif spec.has_default:
            out[spec.name] = spec.default
    return out


def schema_from_dict(doc: Mapping[str, Any]) -> TypedSchema:
    """Build a schema from its declarative form (one document per tool).

    Shape: ``{"tool_name": ..., "params": [{"name", "kind", "required"?,
    "allowed_values"?, "default"?}, ...], "rejected_aliases": {...}}``.
    A ``name`` key is accepted in place of ``tool_name`` so a rendering
    from tool discovery can be reused as a schema document.  Raises
    ValueError on any invariant violation, just like direct construction.
    """
    tool_name = doc.get("tool_name", doc.get("name"))
    if not isinstance(tool_name, str):
        raise ValueError("schema document needs a tool_name")
    if "params" not in doc:
        raise ValueError("schema document needs a params list")
    params = []
    for row in doc["params"]:
        extra = set(row) - {"name", "kind", "required", "allowed_values", "default"}
        if extra:
            raise ValueError(f"unknown param fields {sorted(extra)}")
        allowed = row.get("allowed_values")
        if "default" in row:
            params.append(param(row["name"], row["kind"],
                                required=row.get("required", False),
                                allowed_values=tuple(allowed) if allowed else None,
                                default=row["default"]))
        else:
            params.append(param(row["name"], row["kind"],
                                required=row.get("required", False),
                                allowed_values=tuple(allowed) if allowed else None))
    return TypedSchema(tool_name, tuple(params),
                       dict(doc.get("rejected_aliases", {})))
