"""Schema-gated tool server over newline-delimited JSON on stdio.

Requests: ``{"id": ..., "method": "list_tools" | "call_tool",
"params": {"tool": ..., "args": {...}}}``.  Every call is validated
against the tool's typed schema before any handler runs; a violating
call gets a SCHEMA_VIOLATION error carrying the full violation list and
the handler is never invoked.  One request is processed at a time, in
arrival order, and identical request streams produce byte-identical
response streams.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from labgate import schema as sg
from labgate.errors import ToolError
from labgate.plworkflow import load_campaign_csv, run_campaign, serialize_report
from labgate.semworkflow import (CalibrationEntry, CalibrationTable, parse_calibration,
                                 read_pgm, run_sem_tool)
from labgate.spectral import FitConfig

SCHEMA_VIOLATION = -32001
EXECUTION_ERROR = -32002
UNKNOWN_METHOD = -32601
PARSE_ERROR = -32700

# fallback calibration used when no device file is supplied: one entry,
# 2540 nm field of view across 1024 px at x40000, 64-row info bar
DEFAULT_CALIBRATION = CalibrationTable({"x40000": CalibrationEntry(2540.0 / 1024.0, 64)})


@dataclass(frozen=True)
class ToolEntry:
    schema: sg.TypedSchema
    handler: Callable[[dict], dict]
    description: str


@dataclass
class ToolRegistry:
    tools: dict = field(default_factory=dict)

    def register(self, entry: ToolEntry):
        name = entry.schema.tool_name
        if name in self.tools:
            raise ValueError(f"tool {name!r} already registered")
        self.tools[name] = entry

    def get(self, name: str) -> ToolEntry | None:
        return self.tools.get(name)

    def list_tools(self) -> list[dict]:
        """Deterministic rendering: lexicographic by tool name."""
        out = []
        for name in sorted(self.tools):
            entry = self.tools[name]
            params = []
            for p in entry.schema.params:
                row: dict[str, Any] = {"name": p.name, "kind": p.kind,
                                       "required": p.required}
                if p.has_default:
                    row["default"] = p.default
                if p.allowed_values is not None:
                    row["allowed_values"] = list(p.allowed_values)
                params.append(row)
            out.append({
                "name": name,
                "description": entry.description,
                "params": params,
                "rejected_aliases": dict(sorted(entry.schema.rejected_aliases.items())),
            })
        return out


# --- skill documents ----------------------------------------------------------


@dataclass(frozen=True)
class RouteRule:
    match: tuple[str, ...]
    set: dict
    tool: str | None = None


@dataclass(frozen=True)
class SkillDocument:
    """Machine-enforceable slice of a per-instrument skill file:
    per-tool default overrides, keyword routing rules (consumed by the
    mediator above the gate) and failure directives."""

    defaults: dict = field(default_factory=dict)      # tool -> {param: value}
    routes: tuple[RouteRule, ...] = ()
    on_error: dict = field(default_factory=dict)      # code -> abort | report


def _parse_skill_value(raw: str):
    raw = raw.strip()
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def load_skill(data: bytes, registry: ToolRegistry) -> SkillDocument:
    """Parse and type-check a skill document against the registry.

    INI-style sections: ``[tool.<name>]`` holds ``default.<param> = v``
    lines, each ``[route]`` section is one ordered routing rule with
    ``when = kw1,kw2`` + ``set.<param> = v`` (+ optional ``tool =``),
    ``[on_error]`` maps error codes to abort/report.  Overrides are
    checked at load time, not call time.
    """
    defaults: dict[str, dict] = {}
    routes: list[dict] = []
    on_error: dict[str, str] = {}
    section: tuple[str, ...] | None = None
    for lineno, raw in enumerate(data.decode("utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ToolError("SKILL_PARSE_ERROR", f"line {lineno}: bad section header")
            name = line[1:-1].strip()
            if name == "route":
                routes.append({"when": None, "set": {}, "tool": None})
                section = ("route",)
            elif name == "on_error":
                section = ("on_error",)
            elif name.startswith("tool."):
                section = ("tool", name[5:])
            else:
                raise ToolError("SKILL_PARSE_ERROR", f"line {lineno}: unknown section {name!r}")
            continue
        if "=" not in line or section is None:
            raise ToolError("SKILL_PARSE_ERROR", f"line {lineno}: expected key = value")
        key, _, raw_value = line.partition("=")
        key = key.strip()
        value = _parse_skill_value(raw_value)
        if section[0] == "tool":
            if not key.startswith("default."):
                raise ToolError("SKILL_PARSE_ERROR", f"line {lineno}: expected default.<param>")
            defaults.setdefault(section[1], {})[key[8:]] = value
        elif section[0] == "route":
            rule = routes[-1]
            if key == "when":
                rule["when"] = tuple(w.strip().lower() for w in str(raw_value).split(",")
                                     if w.strip())
            elif key == "tool":
                rule["tool"] = str(value)
            elif key.startswith("set."):
                rule["set"][key[4:]] = value
            else:
                raise ToolError("SKILL_PARSE_ERROR", f"line {lineno}: unknown route key {key!r}")
        else:  # on_error
            if value not in ("abort", "report"):
                raise ToolError("SKILL_PARSE_ERROR",
                                f"line {lineno}: action must be abort or report")
            on_error[key] = value

    for tool_name, overrides in defaults.items():
        entry = registry.get(tool_name)
        if entry is None:
            raise ToolError("SKILL_UNKNOWN_TOOL", f"skill overrides unknown tool {tool_name!r}")
        for pname, value in overrides.items():
            spec = entry.schema.find(pname)
            if spec is None:
                raise ToolError("SKILL_UNKNOWN_TOOL",
                                f"skill overrides unknown param {tool_name}.{pname}")
            ok, _ = sg._check_value(spec, value)
            if not ok:
                raise ToolError("SKILL_TYPE_MISMATCH",
                                f"override {tool_name}.{pname} fails kind {spec.kind}")
    checked_routes = []
    for rule in routes:
        if rule["when"] is None or not rule["set"]:
            raise ToolError("SKILL_PARSE_ERROR", "route rule needs when and set.<param>")
        tool_name = rule["tool"]
        for pname, value in rule["set"].items():
            specs = []
            if tool_name is not None:
                entry = registry.get(tool_name)
                if entry is None:
                    raise ToolError("SKILL_UNKNOWN_TOOL", f"route names unknown tool {tool_name!r}")
                specs = [entry.schema.find(pname)]
            else:
                specs = [e.schema.find(pname) for e in registry.tools.values()]
            specs = [s for s in specs if s is not None]
            if not specs:
                raise ToolError("SKILL_UNKNOWN_TOOL", f"route sets unknown param {pname!r}")
            if not any(sg._check_value(s, value)[0] for s in specs):
                raise ToolError("SKILL_TYPE_MISMATCH", f"route value for {pname!r} fails kind check")
        checked_routes.append(RouteRule(rule["when"], dict(rule["set"]), tool_name))
    return SkillDocument(defaults, tuple(checked_routes), on_error)


def route_args(skill: SkillDocument, request_text: str, tool_name: str) -> dict:
    """Mediator-side helper: parameters the first matching routing rule
    sets for a natural-language request (the model's job in production;
    the harness stands in for it here)."""
    words = set(request_text.lower().replace(",", " ").split())
    for rule in skill.routes:
        if rule.tool is not None and rule.tool != tool_name:
            continue
        if any(kw in words for kw in rule.match):
            return dict(rule.set)
    return {}


# --- dispatch -----------------------------------------------------------------


def dispatch(registry: ToolRegistry, call: sg.ToolCall,
             skill: SkillDocument | None = None) -> dict:
    """Gate, then execute.  Returns the result/error payload half of the
    response envelope."""
    entry = registry.get(call.tool_name)
    if entry is None:
        return {"error": {"code": UNKNOWN_METHOD,
                          "message": f"unknown tool {call.tool_name!r}", "data": []}}
    args = call.args
    if skill is not None:
        overrides = skill.defaults.get(call.tool_name, {})
        filled = dict(args)
        for pname, value in overrides.items():
            spec = entry.schema.find(pname)
            if pname not in filled and spec is not None and not spec.required:
                filled[pname] = value
        args = filled
    report = sg.validate_call(entry.schema, sg.ToolCall(call.tool_name, args))
    if not report.valid:
        return {"error": {"code": SCHEMA_VIOLATION, "message": "call violates the schema",
                          "data": [v.to_dict() for v in report.violations]}}
    final_args = sg.apply_defaults(entry.schema, report.args)
    try:
        result = entry.handler(final_args)
    except ToolError as exc:
        return {"error": {"code": EXECUTION_ERROR, "message": exc.message,
                          "data": [{"code": exc.code}]}}
    return {"result": result}


# --- the two deployed tools ---------------------------------------------------


def _pl_schema() -> sg.TypedSchema:
    return sg.TypedSchema(
        "pl.run_campaign",
        (
            sg.param("file_id", "uuid", required=True),
            sg.param("profile_kind", "enum",
                     allowed_values=("gaussian", "lorentzian", "voigt"), default="voigt"),
            sg.param("r2_threshold", "number", default=0.85),
            sg.param("boundary_uw", "number", default=10.0),
        ),
        {"campaign_id": "file_id", "csv_id": "file_id",
         "model": "profile_kind", "profile": "profile_kind",
         "threshold": "r2_threshold", "r2": "r2_threshold",
         "boundary": "boundary_uw"},
    )


def _sem_schema() -> sg.TypedSchema:
    return sg.TypedSchema(
        "sem_fft",
        (
            sg.param("file_id", "uuid", required=True),
            sg.param("mag_label", "string", required=True),
            sg.param("particle_analysis", "boolean", default=False),
        ),
        {"image_id": "file_id", "id": "file_id",
         "magnification": "mag_label", "mag": "mag_label",
         "analyze_particles": "particle_analysis"},
    )


def _resolve_file(data_dir: Path, file_id: str, ext: str) -> Path:
    path = data_dir / f"{file_id}.{ext}"
    if not path.is_file():
        raise ToolError("FILE_NOT_FOUND", f"no {ext} file for id {file_id}")
    return path


def load_schema_file(path: Path) -> sg.TypedSchema:
    """One declarative schema document (JSON) per tool."""
    return sg.schema_from_dict(json.loads(path.read_text("utf-8")))


def apply_schema_overrides(registry: ToolRegistry, paths) -> None:
    """Swap a registered tool's schema for a declared variant.

    This is how extra parameters are admitted on explicit request: an
    extended variant of the tool carries them in its schema, the gate
    stays strict, and the handler is unchanged.
    """
    for path in paths:
        schema = load_schema_file(Path(path))
        entry = registry.get(schema.tool_name)
        if entry is None:
            raise ToolError("SKILL_UNKNOWN_TOOL",
                            f"schema override for unknown tool {schema.tool_name!r}")
        registry.tools[schema.tool_name] = ToolEntry(schema, entry.handler,
                                                     entry.description)


def build_registry(data_dir: Path,
                   calibration: CalibrationTable = DEFAULT_CALIBRATION) -> ToolRegistry:
    registry = ToolRegistry()

    def pl_handler(args: dict) -> dict:
        path = _resolve_file(data_dir, args["file_id"], "csv")
        series = load_campaign_csv(path.read_bytes(), campaign_id=args["file_id"])
        config = FitConfig(profile_kind=args["profile_kind"],
                           r2_threshold=args["r2_threshold"])
        report = run_campaign(series, config, boundary_uW=args["boundary_uw"])
        text = serialize_report(report).decode("utf-8")
        out = {
            "canonical_hash": report.canonical_hash,
            "report": text,
            "n_accepted": len(report.levels),
            "n_rejected": len(report.rejected),
            "split_applied": (report.intensity_fit.split_applied
                              if report.intensity_fit else False),
            "b_below": report.intensity_fit.below.b if report.intensity_fit else None,
            "b_above": report.intensity_fit.above.b if report.intensity_fit else None,
            "sigma_b_below": (report.intensity_fit.below.sigma_b
                              if report.intensity_fit else None),
        }
        if report.levels:
            first = min(report.levels, key=lambda lv: lv.power_uW)
            out["lowest_power_uW"] = first.power_uW
            out["lowest_power_intensity"] = first.peak_intensity_counts
        return out

    def sem_handler(args: dict) -> dict:
        path = _resolve_file(data_dir, args["file_id"], "pgm")
        image = read_pgm(path.read_bytes())
        return run_sem_tool(args, image, calibration)

    registry.register(ToolEntry(_pl_schema(), pl_handler,
                                "Photoluminescence power-series campaign analysis "
                                "(Voigt fits, split power law)."))
    registry.register(ToolEntry(_sem_schema(), sem_handler,
                                "SEM periodicity via windowed 2-D FFT, optional "
                                "particle sizing."))
    return registry


# --- stdio loop ---------------------------------------------------------------


def _encode(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def handle_line(line: str, registry: ToolRegistry,
                skill: SkillDocument | None) -> str:
    try:
        req = json.loads(line)
    except json.JSONDecodeError:
        return _encode({"error": {"code": PARSE_ERROR, "message": "invalid JSON",
                                  "data": []}, "id": None})
    rid = req.get("id") if isinstance(req, dict) else None
    if not isinstance(req, dict):
        return _encode({"error": {"code": PARSE_ERROR, "message": "request must be an object",
                                  "data": []}, "id": None})
    method = req.get("method")
    if method == "list_tools":
        return _encode({"id": rid, "result": registry.list_tools()})
    if method == "call_tool":
        params = req.get("params")
        if (not isinstance(params, dict) or not isinstance(params.get("tool"), str)
                or not isinstance(params.get("args"), dict)):
            return _encode({"error": {"code": SCHEMA_VIOLATION,
                                      "message": "params must carry tool and args",
                                      "data": []}, "id": rid})
        payload = dispatch(registry, sg.ToolCall(params["tool"], params["args"]), skill)
        payload["id"] = rid
        return _encode(payload)
    return _encode({"error": {"code": UNKNOWN_METHOD,
                              "message": f"unknown method {method!r}", "data": []},
                    "id": rid})


def serve(registry: ToolRegistry, skill: SkillDocument | None,
          stdin=None, stdout=None):
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    for line in stdin:
        if not line.strip():
            continue
        stdout.write(handle_line(line, registry, skill) + "\n")
        stdout.flush()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="labgate-server",
        description="Typed tool server for deterministic lab analyses (NDJSON on stdio).")
    parser.add_argument("--data-dir", type=Path, default=Path("."),
                        help="directory mapping file_id -> <uuid>.<ext>")
    parser.add_argument("--skill", type=Path, default=None,
                        help="skill document with defaults/routing/error directives")
    parser.add_argument("--calibration", type=Path, default=None,
                        help="SEM calibration table (mag_label nm_per_px info_bar_px)")
    parser.add_argument("--schema-override", type=Path, action="append", default=[],
                        help="declarative schema file replacing a tool's schema "
                             "(extended variants; may repeat)")
    args = parser.parse_args(argv)
    calibration = DEFAULT_CALIBRATION
    if args.calibration is not None:
        calibration = parse_calibration(args.calibration.read_text("utf-8"))
    registry = build_registry(args.data_dir, calibration)
    apply_schema_overrides(registry, args.schema_override)
    skill = None
    if args.skill is not None:
        skill = load_skill(args.skill.read_bytes(), registry)
    serve(registry, skill)
    return 0


if __name__ == "__main__":
    sys.exit(main())
