"""Control catalog: loading, validation, queries, and metric evaluation.

The catalog is a single CSV with one header row and four row kinds, all
sharing the same nine columns:

  control_id, control_title, safeguard_id, safeguard_description,
  technique_ids, metric_inputs, metric_operations, metric_measures,
  metric_formula

Row kinds are distinguished by which columns are filled:

  technique  control_id empty; technique_ids holds exactly one id;
             control_title carries the technique name and
             safeguard_description its description.
  control    control_id set; safeguard_id and metric_formula empty.
  safeguard  control_id and safeguard_id set; technique_ids holds a
             semicolon-separated list of mapped technique ids.
  metric     control_id set; safeguard_id empty; metric_formula set.
             metric_inputs and metric_measures hold semicolon-separated
             "NAME: description" entries; metric_operations holds
             semicolon-separated step descriptions.

Rows may appear in any order. Loading is strict: malformed rows, duplicate
ids, and dangling references are typed errors, never crashes. Conditions
that do not prevent indexing (an unexpected control count, unknown extra
columns) are collected as warnings on the loaded catalog.
"""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import IO, Mapping, Sequence

from .errors import (
    ConflictError,
    DataError,
    NotFoundError,
    ParseError,
    ReferentialError,
)
from .formulas import evaluate_formula, formula_identifiers

CSV_HEADERS = (
    "control_id",
    "control_title",
    "safeguard_id",
    "safeguard_description",
    "technique_ids",
    "metric_inputs",
    "metric_operations",
    "metric_measures",
    "metric_formula",
)

EXPECTED_CONTROL_COUNT = 18

TECHNIQUE_ID_RE = re.compile(r"^T\d{4}(\.\d{3})?$")
CONTROL_ID_RE = re.compile(r"^CIS-(\d+)$")
SAFEGUARD_ID_RE = re.compile(r"^(\d+)\.(\d+)$")
_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


@dataclass(frozen=True)
class Technique:
    id: str
    name: str
    description: str


@dataclass(frozen=True)
class Safeguard:
    id: str
    parent_control: str
    description: str
    mapped_techniques: tuple[str, ...]


@dataclass(frozen=True)
class Control:
    id: str
    title: str
    description: str
    safeguards: tuple[Safeguard, ...]


@dataclass(frozen=True)
class NamedField:
    """A named, described entry in a metric's inputs or measures."""

    name: str
    description: str


@dataclass(frozen=True)
class MetricSpec:
    control_id: str
    inputs: tuple[NamedField, ...]
    operations: tuple[str, ...]
    measures: tuple[NamedField, ...]
    formula: str


@dataclass(frozen=True)
class Catalog:
    controls: tuple[Control, ...]
    safeguards: tuple[Safeguard, ...]
    techniques: tuple[Technique, ...]
    metric_specs: tuple[MetricSpec, ...]
    control_to_techniques: Mapping[str, tuple[str, ...]]
    technique_to_controls: Mapping[str, tuple[str, ...]]
    warnings: tuple[str, ...] = ()
    # Which ATT&CK id shapes the source used: "parent", "sub", or both.
    technique_id_styles: frozenset[str] = field(default_factory=frozenset)

    def control(self, control_id: str) -> Control:
        for control in self.controls:
            if control.id == control_id:
                return control
        raise NotFoundError(f"unknown control {control_id!r}")

    def technique(self, technique_id: str) -> Technique:
        for technique in self.techniques:
            if technique.id == technique_id:
                return technique
        raise NotFoundError(f"unknown technique {technique_id!r}")

    def metrics_for_control(self, control_id: str) -> tuple[MetricSpec, ...]:
        self.control(control_id)
        return tuple(s for s in self.metric_specs if s.control_id == control_id)


def control_order_key(control_id: str) -> int:
    match = CONTROL_ID_RE.match(control_id)
    if match is None:
        raise DataError(f"control id {control_id!r} does not match CIS-<number>")
    return int(match.group(1))


def safeguard_order_key(safeguard_id: str) -> tuple[int, int]:
    match = SAFEGUARD_ID_RE.match(safeguard_id)
    if match is None:
        raise DataError(
            f"safeguard id {safeguard_id!r} does not match <number>.<number>"
        )
    return int(match.group(1)), int(match.group(2))


def _split_list(text: str) -> list[str]:
    return [part.strip() for part in text.split(";") if part.strip()]


def _parse_named_fields(text: str, *, lineno: int, column: str) -> tuple[NamedField, ...]:
    fields = []
    for entry in _split_list(text):
        name, _, description = entry.partition(":")
        name = name.strip()
        if not _NAME_RE.match(name):
            raise DataError(
                f"line {lineno}: {column} entry {entry!r} does not start with a valid name"
            )
        fields.append(NamedField(name=name, description=description.strip()))
    return tuple(fields)


@dataclass
class _RawRows:
    techniques: list[tuple[int, Technique]]
    controls: list[tuple[int, str, str, str]]  # lineno, id, title, description
    safeguards: list[tuple[int, Safeguard]]
    metrics: list[tuple[int, MetricSpec]]


def _classify_rows(
    reader, header_map: Mapping[str, int], row_width: int, start_line: int
) -> _RawRows:
    raw = _RawRows([], [], [], [])

    def cell(row: Sequence[str], name: str) -> str:
        return row[header_map[name]].strip()

    for lineno, row in enumerate(reader, start=start_line):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != row_width:
            raise ParseError(
                f"line {lineno}: expected {row_width} columns, found {len(row)}"
            )
        control_id = cell(row, "control_id")
        safeguard_id = cell(row, "safeguard_id")
        technique_ids = _split_list(cell(row, "technique_ids"))
        formula = cell(row, "metric_formula")

        if not control_id:
            if safeguard_id or formula or len(technique_ids) != 1:
                raise ParseError(
                    f"line {lineno}: row has no control_id but is not a "
                    "technique row (exactly one technique_id, no safeguard or formula)"
                )
            technique_id = technique_ids[0]
            if not TECHNIQUE_ID_RE.match(technique_id):
                raise DataError(
                    f"line {lineno}: technique id {technique_id!r} does not match "
                    "T<4 digits> or T<4 digits>.<3 digits>"
                )
            raw.techniques.append(
                (
                    lineno,
                    Technique(
                        id=technique_id,
                        name=cell(row, "control_title"),
                        description=cell(row, "safeguard_description"),
                    ),
                )
            )
        elif safeguard_id:
            if formula:
                raise ParseError(
                    f"line {lineno}: row sets both safeguard_id and metric_formula"
                )
            for technique_id in technique_ids:
                if not TECHNIQUE_ID_RE.match(technique_id):
                    raise DataError(
                        f"line {lineno}: technique id {technique_id!r} does not match "
                        "T<4 digits> or T<4 digits>.<3 digits>"
                    )
            seen_dup = {t for t in technique_ids if technique_ids.count(t) > 1}
            if seen_dup:
                raise ConflictError(
                    f"line {lineno}: safeguard {safeguard_id} lists technique "
                    f"{sorted(seen_dup)[0]} more than once"
                )
            raw.safeguards.append(
                (
                    lineno,
                    Safeguard(
                        id=safeguard_id,
                        parent_control=control_id,
                        description=cell(row, "safeguard_description"),
                        mapped_techniques=tuple(technique_ids),
                    ),
                )
            )
        elif formula:
            raw.metrics.append(
                (
                    lineno,
                    MetricSpec(
                        control_id=control_id,
                        inputs=_parse_named_fields(
                            cell(row, "metric_inputs"), lineno=lineno, column="metric_inputs"
                        ),
                        operations=tuple(_split_list(cell(row, "metric_operations"))),
                        measures=_parse_named_fields(
                            cell(row, "metric_measures"), lineno=lineno, column="metric_measures"
                        ),
                        formula=formula,
                    ),
                )
            )
        else:
            if technique_ids:
                raise ParseError(
                    f"line {lineno}: control row must not list technique_ids"
                )
            raw.controls.append(
                (lineno, control_id, cell(row, "control_title"), cell(row, "safeguard_description"))
            )
    return raw


def load_catalog(source: IO[str] | str, dialect: str | csv.Dialect = "excel") -> Catalog:
    """Parse and index a catalog CSV stream (or string).

    Raises ParseError, ConflictError, ReferentialError, or DataError on
    malformed input; collects non-fatal conditions as catalog warnings.
    """
    stream = io.StringIO(source) if isinstance(source, str) else source
    reader = csv.reader(stream, dialect=dialect)
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("catalog stream is empty; expected a header row") from None

    header_map: dict[str, int] = {}
    warnings: list[str] = []
    for index, name in enumerate(header):
        name = name.strip()
        if name in CSV_HEADERS:
            if name in header_map:
                raise ParseError(f"header column {name!r} appears twice")
            header_map[name] = index
        else:
            warnings.append(f"ignoring unknown column {name!r}")
    missing = [name for name in CSV_HEADERS if name not in header_map]
    if missing:
        raise ParseError(f"header is missing required columns {missing}")
    raw = _classify_rows(reader, header_map, row_width=len(header), start_line=2)
    return _assemble(raw, warnings)


def _assemble(raw: _RawRows, warnings: list[str]) -> Catalog:
    techniques: dict[str, Technique] = {}
    for lineno, technique in raw.techniques:
        if technique.id in techniques:
            raise ConflictError(f"line {lineno}: duplicate technique id {technique.id!r}")
        techniques[technique.id] = technique

    control_rows: dict[str, tuple[str, str]] = {}
    for lineno, control_id, title, description in raw.controls:
        control_order_key(control_id)
        if control_id in control_rows:
            raise ConflictError(f"line {lineno}: duplicate control id {control_id!r}")
        control_rows[control_id] = (title, description)

    safeguards: dict[str, Safeguard] = {}
    for lineno, safeguard in raw.safeguards:
        if safeguard.id in safeguards:
            raise ConflictError(f"line {lineno}: duplicate safeguard id {safeguard.id!r}")
        if safeguard.parent_control not in control_rows:
            raise ReferentialError(
                f"line {lineno}: safeguard {safeguard.id} references missing "
                f"control {safeguard.parent_control!r}"
            )
        parent_number = control_order_key(safeguard.parent_control)
        if safeguard_order_key(safeguard.id)[0] != parent_number:
            raise ReferentialError(
                f"line {lineno}: safeguard {safeguard.id} sits under "
                f"{safeguard.parent_control} but its prefix disagrees"
            )
        for technique_id in safeguard.mapped_techniques:
            if technique_id not in techniques:
                raise ReferentialError(
                    f"line {lineno}: safeguard {safeguard.id} maps unknown "
                    f"technique {technique_id!r}"
                )
        safeguards[safeguard.id] = safeguard

    metric_specs: list[MetricSpec] = []
    for lineno, spec in raw.metrics:
        if spec.control_id not in control_rows:
            raise ReferentialError(
                f"line {lineno}: metric references missing control {spec.control_id!r}"
            )
        declared = {f.name for f in spec.measures} | {f.name for f in spec.inputs}
        for identifier in formula_identifiers(spec.formula):
            if identifier not in declared:
                raise ReferentialError(
                    f"line {lineno}: formula identifier {identifier!r} is not a "
                    f"declared measure or input of control {spec.control_id}"
                )
        metric_specs.append(spec)
    metric_specs.sort(key=lambda s: control_order_key(s.control_id))

    sorted_safeguards = sorted(safeguards.values(), key=lambda s: safeguard_order_key(s.id))
    controls = []
    for control_id in sorted(control_rows, key=control_order_key):
        title, description = control_rows[control_id]
        controls.append(
            Control(
                id=control_id,
                title=title,
                description=description,
                safeguards=tuple(
                    s for s in sorted_safeguards if s.parent_control == control_id
                ),
            )
        )

    sorted_techniques = tuple(techniques[t] for t in sorted(techniques))

    control_to_techniques = {}
    for control in controls:
        mapped = {t for s in control.safeguards for t in s.mapped_techniques}
        control_to_techniques[control.id] = tuple(sorted(mapped))
    technique_to_controls = {t.id: () for t in sorted_techniques}
    for control in sorted(controls, key=lambda c: control_order_key(c.id)):
        for technique_id in control_to_techniques[control.id]:
            technique_to_controls[technique_id] += (control.id,)

    if len(controls) != EXPECTED_CONTROL_COUNT:
        warnings.append(
            f"catalog declares {len(controls)} controls; expected {EXPECTED_CONTROL_COUNT}"
        )
    styles = frozenset(
        "sub" if "." in t.id else "parent" for t in sorted_techniques
    )

    return Catalog(
        controls=tuple(controls),
        safeguards=tuple(sorted_safeguards),
        techniques=sorted_techniques,
        metric_specs=tuple(metric_specs),
        control_to_techniques=MappingProxyType(control_to_techniques),
        technique_to_controls=MappingProxyType(technique_to_controls),
        warnings=tuple(warnings),
        technique_id_styles=styles,
    )


def controls_for_technique(catalog: Catalog, technique_id: str) -> list[Control]:
    """Controls mapped to a technique, ascending by numeric control id."""
    if technique_id not in catalog.technique_to_controls:
        raise NotFoundError(f"unknown technique {technique_id!r}")
    ids = sorted(catalog.technique_to_controls[technique_id], key=control_order_key)
    return [catalog.control(control_id) for control_id in ids]


def techniques_for_control(catalog: Catalog, control_id: str) -> list[Technique]:
    """Deduplicated union of the control's safeguard mappings, ascending id."""
    if control_id not in catalog.control_to_techniques:
        raise NotFoundError(f"unknown control {control_id!r}")
    return [catalog.technique(t) for t in catalog.control_to_techniques[control_id]]


def evaluate_metric(spec: MetricSpec, measures: Mapping[str, float]) -> float:
    return evaluate_formula(spec.formula, measures)


def _named_fields_cell(fields: tuple[NamedField, ...]) -> str:
    return "; ".join(
        f"{f.name}: {f.description}" if f.description else f.name for f in fields
    )


def serialize_catalog(catalog: Catalog) -> str:
    """Render back to catalog CSV. Loading the result reproduces the catalog."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_HEADERS)
    for technique in catalog.techniques:
        writer.writerow(
            ["", technique.name, "", technique.description, technique.id, "", "", "", ""]
        )
    for control in catalog.controls:
        writer.writerow(
            [control.id, control.title, "", control.description, "", "", "", "", ""]
        )
        for safeguard in control.safeguards:
            writer.writerow(
                [
                    control.id,
                    "",
                    safeguard.id,
                    safeguard.description,
                    "; ".join(safeguard.mapped_techniques),
                    "",
                    "",
                    "",
                    "",
                ]
            )
        for spec in catalog.metric_specs:
            if spec.control_id != control.id:
                continue
            writer.writerow(
                [
                    control.id,
                    "",
                    "",
                    "",
                    "",
                    _named_fields_cell(spec.inputs),
                    "; ".join(spec.operations),
                    _named_fields_cell(spec.measures),
                    spec.formula,
                ]
            )
    return out.getvalue()


def catalog_to_dict(catalog: Catalog) -> dict:
    """Canonical plain-dict rendering for the gateway and console."""
    return {
        "schema": "catalog.v1",
        "controls": [
            {
                "id": c.id,
                "title": c.title,
                "description": c.description,
                "safeguards": [
                    {
                        "id": s.id,
                        "description": s.description,
                        "technique_ids": list(s.mapped_techniques),
                    }
                    for s in c.safeguards
                ],
            }
            for c in catalog.controls
        ],
        "techniques": [
            {"id": t.id, "name": t.name, "description": t.description}
            for t in catalog.techniques
        ],
        "metric_specs": [
            {
                "control_id": m.control_id,
                "inputs": [{"name": f.name, "description": f.description} for f in m.inputs],
                "operations": list(m.operations),
                "measures": [{"name": f.name, "description": f.description} for f in m.measures],
                "formula": m.formula,
            }
            for m in catalog.metric_specs
        ],
        "warnings": list(catalog.warnings),
    }


def catalog_to_json(catalog: Catalog) -> str:
    """Canonical JSON rendering (stable key order) for the gateway and console."""
    return json.dumps(catalog_to_dict(catalog), sort_keys=True, ensure_ascii=False, indent=2) + "\n"
