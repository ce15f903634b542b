"""Dynamic annotation forms generated from a model's form schema.

generate_form is a pure function of (schema, model outputs): fields render in
schema order and a prefill is attached exactly when the model output map
supplies that field name.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Mapping, Optional

from .errors import FieldValidationFailed
from .model import FieldType, FormSchema


@dataclass(frozen=True)
class FormField:
    name: str
    field_type: FieldType
    required: bool
    prefill: Any = None
    has_prefill: bool = False


@dataclass(frozen=True)
class FormSpec:
    model_name: str
    artifact_kind: str
    output_format: str
    fields: tuple[FormField, ...]

    def to_wire(self) -> dict:
        rendered = []
        for f in self.fields:
            item: dict[str, Any] = {
                "name": f.name,
                "field_type": f.field_type.value,
                "required": f.required,
            }
            if f.has_prefill:
                item["prefill"] = f.prefill
            rendered.append(item)
        return {
            "model_name": self.model_name,
            "artifact_kind": self.artifact_kind,
            "output_format": self.output_format,
            "fields": rendered,
        }


def generate_form(
    schema: FormSchema, model_outputs: Optional[Mapping[str, Any]] = None
) -> FormSpec:
    """Render the schema into form fields, prefilled from model outputs."""
    outputs = model_outputs or {}
    fields = []
    for spec in schema.fields:
        has_prefill = spec.name in outputs
        fields.append(
            FormField(
                name=spec.name,
                field_type=spec.field_type,
                required=spec.required,
                prefill=outputs.get(spec.name),
                has_prefill=has_prefill,
            )
        )
    return FormSpec(
        model_name=schema.model_name,
        artifact_kind=schema.artifact_kind,
        output_format=schema.output_format,
        fields=tuple(fields),
    )


def _type_ok(field_type: FieldType, value: Any) -> bool:
    if field_type in (FieldType.TEXT, FieldType.TEXTAREA):
        return isinstance(value, str)
    if field_type == FieldType.NUMBER:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if field_type == FieldType.BOOLEAN:
        return isinstance(value, bool)
    if field_type == FieldType.LIST_OF_TEXT:
        return isinstance(value, list) and all(isinstance(v, str) for v in value)
    if field_type == FieldType.JSON:
        try:
            json.dumps(value)
        except (TypeError, ValueError):
            return False
        return True
    return False


def validate_values(schema: FormSchema, values: Mapping[str, Any]) -> None:
    """Check values against the schema, raising with every offending field.

    Offending fields: required-but-missing, wrong type, or not in the schema
    at all.
    """
    bad: list[str] = []
    known = {f.name for f in schema.fields}
    for spec in schema.fields:
        if spec.name not in values:
            if spec.required:
                bad.append(spec.name)
            continue
        if not _type_ok(spec.field_type, values[spec.name]):
            bad.append(spec.name)
    bad.extend(sorted(set(values) - known))
    if bad:
        raise FieldValidationFailed(bad)
