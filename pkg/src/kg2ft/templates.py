"""Relation template registry.

Templates are data, not code: each relation carries a forward phrase, an
inverse phrase, and optional question templates. A default registry ships
with the package; a user-supplied JSON file can add relations or override
defaults. Relations that appear in input data without any registered
template fall back to a neutral generic wording so ingest never invents
domain phrasing silently.
"""

from __future__ import annotations

import hashlib
import json
from importlib import resources
from pathlib import Path

from .errors import ConfigError
from .graph import RelationType

_FORMAT = "kg2ft-templates"
_VERSION = 1

_FIELD_MAP = {
    "forward": "forward_phrase",
    "inverse": "inverse_phrase",
    "question_forward": "question_forward",
    "question_inverse": "question_inverse",
    "question_multihop": "question_multihop",
    "head_type": "head_type",
    "tail_type": "tail_type",
}


def _relation_from_entry(name: str, entry: dict) -> RelationType:
    if not isinstance(entry, dict):
        raise ConfigError(f"template entry for {name!r} must be an object")
    unknown = set(entry) - set(_FIELD_MAP)
    if unknown:
        raise ConfigError(f"template entry for {name!r} has unknown keys: {sorted(unknown)}")
    for required in ("forward", "inverse"):
        if required not in entry or not isinstance(entry[required], str):
            raise ConfigError(f"template entry for {name!r} needs a string {required!r} phrase")
    kwargs = {"name": name}
    for key, fieldname in _FIELD_MAP.items():
        if key in entry:
            value = entry[key]
            if value is not None and not isinstance(value, str):
                raise ConfigError(f"template entry for {name!r}: {key!r} must be a string")
            kwargs[fieldname] = value
    try:
        return RelationType(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def parse_registry(payload: dict) -> dict[str, RelationType]:
    if not isinstance(payload, dict):
        raise ConfigError("template file must contain a JSON object")
    if payload.get("format") != _FORMAT:
        raise ConfigError(f"template file format must be {_FORMAT!r}")
    if payload.get("version") != _VERSION:
        raise ConfigError(f"unsupported template file version {payload.get('version')!r}")
    relations = payload.get("relations")
    if not isinstance(relations, dict):
        raise ConfigError("template file must have a 'relations' object")
    return {name: _relation_from_entry(name, entry) for name, entry in relations.items()}


def load_template_file(path: str | Path) -> dict[str, RelationType]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read template file {path}: {exc}") from exc
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"template file {path} is not valid JSON: {exc}") from exc
    return parse_registry(payload)


def default_registry() -> dict[str, RelationType]:
    """The registry bundled with the package."""
    text = resources.files("kg2ft.data").joinpath("templates.json").read_text(encoding="utf-8")
    return parse_registry(json.loads(text))


def merged_registry(template_path: str | Path | None = None) -> dict[str, RelationType]:
    """Defaults overlaid with an optional user template file."""
    registry = default_registry()
    if template_path is not None:
        registry.update(load_template_file(template_path))
    return registry


def generic_relation(name: str) -> RelationType:
    """Neutral templates for a relation nobody registered.

    The wording is deliberately mechanical so generated text never implies
    domain semantics that were not provided.
    """
    return RelationType(
        name=name,
        forward_phrase="{head} has relation '" + name + "' to {tail}",
        inverse_phrase="{tail} has incoming relation '" + name + "' from {head}",
        question_forward="What has relation '" + name + "' to {tail}?",
        question_inverse="What does {head} have relation '" + name + "' to?",
        question_multihop=None,
    )


def registry_fingerprint(registry: dict[str, RelationType]) -> str:
    """Stable sha256 over the registry content, for manifests."""
    canonical = {
        name: {
            "forward": rel.forward_phrase,
            "inverse": rel.inverse_phrase,
            "question_forward": rel.question_forward,
            "question_inverse": rel.question_inverse,
            "question_multihop": rel.question_multihop,
            "head_type": rel.head_type,
            "tail_type": rel.tail_type,
        }
        for name, rel in sorted(registry.items())
    }
    blob = json.dumps(canonical, sort_keys=True, ensure_ascii=False).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()
