"""JSON schemas for the CLI's ``--format json`` output."""

import json
from functools import lru_cache
from importlib import resources

import jsonschema

COMMANDS = ("summarize", "km", "test", "pairwise", "phtest", "aft", "compare", "group")


@lru_cache(maxsize=None)
def load_schema(command: str) -> dict:
    if command not in COMMANDS:
        raise KeyError(f"no schema for {command!r}")
    text = resources.files(__package__).joinpath("schemas", f"{command}.json").read_text("utf-8")
    return json.loads(text)


def validate(command: str, document) -> None:
    """Raise ``jsonschema.ValidationError`` if `document` does not match."""
    if isinstance(document, str):
        document = json.loads(document)
    jsonschema.validate(document, load_schema(command))
