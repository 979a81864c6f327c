#!/usr/bin/env python3
"""Validates volumetrica JSON reports against the schemas in schemas/."""
import argparse
import json
import pathlib
import sys

import jsonschema
from referencing import Registry, Resource

SCHEMA_DIR = pathlib.Path(__file__).resolve().parent.parent / "schemas"


def load_registry(schema_dir=SCHEMA_DIR):
    resources = []
    by_name = {}
    for path in sorted(schema_dir.glob("*.schema.json")):
        doc = json.loads(path.read_text())
        resources.append((doc["$id"], Resource.from_contents(doc)))
        by_name[path.name.removesuffix(".schema.json")] = doc
    return Registry().with_resources(resources), by_name


def validate(report, registry, by_name):
    name = report["schema"].split("/")[0].removeprefix("volumetrica.")
    schema = by_name[name]
    jsonschema.Draft202012Validator(schema, registry=registry).validate(report)
    return name


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("reports", nargs="+", type=pathlib.Path)
    args = ap.parse_args()
    registry, by_name = load_registry()
    for name, doc in by_name.items():
        jsonschema.Draft202012Validator.check_schema(doc)
    failed = 0
    for path in args.reports:
        try:
            kind = validate(json.loads(path.read_text()), registry, by_name)
            print(f"ok   {path} ({kind})")
        except (jsonschema.ValidationError, KeyError, json.JSONDecodeError) as e:
            failed += 1
            print(f"FAIL {path}: {getattr(e, 'message', e)}")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
