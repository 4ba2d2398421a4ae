#!/usr/bin/env python3
"""Validate an evotune model file against docs/model.schema.json.

    python3 tools/validate_model.py MODEL.json [--schema docs/model.schema.json]

Exit 0 when valid, 1 when invalid, 77 when the jsonschema package is missing.
"""

import argparse
import json
import os
import sys


def main():
    here = os.path.dirname(os.path.abspath(__file__))
    parser = argparse.ArgumentParser()
    parser.add_argument("model")
    parser.add_argument("--schema", default=os.path.join(here, "..", "docs", "model.schema.json"))
    args = parser.parse_args()
    try:
        import jsonschema
    except ImportError:
        print("jsonschema not installed", file=sys.stderr)
        return 77
    with open(args.schema) as f:
        schema = json.load(f)
    with open(args.model) as f:
        model = json.load(f)
    try:
        jsonschema.validate(model, schema)
    except jsonschema.ValidationError as e:
        print(f"invalid: {e.message} at {list(e.absolute_path)}", file=sys.stderr)
        return 1
    print("valid")
    return 0


if __name__ == "__main__":
    sys.exit(main())
