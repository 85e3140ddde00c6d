"""Validate shipped configs and a CLI run report against the published JSON schemas."""

import argparse
import json
import pathlib
import subprocess
import sys
import tempfile

import jsonschema
from referencing import Registry, Resource


def load(path):
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--aslam", required=True, help="path to the aslam executable")
    parser.add_argument("--schemas", required=True, type=pathlib.Path)
    parser.add_argument("--configs", required=True, type=pathlib.Path)
    args = parser.parse_args()

    config_schema = load(args.schemas / "config.schema.json")
    report_schema = load(args.schemas / "report.schema.json")
    registry = Registry().with_resources(
        [("config.schema.json", Resource.from_contents(config_schema))]
    )
    cls = jsonschema.validators.validator_for(report_schema)
    cls.check_schema(config_schema)
    cls.check_schema(report_schema)
    config_validator = cls(config_schema)
    report_validator = cls(report_schema, registry=registry)

    failures = 0
    for path in sorted(args.configs.glob("*.json")):
        errors = list(config_validator.iter_errors(load(path)))
        for e in errors:
            print(f"{path.name}: {'/'.join(map(str, e.absolute_path))}: {e.message}")
        failures += len(errors)

    bad = {"trajectory": {"type": "hover"}, "landmarks": [{"id": 1, "position": [0, 0, 0]}], "extra": 1}
    if config_validator.is_valid(bad):
        print("schema accepted a config without anchors and with an unknown key")
        failures += 1

    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(
            [args.aslam, "run", "--config", str(args.configs / "default_3anchor.json"), "--out", tmp],
            check=True,
            stdout=subprocess.DEVNULL,
        )
        report = load(pathlib.Path(tmp) / "report.json")
        errors = list(report_validator.iter_errors(report))
        for e in errors:
            print(f"report.json: {'/'.join(map(str, e.absolute_path))}: {e.message}")
        failures += len(errors)

    print("schema validation:", "ok" if failures == 0 else f"{failures} problem(s)")
    return 0 if failures == 0 else 1


if __name__ == "__main__":
    sys.exit(main())
