#!/usr/bin/env python3
import argparse
import json
import math
from pathlib import Path


def _parse_args():
    parser = argparse.ArgumentParser(description="Compara dois report.json verificação a verificação.")
    parser.add_argument("left", help="report.json de referência")
    parser.add_argument("right", help="report.json a comparar")
    parser.add_argument("--rtol", type=float, default=0.0, help="Tolerância relativa nos valores medidos")
    return parser.parse_args()


def _load(path):
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SystemExit(f"ERROR: não foi possível ler {path}: {exc}")
    return {check["name"]: check for check in payload.get("checks", [])}


def _close(a, b, rtol):
    if a is None or b is None:
        return a is b
    return math.isclose(a, b, rel_tol=rtol, abs_tol=0.0) or a == b


def compare(left, right, rtol=0.0):
    """Differences between two check tables, one line each."""
    diffs = []
    for name in sorted(set(left) | set(right)):
        if name not in left or name not in right:
            diffs.append(f"{name}: presente só em {'left' if name in left else 'right'}")
            continue
        a, b = left[name], right[name]
        if a.get("pass") != b.get("pass"):
            diffs.append(f"{name}: pass {a.get('pass')} -> {b.get('pass')}")
        if not _close(a.get("measured"), b.get("measured"), rtol):
            diffs.append(f"{name}: measured {a.get('measured')!r} -> {b.get('measured')!r}")
    return diffs


def main():
    args = _parse_args()
    diffs = compare(_load(args.left), _load(args.right), args.rtol)
    for line in diffs:
        print(line)
    if diffs:
        raise SystemExit(1)
    print("Relatórios equivalentes")


if __name__ == "__main__":
    main()
