#!/usr/bin/env python3
import argparse
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT))

from config import render_defaults  # noqa: E402


def _parse_args():
    parser = argparse.ArgumentParser(description="Escreve a configuração embutida como ficheiro de cenário.")
    parser.add_argument("--output", default=None, help="Ficheiro de saída (omissão: stdout)")
    return parser.parse_args()


def main():
    args = _parse_args()
    text = render_defaults()
    if not args.output:
        sys.stdout.write(text)
        return
    output = Path(args.output)
    output.parent.mkdir(parents=True, exist_ok=True)
    output.write_text(text, encoding="utf-8")
    print(f"Configuração escrita em {output}")


if __name__ == "__main__":
    main()
