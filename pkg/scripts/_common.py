"""Shared helpers for the figure scripts."""

import argparse
import csv
import pathlib
import sys

from riscal import cli

ROOT = pathlib.Path(__file__).resolve().parent.parent
RESULTS = ROOT / "results"


def parser(description: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--config", default=str(ROOT / "configs" / "benchmark.toml"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    return p


def run(command: str, out_name: str, args, *extra: str) -> pathlib.Path:
    RESULTS.mkdir(exist_ok=True)
    out = RESULTS / out_name
    argv = [command, "--config", args.config, "--seed", str(args.seed), "--workers", str(args.workers), "--out", str(out), *extra]
    code = cli.main(argv)
    if code:
        sys.exit(code)
    return out


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))
