"""Command-line entry point: ``sponsornet [flags]``.

Flags not given on the command line fall back to ``--config`` (a flat
``key=value`` file using the flag names) and then to the default parameters.
"""
from __future__ import annotations

import argparse
import sys

from .errors import InvalidConfig
from .experiment import ExperimentConfig, Sweep, rows_to_csv, run_experiment, summarize, summary_to_csv
from .model import GenerationConfig

# flag name -> (type, default)
OPTIONS = {
    "n": (int, 100),
    "mu-a": (float, 30.0),
    "mu-b": (float, 30.0),
    "mu-g": (float, 4.0),
    "c": (float, 3.0),
    "gamma": (float, 2.0),
    "s": (float, 5.0),
    "t": (float, 5.0),
    "seed": (int, 0),
    "mode": (str, "both"),
    "sweep": (str, None),
    "replications": (int, 10),
    "tol": (float, 1e-8),
    "max-iter": (int, None),
    "cooperative-method": (str, "closed_form"),
    "workers": (int, 1),
    "out": (str, None),
    "summary": (str, None),
}

HELP = {
    "sweep": "param:start:stop:steps with param in n, mu_g, c",
    "out": "CSV path (default stdout)",
    "summary": "also write per-sweep-value means and std devs here",
    "max-iter": "iteration cap (default 10000 competitive, 100000 gradient)",
}


def read_config_file(path) -> dict:
    """Parse ``key=value`` lines; ``#`` starts a comment, blank lines are skipped."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidConfig(f"{path}:{lineno}: expected key=value")
            key, value = (part.strip() for part in line.split("=", 1))
            key = key.lstrip("-").replace("_", "-")
            if key not in OPTIONS:
                raise InvalidConfig(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = value
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sponsornet",
        description="Solve seeded sponsored-data markets (competitive and cooperative) and write CSV.",
    )
    parser.add_argument("--config", help="flat key=value file; command-line flags override it")
    for name, (typ, default) in OPTIONS.items():
        kwargs = {"type": typ, "default": None, "dest": name.replace("-", "_")}
        if name == "mode":
            kwargs["choices"] = ["competitive", "cooperative", "both"]
        if name == "cooperative-method":
            kwargs["choices"] = ["closed_form", "gradient"]
        kwargs["help"] = HELP.get(name, f"default {default}")
        parser.add_argument(f"--{name}", **kwargs)
    return parser


def resolve_options(args: argparse.Namespace) -> dict:
    merged = {name: default for name, (_, default) in OPTIONS.items()}
    if args.config:
        for key, raw in read_config_file(args.config).items():
            typ = OPTIONS[key][0]
            try:
                merged[key] = typ(raw)
            except ValueError:
                raise InvalidConfig(f"config key {key!r}: cannot parse {raw!r}") from None
    for name in OPTIONS:
        value = getattr(args, name.replace("-", "_"))
        if value is not None:
            merged[name] = value
    return merged


def config_from_options(opts: dict) -> ExperimentConfig:
    generation = GenerationConfig(
        n=opts["n"],
        mu_a=opts["mu-a"],
        mu_b=opts["mu-b"],
        mu_g=opts["mu-g"],
        c=opts["c"],
        gamma=opts["gamma"],
        s=opts["s"],
        t=opts["t"],
        seed=opts["seed"],
    )
    max_iter = opts["max-iter"]
    cfg = ExperimentConfig(
        generation=generation,
        mode=opts["mode"],
        sweep=Sweep.parse(opts["sweep"]) if opts["sweep"] else None,
        replications=opts["replications"],
        competitive_tol=opts["tol"],
        competitive_max_iter=max_iter or 10_000,
        cooperative_method=opts["cooperative-method"],
        cooperative_tol=opts["tol"],
        cooperative_max_iter=max_iter or 100_000,
        output_path=opts["out"],
        workers=opts["workers"],
    )
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        opts = resolve_options(args)
        cfg = config_from_options(opts)
    except (InvalidConfig, OSError) as exc:
        print(f"sponsornet: configuration error: {exc}", file=sys.stderr)
        return 2

    rows = run_experiment(cfg)
    if cfg.output_path is None:
        sys.stdout.write(rows_to_csv(rows))
    if opts["summary"]:
        with open(opts["summary"], "w", encoding="utf-8", newline="") as fh:
            fh.write(summary_to_csv(summarize(rows)))

    failed = sum(r.status != "ok" for r in rows)
    if failed:
        print(f"sponsornet: {failed} of {len(rows)} rows failed (see status column)", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
