"""Command-line front end.

    runtumble SUBCOMMAND --config PATH [--set key=value ...] [--threads N] [--out DIR]

Exit status: 0 pass (or inconclusive), 2 verification failure, 1 usage or config error.
"""

import argparse
import hashlib
import json
import logging
import platform
import sys
from importlib import metadata
from pathlib import Path

from . import __version__
from ._validation import CertificationError, ConfigError, InputError, RunTumbleError
from .config import EXPERIMENTS, config_hash, load_config

log = logging.getLogger("runtumble")

VERSIONED = ("numpy", "scipy", "numba", "scikit-learn", "tomli")


def _versions():
    out = {"python": platform.python_version(), "runtumble": __version__}
    for name in VERSIONED:
        try:
            out[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            out[name] = None
    return out


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def set_threads(n):
    """Cap numba's worker count; returns the cap actually applied."""
    import numba

    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
    return n


def build_parser():
    p = argparse.ArgumentParser(prog="runtumble", description="Run-and-tumble simulation and verification.")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", required=True, help="TOML run configuration")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config entry (repeatable), e.g. rate.chi=0.8")
    p.add_argument("--threads", type=int, default=None, help="cap on worker threads")
    p.add_argument("--out", default="runtumble-out", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def run(experiment, config_path, overrides=(), threads=None, out="runtumble-out"):
    """Run one experiment and write its artifacts plus manifest.json; returns (exit code, result)."""
    from .experiments import RUNNERS

    cfg = load_config(config_path, overrides, experiment)
    if threads is not None:
        set_threads(threads)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    result = RUNNERS[experiment](cfg, out)
    manifest = {
        "experiment": experiment,
        "config": cfg,
        "config_sha256": config_hash(cfg),
        "seed": cfg["seed"],
        "versions": _versions(),
        "status": result.status,
        "artifacts": {name: _sha256(out / name) for name in sorted(result.artifacts)},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return (0 if result.passed else 2), result


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        code, result = run(args.experiment, args.config, args.overrides, args.threads, args.out)
    except (ConfigError, InputError) as exc:
        print(f"runtumble: config error: {exc}", file=sys.stderr)
        return 1
    except CertificationError as exc:
        print(f"runtumble: verification failed: {exc}", file=sys.stderr)
        return 2
    except RunTumbleError as exc:
        print(f"runtumble: {exc}", file=sys.stderr)
        return 2
    print(f"{args.experiment}: {result.status} ({args.out})")
    return code


if __name__ == "__main__":
    sys.exit(main())
