"""``bbmlab`` command line: one subcommand per study.

Exit codes: 0 success, 1 unexpected library error, 2 invalid parameters or
configuration, 3 numerical failure, 4 population capacity exceeded.
"""

import argparse
import logging
import os
import sys
import time

from . import __version__
from ._parallel import default_threads
from .config import COMMANDS, ExperimentConfig, resolve_seed
from .errors import BBMError, ConfigError
from .io import RunManifest, write_csv
from .studies import RUNNERS

log = logging.getLogger("bbmlab")


def build_parser():
    p = argparse.ArgumentParser(prog="bbmlab", description="Branching Brownian motion laboratory")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, help=f"run the {name} study")
        sp.add_argument("--config", metavar="PATH", help="YAML experiment configuration")
        sp.add_argument("--seed", type=int, help="master seed (overrides config and BBM_SEED)")
        sp.add_argument("--out", metavar="DIR", help="output directory")
        sp.add_argument("--threads", type=int, default=None,
                        help="worker processes for replicas (default: available cores)")
        sp.add_argument("--quiet", action="store_true", help="only report warnings and errors")
    return p


def run(argv=None, env=None):
    args = build_parser().parse_args(argv)
    env = os.environ if env is None else env
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
        cfg.experiment = args.command
        cfg.validate()
        seed = resolve_seed(args.seed, cfg.seed, env)
        cfg.seed = seed
        threads = args.threads if args.threads is not None else default_threads()
        if threads < 1:
            raise ConfigError("--threads must be at least 1")
        out = args.out or cfg.out or os.path.join("bbm_out", args.command)
        os.makedirs(out, exist_ok=True)
        manifest = RunManifest(args.command, cfg.to_dict(), seed)
        t0 = time.perf_counter()
        log.info("%s: seed=%d threads=%d out=%s", args.command, seed, threads, out)
        tables = RUNNERS[args.command](cfg, seed, manifest, threads)
        for stem, (name, cols, rows) in tables.items():
            path = write_csv(os.path.join(out, f"{stem}.csv"), name, cols, rows)
            manifest.outputs.append(os.path.basename(path))
        manifest.wall_time = time.perf_counter() - t0
        manifest.write(out)
        for k, v in manifest.results.items():
            log.info("%s = %s", k, v)
        if manifest.pruned_count:
            log.info("pruned %d particles, lost-mass bound %.3g", manifest.pruned_count,
                     manifest.pruned_mass_bound)
        return 0
    except BBMError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return exc.exit_code


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
