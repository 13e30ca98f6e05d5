"""``fwmips generate|calibrate|run|report --spec <json> [--out <dir>] [--fallback-exact]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .bench import ExperimentSpec, cmd_calibrate, cmd_generate, cmd_report, cmd_run, run_exit_code
from .errors import CalibrationError, ConfigError

EXIT_OK, EXIT_ALL_FAILED, EXIT_CONFIG = 0, 1, 2


def build_parser():
    p = argparse.ArgumentParser(prog="fwmips", description=__doc__)
    p.add_argument("command", choices=["generate", "calibrate", "run", "report"])
    p.add_argument("--spec", required=True, help="experiment spec JSON")
    p.add_argument("--out", default=None, help="output directory (default: spec output_dir)")
    p.add_argument("--fallback-exact", action="store_true",
                   help="debug only: answer oracle failures with an exact scan")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "calibrate":
            raw = json.loads(Path(args.spec).read_text())
            print(cmd_calibrate(raw, args.out))
            return EXIT_OK
        if args.command == "report":
            raw = json.loads(Path(args.spec).read_text())
            dirs = raw.get("runs") or [raw.get("output_dir", ".")]
            print(cmd_report(dirs, args.out))
            return EXIT_OK
        spec = ExperimentSpec.load(args.spec)
        if args.command == "generate":
            for path in cmd_generate(spec, args.out):
                print(path)
            return EXIT_OK
        agg = cmd_run(spec, args.out, args.fallback_exact)
        for r in agg["runs"]:
            status = "ok" if r["ok"] else f"error ({r['error']})"
            print(f"{r['oracle']:6s} seed={r['seed']:<4d} {status} iters={r['iterations']} "
                  f"gap={r['final_gap']:.3g}")
        return run_exit_code(agg)
    except (ConfigError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CalibrationError as exc:
        print(f"calibration failed: {exc}; best: {exc.best}", file=sys.stderr)
        return EXIT_ALL_FAILED
    except FileNotFoundError as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return EXIT_ALL_FAILED


if __name__ == "__main__":
    sys.exit(main())
