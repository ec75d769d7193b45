"""``kkdwave`` command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 a validation check failed.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys

from . import __version__, harness
from .config import ExperimentConfig, load_config
from .errors import KKDError, ParameterError

EXIT_OK, EXIT_USAGE, EXIT_CHECK = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render_csv(columns, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


def render_json(command: str, cfg: ExperimentConfig, payload: dict) -> str:
    doc = {"artifact_version": __version__, "command": command, "config": cfg.to_dict(), **payload}
    return json.dumps(doc, indent=2) + "\n"


def _emit(text: str, out):
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="") as fh:
            fh.write(text)


def _config_from_args(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {}
    for name in ("seed", "mode", "trials", "workers"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    return cfg.replace(**overrides) if overrides else cfg


def _cmd_ber(args, cfg):
    curve = harness.run_ber_experiment(cfg)
    if args.format == "csv":
        return render_csv(curve.columns, curve.rows), EXIT_OK
    return render_json("ber", cfg, {"rows": curve.rows}), EXIT_OK


def _cmd_llr_hist(args, cfg):
    choices = {"full": [True], "diagonal": [False], "both": [True, False]}[args.correlation]
    hists = [harness.run_llr_histogram(cfg, c) for c in choices]
    rows = [r for h in hists for r in h.rows]
    summary = [s for h in hists for s in h.summary]
    for s in summary:
        print(render_csv(harness.LlrHistogram.summary_columns, [s]).splitlines()[1], file=sys.stderr)
    if args.format == "csv":
        return render_csv(harness.LlrHistogram.columns, rows), EXIT_OK
    return render_json("llr-hist", cfg, {"summary": summary, "rows": rows}), EXIT_OK


def _cmd_probe_validate(args, cfg):
    report = harness.run_probe_validation(cfg)
    for c in report.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.value:.6g} "
              f"(expected {c.expected:g} +/- {c.tolerance:g})", file=sys.stderr)
    code = EXIT_OK if report.passed else EXIT_CHECK
    if args.format == "csv":
        return render_csv(report.columns, report.rows), code
    return render_json("probe-validate", cfg, {"passed": report.passed, "checks": report.rows}), code


def _cmd_cov_check(args, cfg):
    report = harness.run_covariance_check(cfg)
    for c in report.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.value:.6g}", file=sys.stderr)
    code = EXIT_OK if report.passed else EXIT_CHECK
    if args.format == "csv":
        return render_csv(report.columns, report.rows), code
    checks = [vars(c) for c in report.checks]
    return render_json("cov-check", cfg, {"passed": report.passed, "rows": report.rows,
                                          "checks": checks}), code


COMMANDS = {
    "ber": (_cmd_ber, "eavesdropper BER versus averaging time and line loss"),
    "llr-hist": (_cmd_llr_hist, "histograms of the log-likelihood-ratio statistic"),
    "probe-validate": (_cmd_probe_validate, "calibrate the wave probe and check it as a reflectometer"),
    "cov-check": (_cmd_cov_check, "compare simulated wave covariances with the closed form"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat TOML file of ExperimentConfig fields")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--mode", choices=("analytic", "probe"), help="override the config mode")
    common.add_argument("--trials", type=int, help="override the config trial count")
    common.add_argument("--workers", type=int, help="worker processes")

    parser = _Parser(prog="kkdwave", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_text)
        if name == "llr-hist":
            p.add_argument("--correlation", choices=("full", "diagonal", "both"), default="both",
                           help="full covariance, decorrelated baseline, or both")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config_from_args(args)
        text, code = COMMANDS[args.command][0](args, cfg)
    except ParameterError as exc:
        print(f"kkdwave: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except KKDError as exc:
        print(f"kkdwave: {exc}", file=sys.stderr)
        return EXIT_CHECK
    _emit(text, args.out)
    return code


if __name__ == "__main__":
    sys.exit(main())
