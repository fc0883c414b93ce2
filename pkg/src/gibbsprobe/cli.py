"""Command-line entry point: ``gibbsprobe <subcommand> [options]``.

Options may also come from a JSON file given with ``--config``; its keys are
the long option names with dashes replaced by underscores. Flags on the
command line win over the file. When no seed is given anywhere, the
``GIBBSPROBE_SEED`` environment variable is used.

Exit status is 0 on success, 1 when inputs fail validation and 2 when a
``reproduce`` comparison fails.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .error_est import estimate_error
from .iso import LearnConfig, learn_neighborhoods, write_learning_outputs
from .model import exact_distribution, read_model
from .reproduce import TARGETS, four_spin_system, oracle_table, run_target, write_checks
from .response import (Roster, fit_quadratic, key_name, read_pairs, simulate_response_pipeline,
                       write_pairs)
from .sampler import (blackbox_collect, read_noise, read_samples, sample_exact,
                      sample_noisy, write_samples)
from .single_qubit import KINDS, fit_scan, read_scan

log = logging.getLogger("gibbsprobe")

EXIT_OK, EXIT_INVALID, EXIT_ACCEPTANCE = 0, 1, 2

# fallback values applied after the command line and the config file
DEFAULTS = {
    "sample": {"mode": "exact", "num_reads": 100000, "batch_size": None},
    "learn": {"order": 2, "grad_tol": 1e-9, "max_iter": 200, "l1": 0.0},
    "error-est": {"num_reads": 1000000, "replicates": 10, "order": 2},
    "fit-single": {"kind": "all"},
    "respond": {"n_models": 20000, "mode": "exact", "num_reads": 4000000, "convention": "symmetric"},
    "oracle": {},
    "reproduce": {"target": "all", "reduced": False, "n_models": 20000},
}


class UsageError(ValueError):
    pass


def _csv_writer(stream):
    return csv.writer(stream, lineterminator="\n")


def _fmt(v):
    return repr(float(v))


def _parse_edges(text):
    edges = []
    for item in text if isinstance(text, list) else text.split(","):
        pair = item if isinstance(item, list) else item.strip().split("-")
        if len(pair) != 2:
            raise UsageError(f"edge {item!r} is not of the form i-j")
        edges.append(tuple(sorted(int(v) for v in pair)))
    return edges


def _require(args, *names):
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))


# ------------------------------------------------------------ subcommands

def cmd_sample(args, out):
    _require(args, "model", "out")
    model = read_model(args.model)
    M = int(args.num_reads)
    if args.mode == "exact":
        samples = sample_exact(exact_distribution(model), M, args.seed)
    elif args.mode == "noisy":
        _require(args, "noise")
        samples = sample_noisy(model, read_noise(args.noise), M, args.seed)
    elif args.mode == "blackbox":
        _require(args, "sampler_command")
        samples = blackbox_collect(args.sampler_command, model, M, args.batch_size, args.seed)
    else:
        raise UsageError(f"unknown sampling mode {args.mode!r}")
    samples.meta.setdefault("seed", args.seed)
    write_samples(samples, args.out)
    w = _csv_writer(out)
    w.writerow(["file", "spins", "total", "distinct"])
    w.writerow([args.out, samples.n_spins, samples.total, len(samples.counts)])
    return EXIT_OK


def cmd_learn(args, out):
    _require(args, "samples", "out")
    samples = read_samples(args.samples)
    config = LearnConfig(order=int(args.order), grad_tol=float(args.grad_tol),
                         max_iter=int(args.max_iter), l1_penalty=float(args.l1))
    nbs = learn_neighborhoods(samples, config, args.threads)
    model, report_path = write_learning_outputs(nbs, config, args.out, args.report)
    w = _csv_writer(out)
    w.writerow(["term", "value"])
    for key in sorted(model.terms, key=lambda k: (len(k), k)):
        w.writerow(["-".join(map(str, key)), _fmt(model[key])])
    return EXIT_OK


def cmd_error_est(args, out):
    _require(args, "model")
    reference = read_model(args.model)
    report = estimate_error(reference, int(args.num_reads), int(args.replicates),
                            LearnConfig(order=int(args.order)), args.seed, args.threads)
    if args.json:
        report.write_json(args.json)
    w = _csv_writer(out)
    w.writerow(["term", "mean", "sigma"])
    for k, m, s in zip(report.keys, report.mean, report.sigma):
        w.writerow(["-".join(map(str, k)), _fmt(m), _fmt(s)])
    w.writerow(["threshold", _fmt(report.threshold), ""])
    return EXIT_OK


def cmd_fit_single(args, out):
    _require(args, "scan")
    scan = read_scan(args.scan)
    kinds = KINDS if args.kind == "all" else (args.kind,)
    fits = [fit_scan(scan, kind) for kind in kinds]
    if args.out:
        Path(args.out).write_text(json.dumps([f.to_dict() for f in fits], indent=1) + "\n")
    w = _csv_writer(out)
    w.writerow(["kind", "beta", "h_res0", "xi", "h_sd", "loglik"])
    for f in fits:
        w.writerow([f.kind, _fmt(f.beta), _fmt(f.h_res0), _fmt(f.xi), _fmt(f.h_sd), _fmt(f.log_likelihood)])
    return EXIT_OK


def _roster_and_noise(args):
    if args.noise is None and args.edges is None:
        return four_spin_system()
    _require(args, "noise", "edges")
    noise = read_noise(args.noise)
    return Roster.ising(noise.n_spins, _parse_edges(args.edges)), noise


def cmd_respond(args, out):
    if args.pairs:
        X, Y, input_keys, output_keys = read_pairs(args.pairs)
        rf = fit_quadratic(X, Y, input_keys, output_keys)
    else:
        roster, noise = _roster_and_noise(args)
        rf, diag = simulate_response_pipeline(noise, roster, int(args.n_models), seed=args.seed,
                                              mode=args.mode, M=int(args.num_reads), workers=args.threads)
        if args.pairs_out:
            write_pairs(diag["inputs"], diag["outputs"], roster.input_keys, roster.output_keys, args.pairs_out)
    if args.out:
        rf.write_json(args.out, args.convention)
    factor = 2.0 - np.eye(len(rf.input_keys)) if args.convention == "main-text" else 1.0
    w = _csv_writer(out)
    w.writerow(["output", "coefficient", "input_a", "input_b", "value"])
    for o, key in enumerate(rf.output_keys):
        name = key_name(key)
        w.writerow([name, "offset", "", "", _fmt(rf.offset[o])])
        for a, ka in enumerate(rf.input_keys):
            w.writerow([name, "lin", key_name(ka), "", _fmt(rf.lin[o, a])])
        chi = rf.chi[o] * factor
        for a, ka in enumerate(rf.input_keys):
            for b in range(a, len(rf.input_keys)):
                w.writerow([name, "chi", key_name(ka), key_name(rf.input_keys[b]), _fmt(chi[a, b])])
    return EXIT_OK


def cmd_oracle(args, out):
    w = _csv_writer(out)
    w.writerow(["motif", "beta", "a", "b", "h_sd", "closed_form", "brute_force", "abs_gap"])
    for motif, beta, a, b, sd, closed, brute in oracle_table():
        w.writerow([motif, _fmt(beta), _fmt(a), _fmt(b), _fmt(sd), _fmt(closed), _fmt(brute),
                    _fmt(abs(closed - brute))])
    return EXIT_OK


def cmd_reproduce(args, out):
    targets = TARGETS if args.target == "all" else (args.target,)
    if any(t not in TARGETS for t in targets):
        raise UsageError(f"unknown target {args.target!r}; choose from all, {', '.join(TARGETS)}")
    seed = 0 if args.seed is None else args.seed
    checks = []
    for t in targets:
        checks += run_target(t, seed=seed, reduced=bool(args.reduced), n_models=int(args.n_models),
                             workers=args.threads)
    write_checks(checks, out)
    for c in checks:
        print(c.line(), file=sys.stderr)
    failed = [c for c in checks if not c.informational and not c.passed]
    print(f"{len(checks) - len(failed)} of {len(checks)} checks passed or informational", file=sys.stderr)
    return EXIT_ACCEPTANCE if failed else EXIT_OK


COMMANDS = {
    "sample": cmd_sample,
    "learn": cmd_learn,
    "error-est": cmd_error_est,
    "fit-single": cmd_fit_single,
    "respond": cmd_respond,
    "oracle": cmd_oracle,
    "reproduce": cmd_reproduce,
}


# ------------------------------------------------------------ parsing

class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad arguments, which is reserved for failed comparisons
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="gibbsprobe",description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--config", help="JSON file with option values")
    p.add_argument("--threads", type=int, help="maximum worker threads")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--seed", type=int)
        return sp

    sp = add("sample", "draw samples from a model file")
    sp.add_argument("--model")
    sp.add_argument("--out")
    sp.add_argument("-M", "--num-reads", type=int)
    sp.add_argument("--mode", choices=("exact", "noisy", "blackbox"))
    sp.add_argument("--noise", help="noise specification JSON (noisy mode)")
    sp.add_argument("--command", dest="sampler_command", help="external sampler command (blackbox mode)")
    sp.add_argument("--batch-size", type=int)

    sp = add("learn", "reconstruct a model from a sample file")
    sp.add_argument("--samples")
    sp.add_argument("--out", help="learned model JSON")
    sp.add_argument("--report", help="report JSON (default: next to --out)")
    sp.add_argument("-k", "--order", type=int)
    sp.add_argument("--grad-tol", type=float)
    sp.add_argument("--max-iter", type=int)
    sp.add_argument("--l1", type=float)

    sp = add("error-est", "replicate-based reconstruction error of a reference model")
    sp.add_argument("--model")
    sp.add_argument("-M", "--num-reads", type=int)
    sp.add_argument("-R", "--replicates", type=int)
    sp.add_argument("-k", "--order", type=int)
    sp.add_argument("--json", help="also write the report as JSON")

    sp = add("fit-single", "fit single-spin response models to a field scan")
    sp.add_argument("--scan", help="CSV with columns h_in,S,M")
    sp.add_argument("--kind", choices=KINDS + ("all",))
    sp.add_argument("--out", help="fit JSON")

    sp = add("respond", "simulate or fit a quadratic response function")
    sp.add_argument("--noise", help="noise specification JSON (default: calibrated four-spin system)")
    sp.add_argument("--edges", help="programmed couplers, e.g. 0-1,0-3,1-2,2-3")
    sp.add_argument("--n-models", type=int)
    sp.add_argument("--mode", choices=("exact", "samples"))
    sp.add_argument("-M", "--num-reads", type=int)
    sp.add_argument("--pairs", help="fit an existing pairs CSV instead of simulating")
    sp.add_argument("--pairs-out", help="write the simulated pairs CSV")
    sp.add_argument("--out", help="response function JSON")
    sp.add_argument("--convention", choices=("symmetric", "main-text"))

    add("oracle", "closed-form vs brute-force noise oracle table")

    sp = add("reproduce", "run a reproduction target and compare with reference values")
    sp.add_argument("--target", help="one of: all, " + ", ".join(TARGETS))
    sp.add_argument("--reduced", action="store_const", const=True)
    sp.add_argument("--n-models", type=int)
    return p


def resolve(args, environ=None):
    """Fill unset options from the config file, then defaults, then the environment seed."""
    environ = os.environ if environ is None else environ
    config = {}
    if args.config:
        try:
            config = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(config, dict):
            raise UsageError(f"config {args.config} must hold a JSON object")
    known = set(vars(args)) - {"command", "config"}
    unknown = set(config) - known
    if unknown:
        raise UsageError("unknown config key(s): " + ", ".join(sorted(unknown)))
    for key, value in config.items():
        if getattr(args, key) is None:
            setattr(args, key, value)
    for key, value in DEFAULTS[args.command].items():
        if getattr(args, key, None) is None:
            setattr(args, key, value)
    if args.seed is None and environ.get("GIBBSPROBE_SEED"):
        try:
            args.seed = int(environ["GIBBSPROBE_SEED"])
        except ValueError:
            raise UsageError("GIBBSPROBE_SEED must be an integer") from None
    if args.threads is not None and args.threads < 1:
        raise UsageError("--threads must be positive")
    return args


def main(argv=None, out=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = out or sys.stdout
    try:
        resolve(args)
        return COMMANDS[args.command](args, out)
    except BrokenPipeError:
        # output was piped into something that stopped reading, e.g. head
        sys.stderr.close()
        return EXIT_OK
    except (UsageError, ValueError, OSError, RuntimeError) as exc:
        print(f"gibbsprobe {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
