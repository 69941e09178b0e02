"""Command-line entry point: ``memctrl <subcommand> [options]``.

Exit codes: 0 success, 1 runtime failure (a ``diagnostics.json`` is written to
the output directory), 2 usage or configuration error. Failures also print a
single JSON line starting with ``error:`` on stderr.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import traceback

from . import experiment as ex
from .config import ConfigError, default_config, load_config
from .harness import avg_tracking_error, max_tracking_error, run_episode, write_trace_csv
from .lstmctrl import InverseDataset, generate_dataset
from .baseline import write_tuning_csv
from .nn import CheckpointError, gradcheck_suite
from .rl.common import write_trainlog_csv

OUTPUT_ROOT_ENV = "MEMCTRL_OUTPUT_ROOT"
GRADCHECK_TOL = 1e-4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    p = _Parser(prog="memctrl", description="Memory-based soft finger controllers.")
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="INI config file (defaults apply when omitted)")
        sp.add_argument("--seed", type=int, help="run seed (overrides [run] seed)")
        sp.add_argument("--out", help=f"output directory (default: ${OUTPUT_ROOT_ENV} or ./runs, "
                                      "plus a per-command subdirectory)")
        return sp

    sp = common(sub.add_parser("gen-data", help="generate the inverse-model dataset"))
    sp.add_argument("--size", type=int, help="number of samples (default: [lstm] dataset_size)")
    sp = common(sub.add_parser("train", help="train one controller"))
    sp.add_argument("--algo", required=True, choices=ex.TRAIN_ALGOS)
    sp.add_argument("--data", help="dataset CSV for lstm-inverse (generated when omitted)")
    sp = common(sub.add_parser("eval", help="evaluate a checkpoint on the test reference"))
    sp.add_argument("--controller", required=True, help="checkpoint JSON")
    sp.add_argument("--mode", choices=("open", "closed"),
                    help="open or closed loop (LSTM inverse model only; default closed)")
    common(sub.add_parser("tune-pid", help="grid-search the PI baseline"))
    sp = common(sub.add_parser("compare", help="train and compare every controller"))
    sp.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    sp = common(sub.add_parser("gradcheck", help="finite-difference gradient check"))
    return p


def _output_dir(args, tag):
    if args.out:
        path = args.out
    else:
        path = os.path.join(os.environ.get(OUTPUT_ROOT_ENV, "runs"), tag)
    os.makedirs(path, exist_ok=True)
    return path


def _config(args):
    cfg = load_config(args.config) if args.config else default_config()
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _emit(obj):
    print(json.dumps(obj, sort_keys=True))


def cmd_gen_data(args, cfg, out):
    M = args.size if args.size is not None else cfg.lstm.dataset_size
    if M < 2:
        raise UsageError("--size must be >= 2")
    ds = generate_dataset(ex.make_plant(cfg), cfg.excitation, M)
    path = ds.to_csv(os.path.join(out, "dataset.csv"),
                     {"seed": cfg.seed, "config_hash": cfg.config_hash()})
    ex.write_config_echo(cfg, out)
    _emit({"dataset": path, "samples": len(ds), "clamped": ds.n_clamped})


def cmd_train(args, cfg, out):
    header = {"seed": cfg.seed, "config_hash": cfg.config_hash(), "algorithm": args.algo}
    if args.algo == "lstm-inverse":
        ds = InverseDataset.from_csv(args.data) if args.data else None
        trained = ex.fit_inverse(cfg, ds)
        rep = trained.extra["report"]
        with open(os.path.join(out, "loss.csv"), "w") as fh:
            for k, v in header.items():
                fh.write(f"# {k}={v}\n")
            fh.write("epoch,train_loss\n")
            for n, loss in enumerate(rep.train_loss):
                fh.write(f"{n + 1},{loss!r}\n")
        summary = {"val_mse": rep.val_mse, "val_rel_error": rep.val_rel_error}
    else:
        trained = ex.train_rl(args.algo, cfg)
        write_trainlog_csv(os.path.join(out, "trainlog.csv"), trained.log, header)
        summary = {"best_episode": trained.payload.get("best_episode"),
                   "final_mean_reward": trained.log.mean_rewards[-1] if len(trained.log) else None}
    ckpt = ex.save_trained(os.path.join(out, "checkpoint.json"), trained, cfg)
    ex.write_config_echo(cfg, out)
    _emit({"algorithm": args.algo, "checkpoint": ckpt, **summary})


def cmd_eval(args, cfg, out):
    try:
        ctrl, doc = ex.load_controller(args.controller, cfg, args.mode)
    except OSError as exc:
        raise UsageError(f"cannot read checkpoint: {exc}") from None
    except ValueError as exc:      # includes CheckpointError, bad JSON and bad --mode
        if isinstance(exc, (CheckpointError, json.JSONDecodeError)) or "open-loop mode" in str(exc):
            raise UsageError(str(exc)) from None
        raise
    ref = cfg.harness.test_reference(cfg.plant.theta_max)
    trace = run_episode(ctrl, ex.make_plant(cfg), ref)
    header = {"seed": cfg.seed, "config_hash": cfg.config_hash(), "controller": ctrl.name}
    path = write_trace_csv(os.path.join(out, f"trace_{ctrl.name}.csv"), trace, header)
    ex.write_config_echo(cfg, out)
    _emit({"controller": ctrl.name, "avg_error": avg_tracking_error(trace),
           "max_error": max_tracking_error(trace), "trace": path})


def cmd_tune_pid(args, cfg, out):
    trained = ex.tune_pi(cfg)
    header = {"seed": cfg.seed, "config_hash": cfg.config_hash()}
    write_tuning_csv(os.path.join(out, "pid_tuning.csv"), trained.extra["rows"], header)
    ckpt = ex.save_trained(os.path.join(out, "pid.json"), trained, cfg)
    ex.write_config_echo(cfg, out)
    best_err = min(e for g, e in trained.extra["rows"]
                   if g.to_dict() == trained.payload["gains"])
    _emit({"gains": trained.payload["gains"], "avg_error": best_err, "checkpoint": ckpt})


def cmd_compare(args, cfg, out):
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    result = ex.run_comparison(cfg, jobs=args.jobs)
    report = ex.write_comparison(result, out)
    _emit({"ranking": report.ranking,
           "avg_error": {n: a for n, a, _ in report.rows},
           "episodes_to_plateau": result.plateau, "table": report.files["table"]})


def cmd_gradcheck(args, cfg, out):
    cases = gradcheck_suite(cfg.seed)
    worst = max(e for _, e in cases)
    _emit({"cases": dict(cases), "max_rel_error": worst, "tolerance": GRADCHECK_TOL})
    return 0 if worst < GRADCHECK_TOL else 1


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "eval": cmd_eval,
            "tune-pid": cmd_tune_pid, "compare": cmd_compare, "gradcheck": cmd_gradcheck}


def _tag(args, cfg):
    name = args.command
    if args.command == "train":
        name += f"-{args.algo}"
    return f"{name}-seed{cfg.seed}"


def _fail(kind, message, code):
    print("error: " + json.dumps({"exit": code, "type": kind, "message": message},
                                 sort_keys=True), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
        cfg = _config(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        return _fail("usage", str(exc), 2)
    except (ConfigError, OSError) as exc:
        return _fail("config", str(exc), 2)
    out = None
    try:
        out = _output_dir(args, _tag(args, cfg))
        code = COMMANDS[args.command](args, cfg, out)
        return 0 if code is None else code
    except UsageError as exc:
        return _fail("usage", str(exc), 2)
    except Exception as exc:    # noqa: BLE001 - report every runtime failure the same way
        diag = {"command": args.command, "error": f"{type(exc).__name__}: {exc}",
                "diagnostics": getattr(exc, "diagnostics", {}),
                "traceback": traceback.format_exc()}
        if out is not None:
            path = os.path.join(out, "diagnostics.json")
            with open(path, "w") as fh:
                json.dump(diag, fh, indent=1, sort_keys=True, default=str)
        return _fail("runtime", f"{type(exc).__name__}: {exc}", 1)


if __name__ == "__main__":
    sys.exit(main())
