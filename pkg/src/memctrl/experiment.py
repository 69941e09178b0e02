"""Training dispatch, checkpoints and the full controller comparison."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from .baseline import PidController, PidGains, tune_gains, write_tuning_csv
from .fmc import FmcController, FmcWeights
from .harness import (compare_report, episodes_to_plateau, run_episode, write_trace_csv)
from .lstmctrl import (ClosedLoopLstmController, InverseModel, OpenLoopLstmController,
                       generate_dataset, train_inverse)
from .nn import CheckpointError, dump_checkpoint, load_checkpoint, network_from_dict, network_to_dict
from .plant import SoftFingerPlant
from .rl.baselines import NetworkController, train_baseline_rl
from .rl.common import TrainerConfig, write_trainlog_csv
from .rl.ddpg import actor_to_fmc, train_fmc_ddpg
from .rl.dqn import DqnController, DqnPolicy, train_fmc_dqn
from .rl.sac import train_fmc_sac

RL_ALGOS = ("fmc-ddpg", "fmc-dqn", "fmc-sac", "baseline-ddpg", "baseline-dqn", "baseline-sac")
TRAIN_ALGOS = RL_ALGOS + ("lstm-inverse",)
# rows of the headline table, in reporting order
TABLE_CONTROLLERS = ("fmc-ddpg", "fmc-dqn", "fmc-sac", "lstm-open", "lstm-closed", "pi")
BASELINE_PAIRS = {"fmc-ddpg": "baseline-ddpg", "fmc-dqn": "baseline-dqn",
                  "fmc-sac": "baseline-sac"}


def make_plant(cfg):
    return SoftFingerPlant(cfg.plant)


def run_meta(cfg, algorithm, **extra):
    return {"algorithm": algorithm, "seed": cfg.seed, "config_hash": cfg.config_hash(), **extra}


@dataclass
class Trained:
    """A trained controller plus what it takes to persist it."""
    name: str
    kind: str                 # checkpoint kind
    payload: dict
    log: object = None        # TrainLog for RL trainers
    extra: dict = field(default_factory=dict)

    def controller(self, cfg, mode=None):
        return controller_from_payload(self.kind, self.payload, cfg, mode, self.name)


def _episode(index):
    return None if index is None else index + 1


def _net_or_none(net):
    return None if net is None else network_to_dict(net)


def train_rl(algo, cfg) -> Trained:
    if algo not in RL_ALGOS:
        raise ValueError(f"unknown RL algorithm {algo!r}")
    plant = make_plant(cfg)
    ref = cfg.harness.train_reference(cfg.plant.theta_max)
    tc = cfg.trainer
    if algo == "fmc-ddpg":
        w, log = train_fmc_ddpg(plant, ref, tc)
        snap = None if log.snapshot is None else actor_to_fmc(log.snapshot, tc.error_norm,
                                                              tc.out_scale)
        return Trained(algo, "fmc", _fmc_payload(w, snap, log), log)
    if algo == "fmc-sac":
        w, log = train_fmc_sac(plant, ref, tc)
        snap = None if log.snapshot is None else actor_to_fmc(log.snapshot.mean, tc.error_norm,
                                                              tc.out_scale)
        return Trained(algo, "fmc", _fmc_payload(w, snap, log), log)
    if algo == "fmc-dqn":
        pol, log = train_fmc_dqn(plant, ref, tc)
        payload = {"qnet": network_to_dict(pol.qnet), "snapshot_qnet": _net_or_none(log.snapshot),
                   "action_set": list(pol.action_set), "k": pol.k, "error_norm": pol.error_norm,
                   "best_episode": _episode(log.best_index)}
        return Trained(algo, "dqn", payload, log)
    base = algo.split("-", 1)[1]
    net, log = train_baseline_rl(plant, ref, tc, base)
    snap = log.snapshot.mean if base == "sac" and log.snapshot is not None else log.snapshot
    payload = {"algo": base, "network": network_to_dict(net), "snapshot_network": _net_or_none(snap),
               "k": tc.k, "obs": tc.baseline_obs, "error_norm": tc.error_norm,
               "out_scale": tc.out_scale, "action_set": list(tc.action_set),
               "best_episode": _episode(log.best_index)}
    return Trained(algo, "baseline", payload, log)


def _fmc_payload(best: FmcWeights, snap, log):
    return {"weights": best.to_dict(), "snapshot_weights": None if snap is None else snap.to_dict(),
            "best_episode": _episode(log.best_index),
            "snapshot_episode": _episode(log.snapshot_index)}


def fit_inverse(cfg, dataset=None):
    """Generate (unless given) the excitation dataset and train the inverse model."""
    plant = make_plant(cfg)
    ds = dataset if dataset is not None else generate_dataset(
        plant, cfg.excitation, cfg.lstm.dataset_size)
    model, report = train_inverse(ds, **cfg.lstm.train_kwargs())
    payload = model.to_dict()
    payload.update(val_mse=report.val_mse, val_rel_error=report.val_rel_error)
    return Trained("lstm-inverse", "inverse", payload,
                   extra={"dataset": ds, "report": report})


def tune_pi(cfg):
    ref = (cfg.harness.test_reference(cfg.plant.theta_max) if cfg.harness.pid_tune_on == "test"
           else cfg.harness.train_reference(cfg.plant.theta_max))
    best, rows = tune_gains(lambda: make_plant(cfg), ref, cfg.baseline)
    return Trained("pi", "pid", {"gains": best.to_dict()}, extra={"rows": rows})


def controller_from_payload(kind, payload, cfg, mode=None, name=None):
    lo, hi = cfg.plant.u_min, cfg.plant.u_max
    if kind == "inverse":
        model = InverseModel.from_dict(payload)
        if mode == "open":
            return OpenLoopLstmController(model, lo, hi, name=name or "lstm-open")
        return ClosedLoopLstmController(model, lo, hi, name=name or "lstm-closed")
    if mode == "open":
        raise ValueError(f"open-loop mode only applies to the LSTM inverse model, not {kind!r}")
    if kind == "fmc":
        return FmcController(FmcWeights.from_dict(payload["weights"]), lo, hi, name=name or "fmc")
    if kind == "dqn":
        pol = DqnPolicy(network_from_dict(payload["qnet"]), payload["action_set"],
                        int(payload["k"]), float(payload["error_norm"]))
        return DqnController(pol, lo, hi, name=name or "fmc-dqn")
    if kind == "baseline":
        tc = TrainerConfig(k=int(payload["k"]), baseline_obs=payload["obs"],
                           error_norm=float(payload["error_norm"]),
                           out_scale=float(payload["out_scale"]),
                           action_set=tuple(payload["action_set"]))
        return NetworkController(network_from_dict(payload["network"]), payload["algo"], tc,
                                 lo, hi, cfg.plant.theta_max, name=name)
    if kind == "pid":
        return PidController(PidGains(**payload["gains"]), lo, hi, name=name or "pi")
    raise CheckpointError(f"unknown checkpoint kind {kind!r}")


def save_trained(path, trained: Trained, cfg):
    meta = run_meta(cfg, trained.name)
    return dump_checkpoint(path, trained.kind, trained.payload, meta)


def load_controller(path, cfg, mode=None):
    doc = load_checkpoint(path)
    kind = doc["kind"]
    name = doc.get("meta", {}).get("algorithm")
    if kind == "inverse":
        name = "lstm-open" if mode == "open" else "lstm-closed"
    return controller_from_payload(kind, doc, cfg, mode, name), doc


# ---- comparison suite

def _task(args):
    name, cfg = args
    if name in RL_ALGOS:
        return train_rl(name, cfg)
    if name == "lstm-inverse":
        return fit_inverse(cfg)
    if name == "pi":
        return tune_pi(cfg)
    raise ValueError(name)


@dataclass
class ComparisonResult:
    cfg: object
    trained: dict             # task name -> Trained
    traces: dict              # controller name -> EpisodeTrace on the test reference
    report: object            # harness.ComparisonReport over TABLE_CONTROLLERS
    plateau: dict             # trainer name -> episodes to 90% of plateau
    baseline_traces: dict = field(default_factory=dict)

    def error(self, name):
        return self.report.error_of(name)


def comparison_tasks(cfg):
    names = ["fmc-ddpg", "fmc-dqn", "fmc-sac"]
    if cfg.harness.run_baselines:
        names += ["baseline-ddpg", "baseline-dqn", "baseline-sac"]
    return names + ["lstm-inverse", "pi"]


def run_comparison(cfg, jobs=1, tasks=None) -> ComparisonResult:
    """Train every controller under one seed and evaluate on the test reference.

    Tasks are independent; with ``jobs > 1`` they run in worker processes and
    results are merged by task name, so the outcome does not depend on ``jobs``.
    """
    names = list(tasks or comparison_tasks(cfg))
    work = [(n, cfg) for n in names]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            done = list(ex.map(_task, work))
    else:
        done = [_task(w) for w in work]
    trained = dict(zip(names, done))

    ref = cfg.harness.test_reference(cfg.plant.theta_max)
    traces, logs = {}, {}
    for name in TABLE_CONTROLLERS:
        if name in ("lstm-open", "lstm-closed"):
            src = trained.get("lstm-inverse")
            mode = "open" if name == "lstm-open" else "closed"
        else:
            src, mode = trained.get(name), None
        if src is None:
            continue
        ctrl = controller_from_payload(src.kind, src.payload, cfg, mode, name)
        traces[name] = run_episode(ctrl, make_plant(cfg), ref)
        logs[name] = src.log
    baseline_traces = {}
    for name in ("baseline-ddpg", "baseline-dqn", "baseline-sac"):
        if name in trained:
            ctrl = trained[name].controller(cfg)
            baseline_traces[name] = run_episode(ctrl, make_plant(cfg), ref)
    report = compare_report([(n, traces[n], logs[n]) for n in traces])
    plateau = {n: episodes_to_plateau(t.log.mean_rewards) for n, t in trained.items()
               if t.log is not None and len(t.log)}
    return ComparisonResult(cfg, trained, traces, report, plateau, baseline_traces)


def write_comparison(result: ComparisonResult, out_dir):
    cfg = result.cfg
    header = {"seed": cfg.seed, "config_hash": cfg.config_hash()}
    os.makedirs(out_dir, exist_ok=True)
    runs = [(n, tr, result.trained[n].log if n in result.trained else None)
            for n, tr in result.traces.items()]
    report = compare_report(runs, out_dir, header)
    if result.baseline_traces:
        base = compare_report([(n, tr, result.trained[n].log)
                               for n, tr in result.baseline_traces.items()])
        with open(os.path.join(out_dir, "baselines.csv"), "w") as fh:
            for k, v in header.items():
                fh.write(f"# {k}={v}\n")
            fh.write("controller,avg_error,max_error\n")
            for n, avg, mx in base.rows:
                fh.write(f"{n},{avg!r},{mx!r}\n")
        for n in result.baseline_traces:
            write_trainlog_csv(os.path.join(out_dir, f"rewards_{n}.csv"), result.trained[n].log,
                               header)
    tdir = os.path.join(out_dir, "traces")
    cdir = os.path.join(out_dir, "checkpoints")
    os.makedirs(tdir, exist_ok=True)
    os.makedirs(cdir, exist_ok=True)
    for name, tr in list(result.traces.items()) + list(result.baseline_traces.items()):
        write_trace_csv(os.path.join(tdir, f"{name}.csv"), tr, {**header, "controller": name})
    for name, t in result.trained.items():
        save_trained(os.path.join(cdir, f"{name}.json"), t, cfg)
    if "pi" in result.trained:
        write_tuning_csv(os.path.join(out_dir, "pid_tuning.csv"),
                         result.trained["pi"].extra["rows"], header)
    with open(os.path.join(out_dir, "plateau.csv"), "w") as fh:
        for k, v in header.items():
            fh.write(f"# {k}={v}\n")
        fh.write("trainer,episodes_to_plateau\n")
        for name, n in result.plateau.items():
            fh.write(f"{name},{n}\n")
    write_config_echo(cfg, out_dir)
    return report


def write_config_echo(cfg, out_dir):
    path = os.path.join(out_dir, "config.cfg")
    with open(path, "w") as fh:
        fh.write(f"# config_hash={cfg.config_hash()}\n")
        fh.write(cfg.to_text())
    return path
