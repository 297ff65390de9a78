"""Command-line driver: ``python -m transport.cli <command> --config run.toml``.

Writes ``results.csv``, ``curves/*.csv`` and ``manifest.json`` into the
output directory. ``results.csv`` depends only on the configuration and the
seed (never on ``--workers``); timings live in the manifest.
"""

from __future__ import annotations

import argparse
import csv
import json
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import config as cf
from . import estimators as est
from .ensemble import gather, map_blocks
from .experiments import (Experiment, equilibrium_block, nemd_block, norton_block, sample_block,
                          transient_block, ttcf_block)
from .norton import norton_transport

FIELDS = ("method", "value", "stderr", "K", "T", "dt", "eta_or_r", "flags")
FAIL_FRACTION = 0.10


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


class Runner:
    def __init__(self, cfg: cf.RunConfig):
        self.cfg = cfg
        self.model = cf.build_model(cfg)
        self.scheme = cf.build_scheme(cfg)
        self.forcing = cf.build_forcing(cfg)
        self.response = cf.build_response(cfg)
        self.e = cfg.estimator
        self.dt = self.scheme.dt
        self.rows: list[dict] = []
        self.curves: dict[str, np.ndarray] = {}
        self.failed = 0
        self.total = 0

    # -- helpers
    def steps(self, t):
        return int(round(t / self.dt))

    def experiment(self, **kw) -> Experiment:
        e = self.e
        n = self.steps(e["T"])
        base = dict(model=self.model, scheme=self.scheme, forcing=self.forcing, response=self.response,
                    n_steps=n, burn_in=int(round(0.1 * n)) if e["burn_in"] is None else int(e["burn_in"]),
                    equilibrate=self.steps(e["equilibrate"]), stride=int(e["stride"]), seed=self.cfg.seed,
                    alpha=float(e["alpha"]))
        base.update(kw)
        return Experiment(**base)

    def run(self, fn, exp):
        out = map_blocks(fn, exp, int(self.e["K"]), self.cfg.workers, int(self.e["block"]))
        if "failed" in out[0]:
            f = gather(out, "failed")
            self.failed += int(f.sum())
            self.total += f.size
        return out

    def add(self, res: est.EstimateResult, eta_or_r=None, dt=None):
        self.rows.append({"method": res.method, "value": res.value, "stderr": res.stderr, "K": res.n_replicas,
                          "T": res.truncation_time, "dt": self.dt if dt is None else dt,
                          "eta_or_r": eta_or_r, "flags": ";".join(res.flags)})

    def grid(self, key):
        vals = (self.cfg.forcing or {}).get(key) or []
        if not vals:
            raise cf.ConfigError([f"[forcing] {key} grid is empty"])
        return [float(v) for v in vals]

    def need_forcing(self):
        if self.forcing is None or self.response is None:
            raise cf.ConfigError(["this command needs [forcing] and [response]"])

    # -- commands
    def sample(self):
        dts = [float(x) for x in (self.e["dts"] or [self.dt])]
        from dataclasses import replace
        biases = []
        for h in dts:
            sc = replace(self.scheme, dt=h)
            n = int(round(self.e["T"] / h))
            exp = self.experiment(scheme=sc, n_steps=n,
                                  burn_in=int(round(0.1 * n)) if self.e["burn_in"] is None else int(self.e["burn_in"]),
                                  equilibrate=int(round(self.e["equilibrate"] / h)))
            avg = gather(self.run(sample_block, exp), "avg")
            m, se = est._mean_se(avg)
            self.add(est.EstimateResult(m, se, avg.size, "sample_V", truncation_time=self.e["T"]), dt=h)
            if self.e["reference"] is not None:
                biases.append(abs(m - float(self.e["reference"])))
        if len(biases) >= 2:
            from .statistics import loglog_slope
            s = loglog_slope(dts, biases)
            self.add(est.EstimateResult(float(s), 0.0, len(dts), "bias_slope"), dt=float("nan"))

    def nemd(self, fit=False):
        self.need_forcing()
        etas = self.grid("eta")
        means, ses = [], []
        for eta in etas:
            out = self.run(nemd_block, self.experiment(eta=eta))
            R = gather(out, "R")
            res = est.nemd_estimate(R, eta, self.dt * self.e["stride"], int(self.e["n_batches"]))
            self.add(res, eta)
            means.append(res.value * eta)
            ses.append(res.stderr * abs(eta))
        if fit:
            res = est.nemd_eta_scan(etas, means, ses, int(self.e["degree"]))
            self.add(res)

    def gk(self):
        self.need_forcing()
        out = self.run(equilibrium_block, self.experiment())
        R, S = gather(out, "R"), gather(out, "S")
        res = est.green_kubo(R, S[0], self.dt * self.e["stride"], self.e["T_corr"])
        self.add(res)
        self.curves["gk"] = np.column_stack(res.curve)

    def einstein(self):
        self.need_forcing()
        out = self.run(equilibrium_block, self.experiment(burn_in=0))
        R, S = gather(out, "R"), gather(out, "S")
        T = self.e["T_corr"] or self.e["T"]
        self.add(est.einstein_windowed(R, S, self.dt * self.e["stride"], self.e["weight"], T))
        disp = gather(out, "disp", axis=-1).T
        self.add(est.msd_diffusion(disp, self.e["T"], beta=self.scheme.beta))

    def ttcf(self):
        self.need_forcing()
        for eta in self.grid("eta"):
            out = self.run(ttcf_block, self.experiment(eta=eta))
            res = est.ttcf(gather(out, "R"), gather(out, "S0"), self.dt * self.e["stride"], self.e["T_corr"])
            self.add(res, eta)
            self.curves[f"ttcf_eta{eta:g}"] = np.column_stack(res.curve)

    def transient(self):
        self.need_forcing()
        for eta in self.grid("eta"):
            out = self.run(transient_block, self.experiment(eta=eta))
            Rx, Ry = gather(out, "Rx"), gather(out, "Ry")
            h = self.dt * self.e["stride"]
            self.add(est.transient_plain(Rx, eta, h, self.e["T_corr"]), eta)
            self.add(est.transient_subtraction(Rx, Ry, eta, h, self.e["T_corr"]), eta)

    def norton(self):
        self.need_forcing()
        rs = self.grid("r")
        means, ses = [], []
        for r in rs:
            out = self.run(norton_block, self.experiment(r=r))
            lam = gather(out, "lam")
            m, se = est._mean_se(lam)
            self.add(est.EstimateResult(m, se, lam.size, "norton_lambda", truncation_time=self.e["T"]), r)
            means.append(m)
            ses.append(se)
        self.add(norton_transport(rs, means, ses))


def run_command(cfg: cf.RunConfig, command: str, out: Path) -> int:
    t0 = time.time()
    out.mkdir(parents=True, exist_ok=True)
    runner = Runner(cfg)
    dispatch = {"sample": runner.sample, "nemd": runner.nemd, "scan": lambda: runner.nemd(fit=True),
                "gk": runner.gk, "einstein": runner.einstein, "ttcf": runner.ttcf,
                "transient": runner.transient, "norton": runner.norton}
    dispatch[command]()
    with open(out / "results.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, FIELDS, lineterminator="\n")
        w.writeheader()
        for row in runner.rows:
            w.writerow({k: _fmt(row[k]) for k in FIELDS})
    if runner.curves:
        (out / "curves").mkdir(exist_ok=True)
        for name, arr in runner.curves.items():
            np.savetxt(out / "curves" / f"{name}.csv", arr, delimiter=",", header="t,value", comments="",
                       fmt="%.17g")
    frac = runner.failed / runner.total if runner.total else 0.0
    manifest = {"command": command, "config": cf.to_dict(cfg), "seed": cfg.seed, "workers": cfg.workers,
                "wall_seconds": time.time() - t0, "failed_replicas": runner.failed,
                "failed_fraction": frac,
                "versions": {"python": platform.python_version(), "numpy": np.__version__,
                             "scipy": scipy.__version__}}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    if frac > FAIL_FRACTION:
        print(f"error: {runner.failed}/{runner.total} replicas failed", file=sys.stderr)
        return 3
    return 0


def report(runs: list[Path], out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for r in runs:
        path = Path(r) / "results.csv"
        if not path.is_file():
            print(f"error: {path} not found", file=sys.stderr)
            return 2
        with open(path) as fh:
            for row in csv.DictReader(fh):
                rows.append({"run": str(r), **row})
    if not rows:
        print("error: no results found", file=sys.stderr)
        return 2
    with open(out / "report.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, ("run",) + FIELDS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    width = max(len(r["method"]) for r in rows)
    for r in rows:
        v = float(r["value"]) if r["value"] else float("nan")
        s = float(r["stderr"]) if r["stderr"] else float("nan")
        print(f"{r['method']:<{width}}  {v:12.6g} +- {s:<10.3g} eta/r={r['eta_or_r'] or '-'}  {r['run']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="transport", description="Transport-coefficient estimators.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in cf.COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--out", type=Path)
        if name == "report":
            p.add_argument("runs", nargs="+", type=Path)
            continue
        p.add_argument("--config", type=Path, required=True)
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "report":
        return report(args.runs, args.out or Path("report"))
    try:
        data = cf.tomllib.loads(args.config.read_text())
        for o in args.override:
            cf.apply_override(data, o)
        if args.seed is not None:
            data["seed"] = args.seed
        if args.workers is not None:
            data["workers"] = args.workers
        if args.out is not None:
            data["out"] = str(args.out)
        cfg = cf.parse_dict(data)
    except (cf.ConfigError, cf.tomllib.TOMLDecodeError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    try:
        return run_command(cfg, args.command, Path(cfg.out))
    except cf.ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
