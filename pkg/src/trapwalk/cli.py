"""Experiment CLI: simulate, simulate-limit, verify-comb, phase-scan,
assumptions, report.

All state lives in the config file; --seed/--workers/--out/--strict
override single values.  Exit codes: 0 ok, 1 usage or invalid config,
2 verdict failure under --strict, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from multiprocessing import get_context
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, RunManifest
from .streams import StreamFamily, substream
from .models import (
    CombParams,
    TransparentParams,
    comb_tooth_mean_closed,
    comb_tooth_moments_asymptotic,
    comb_tooth_moments_exact,
    comb_tooth_one_minus_pgf_lam,
    comb_tooth_pgf,
    comb_tooth_pgf_recursive,
    comb_tooth_walk_sample,
    make_model,
    predicted_phase,
)
from .analysis import (
    TestReport,
    check_fin_condition,
    check_fk_second_moment,
    check_ht,
    check_L,
    classify_limit,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VERDICT = 2
EXIT_IO = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="trapwalk", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("simulate", "run trapped-walk replicas, write trajectory CSVs"),
        ("simulate-limit", "sample limit processes on a time grid"),
        ("verify-comb", "closed-form/recursion/Monte-Carlo comb cross-checks"),
        ("phase-scan", "classify a grid of (alpha, beta) cells"),
        ("assumptions", "heavy-tail and convergence-hypothesis checks"),
        ("report", "summarize verdicts from an output directory"),
    ]:
        q = sub.add_parser(name, help=help_)
        if name != "report":
            q.add_argument("--config", required=True, help="INI config path")
        q.add_argument("--seed", type=int, default=None, help="master seed override")
        q.add_argument("--workers", type=int, default=None)
        q.add_argument("--strict", action="store_true",
                       help="exit 2 on any failed verdict")
        q.add_argument("--out", default=None, help="output directory override")
    return p


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_ini(Path(args.config).read_text())
    if args.seed is not None:
        cfg.master_seed = args.seed
    if args.workers is not None:
        cfg.workers = args.workers
    if args.out is not None:
        cfg.out_dir = args.out
    if args.strict:
        cfg.strict = True
    cfg.validate()
    return cfg


def _out_dir(cfg) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _traj_csv(times, positions) -> str:
    lines = ["t,x"]
    lines.extend(f"{t:.17g},{x:.17g}" for t, x in zip(times, positions))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def _walk_replica(payload):
    ini, idx = payload
    cfg = ExperimentConfig.from_ini(ini)
    model = _walk_model(cfg)
    gen_w = substream(cfg.master_seed, "walk", idx)
    gen_e = substream(cfg.master_seed, "env", idx)
    kwargs = {}
    if cfg.n_steps:
        kwargs["n_steps"] = cfg.n_steps
    else:
        kwargs["t_horizon"] = cfg.t_horizon
    traj = model.simulate_rtrw(gen_walk=gen_w, gen_env=gen_e, **kwargs)
    sidecar = {
        "model": cfg.model,
        "parameters": _model_params(cfg),
        "seed": cfg.master_seed,
        "replica": idx,
        "streams": {"walk": ["walk", idx], "env": ["env", idx]},
        "horizon": {"n_steps": cfg.n_steps or None,
                    "t_horizon": cfg.t_horizon or None,
                    "t_end": traj.t_end},
        "records": int(traj.times.size),
    }
    return idx, _traj_csv(traj.times, traj.positions), sidecar


def _model_params(cfg) -> dict:
    if cfg.model == "transparent":
        return {"alpha": cfg.alpha, "beta": cfg.beta, "c": cfg.c}
    if cfg.model == "comb":
        return {"alpha": cfg.alpha, "beta": cfg.beta}
    if cfg.model == "bouchaud":
        return {"gamma": cfg.gamma, "c": cfg.c}
    if cfg.model in ("fk", "fin", "ssbm"):
        return {"gamma": cfg.gamma, "v_min": cfg.v_min}
    return {}


def _walk_model(cfg):
    if cfg.model == "transparent":
        return make_model("transparent", TransparentParams(cfg.alpha, cfg.beta, cfg.c))
    if cfg.model == "comb":
        return make_model("comb", CombParams(cfg.alpha, cfg.beta),
                          step_cap=cfg.step_cap)
    if cfg.model == "bouchaud":
        return make_model("bouchaud", {"gamma": cfg.gamma, "c": cfg.c})
    if cfg.model == "srw":
        return make_model("srw")
    raise ValueError(f"{cfg.model!r} is not a walk model; use simulate-limit")


def _run_pool(worker, payloads, n_workers):
    if n_workers <= 1:
        return [worker(p) for p in payloads]
    with get_context("fork").Pool(n_workers) as pool:
        return pool.map(worker, payloads)


def cmd_simulate(cfg: ExperimentConfig) -> int:
    out = _out_dir(cfg)
    manifest = RunManifest(cfg.config_hash(), __version__, cfg.master_seed,
                           "simulate")
    ini = cfg.to_ini()
    results = _run_pool(_walk_replica, [(ini, i) for i in range(cfg.replicas)],
                        cfg.workers)
    for idx, csv_text, sidecar in sorted(results):
        base = out / f"traj_{idx:05d}"
        base.with_suffix(".csv").write_text(csv_text)
        base.with_suffix(".json").write_text(json.dumps(sidecar, sort_keys=True,
                                                        indent=1))
        manifest.add_file(base.with_suffix(".csv"))
        manifest.add_file(base.with_suffix(".json"))
        manifest.replica_streams.append({"replica": idx,
                                         "labels": ["walk", "env"]})
    manifest.finish()
    (out / "manifest.json").write_text(manifest.to_json())
    print(f"simulate: wrote {cfg.replicas} trajectories to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate-limit
# ---------------------------------------------------------------------------


def _limit_replica(payload):
    ini, idx = payload
    cfg = ExperimentConfig.from_ini(ini)
    from .limits import PoissonianFamily, sample_fin, sample_fk, sample_ssbm, sample_bm

    t_grid = np.concatenate([[0.0], np.asarray(sorted(cfg.t_grid))])
    T = float(t_grid[-1])
    dt = cfg.delta if cfg.delta else None
    h = cfg.h if cfg.h else None
    env = None
    if cfg.model == "bm":
        g = substream(cfg.master_seed, "limit-bm", idx)
        path = sample_bm(T, dt, g)
        ks = np.minimum(np.round(t_grid / path.dt).astype(int),
                        path.values.size - 1)
        times, positions = t_grid, path.values[ks]
    elif cfg.model == "fk":
        tr = sample_fk(cfg.gamma, T, dt,
                       substream(cfg.master_seed, "limit-bm", idx),
                       substream(cfg.master_seed, "limit-sub", idx),
                       t_grid=t_grid)
        times, positions = tr.times, tr.positions
    elif cfg.model == "fin":
        tr, env = sample_fin(cfg.gamma, T, dt=dt, h=h, v_min=cfg.v_min,
                             gen_bm=substream(cfg.master_seed, "limit-bm", idx),
                             gen_env=substream(cfg.master_seed, "limit-env", idx),
                             t_grid=t_grid, return_environment=True)
        times, positions = tr.times, tr.positions
    elif cfg.model == "ssbm":
        fam = PoissonianFamily(cfg.gamma, cfg.v_min)
        tr, env = sample_ssbm(fam, T, dt=dt, h=h,
                              gen_bm=substream(cfg.master_seed, "limit-bm", idx),
                              gen_env=substream(cfg.master_seed, "limit-env", idx),
                              gen_sub=substream(cfg.master_seed, "limit-sub", idx),
                              t_grid=t_grid, return_environment=True)
        times, positions = tr.times, tr.positions
    else:
        raise ValueError(f"{cfg.model!r} is not a limit model")
    sidecar = {
        "model": cfg.model,
        "parameters": _model_params(cfg),
        "seed": cfg.master_seed,
        "replica": idx,
        "horizon": {"t_grid": [float(t) for t in t_grid]},
    }
    if env is not None:
        xs, vs = env
        sidecar["environment"] = {"x": xs.tolist(), "v": vs.tolist()}
    return idx, _traj_csv(times, positions), sidecar


def cmd_simulate_limit(cfg: ExperimentConfig) -> int:
    out = _out_dir(cfg)
    manifest = RunManifest(cfg.config_hash(), __version__, cfg.master_seed,
                           "simulate-limit")
    ini = cfg.to_ini()
    results = _run_pool(_limit_replica, [(ini, i) for i in range(cfg.replicas)],
                        cfg.workers)
    for idx, csv_text, sidecar in sorted(results):
        base = out / f"limit_{idx:05d}"
        base.with_suffix(".csv").write_text(csv_text)
        base.with_suffix(".json").write_text(json.dumps(sidecar, sort_keys=True))
        manifest.add_file(base.with_suffix(".csv"))
        manifest.add_file(base.with_suffix(".json"))
    manifest.finish()
    (out / "manifest.json").write_text(manifest.to_json())
    print(f"simulate-limit: wrote {cfg.replicas} paths to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify-comb
# ---------------------------------------------------------------------------


def cmd_verify_comb(cfg: ExperimentConfig) -> int:
    out = _out_dir(cfg)
    reports: list[TestReport] = []
    n_mc = max(cfg.replicas, 10_000)

    worst = 0.0
    for n in range(1, 51):
        for beta in (0.0, 0.5, 1.0, 2.0):
            for s in (0.5, 0.9, 0.99):
                worst = max(worst, abs(comb_tooth_pgf(n, beta, s)
                                       - comb_tooth_pgf_recursive(n, beta, s)))
    reports.append(TestReport(
        "pgf-closed-vs-recursive", "max_abs_diff", worst, 1e-10,
        "pass" if worst <= 1e-10 else "fail",
        sample_sizes={"grid": 50 * 4 * 3}))

    gen = substream(cfg.master_seed, "verify-mc")
    worst_z = 0.0
    for n, beta, s in [(3, 0.0, 0.9), (5, 0.5, 0.9), (2, 1.0, 0.5)]:
        taus = np.array([comb_tooth_walk_sample(n, beta, gen)
                         for _ in range(n_mc)], dtype=np.float64)
        vals = s**taus
        z = abs(vals.mean() - comb_tooth_pgf(n, beta, s)) \
            / (vals.std(ddof=1) / math.sqrt(n_mc))
        worst_z = max(worst_z, z)
    reports.append(TestReport(
        "pgf-vs-monte-carlo", "max_z_score", worst_z, 3.0,
        "pass" if worst_z <= 3.0 else "fail", sample_sizes={"draws": n_mc}))

    exact_ok = all(comb_tooth_moments_exact(n, 0.0)[0] == 2 * n - 1
                   for n in range(1, 1001))
    reports.append(TestReport(
        "moments-driftless-mean", "mean_equals_2N_minus_1", float(exact_ok), 1.0,
        "pass" if exact_ok else "fail", sample_sizes={"N_max": 1000}))

    ratio_ok = True
    detail = {}
    for beta in (0.5, 1.0):
        ratios = []
        for n in (100, 1000, 10_000, 100_000):
            m = comb_tooth_mean_closed(n, beta)
            m_as, _ = comb_tooth_moments_asymptotic(n, beta)
            ratios.append(m / m_as)
        detail[f"beta={beta}"] = ratios
        devs = [abs(r - 1.0) for r in ratios]
        ratio_ok &= devs[-1] < 0.25 and all(
            devs[i + 1] <= devs[i] + 1e-12 for i in range(len(devs) - 1))
    reports.append(TestReport(
        "moments-exact-vs-asymptotic", "ratio_within", 0.25, 0.25,
        "pass" if ratio_ok else "fail", detail=detail))

    worst_rel = 0.0
    for y in (0.5, 1.0, 2.0):
        eps = 1e-6
        n = int(y / math.sqrt(2.0 * eps))
        val = comb_tooth_one_minus_pgf_lam(n, 0.0, eps) / math.sqrt(2.0 * eps)
        worst_rel = max(worst_rel, abs(val - math.tanh(y)) / math.tanh(y))
    reports.append(TestReport(
        "tanh-scaling-limit", "max_rel_err", worst_rel, 1e-2,
        "pass" if worst_rel <= 1e-2 else "fail",
        detail={"eps": 1e-6, "y": [0.5, 1.0, 2.0]}))

    return _finish_reports(cfg, out, "verify_comb", reports)


def _finish_reports(cfg, out, stem, reports) -> int:
    payload = [r.to_dict() for r in reports]
    (out / f"reports_{stem}.json").write_text(
        json.dumps(payload, indent=1, sort_keys=True, default=float))
    failed = 0
    for r in reports:
        print(f"[{r.verdict.upper():4s}] {r.name}: {r.statistic} = {r.value:.6g} "
              f"(threshold {r.threshold:.6g})")
        failed += r.verdict == "fail"
    if failed and cfg.strict:
        return EXIT_VERDICT
    return EXIT_OK


# ---------------------------------------------------------------------------
# phase-scan
# ---------------------------------------------------------------------------


def _cell_on_boundary(model: str, a: float, b: float, margin: float) -> bool:
    if model == "transparent":
        if abs(a + b - 1.0) < margin:
            return True
        if a + b < 1.0 + margin and abs(a - b) < margin:
            return True
        return False
    if abs(a - 1.0) < margin:
        return True
    if abs(a - (1.0 + 2.0 * b)) < margin:
        return True
    return False


def cmd_phase_scan(cfg: ExperimentConfig) -> int:
    if cfg.model not in ("transparent", "comb"):
        raise ValueError("phase-scan supports the transparent and comb models")
    out = _out_dir(cfg)
    cells = cfg.scan_cells()
    for a, b, _ in cells:
        if _cell_on_boundary(cfg.model, a, b, cfg.scan_margin):
            raise ValueError(
                f"cell ({a}, {b}) lies within {cfg.scan_margin} of a phase "
                "boundary; widen the margin or move the cell")
    pred_rows = ["model,alpha,beta,label,exponent,schedule_power"]
    scan_rows = ["alpha,beta,predicted,empirical,nu_hat,ks_p,verdict"]
    n_match = 0
    n_contra = 0
    for ci, (a, b, eps) in enumerate(cells):
        params = (TransparentParams(a, b) if cfg.model == "transparent"
                  else CombParams(a, b))
        model = make_model(cfg.model, params)
        pred = predicted_phase(cfg.model, params)
        pred_rows.append(
            f"{cfg.model},{a},{b},{pred.label},"
            f"{'' if pred.exponent is None else pred.exponent},"
            f"{'' if pred.q_power is None else pred.q_power}")
        family = StreamFamily(cfg.master_seed)
        res = classify_limit(model, params, eps=eps, replicas=cfg.scan_replicas,
                             family=family, n_ks=cfg.n_ks,
                             n_env_corr=cfg.n_env_corr,
                             stream_prefix=f"cell{ci}-")
        n_match += res.matches
        n_contra += res.verdict == "contradict" and res.confident
        scan_rows.append(f"{a},{b},{pred.label},{res.empirical_label},"
                         f"{res.nu_hat:.5f},{res.ks_p:.5f},{res.verdict}")
        print(f"cell ({a}, {b}): predicted {pred.label}, empirical "
              f"{res.empirical_label} (nu={res.nu_hat:.3f}, ks_p={res.ks_p:.3f})"
              f" -> {res.verdict}")
    (out / "phase_predictions.csv").write_text("\n".join(pred_rows) + "\n")
    (out / "phase_scan.csv").write_text("\n".join(scan_rows) + "\n")
    rate = n_match / len(cells)
    print(f"agreement {n_match}/{len(cells)} = {rate:.0%}, "
          f"confident contradictions: {n_contra}")
    if cfg.strict and (rate < 0.8 or n_contra > 0):
        return EXIT_VERDICT
    return EXIT_OK


# ---------------------------------------------------------------------------
# assumptions
# ---------------------------------------------------------------------------


def cmd_assumptions(cfg: ExperimentConfig) -> int:
    if cfg.model not in ("transparent", "comb"):
        raise ValueError("assumption checks support transparent and comb models")
    out = _out_dir(cfg)
    params = (TransparentParams(cfg.alpha, cfg.beta, cfg.c)
              if cfg.model == "transparent" else CombParams(cfg.alpha, cfg.beta))
    model = make_model(cfg.model, params)
    reports: list[TestReport] = []

    n_ht = max(10_000, cfg.replicas)
    ht = check_ht(model.site_mean_samples(n_ht, substream(cfg.master_seed, "ht")))
    reports.append(TestReport(
        "heavy-tail-index", "gamma_hat", ht.gamma_hat, 1.0,
        "pass" if ht.heavy else "fail",
        sample_sizes={"draws": n_ht},
        detail={"ci": list(ht.ci), "k": ht.k_used,
                "stability": ht.stability_ratio, "note": ht.note}))

    lam = np.linspace(0.0, 5.0, 21)
    rep = check_L(model, list(cfg.epsilons), lam)
    reports.append(TestReport(
        "single-trap-exponent-limit", "sup_consecutive_dist",
        float(rep.sup_dists.max()) if rep.sup_dists.size else 0.0, math.inf,
        "pass" if rep.nontrivial or rep.limit_name == "zero" else "inconclusive",
        detail={"limit_shape": rep.limit_name, "nontrivial": rep.nontrivial}))

    fin = check_fin_condition(model, list(cfg.epsilons))
    reports.append(TestReport(
        "fin-second-moment-condition", "last_value", float(fin.values[-1]),
        float(fin.values[0]), fin.verdict,
        detail={"values": fin.values.tolist(), "note": fin.note}))

    fk2 = check_fk_second_moment(model, list(cfg.epsilons))
    reports.append(TestReport(
        "fk-variance-condition", "last_value", float(fk2.values[-1]),
        float(fk2.values[0]), fk2.verdict,
        detail={"values": fk2.values.tolist(), "note": fk2.note}))

    return _finish_reports(cfg, out, "assumptions", reports)


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


def cmd_report(args) -> int:
    out = Path(args.out or "out")
    if not out.exists():
        print(f"no such output directory: {out}", file=sys.stderr)
        return EXIT_IO
    failed = 0
    total = 0
    for path in sorted(out.glob("reports_*.json")):
        for entry in json.loads(path.read_text()):
            total += 1
            failed += entry["verdict"] == "fail"
            print(f"{path.name}: [{entry['verdict'].upper():4s}] {entry['name']} "
                  f"= {entry['value']:.6g}")
    man = out / "manifest.json"
    if man.exists():
        m = json.loads(man.read_text())
        print(f"manifest: {len(m['files'])} files, config {m['config_hash'][:12]}, "
              f"{m['timings'].get('wall_seconds', 0.0):.1f}s")
    print(f"{total} verdicts, {failed} failed")
    if failed and args.strict:
        return EXIT_VERDICT
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    try:
        if args.command == "report":
            return cmd_report(args)
        cfg = _load_config(args)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "simulate-limit":
            return cmd_simulate_limit(cfg)
        if args.command == "verify-comb":
            return cmd_verify_comb(cfg)
        if args.command == "phase-scan":
            return cmd_phase_scan(cfg)
        if args.command == "assumptions":
            return cmd_assumptions(cfg)
        raise _UsageError(f"unknown command {args.command!r}")
    except _UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, KeyError) as e:
        print(f"invalid configuration: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"I/O failure: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
