"""rydgen command line.

Exit codes: 0 success, 1 usage error, 2 runtime error, 3 check failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import autoenc, checks, config as config_mod, designspace as ds, mcmc
from .bits import as_bits, from_label, index_label, label
from .errors import CapacityError
from .lattice import blockade_radius, unit_disk_graph
from .metrics import hamming, mean_abs_pixel_distance, quadratic_hamming
from .quench import diffuse, prepare_masked_state
from .rydberg import boltzmann

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_CHECK = 0, 1, 2, 3

UNITS = "Units: angular frequencies in rad/us, times in us, lengths in um."


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _fmt(x) -> str:
    return repr(float(x))


def _map(fn, items, threads: int):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def _load_config(args) -> config_mod.RunConfig:
    cfg = config_mod.load(args.config) if args.config else config_mod.RunConfig().validate()
    return config_mod.with_overrides(cfg, seed=args.seed, out=args.out)


def _out_dir(cfg) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dataset(args, cfg):
    if getattr(args, "data", None):
        data = ds.load_dataset(args.data)
    elif getattr(args, "synthetic", None):
        data = ds.synthetic_designs(args.synthetic, tuple(cfg.objective.shape), seed=cfg.seed)
    else:
        return None
    shape = tuple(cfg.objective.shape)
    for k, d in enumerate(data):
        if d.shape != shape:
            raise ValueError(f"design {k} has shape {d.shape}, configuration expects {shape}")
    return data


def _model(args, cfg):
    pixels = int(np.prod(cfg.objective.shape))
    return autoenc.load_model(args.model, expect_pixels=pixels, expect_latent=cfg.params().n)


# --------------------------------------------------------------------------
# commands


def cmd_phase_sweep(args, cfg) -> int:
    s = cfg.sweep
    if args.delta_range:
        s = replace(s, delta_min=args.delta_range[0], delta_max=args.delta_range[1])
    if args.t_range:
        s = replace(s, t_min=args.t_range[0], t_max=args.t_range[1])
    if args.grid:
        s = replace(s, n_delta=args.grid[0], n_t=args.grid[1])
    if args.tau is not None:
        s = replace(s, tau=args.tau)
    deltas = np.linspace(s.delta_min, s.delta_max, s.n_delta, endpoint=False)
    times = np.linspace(s.t_min, s.t_max, s.n_t, endpoint=False)
    atoms = cfg.atoms()
    points = [(d, t) for d in deltas for t in times]

    def run(point):
        d, t = point
        try:
            params = cfg.params(atoms, delta=float(d))
            energy = cfg.energy(params)
            ch = mcmc.Channel("quantum", s.tau, energy, params.n, 1, cfg.quench_spec(params, t=float(t)))
            p = mcmc.channel_matrix(ch)
            return mcmc.spectral_gap(p, boltzmann(energy, params.n, s.tau)), ""
        except CapacityError as exc:
            return float("nan"), str(exc)

    results = _map(run, points, args.threads)
    path = _out_dir(cfg) / "phase_sweep.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["delta", "t", "gap", "error"])
        for (d, t), (gap, err) in zip(points, results):
            w.writerow([_fmt(d), _fmt(t), _fmt(gap), err])
    print(f"wrote {len(points)} grid points to {path}")
    return EXIT_OK


def cmd_train(args, cfg) -> int:
    data = _dataset(args, cfg)
    if data is None:
        raise UsageError("train needs --data DIR or --synthetic COUNT")
    params = cfg.params()
    channel = cfg.channel_obj()
    objective = cfg.objective_obj()
    graph = unit_disk_graph(params.atoms, blockade_radius(params.c6, params.omega)) if params.omega > 0 else None
    if graph is None and cfg.train.w_is > 0:
        raise ValueError("the IS penalty needs a non-zero Rabi frequency to define the blockade graph")
    pixels = int(np.prod(cfg.objective.shape))
    model = autoenc.init_model(pixels, tuple(cfg.model.hidden), params.n, seed=cfg.model.seed)
    tcfg = replace(cfg.train, seed=cfg.seed)
    history = autoenc.train(model, data, channel, objective, graph, tcfg)
    out = _out_dir(cfg)
    autoenc.save_model(model, out / "model.json")
    with open(out / "loss.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "rec", "energy", "is", "dist", "total"])
        for k, loss in enumerate(history, 1):
            w.writerow([k, *(_fmt(v) for v in loss.as_row())])
    last = history[-1] if history else None
    print(f"trained {len(history)} epochs; final total loss {last.total if last else float('nan'):.6g}; wrote {out}")
    return EXIT_OK


def cmd_sample(args, cfg) -> int:
    model = _model(args, cfg)
    channel = cfg.channel_obj()
    objective = cfg.objective_obj()
    n = channel.n
    steps = channel.depth if args.steps is None else args.steps
    if args.start == "data":
        data = _dataset(args, cfg)
        if not data:
            raise UsageError("--start data needs --data DIR or --synthetic COUNT")
        starts = autoenc.latent_indices(model, np.vstack([d.flat for d in data]).astype(float))
    else:
        starts = np.zeros(1, dtype=np.int64)
    out = _out_dir(cfg)
    design_dir = out / "designs"
    design_dir.mkdir(exist_ok=True)
    with open(out / "chains.csv", "w", newline="") as fc, open(out / "samples.csv", "w", newline="") as fs:
        wc, ws = csv.writer(fc), csv.writer(fs)
        wc.writerow(["chain", "step", "state", "energy", "proposal", "accepted"])
        ws.writerow(["chain", "start", "final", "cost", "design"])
        for i in range(args.count):
            z0 = int(starts[i % starts.size])
            if steps > 0:
                rec = mcmc.run_chain(channel, as_bits(index_label(z0, n)), steps, cfg.seed, chain_index=i)
                for row in rec.rows():
                    wc.writerow([i, *row])
                final = int(rec.states[-1])
            else:
                final = z0
            bits = as_bits(index_label(final, n)).astype(float)
            design = autoenc.binarize(autoenc.decode(model, bits)).reshape(tuple(cfg.objective.shape))
            name = f"sample_{i:04d}.pgm"
            ds.write_pgm(design_dir / name, design)
            ws.writerow([i, index_label(z0, n), index_label(final, n), _fmt(ds.evaluate(objective, design)), name])
    print(f"wrote {args.count} samples to {out}")
    return EXIT_OK


def cmd_benchmark(args, cfg) -> int:
    model = _model(args, cfg)
    channel = cfg.channel_obj()
    objective = cfg.objective_obj()
    data = _dataset(args, cfg)
    b = cfg.benchmark
    taus = args.taus if args.taus else b.taus
    costs = ds.latent_costs(model, objective)
    out = _out_dir(cfg)

    def run(item):
        k, tau = item
        try:
            rep = ds.renyi_benchmark(
                model, channel, objective, tau, alpha=b.alpha, n_samples=b.samples, bins=b.bins,
                seed=cfg.seed + k, dataset=data, oracle=args.oracle, costs=costs,
            )
            rep.write_csv(out / f"bins_tau{k:02d}.csv")
            return rep, ""
        except (ValueError, ArithmeticError) as exc:
            return None, str(exc)

    results = _map(run, list(enumerate(taus)), args.threads)
    failed = 0
    with open(out / "benchmark.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tau", "sampler", "depth", "renyi", "kl", "tv", "error"])
        for tau, (rep, err) in zip(taus, results):
            if rep is None:
                failed += 1
                w.writerow([_fmt(tau), "oracle" if args.oracle else channel.sampler, channel.depth, "nan", "nan", "nan", err])
            else:
                w.writerow([_fmt(tau), rep.sampler, rep.depth, _fmt(rep.renyi), _fmt(rep.kl), _fmt(rep.tv), ""])
    print(f"benchmarked {len(taus)} temperatures; wrote {out / 'benchmark.csv'}")
    if failed:
        print(f"{failed} temperature(s) failed; see the error column", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_diffuse(args, cfg) -> int:
    params = cfg.params()
    target = from_label(args.target)
    if target.size != params.n:
        raise ValueError(f"target has {target.size} bits but the lattice has {params.n} atoms")
    delta_l = args.delta_l if args.delta_l is not None else 100.0 * params.omega
    prepared = prepare_masked_state(params, target, delta_l, tol=cfg.quench.tol)
    state = diffuse(params, prepared, args.omega_t, tol=cfg.quench.tol)
    probs = np.clip(state.probabilities(), 0.0, None)
    rng = mcmc.make_rng(cfg.seed)
    counts = rng.multinomial(args.shots, probs / probs.sum())
    model = _model(args, cfg) if args.model else None
    ref = None
    if model is not None:
        ref = autoenc.binarize(autoenc.decode(model, target.astype(float)))
    out = _out_dir(cfg)
    with open(out / "diffuse.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["z", "count", "hamming", "quadratic_hamming", "pixel_distance"])
        for idx in np.nonzero(counts)[0]:
            z = as_bits(index_label(int(idx), params.n))
            qh = _fmt(quadratic_hamming(params.atoms, z, target)) if params.n >= 2 else ""
            px = ""
            if model is not None:
                px = _fmt(mean_abs_pixel_distance(autoenc.binarize(autoenc.decode(model, z.astype(float))), ref))
            w.writerow([label(z), int(counts[idx]), hamming(z, target), qh, px])
    print(f"preparation fidelity {prepared.fidelity:.6f}; {args.shots} shots written to {out / 'diffuse.csv'}")
    return EXIT_OK


def cmd_check(args, cfg) -> int:
    suites = checks.SUITES if args.suite == "all" else (args.suite,)
    model = _model(args, cfg) if getattr(args, "model", None) else None
    ok = True
    report = []
    for name in suites:
        kw = {}
        if name == "isometry" and model is not None:
            kw["model"] = model
        if name == "metric":
            kw["atoms"] = cfg.atoms()
        result = checks.run_suite(name, inject_fault=args.inject_fault, **kw)
        ok &= result.ok
        report.append(result.as_dict())
    text = json.dumps({"ok": bool(ok), "suites": report}, indent=2, default=float)
    print(text)
    if args.out:
        (_out_dir(cfg) / "check.json").write_text(text + "\n")
    return EXIT_OK if ok else EXIT_CHECK


# --------------------------------------------------------------------------
# parser


def _common(p):
    p.add_argument("--config", help="JSON run configuration (see README for keys)")
    p.add_argument("--seed", type=int, help="run seed; overrides the config")
    p.add_argument("--out", help="output directory; overrides the config")
    p.add_argument("--threads", type=int, default=1, help="worker threads for independent grid points / temperatures")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rydgen", description="Rydberg-channel generative design toolkit. " + UNITS)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("phase-sweep", help="spectral gap of the quantum MH kernel over a (delta, t) grid")
    _common(p)
    p.add_argument("--delta-range", nargs=2, type=float, metavar=("LO", "HI"), help="detuning range [LO, HI) in rad/us")
    p.add_argument("--t-range", nargs=2, type=float, metavar=("LO", "HI"), help="quench time range [LO, HI) in us")
    p.add_argument("--grid", nargs=2, type=int, metavar=("N_DELTA", "N_T"))
    p.add_argument("--tau", type=float, help="temperature of the target (default 0.1)")
    p.set_defaults(func=cmd_phase_sweep)

    p = sub.add_parser("train", help="train the discrete-latent autoencoder")
    _common(p)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--data", help="directory of .pgm / .csv designs")
    g.add_argument("--synthetic", type=int, metavar="COUNT", help="use COUNT seeded synthetic designs")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="run channel chains and decode the final latents")
    _common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--steps", type=int, help="chain length (default: channel depth)")
    p.add_argument("--start", choices=("zeros", "data"), default="zeros")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--data")
    g.add_argument("--synthetic", type=int, metavar="COUNT")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("benchmark", help="Renyi divergence of sampled design costs from the Boltzmann target")
    _common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--taus", nargs="+", type=float)
    p.add_argument("--oracle", action="store_true", help="sample the target exactly (self-test)")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--data")
    g.add_argument("--synthetic", type=int, metavar="COUNT")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("diffuse", help="masked preparation of a target then a resonant drive")
    _common(p)
    p.add_argument("--target", required=True, help="bitstring in atom order, e.g. 101")
    p.add_argument("--shots", type=int, default=10000)
    p.add_argument("--delta-l", type=float, help="mask detuning in rad/us (default 100 * omega)")
    p.add_argument("--omega-t", type=float, default=np.pi / 2, help="drive area omega * t (default pi/2)")
    p.add_argument("--model")
    p.set_defaults(func=cmd_diffuse)

    p = sub.add_parser("check", help="run a property-check suite")
    _common(p)
    p.add_argument("suite", choices=(*checks.SUITES, "all"))
    p.add_argument("--inject-fault", action="store_true", help="corrupt the object under test")
    p.add_argument("--model")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        parser.error("--threads must be at least 1")
    for name in ("count", "shots", "synthetic"):
        if getattr(args, name, None) is not None and getattr(args, name) < 0:
            parser.error(f"--{name} must be non-negative")
    try:
        cfg = _load_config(args)
    except (OSError, ValueError, TypeError) as exc:
        print(f"rydgen: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            return args.func(args, cfg)
    except UsageError as exc:
        print(f"rydgen: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, KeyError, ArithmeticError) as exc:
        print(f"rydgen: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
