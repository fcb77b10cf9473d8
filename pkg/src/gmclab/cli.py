"""Command-line entry point: ``gmclab <subcommand> [--config FILE] [key=value | --key value ...]``."""

from __future__ import annotations

import argparse
import dataclasses
import functools
import os
import sys
import time
from dataclasses import dataclass, fields

import numpy as np

from .errors import ConfigurationError, DomainError, GmcLabError
from .io import fmt, write_csv, write_json

SUBCOMMANDS = ("kernel", "sample-field", "gmc", "atoms", "cluster", "bridge", "verify")
ALIASES = {"d": "dimension", "lambda": "lam", "seed": "base_seed", "n": "grid_n", "delta": "step",
           "out": "output", "replicates_n": "replicates"}


@dataclass
class ExperimentConfig:
    dimension: int = 1
    gamma: float = 0.0  # 0 means unset
    phase: str = ""
    t: float = 3.0
    b: float = 6.0
    grid_n: int = 0
    step: float = 0.1
    lam: float = 1.0
    epsilon: float = 0.01
    replicates: int = 10
    base_seed: int = 0
    output: str = "gmclab_out"
    side: float = 1.0
    nu: str = "lebesgue"
    x: float = 1.0
    u: float = 1.0
    exact: bool = False
    scale: float = 1.0
    only: str = ""

    def to_text(self) -> str:
        return "".join(f"{f.name}={_render(getattr(self, f.name))}\n" for f in fields(self))

    def update(self, pairs):
        for key, raw in pairs:
            name = ALIASES.get(key.replace("-", "_"), key.replace("-", "_"))
            types = {f.name: f.type for f in fields(self)}
            if name not in types:
                raise ConfigurationError(f"unknown key {key!r}")
            setattr(self, name, _convert(raw, types[name], key))
        return self


def _render(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return fmt(v)
    return str(v)


def _convert(raw, typ, key):
    try:
        if typ in ("bool", bool):
            if isinstance(raw, bool):
                return raw
            low = str(raw).strip().lower()
            if low in ("1", "true", "yes", "on", ""):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ in ("int", int):
            return int(raw)
        if typ in ("float", float):
            return float(raw)
        return str(raw)
    except ValueError:
        raise ConfigurationError(f"bad value {raw!r} for {key}") from None


def read_config_file(path):
    """Line-based ``key=value``; ``#`` starts a comment."""
    pairs = []
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError(f"{path}:{n}: expected key=value")
            k, v = line.split("=", 1)
            pairs.append((k.strip(), v.strip()))
    return pairs


def parse_overrides(tokens):
    """``key=value``, ``--key value``, ``--key=value`` and bare ``--flag`` tokens."""
    pairs, i = [], 0
    while i < len(tokens):
        tok = tokens[i]
        if tok.startswith("--"):
            body = tok[2:]
            if "=" in body:
                pairs.append(tuple(body.split("=", 1)))
            elif i + 1 < len(tokens) and not tokens[i + 1].startswith("--") and "=" not in tokens[i + 1]:
                pairs.append((body, tokens[i + 1]))
                i += 1
            else:
                pairs.append((body, True))
        elif "=" in tok:
            pairs.append(tuple(tok.split("=", 1)))
        else:
            raise ConfigurationError(f"cannot parse argument {tok!r}")
        i += 1
    return pairs


def build_config(config_path, tokens) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if config_path:
        cfg.update(read_config_file(config_path))
    return cfg.update(parse_overrides(tokens))


# --- subcommands ---------------------------------------------------------------------

def _grid_for(cfg, t_max):
    from .field import GridSpec

    if cfg.grid_n:
        return GridSpec(cfg.dimension, (0.0,) * cfg.dimension, cfg.side, cfg.grid_n)
    return GridSpec.for_depth(cfg.dimension, cfg.side, t_max)


def _validate_depth(cfg):
    if not cfg.t > 0:
        raise DomainError("t must be positive")
    if abs(round(cfg.t / cfg.step) * cfg.step - cfg.t) > 1e-9:
        raise ConfigurationError("t must be a multiple of step")


def run_kernel(cfg, out):
    from .kernel import build_seed_kernel, validity_report

    k = build_seed_kernel(cfg.dimension)
    rep = validity_report(k)
    path = os.path.join(out, f"kernel_d{cfg.dimension}.csv")
    k.export_csv(path)
    write_json(os.path.join(out, f"kernel_d{cfg.dimension}_report.json"), rep)
    return (f"kernel d={cfg.dimension}: residual={rep['autoconvolution_residual']:.3g} "
            f"dft_min={rep['dft_min']:.3g} K''(0)={rep['second_derivative_at_zero']:.6g}"), [path]


def run_sample_field(cfg, out):
    from .field import FieldSample, sample_field_batch
    from .kernel import build_seed_kernel
    from .rng import RandomStream

    _validate_depth(cfg)
    k = build_seed_kernel(cfg.dimension)
    grid = _grid_for(cfg, cfg.t)
    X, origin = sample_field_batch(k, grid, cfg.t, cfg.step, cfg.replicates, RandomStream(cfg.base_seed))
    paths = []
    for i, v in enumerate(X[0]):
        p = os.path.join(out, f"field_{i:04d}.csv")
        FieldSample(grid, v, (0.0, cfg.t), seed=(cfg.base_seed, 0)).export(
            p, p[:-4] + ".json", {"replicate": i})
        paths.append(p)
    var = float(np.var(X[0][:, grid.anchor_index()[0]] if cfg.dimension == 1 else X[0].ravel()))
    return f"sample-field: {cfg.replicates} fields on {grid.n}^{cfg.dimension} nodes, var≈{var:.4g}", paths


def _gmc_task(cfg_dict, stream):
    from .field import FieldSample, sample_field_batch
    from .gmc import gmc_measure
    from .kernel import build_seed_kernel

    cfg = ExperimentConfig(**cfg_dict)
    k = build_seed_kernel(cfg.dimension)
    grid = _grid_for(cfg, cfg.t)
    X, _ = sample_field_batch(k, grid, cfg.t, cfg.step, 1, stream)
    mu = gmc_measure(FieldSample(grid, X[0, 0], (0.0, cfg.t)), cfg.gamma, cfg.phase)
    return mu.total_mass


def run_gmc(cfg, out):
    from .gmc import GmcPhase, check_phase
    from .harness import run_replicates

    _validate_depth(cfg)
    phase = GmcPhase.parse(cfg.phase or "Subcritical")
    cfg.phase = phase.value
    if not cfg.gamma > 0:
        raise ConfigurationError("gmc needs gamma > 0")
    check_phase(cfg.gamma, phase, cfg.dimension)
    task = functools.partial(_gmc_task, dataclasses.asdict(cfg))
    vals, est = run_replicates(task, cfg.replicates, cfg.base_seed)
    path = os.path.join(out, "gmc_masses.csv")
    write_csv(path, ["replicate", "base_seed", "stream_id", "total_mass"],
              ([i, cfg.base_seed, i, v] for i, v in enumerate(vals)))
    return f"gmc {phase.value} gamma={cfg.gamma:g} t={cfg.t:g}: mean mass {est}", [path]


def _atoms_task(cfg_dict, stream):
    from .atoms import sample_eta
    from .field import GridSpec
    from .gmc import lebesgue_measure

    cfg = ExperimentConfig(**cfg_dict)
    nu = lebesgue_measure(GridSpec(cfg.dimension, (0.0,) * cfg.dimension, cfg.side, 64))
    a = sample_eta(nu, cfg.gamma, cfg.epsilon, stream)
    return a


def run_atoms(cfg, out):
    from .atoms import expected_count
    from .field import GridSpec
    from .gmc import lebesgue_measure
    from .harness import McEstimate, run_replicates

    if cfg.nu != "lebesgue":
        raise ConfigurationError("atoms supports nu=lebesgue (on [0, side]^d)")
    if not cfg.gamma > 0:
        raise ConfigurationError("atoms needs gamma > 0")
    if not cfg.epsilon > 0:
        raise ConfigurationError("epsilon must be positive")
    nu = lebesgue_measure(GridSpec(cfg.dimension, (0.0,) * cfg.dimension, cfg.side, 64))
    target = expected_count(nu, cfg.gamma, cfg.epsilon)  # validates gamma
    task = functools.partial(_atoms_task, dataclasses.asdict(cfg))
    atoms, _ = run_replicates(task, cfg.replicates, cfg.base_seed)
    paths = []
    for i, a in enumerate(atoms):
        p = os.path.join(out, f"atoms_{i:04d}.csv")
        a.export(p)
        paths.append(p)
    counts = McEstimate.from_samples([a.n_atoms for a in atoms])
    cp = os.path.join(out, "atom_counts.csv")
    write_csv(cp, ["replicate", "base_seed", "stream_id", "count"],
              ([i, cfg.base_seed, i, a.n_atoms] for i, a in enumerate(atoms)))
    return f"atoms gamma={cfg.gamma:g} eps={cfg.epsilon:g}: mean count {counts} (expected {target:.6g})", paths + [cp]


def run_cluster(cfg, out):
    from .extremes import sample_psi
    from .rng import RandomStream

    if cfg.dimension != 1:
        raise ConfigurationError("cluster supports d=1 only")
    ens = sample_psi(cfg.lam, cfg.b, cfg.replicates, RandomStream(cfg.base_seed), step=cfg.step)
    d = os.path.join(out, "psi_ensemble")
    _export_ensemble_atomically(ens, d)
    return (f"cluster lambda={cfg.lam:g} b={cfg.b:g}: {len(ens)} members, "
            f"acceptance rate {ens.acceptance_rate:.4g} over {ens.trials} trials"), [d]


def _export_ensemble_atomically(ens, directory):
    import shutil
    import tempfile

    parent = os.path.dirname(os.path.abspath(directory))
    tmp = tempfile.mkdtemp(prefix=".tmp-", dir=parent)
    try:
        ens.export(tmp)
        if os.path.exists(directory):
            shutil.rmtree(directory)
        os.replace(tmp, directory)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise


def run_bridge(cfg, out):
    from .bridge import Curve, mc_stay_above_curve, p_stay_positive
    from .rng import RandomStream

    exact = p_stay_positive(cfg.x, cfg.u, cfg.b)
    if cfg.exact:
        return f"{exact:.6f}", []
    n = max(cfg.replicates, 2)
    est = mc_stay_above_curve(cfg.x, cfg.u, cfg.b, Curve("constant", value=0.0), "above_positive",
                              n, RandomStream(cfg.base_seed))
    path = os.path.join(out, "bridge.csv")
    write_csv(path, ["parameters", "estimate", "stderr", "exact"],
              [[f"x={fmt(cfg.x)};u={fmt(cfg.u)};b={fmt(cfg.b)}", est.mean, est.stderr, exact]])
    return f"bridge stay-positive: {est} (exact {exact:.6f})", [path]


def run_verify(cfg, out):
    from .harness import acceptance_suite

    conf = {"seed": cfg.base_seed or None, "scale": cfg.scale}
    conf = {k: v for k, v in conf.items() if v is not None}
    if cfg.only:
        conf["only"] = [int(s) for s in cfg.only.split(",") if s.strip()]
    report = acceptance_suite(conf)
    tp, jp = os.path.join(out, "acceptance_report.txt"), os.path.join(out, "acceptance_report.json")
    from .io import atomic_writer

    with atomic_writer(tp) as fh:
        fh.write(report.to_text() + "\n")
    with atomic_writer(jp) as fh:
        fh.write(report.to_json())
    print(report.to_text())
    n_pass = sum(e.status == "pass" for e in report.entries)
    return f"verify: {n_pass}/{len(report.entries)} passed", [tp, jp], report.exit_code


RUNNERS = {"kernel": run_kernel, "sample-field": run_sample_field, "gmc": run_gmc,
           "atoms": run_atoms, "cluster": run_cluster, "bridge": run_bridge, "verify": run_verify}


def cli_main(argv=None) -> int:
    from . import __version__

    parser = argparse.ArgumentParser(prog="gmclab", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", help="line-based key=value file; flags override it")
    parser.add_argument("--write-config", help="write the resolved config to this file and exit")
    try:
        args, rest = parser.parse_known_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = build_config(args.config, rest)
        if args.write_config:
            from .io import atomic_writer

            with atomic_writer(args.write_config) as fh:
                fh.write(cfg.to_text())
            print(f"wrote {args.write_config}")
            return 0
        out = cfg.output
        os.makedirs(out, exist_ok=True)
        t0 = time.perf_counter()
        result = RUNNERS[args.subcommand](cfg, out)
        summary, paths = result[0], result[1]
        code = result[2] if len(result) > 2 else 0
        if not (args.subcommand == "bridge" and cfg.exact):
            write_json(os.path.join(out, f"{args.subcommand}_provenance.json"), {
                "version": __version__, "subcommand": args.subcommand,
                "config": dataclasses.asdict(cfg), "seed": cfg.base_seed,
                "wall_time": time.perf_counter() - t0, "outputs": paths})
        print(summary)
        return code
    except (ConfigurationError, DomainError) as exc:
        print(f"gmclab: error: {exc}", file=sys.stderr)
        return 2
    except (GmcLabError, OSError, RuntimeError, ValueError) as exc:
        print(f"gmclab: failed: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
