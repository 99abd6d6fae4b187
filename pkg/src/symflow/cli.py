"""Command line entry point: symbolic tools, data generation, training.

Subcommands:
  prolong   print a generator's prolonged action on the residual (DSL text)
  verify    certify the whole catalog symbolically, JSON report
  gen-data  sample a dataset to a binary container
  train     config-driven training run; writes a deterministic artifact tree
  eval      re-evaluate a checkpoint, optionally at extra resolutions
  ablate    generator-subset or label-noise sweeps

Exit codes: 0 success, 1 runtime or verification failure, 2 usage or config
errors.  Training refuses symmetry methods until the catalog verifies, unless
--skip-verify is given; the bypass is recorded in the artifacts.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

from .config import (
    ConfigError,
    RunConfig,
    _parse_resolutions,
    load_config,
    render_config,
)
from .datasets import GrfSpec, add_noise, gen_burgers, gen_darcy, load, save
from .grid_compiler import Grid
from .jetlang.printer import to_dsl
from .operator_net import NetConfig, load_checkpoint, save_checkpoint
from .pde_catalog import BURGERS_REFERENCE_POINT_MULTIPLES, get_system
from .symmetry_engine import (
    characteristic,
    cofactor_decompose,
    prolong_apply_evolutionary,
    prolong_apply_point,
    verify_system,
)
from . import trainer as tr

__all__ = ["main"]

_GRID_DEFAULTS = {
    "burgers": (("x", "t"), (32, 25), (True, False)),
    "darcy": (("x", "y"), (32, 32), (False, False)),
}
_MODE_DEFAULTS = {"burgers": (8, 6), "darcy": (8, 8)}


def _make_grid(pde_name: str, shape) -> Grid:
    names, _, periodic = _GRID_DEFAULTS[pde_name]
    return Grid.regular(names, shape, periodic)


def _scale_resolution(item, base, pde_name) -> tuple[int, int]:
    """A bare N keeps the aspect of the base grid (square for Darcy)."""
    if len(item) == 2:
        return tuple(item)
    n = item[0]
    if pde_name == "darcy":
        return n, n
    nt = max(2, math.floor(base[1] * n / base[0] + 0.5))
    return n, nt


def _resolve_run(cfg: RunConfig) -> RunConfig:
    pde_name = cfg.values.get("pde")
    if pde_name not in _GRID_DEFAULTS:
        raise ConfigError(f"pde must be one of {sorted(_GRID_DEFAULTS)}, "
                          f"got {pde_name!r}")
    if pde_name == "darcy" and "data.nu" in cfg.from_file:
        raise ConfigError("data.nu applies only to burgers")
    if cfg.values.get("data.grid") is None:
        cfg = cfg.set("data.grid", _GRID_DEFAULTS[pde_name][1])
    if cfg.values.get("net.modes") is None:
        cfg = cfg.set("net.modes", _MODE_DEFAULTS[pde_name])
    if cfg.values.get("data.test_seed") is None:
        cfg = cfg.set("data.test_seed", cfg["data.seed"] + 1000)
    if cfg.values.get("eval.resolutions") is None:
        n1 = cfg["data.grid"][0]
        cfg = cfg.set("eval.resolutions", ((max(2, n1 // 2),), (2 * n1,)))
    return cfg


def _gen_dataset(pde_name: str, n: int, shape, seed: int, nu: float):
    grid = _make_grid(pde_name, shape)
    if pde_name == "burgers":
        return gen_burgers(n, grid, nu=nu, seed=seed)
    return gen_darcy(n, grid, seed=seed)


def _load_or_gen(cfg: RunConfig, which: str):
    path = cfg.values.get(f"data.{which}_path")
    if path is not None:
        return load(path), False
    n = cfg[f"data.n_{'train' if which == 'train' else 'test'}"]
    seed = cfg["data.seed"] if which == "train" else cfg["data.test_seed"]
    ds = _gen_dataset(cfg["pde"], n, cfg["data.grid"], seed, cfg["data.nu"])
    if which == "train" and cfg["data.noise"] > 0:
        ds = add_noise(ds, cfg["data.noise"], seed=cfg["data.seed"])
    return ds, True


def _loss_config(cfg: RunConfig) -> tr.LossConfig:
    return tr.LossConfig(
        method=cfg["loss.method"],
        gamma=cfg["loss.gamma"],
        generators=cfg.values.get("loss.generators"),
        include_residual=cfg.values.get("loss.include_residual"),
        traj_weight=cfg["loss.traj_weight"],
        bc_weight=cfg["loss.bc_weight"],
    )


def _train_config(cfg: RunConfig) -> tr.TrainConfig:
    return tr.TrainConfig(
        epochs=cfg["train.epochs"],
        batch_size=cfg["train.batch_size"],
        lr=cfg["train.lr"],
        lr_step=cfg["train.lr_step"],
        lr_gamma=cfg["train.lr_gamma"],
        seed=cfg["train.seed"],
        log_every=cfg["train.log_every"],
    )


def _net_config(cfg: RunConfig, in_channels: int) -> NetConfig:
    return NetConfig(
        in_channels=in_channels,
        modes=cfg["net.modes"],
        width=cfg["net.width"],
        depth=cfg["net.depth"],
        proj_width=cfg["net.proj_width"],
    )


def _resolutions(cfg: RunConfig) -> list[tuple[int, int]]:
    base = cfg["data.grid"]
    return [_scale_resolution(item, base, cfg["pde"])
            for item in cfg["eval.resolutions"]]


def _out_dir(cfg: RunConfig) -> str:
    out = cfg.values.get("out_dir")
    if out is None:
        raise ConfigError("out_dir is required for this command")
    os.makedirs(out, exist_ok=True)
    return out


def _run_verify(pde, skip: bool):
    """Returns the recorded status string, or None if verification failed."""
    if skip:
        return "skipped"
    ref = BURGERS_REFERENCE_POINT_MULTIPLES if pde.name == "burgers" else None
    results = verify_system(pde, reference_multiples=ref)
    if all(r["status"] == "certified" for r in results):
        return "passed"
    for r in results:
        if r["status"] != "certified":
            print(f"verification failed: {r['generator']} -> {r['status']} "
                  f"({r['note']})", file=sys.stderr)
    return None


def _write_table(rows, cols, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in rows:
            w.writerow([repr(row[c]) if isinstance(row[c], float)
                        else str(row[c]) for c in cols])


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_prolong(args) -> int:
    pde = get_system(args.pde)
    try:
        v = pde.generator(args.generator)
    except KeyError as ex:
        print(f"error: {ex.args[0]}", file=sys.stderr)
        return 2
    if args.evolutionary:
        expr = prolong_apply_evolutionary(characteristic(v), pde.residual)
    else:
        expr = prolong_apply_point(v, pde.residual)
    print(to_dsl(expr))
    if expr.is_zero():
        return 0
    dec = cofactor_decompose(expr, pde)
    if dec is None:
        print("no on-shell certificate within the search bounds")
        return 0
    print("on-shell zero: expression = sum of c_J * D_J[residual] with")
    for key, val in sorted(dec.witness(pde.space).items()):
        print(f"  c[{key}] = {val}")
    return 0


def cmd_verify(args) -> int:
    pde = get_system(args.pde)
    ref = BURGERS_REFERENCE_POINT_MULTIPLES if pde.name == "burgers" else None
    results = verify_system(pde, reference_multiples=ref)
    print(json.dumps(results, indent=2, sort_keys=True))
    return 0 if all(r["status"] == "certified" for r in results) else 1


def cmd_gen_data(args) -> int:
    if args.pde == "darcy" and args.nu is not None:
        print("error: --nu applies only to burgers", file=sys.stderr)
        return 2
    shape = tuple(int(p) for p in args.grid.split("x")) if args.grid \
        else _GRID_DEFAULTS[args.pde][1]
    if len(shape) != 2:
        print("error: --grid expects AxB", file=sys.stderr)
        return 2
    nu = args.nu if args.nu is not None else 0.01
    ds = _gen_dataset(args.pde, args.n, shape, args.seed, nu)
    if args.noise > 0:
        ds = add_noise(ds, args.noise, seed=args.seed)
    save(ds, args.out)
    print(f"wrote {args.out}: {args.pde} n={args.n} "
          f"grid={shape[0]}x{shape[1]} seed={args.seed} noise={args.noise}")
    return 0


def cmd_train(args) -> int:
    cfg = _resolve_run(load_config(args.config))
    if args.skip_verify:
        cfg = cfg.set("verify.skip", True)
    out = _out_dir(cfg)
    pde = get_system(cfg["pde"])

    status = _run_verify(pde, skip=cfg["verify.skip"])
    if status is None:
        return 1

    train_ds, gen_train = _load_or_gen(cfg, "train")
    test_ds, gen_test = _load_or_gen(cfg, "test")
    if gen_train:
        save(train_ds, os.path.join(out, "train_data.bin"))
    if gen_test:
        save(test_ds, os.path.join(out, "test_data.bin"))

    result = tr.train(pde, train_ds, _loss_config(cfg), _train_config(cfg),
                      _net_config(cfg, len(train_ds.input_names)))
    tr.write_history_csv(result.history, os.path.join(out, "history.csv"))
    save_checkpoint(result.net, os.path.join(out, "checkpoint.bin"),
                    epoch=cfg["train.epochs"], meta={"verify": status})

    echo = dict(result.resolved)
    echo["verify"] = status
    report = tr.evaluate(result.net, pde, train_ds, test_ds,
                         resolutions=_resolutions(cfg), config=echo)
    tr.write_json(report.to_json(), os.path.join(out, "summary.json"))
    with open(os.path.join(out, "resolved.cfg"), "w") as fh:
        fh.write(render_config(cfg))
    print(f"wrote {out}: history.csv checkpoint.bin summary.json resolved.cfg")
    return 0


def cmd_eval(args) -> int:
    cfg = _resolve_run(load_config(args.config))
    out = _out_dir(cfg)
    pde = get_system(cfg["pde"])
    ckpt = args.checkpoint or os.path.join(out, "checkpoint.bin")
    if not os.path.exists(ckpt):
        print(f"error: no checkpoint at {ckpt}", file=sys.stderr)
        return 1
    net, _, meta = load_checkpoint(ckpt)

    train_path = os.path.join(out, "train_data.bin")
    test_path = os.path.join(out, "test_data.bin")
    train_ds = load(train_path) if os.path.exists(train_path) \
        else _load_or_gen(cfg, "train")[0]
    test_ds = load(test_path) if os.path.exists(test_path) \
        else _load_or_gen(cfg, "test")[0]

    if args.resolutions:
        items = _parse_resolutions(args.resolutions)
        cfg = cfg.set("eval.resolutions", items)
    report = tr.evaluate(net, pde, train_ds, test_ds,
                         resolutions=_resolutions(cfg),
                         config={"checkpoint": os.path.basename(ckpt),
                                 "verify": meta.get("verify", "unknown")})
    tr.write_json(report.to_json(), os.path.join(out, "eval_report.json"))
    print(json.dumps(report.to_json(), indent=2, sort_keys=True))
    return 0


def cmd_ablate(args) -> int:
    cfg = _resolve_run(load_config(args.config))
    out = _out_dir(cfg)
    pde = get_system(cfg["pde"])
    loss_cfg = _loss_config(cfg)
    if loss_cfg.method == "baseline":
        print("error: ablation requires a symmetry method in loss.method",
              file=sys.stderr)
        return 2
    status = _run_verify(pde, skip=cfg["verify.skip"])
    if status is None:
        return 1

    train_ds, _ = _load_or_gen(cfg, "train")
    test_ds, _ = _load_or_gen(cfg, "test")
    net_cfg = _net_config(cfg, len(train_ds.input_names))
    tc = _train_config(cfg)

    if args.kind == "noise":
        rows = tr.ablate_noise(pde, train_ds, test_ds, loss_cfg, tc, net_cfg,
                               levels=cfg["ablate.levels"],
                               noise_seed=cfg["data.seed"])
        cols = ["level", "method", "train_l2", "train_eqn", "test_l2",
                "test_eqn", "generalization_gap", "stability_gap"]
        base = "noise_table"
    else:
        rows = tr.ablate_generators(pde, train_ds, test_ds, loss_cfg, tc,
                                    net_cfg, order=cfg.get("ablate.order"))
        cols = ["k", "generators", "train_l2", "test_l2", "train_eqn",
                "test_eqn", "final_digest"]
        base = "generator_table"

    _write_table(rows, cols, os.path.join(out, base + ".csv"))
    tr.write_json(rows, os.path.join(out, base + ".json"))
    with open(os.path.join(out, "resolved.cfg"), "w") as fh:
        fh.write(render_config(cfg))
    print(f"wrote {out}/{base}.csv ({len(rows)} rows)")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="symflow",
        description="symmetry-regularized neural operators on exact "
                    "symbolic foundations")
    sub = p.add_subparsers(dest="command", required=True)

    pp = sub.add_parser("prolong", help="print a prolonged action")
    pp.add_argument("pde", choices=sorted(_GRID_DEFAULTS))
    pp.add_argument("generator")
    pp.add_argument("--evolutionary", action="store_true",
                    help="use the evolutionary representative")
    pp.set_defaults(func=cmd_prolong)

    pv = sub.add_parser("verify", help="certify the symmetry catalog")
    pv.add_argument("pde", choices=sorted(_GRID_DEFAULTS))
    pv.set_defaults(func=cmd_verify)

    pg = sub.add_parser("gen-data", help="sample a dataset")
    pg.add_argument("--pde", required=True, choices=sorted(_GRID_DEFAULTS))
    pg.add_argument("--n", required=True, type=int)
    pg.add_argument("--grid", help="AxB (default: per-PDE desk grid)")
    pg.add_argument("--seed", type=int, default=0)
    pg.add_argument("--noise", type=float, default=0.0)
    pg.add_argument("--nu", type=float, help="burgers viscosity")
    pg.add_argument("--out", required=True)
    pg.set_defaults(func=cmd_gen_data)

    pt = sub.add_parser("train", help="run one training config")
    pt.add_argument("--config", required=True)
    pt.add_argument("--skip-verify", action="store_true",
                    help="bypass catalog verification (recorded)")
    pt.set_defaults(func=cmd_train)

    pe = sub.add_parser("eval", help="evaluate a checkpoint")
    pe.add_argument("--config", required=True)
    pe.add_argument("--checkpoint")
    pe.add_argument("--resolutions",
                    help="comma list, each N or AxB, e.g. 21,64 or 64x50")
    pe.set_defaults(func=cmd_eval)

    pa = sub.add_parser("ablate", help="run an ablation sweep")
    pa.add_argument("--config", required=True)
    pa.add_argument("--kind", required=True, choices=("noise", "generators"))
    pa.set_defaults(func=cmd_ablate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as ex:
        print(f"config error: {ex}", file=sys.stderr)
        return 2
    except (ValueError, KeyError) as ex:
        print(f"error: {ex}", file=sys.stderr)
        return 2
    except (RuntimeError, OSError) as ex:
        print(f"error: {ex}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
