"""Training loop that turns exact symmetry identities into loss terms.

Three methods share one objective builder: a plain data-fitting baseline, a
point-symmetry regularizer (prolonged actions of the catalog generators on
the equation residual), and an evolutionary-symmetry regularizer (actions of
the evolutionary representatives).  The symbolic prolongations are expanded
exactly, compiled onto the training grid, and attached to the network output
through the tape, so every regularizer gradient goes through the discrete
adjoint of the same stencils that define the term.

The module also owns evaluation (including zero-shot evaluation on
regenerated grids at other resolutions) and the two ablations used in the
experiment suite: generator subsets and label-noise sweeps.  All artifacts
(history rows, reports) are plain dicts/dataclasses that serialize
deterministically: sorted keys, no timestamps.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

import numpy as np

from .datasets import Dataset, GrfSpec, add_noise, gen_burgers, gen_darcy
from .grid_compiler import (
    CompiledExpr,
    DiffScheme,
    Grid,
    compile_expr,
    equation_error,
    interior_slices,
    relative_l2,
)
from .jetlang.core import Expr
from .operator_net import (
    NetConfig,
    OperatorNet,
    Tape,
    Tensor,
    adam_init,
    adam_step,
    add,
    apply_compiled,
    mean_all,
    mul,
    sqrt_,
    sub,
    sum_axes,
    take,
)
from .pde_catalog import PDESystem
from .symmetry_engine import (
    characteristic,
    cofactor_decompose,
    prolong_apply_evolutionary,
    prolong_apply_point,
)

__all__ = [
    "METHODS",
    "DECISIONS",
    "LossConfig",
    "TrainConfig",
    "LossTerm",
    "LossBuild",
    "TrainResult",
    "MetricsReport",
    "default_scheme",
    "default_generators",
    "build_loss_terms",
    "stack_dataset",
    "param_digest",
    "train",
    "evaluate",
    "regenerate",
    "ablate_generators",
    "ablate_noise",
    "write_history_csv",
    "write_json",
]

METHODS = ("baseline", "point_symmetry", "evolutionary_symmetry")

# Conventions echoed into every report so numbers stay interpretable
# without chasing the code that produced them.
DECISIONS = {
    "relative_l2": "per sample ||pred - target|| / ||target||, mean over set",
    "equation_error": "per sample rms of the compiled residual, 2 rings "
                      "clipped on non-periodic axes, mean over set",
    "generalization_gap": "test_l2 - train_l2",
    "stability_gap": "test_eqn - train_eqn",
    "gamma": "regularizer budget split evenly over active symmetry terms",
    "reduction": "loss terms are means of squares over batch and full grid; "
                 "data terms use per-sample relative L2",
    "optimizer": "adam, step decay lr_gamma every lr_step epochs",
}


def default_scheme(pde_name: str) -> DiffScheme:
    """Spectral along the periodic Burgers x axis, 2nd order elsewhere."""
    if pde_name == "burgers":
        return DiffScheme(("spectral", "fd2"))
    if pde_name == "darcy":
        return DiffScheme(("fd2", "fd2"))
    raise ValueError(f"no default scheme for pde {pde_name!r}")


def default_generators(pde_name: str) -> tuple[str, ...]:
    # Darcy ships two infinite families with formal function symbols; only
    # the concrete linear slice is compilable, so it is the training default.
    if pde_name == "burgers":
        return ("v1", "v2", "v3", "v4", "v5")
    if pde_name == "darcy":
        return ("v2_h=x", "v2_h=y")
    raise ValueError(f"no default generators for pde {pde_name!r}")


# ---------------------------------------------------------------------------
# Configs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LossConfig:
    """What goes into the objective.

    method selects the regularizer family; generators=None means the per-PDE
    default subset; include_residual=None resolves to False for Burgers
    (trajectories already carry the dynamics) and True for Darcy.
    """

    method: str = "baseline"
    gamma: float = 0.1
    generators: Optional[tuple[str, ...]] = None
    include_residual: Optional[bool] = None
    traj_weight: float = 1.0
    bc_weight: float = 1.0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; have {METHODS}")
        if not (math.isfinite(self.gamma) and self.gamma >= 0.0):
            raise ValueError("gamma must be finite and >= 0")
        for nm in ("traj_weight", "bc_weight"):
            v = getattr(self, nm)
            if not (math.isfinite(v) and v >= 0.0):
                raise ValueError(f"{nm} must be finite and >= 0")
        if self.generators is not None:
            object.__setattr__(self, "generators", tuple(self.generators))
        if self.method == "baseline" and self.generators:
            raise ValueError("baseline takes no generators")

    def to_json(self) -> dict:
        return {
            "method": self.method,
            "gamma": self.gamma,
            "generators": list(self.generators) if self.generators is not None
                          else None,
            "include_residual": self.include_residual,
            "traj_weight": self.traj_weight,
            "bc_weight": self.bc_weight,
        }

    @staticmethod
    def from_json(d: Mapping) -> "LossConfig":
        gens = d.get("generators")
        return LossConfig(
            method=d.get("method", "baseline"),
            gamma=float(d.get("gamma", 0.1)),
            generators=tuple(gens) if gens is not None else None,
            include_residual=d.get("include_residual"),
            traj_weight=float(d.get("traj_weight", 1.0)),
            bc_weight=float(d.get("bc_weight", 1.0)),
        )


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 300
    batch_size: int = 0          # 0 = full batch
    lr: float = 2e-3
    lr_step: int = 100           # 0 disables the decay
    lr_gamma: float = 0.5
    seed: int = 0
    n_train: int = 0             # 0 = all samples in the provided dataset
    log_every: int = 10

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 0 or self.n_train < 0:
            raise ValueError("batch_size and n_train must be >= 0")
        if not (math.isfinite(self.lr) and self.lr > 0):
            raise ValueError("lr must be finite and > 0")
        if self.lr_step < 0:
            raise ValueError("lr_step must be >= 0")
        if not (0.0 < self.lr_gamma <= 1.0):
            raise ValueError("lr_gamma must be in (0, 1]")
        if self.log_every < 1:
            raise ValueError("log_every must be >= 1")

    def to_json(self) -> dict:
        return {
            "epochs": self.epochs, "batch_size": self.batch_size,
            "lr": self.lr, "lr_step": self.lr_step,
            "lr_gamma": self.lr_gamma, "seed": self.seed,
            "n_train": self.n_train, "log_every": self.log_every,
        }

    @staticmethod
    def from_json(d: Mapping) -> "TrainConfig":
        keys = ("epochs", "batch_size", "lr", "lr_step", "lr_gamma", "seed",
                "n_train", "log_every")
        kw = {k: d[k] for k in keys if k in d}
        for k in ("lr", "lr_gamma"):
            if k in kw:
                kw[k] = float(kw[k])
        for k in ("epochs", "batch_size", "lr_step", "seed", "n_train",
                  "log_every"):
            if k in kw:
                kw[k] = int(kw[k])
        return TrainConfig(**kw)


# ---------------------------------------------------------------------------
# Objective construction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LossTerm:
    """One compiled regularizer term, reduced as mean of squares.

    provably_zero terms come from generators whose prolonged action on the
    residual is the zero polynomial; they are recorded for bookkeeping but
    never enter the objective, so adding them cannot perturb a single bit of
    the training trajectory.  multiple holds the compiled cofactor c when the
    symbolic term is exactly c times the residual, enabling the runtime
    identity check term^2 == c^2 * residual^2.
    """

    name: str
    kind: str                    # "residual" | "symmetry"
    weight: float
    compiled: Optional[CompiledExpr]
    provably_zero: bool = False
    multiple: Optional[CompiledExpr] = None


@dataclass(frozen=True)
class LossBuild:
    residual: CompiledExpr
    terms: tuple[LossTerm, ...]
    resolved: dict

    def active(self) -> tuple[LossTerm, ...]:
        return tuple(t for t in self.terms if not t.provably_zero)


def _symbolic_term(pde: PDESystem, method: str, gen_name: str) -> Expr:
    v = pde.generator(gen_name)
    if method == "point_symmetry":
        return prolong_apply_point(v, pde.residual)
    return prolong_apply_evolutionary(characteristic(v), pde.residual)


def resolve_loss_config(pde: PDESystem, cfg: LossConfig) -> LossConfig:
    """Fill in per-PDE defaults so two equal resolved configs mean the same
    objective."""
    gens = cfg.generators
    if gens is None:
        gens = () if cfg.method == "baseline" else default_generators(pde.name)
    inc = cfg.include_residual
    if inc is None:
        inc = pde.name == "darcy"
    return replace(cfg, generators=tuple(gens), include_residual=bool(inc))


def build_loss_terms(
    pde: PDESystem,
    cfg: LossConfig,
    grid: Grid,
    scheme: Optional[DiffScheme] = None,
    params: Optional[Mapping[str, float]] = None,
) -> LossBuild:
    """Expand, normalize and compile the symbolic loss terms for one grid.

    The regularizer budget gamma is split evenly across the active (not
    provably zero) symmetry terms, so enlarging the generator subset does not
    inflate the total regularization pressure.
    """
    cfg = resolve_loss_config(pde, cfg)
    scheme = scheme or default_scheme(pde.name)
    for g in cfg.generators:
        pde.generator(g)  # fail early on unknown names

    residual_ce = compile_expr(pde.residual, grid, scheme, params)

    sym_exprs: list[tuple[str, Expr]] = []
    if cfg.method != "baseline":
        for g in cfg.generators:
            sym_exprs.append((g, _symbolic_term(pde, cfg.method, g)))

    n_active = sum(1 for _, e in sym_exprs if not e.is_zero())
    w_sym = cfg.gamma / n_active if n_active else 0.0

    terms: list[LossTerm] = []
    if cfg.include_residual:
        terms.append(LossTerm("residual", "residual", 1.0, residual_ce))
    for name, e in sym_exprs:
        if e.is_zero():
            terms.append(LossTerm(name, "symmetry", 0.0, None,
                                  provably_zero=True))
            continue
        ce = compile_expr(e, grid, scheme, params)
        mult = None
        dec = cofactor_decompose(e, pde, max_order=0)
        if dec is not None and dec.is_pure_multiple():
            zero = (0,) * len(pde.space.independent)
            mult = compile_expr(dec.coefficient(zero), grid, scheme, params)
        terms.append(LossTerm(name, "symmetry", w_sym, ce, multiple=mult))

    resolved = {
        "loss": cfg.to_json(),
        "scheme": list(scheme.per_axis),
        "params": dict(params or {}),
        "n_active_symmetry_terms": n_active,
        "symmetry_term_weight": w_sym,
    }
    return LossBuild(residual_ce, tuple(terms), resolved)


# ---------------------------------------------------------------------------
# Data plumbing
# ---------------------------------------------------------------------------


def stack_dataset(ds: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """(batch, channel, *grid) inputs in declaration order plus targets.

    Forced C-contiguous: solver outputs arrive as transposed views and BLAS
    picks stride-dependent kernels, so without the copy a generated dataset
    and its loaded round trip train to bitwise different weights.
    """
    names = ds.input_names
    X = np.ascontiguousarray(np.stack(
        [np.stack([s.inputs[n].values for n in names]) for s in ds.samples]
    ))
    Y = np.ascontiguousarray(np.stack([s.target.values for s in ds.samples]))
    return X, Y


def _const_slots(ce: CompiledExpr, pde: PDESystem, X: np.ndarray,
                 names: Sequence[str]) -> dict[str, np.ndarray]:
    """Batched arrays for every dependent the expression reads except u."""
    needed = {pde.space.dependent[a] for a, _ in ce.channels}
    out = {}
    for dep in sorted(needed - {"u"}):
        if dep not in names:
            raise ValueError(
                f"compiled term needs channel {dep!r} absent from the dataset"
            )
        out[dep] = X[:, names.index(dep)]
    return out


def _boundary_mask(grid: Grid) -> np.ndarray:
    mask = np.zeros(grid.shape)
    for ax, axis in enumerate(grid.axes):
        if axis.periodic:
            continue
        lo = [slice(None)] * len(grid.shape)
        hi = [slice(None)] * len(grid.shape)
        lo[ax], hi[ax] = 0, -1
        mask[tuple(lo)] = 1.0
        mask[tuple(hi)] = 1.0
    return mask


def _rel_l2_tensor(pred: Tensor, targets: np.ndarray) -> Tensor:
    """Mean over the batch of per-sample relative L2 distances."""
    norms = np.sqrt(np.sum(targets ** 2, axis=tuple(range(1, targets.ndim))))
    if not np.all(norms > 0):
        raise ValueError("relative L2 needs nonzero targets")
    diff = sub(pred, targets)
    ss = sum_axes(mul(diff, diff), tuple(range(1, targets.ndim)))
    return mean_all(mul(sqrt_(ss), 1.0 / norms))


def _mean_sq_tensor(x: Tensor) -> Tensor:
    return mean_all(mul(x, x))


def _masked_mean_sq(x: Tensor, mask: np.ndarray) -> Tensor:
    # mean over the masked points only; mask is 0/1 and broadcasts over batch
    scale = mask.size / mask.sum()
    return mul(mean_all(mul(mul(x, x), mask)), scale)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


def param_digest(net: OperatorNet) -> str:
    """Order-stable sha256 over all parameter bytes; equal digests mean
    bit-identical networks."""
    h = hashlib.sha256()
    for name, _, _ in net.param_spec(net.config):
        h.update(name.encode())
        h.update(np.ascontiguousarray(net.params[name]).tobytes())
    return h.hexdigest()


@dataclass
class TrainResult:
    net: OperatorNet
    history: tuple[dict, ...]
    build: LossBuild
    resolved: dict


def _batch_plan(n: int, batch_size: int, seed: int, epoch: int) -> list[np.ndarray]:
    if batch_size == 0 or batch_size >= n:
        return [np.arange(n)]
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed,
                                                       spawn_key=(7, epoch)))
    perm = rng.permutation(n)
    return [perm[i:i + batch_size] for i in range(0, n, batch_size)]


def _multiple_check(term: LossTerm, build: LossBuild, inputs: dict) -> float:
    """Max relative deviation of term^2 from c^2 * residual^2 on one batch."""
    pr = term.compiled.eval(inputs, batch=True)
    delta = build.residual.eval(inputs, batch=True)
    c = term.multiple.eval({}).values  # cofactor depends on coordinates only
    want = (c ** 2) * (delta ** 2)
    scale = float(np.max(np.abs(want))) + 1e-300
    return float(np.max(np.abs(pr ** 2 - want))) / scale


def train(
    pde: PDESystem,
    dataset: Dataset,
    loss_cfg: LossConfig,
    train_cfg: TrainConfig,
    net_cfg: Optional[NetConfig] = None,
) -> TrainResult:
    """Fit the operator net on one dataset under the configured objective.

    History carries one row per epoch with the weighted contribution of every
    term; their plain sum matches the logged total to float-sum reordering.
    At logged epochs the row also gets a parameter digest and, for symmetry
    terms that are exact residual multiples, the measured deviation of the
    identity term^2 = c^2 * residual^2 on the first batch.
    """
    if dataset.pde != pde.name:
        raise ValueError(f"dataset is for {dataset.pde!r}, not {pde.name!r}")
    if train_cfg.n_train:
        if train_cfg.n_train > len(dataset.samples):
            raise ValueError("n_train exceeds the dataset size")
        dataset = Dataset(dataset.pde, dataset.grid,
                          dataset.samples[: train_cfg.n_train], dataset.meta)

    grid = dataset.grid
    names = dataset.input_names
    params = {"nu": dataset.meta["nu"]} if pde.name == "burgers" else {}
    build = build_loss_terms(pde, loss_cfg, grid, params=params)
    active = build.active()

    X, Y = stack_dataset(dataset)
    cfg_r = LossConfig.from_json(build.resolved["loss"])
    bmask = _boundary_mask(grid) if pde.name == "darcy" else None
    # residual-derived terms are averaged over the same interior the metrics
    # report; otherwise the one-sided closure rows on non-periodic axes
    # dominate the term means and the regularizer optimizes points the
    # equation-error metric never sees
    imask = np.zeros(grid.shape)
    imask[interior_slices(grid, rings=2)] = 1.0

    if net_cfg is None:
        net_cfg = NetConfig(in_channels=len(names))
    if net_cfg.in_channels != len(names):
        raise ValueError("net in_channels does not match the dataset")
    net = OperatorNet.init(net_cfg, seed=train_cfg.seed)
    state = adam_init(net)

    term_slots = {t.name: t for t in active}
    const_slots = {
        name: _const_slots(t.compiled, pde, X, names)
        for name, t in term_slots.items()
    }

    history: list[dict] = []
    n = len(dataset.samples)
    for epoch in range(train_cfg.epochs):
        if train_cfg.lr_step:
            lr = train_cfg.lr * train_cfg.lr_gamma ** (epoch // train_cfg.lr_step)
        else:
            lr = train_cfg.lr
        logged = epoch % train_cfg.log_every == 0 or epoch == train_cfg.epochs - 1

        acc: dict[str, float] = {}
        acc_total = 0.0
        first_inputs = None
        for idx in _batch_plan(n, train_cfg.batch_size, train_cfg.seed, epoch):
            tape = Tape()
            xb, yb = X[idx], Y[idx]
            out = net.forward(xb, tape)
            pred = take(out, (slice(None), 0))

            contribs: dict[str, Tensor] = {}
            contribs["data"] = mul(_rel_l2_tensor(pred, yb), cfg_r.traj_weight)
            if pde.name == "burgers":
                ic = sub(take(pred, (slice(None), slice(None), 0)),
                         yb[:, :, 0])
                contribs["ic"] = mul(_mean_sq_tensor(ic), cfg_r.bc_weight)
            else:
                contribs["bc"] = mul(_masked_mean_sq(pred, bmask),
                                     cfg_r.bc_weight)
            for name, t in term_slots.items():
                s = apply_compiled(t.compiled, const_slots[name], pred, "u")
                contribs[name] = mul(_masked_mean_sq(s, imask), t.weight)

            loss = None
            for v in contribs.values():
                loss = v if loss is None else add(loss, v)
            tape.backward(loss)
            adam_step(net, tape.gradients(), state, lr)
            tape.release()

            w = len(idx) / n
            acc_total += w * float(loss.value)
            for k, v in contribs.items():
                acc[k] = acc.get(k, 0.0) + w * float(v.value)
            if first_inputs is None:
                first_inputs = dict(xb=xb, pred=pred.value)

        row = {"epoch": epoch, "lr": lr, "total": acc_total}
        for k in acc:
            row[f"loss:{k}"] = acc[k]
        if not math.isfinite(acc_total):
            raise RuntimeError(
                f"non-finite loss at epoch {epoch}: "
                + json.dumps({k: acc[k] for k in sorted(acc)})
            )
        if logged:
            row["param_digest"] = param_digest(net)
            for name, t in term_slots.items():
                if t.multiple is None:
                    continue
                inputs = dict(const_slots[name])
                inputs["u"] = first_inputs["pred"]
                dev = _multiple_check(t, build, inputs)
                if dev > 1e-8:
                    raise RuntimeError(
                        f"term {name} drifted from its residual multiple: "
                        f"max relative deviation {dev:.3e}"
                    )
                row[f"check:{name}"] = dev
        history.append(row)

    resolved = dict(build.resolved)
    resolved["train"] = train_cfg.to_json()
    resolved["net"] = net_cfg.to_json()
    resolved["grid"] = {
        "names": list(grid.names),
        "shape": list(grid.shape),
        "periodic": [a.periodic for a in grid.axes],
    }
    return TrainResult(net, tuple(history), build, resolved)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MetricsReport:
    train_l2: float
    test_l2: float
    train_eqn: float
    test_eqn: float
    generalization_gap: float
    stability_gap: float
    zero_shot: dict
    config: dict
    decisions: dict

    def to_json(self) -> dict:
        return {
            "train_l2": self.train_l2,
            "test_l2": self.test_l2,
            "train_eqn": self.train_eqn,
            "test_eqn": self.test_eqn,
            "generalization_gap": self.generalization_gap,
            "stability_gap": self.stability_gap,
            "zero_shot": self.zero_shot,
            "config": self.config,
            "decisions": self.decisions,
        }


def _predict(net: OperatorNet, X: np.ndarray) -> np.ndarray:
    return net.eval_at_resolution(X)[:, 0]


def dataset_metrics(net: OperatorNet, pde: PDESystem,
                    ds: Dataset) -> tuple[float, float]:
    """(relative L2, equation error), each averaged over the samples."""
    X, Y = stack_dataset(ds)
    preds = _predict(net, X)
    l2 = float(np.mean([relative_l2(p, y) for p, y in zip(preds, Y)]))

    params = {"nu": ds.meta["nu"]} if pde.name == "burgers" else {}
    ce = compile_expr(pde.residual, ds.grid, default_scheme(pde.name), params)
    inputs = _const_slots(ce, pde, X, ds.input_names)
    inputs["u"] = preds
    delta = ce.eval(inputs, batch=True)
    eqn = float(np.mean([equation_error(d, ds.grid) for d in delta]))
    return l2, eqn


def regenerate(ds: Dataset, shape: tuple[int, int]) -> Dataset:
    """Same sampled continuous fields, new grid resolution.

    Rebuilds the dataset from its recorded recipe (seed, field spec, solver
    settings), so the half/double-resolution sets are discretizations of the
    same underlying problems rather than fresh draws.
    """
    meta = ds.meta
    spec = GrfSpec.from_json(meta["grf"])
    n = len(ds.samples)
    if ds.pde == "burgers":
        grid = Grid.regular(("x", "t"), shape, (True, False))
        out = gen_burgers(n, grid, nu=meta["nu"], ic_spec=spec,
                          seed=meta["seed"],
                          internal_nx=meta.get("internal_nx", 256))
    elif ds.pde == "darcy":
        grid = Grid.regular(("x", "y"), shape, (False, False))
        out = gen_darcy(n, grid, k_spec=spec, seed=meta["seed"])
    else:
        raise ValueError(f"cannot regenerate pde {ds.pde!r}")
    if meta.get("noise_level", 0.0):
        out = add_noise(out, meta["noise_level"], meta.get("noise_seed", 0))
    return out


def evaluate(
    net: OperatorNet,
    pde: PDESystem,
    train_ds: Dataset,
    test_ds: Dataset,
    resolutions: Sequence[tuple[int, int]] = (),
    config: Optional[dict] = None,
) -> MetricsReport:
    """Metrics on both splits plus zero-shot blocks at other resolutions.

    Zero-shot test sets are regenerated from the test recipe at the requested
    shapes and fed to the same network, which is resolution independent as
    long as the grid supports its spectral modes.
    """
    train_l2, train_eqn = dataset_metrics(net, pde, train_ds)
    test_l2, test_eqn = dataset_metrics(net, pde, test_ds)
    zero_shot = {}
    for shape in resolutions:
        rds = regenerate(test_ds, tuple(shape))
        l2, eqn = dataset_metrics(net, pde, rds)
        zero_shot[f"{shape[0]}x{shape[1]}"] = {"l2": l2, "eqn": eqn}
    for v in (train_l2, test_l2, train_eqn, test_eqn):
        if not math.isfinite(v):
            raise RuntimeError("non-finite evaluation metric")
    return MetricsReport(
        train_l2=train_l2,
        test_l2=test_l2,
        train_eqn=train_eqn,
        test_eqn=test_eqn,
        generalization_gap=test_l2 - train_l2,
        stability_gap=test_eqn - train_eqn,
        zero_shot=zero_shot,
        config=dict(config or {}),
        decisions=dict(DECISIONS),
    )


# ---------------------------------------------------------------------------
# Ablations
# ---------------------------------------------------------------------------


def ablate_generators(
    pde: PDESystem,
    train_ds: Dataset,
    test_ds: Dataset,
    loss_cfg: LossConfig,
    train_cfg: TrainConfig,
    net_cfg: Optional[NetConfig] = None,
    order: Optional[Sequence[str]] = None,
) -> list[dict]:
    """Retrain on growing generator prefixes; k=0 is the exact baseline."""
    if loss_cfg.method == "baseline":
        raise ValueError("generator ablation needs a symmetry method")
    order = tuple(order) if order is not None else default_generators(pde.name)
    rows = []
    for k in range(len(order) + 1):
        cfg = replace(loss_cfg, generators=order[:k])
        res = train(pde, train_ds, cfg, train_cfg, net_cfg)
        rep = evaluate(res.net, pde, train_ds, test_ds)
        rows.append({
            "k": k,
            "generators": "+".join(order[:k]) if k else "(none)",
            "train_l2": rep.train_l2,
            "test_l2": rep.test_l2,
            "train_eqn": rep.train_eqn,
            "test_eqn": rep.test_eqn,
            "final_digest": res.history[-1]["param_digest"],
        })
    return rows


def ablate_noise(
    pde: PDESystem,
    train_ds: Dataset,
    test_ds: Dataset,
    loss_cfg: LossConfig,
    train_cfg: TrainConfig,
    net_cfg: Optional[NetConfig] = None,
    levels: Sequence[float] = (0.0, 0.01, 0.05, 0.1),
    noise_seed: int = 0,
) -> list[dict]:
    """Label-noise sweep: the configured method against the plain baseline.

    Train metrics are measured on the noisy training set the model actually
    saw; test metrics on the clean held-out set.
    """
    if loss_cfg.method == "baseline":
        raise ValueError("noise ablation compares a symmetry method "
                         "against baseline")
    methods = (
        ("ours", loss_cfg),
        ("baseline", replace(loss_cfg, method="baseline", generators=(),
                             gamma=0.0)),
    )
    rows = []
    for level in levels:
        noisy = add_noise(train_ds, level, seed=noise_seed)
        for label, cfg in methods:
            res = train(pde, noisy, cfg, train_cfg, net_cfg)
            rep = evaluate(res.net, pde, noisy, test_ds)
            rows.append({
                "level": level,
                "method": label,
                "train_l2": rep.train_l2,
                "train_eqn": rep.train_eqn,
                "test_l2": rep.test_l2,
                "test_eqn": rep.test_eqn,
                "generalization_gap": rep.generalization_gap,
                "stability_gap": rep.stability_gap,
            })
    return rows


# ---------------------------------------------------------------------------
# Deterministic artifact writers
# ---------------------------------------------------------------------------


def write_history_csv(history: Sequence[Mapping], path) -> None:
    """Fixed column order, repr floats, blanks for unlogged fields."""
    lead = ["epoch", "lr", "total"]
    rest = sorted({k for row in history for k in row} - set(lead))
    cols = lead + rest
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in history:
            out = []
            for c in cols:
                v = row.get(c, "")
                out.append(repr(v) if isinstance(v, float) else str(v))
            w.writerow(out)


def write_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
