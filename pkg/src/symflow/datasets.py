"""Dataset generation, perturbation, and serialization.

Random fields are band-limited Fourier series with a fixed, grid-independent
mode set: a sample drawn from a given seed is a *continuous* function, so
regenerating the dataset at another resolution evaluates the same functions
on the new grid (the basis of resolution-consistent zero-shot evaluation).
Non-periodic axes embed the field in a period-2 torus and crop to [0, 1].

Burgers trajectories come from an integrating-factor RK4 pseudospectral
solver on a fixed internal spatial grid, subsampled to the output grid.
Darcy solutions come from the conservative 5-point harmonic-mean stencil via
conjugate gradients (`symflow.kernels`).
"""
from __future__ import annotations

import io
import json
import math
import struct
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .grid_compiler import Grid, GridField
from .kernels import darcy_cg

__all__ = [
    "GrfSpec",
    "Sample",
    "Dataset",
    "sample_grf",
    "gen_burgers",
    "gen_darcy",
    "add_noise",
    "save",
    "load",
    "downsample",
    "MAGIC",
]

MAGIC = b"SYMFLOW1"

_D_HI, _D_LO = 12.0, 3.0  # thresholded-permeability plateau values


@dataclass(frozen=True)
class GrfSpec:
    """Band-limited Gaussian random field specification.

    kind: 'squared_exponential' (spectral weights exp(-2 pi^2 l^2 |k|^2)) or
    'power_spectrum' (weights |k|^-decay).  Weights are normalized so the
    pointwise variance is sigma2.  The mode band is fixed, so fields are
    resolution-independent functions.
    """

    kind: str = "squared_exponential"
    length_scale: float = 0.1
    decay: float = 4.0
    sigma2: float = 1.0
    band: int = 7
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("squared_exponential", "power_spectrum"):
            raise ValueError(f"unknown GRF kind {self.kind!r}")
        if self.length_scale <= 0:
            raise ValueError("length_scale must be positive")
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be non-negative")
        if self.band < 1:
            raise ValueError("band must be >= 1")

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "length_scale": self.length_scale,
            "decay": self.decay,
            "sigma2": self.sigma2,
            "band": self.band,
            "seed": self.seed,
        }

    @staticmethod
    def from_json(d: Mapping) -> "GrfSpec":
        return GrfSpec(**dict(d))


def _grf_modes(dims: int, band: int) -> list[tuple[int, ...]]:
    """Non-zero integer wave vectors with |k|_inf <= band, fixed order."""
    rng = range(-band, band + 1)
    modes = []
    if dims == 1:
        modes = [(k,) for k in range(1, band + 1)]  # one per conjugate pair
    else:
        for kx in rng:
            for ky in rng:
                if (kx, ky) == (0, 0):
                    continue
                # keep one representative of each +/-k pair
                if kx < 0 or (kx == 0 and ky < 0):
                    continue
                modes.append((kx, ky))
    return modes


def _grf_weights(spec: GrfSpec, modes: Sequence[tuple[int, ...]],
                 periods: Sequence[float]) -> np.ndarray:
    k2 = np.array(
        [sum((k / p) ** 2 for k, p in zip(mode, periods)) for mode in modes]
    )
    if spec.kind == "squared_exponential":
        w = np.exp(-2.0 * np.pi ** 2 * spec.length_scale ** 2 * k2)
    else:
        w = k2 ** (-spec.decay / 2.0)
    total = w.sum()
    if total == 0:
        raise ValueError("degenerate GRF weights")
    return spec.sigma2 * w / total


def sample_grf(grid: Grid, spec: GrfSpec, seed: Optional[int] = None) -> GridField:
    """Zero-mean stationary Gaussian field evaluated pointwise on the grid."""
    if seed is None:
        seed = spec.seed
    dims = len(grid.axes)
    if dims not in (1, 2):
        raise ValueError("GRF sampler supports 1 or 2 axes")
    periods = [1.0 if ax.periodic else 2.0 for ax in grid.axes]
    modes = _grf_modes(dims, spec.band)
    var = _grf_weights(spec, modes, periods)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    coeffs = rng.standard_normal((len(modes), 2))
    out = np.zeros(grid.shape)
    if spec.sigma2 == 0:
        return GridField(out, grid)
    coords = [grid.coordinate_field(i) for i in range(dims)]
    for mode, v, (a, b) in zip(modes, var, coeffs):
        phase = np.zeros(grid.shape)
        for k, p, c in zip(mode, periods, coords):
            phase = phase + (2.0 * np.pi * k / p) * c
        # a,b ~ N(0,1): a*sqrt(v)*cos + b*sqrt(v)*sin has pointwise variance v
        s = math.sqrt(v)
        out += s * (a * np.cos(phase) + b * np.sin(phase))
    return GridField(out, grid)


@dataclass(frozen=True)
class Sample:
    inputs: Mapping[str, GridField]
    target: GridField

    def __post_init__(self):
        object.__setattr__(self, "inputs", dict(self.inputs))
        for v in self.inputs.values():
            if v.grid != self.target.grid:
                raise ValueError("sample channels on inconsistent grids")


@dataclass(frozen=True)
class Dataset:
    pde: str
    grid: Grid
    samples: tuple[Sample, ...]
    meta: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        object.__setattr__(self, "meta", dict(self.meta))

    @property
    def input_names(self) -> tuple[str, ...]:
        return tuple(self.samples[0].inputs.keys())


def _sample_seed(master: int, index: int, retry: int = 0) -> int:
    # counter-derived so generation order and thread count cannot matter
    ss = np.random.SeedSequence(entropy=master, spawn_key=(index, retry))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


# ---------------------------------------------------------------------------
# Burgers
# ---------------------------------------------------------------------------


def _burgers_rhs_hat(u_hat: np.ndarray, n: int, kx: np.ndarray,
                     mask: np.ndarray) -> np.ndarray:
    """Fourier-space advection term -FFT(u u_x) with 2/3 dealiasing."""
    u = np.fft.irfft(u_hat, n=n)
    ux = np.fft.irfft(1j * kx * u_hat, n=n)
    adv = np.fft.rfft(u * ux)
    return -adv * mask


def _solve_burgers(
    u0: np.ndarray, nu: float, t_out: np.ndarray, cfl: float = 0.4
) -> np.ndarray:
    """Integrating-factor RK4 on a periodic grid; returns u at t_out times.

    The viscous factor is handled exactly, so the step limit is advective
    only; the substep count is fixed from the initial data (max |u| is
    non-increasing for viscous Burgers).
    """
    n = len(u0)
    kx = 2.0 * np.pi * np.fft.rfftfreq(n, d=1.0 / n)
    k2 = kx ** 2
    cut = n // 3
    mask = (np.arange(n // 2 + 1) <= cut).astype(float)
    umax = float(np.abs(u0).max())
    dt_stable = cfl / (n * max(umax, 1e-12))
    out = np.empty((len(t_out), n))
    u_hat = np.fft.rfft(u0) * mask
    out[0] = np.fft.irfft(u_hat, n=n)
    t = float(t_out[0])
    for row, t_next in enumerate(t_out[1:], start=1):
        span = float(t_next) - t
        steps = max(1, int(math.ceil(span / dt_stable)))
        dt = span / steps
        E = np.exp(-nu * k2 * dt)
        E2 = np.exp(-nu * k2 * (dt / 2.0))
        for _ in range(steps):
            # IF-RK4 on v = exp(nu k^2 t) u_hat
            a = _burgers_rhs_hat(u_hat, n, kx, mask)
            b = _burgers_rhs_hat(E2 * (u_hat + 0.5 * dt * a), n, kx, mask)
            c = _burgers_rhs_hat(E2 * u_hat + 0.5 * dt * b, n, kx, mask)
            d = _burgers_rhs_hat(E * u_hat + dt * E2 * c, n, kx, mask)
            u_hat = E * u_hat + (dt / 6.0) * (E * a + 2.0 * E2 * (b + c) + d)
        t = float(t_next)
        out[row] = np.fft.irfft(u_hat, n=n)
    return out


class UnstableSampleError(RuntimeError):
    pass


def _burgers_trajectory(
    u0_fn_grid: np.ndarray, nu: float, n_t: int, internal_stride: int
) -> np.ndarray:
    t_out = np.linspace(0.0, 1.0, n_t)
    traj = _solve_burgers(u0_fn_grid, nu, t_out)
    if not np.all(np.isfinite(traj)) or np.abs(traj).max() > 1e6:
        raise UnstableSampleError("blow-up detected")
    energy = np.mean(traj * traj, axis=1)
    if np.any(np.diff(energy) > 1e-10 * max(energy[0], 1e-30)):
        raise UnstableSampleError("discrete energy increased")
    return traj[:, ::internal_stride]


def gen_burgers(
    n: int,
    grid: Optional[Grid] = None,
    nu: float = 0.01,
    ic_spec: Optional[GrfSpec] = None,
    seed: int = 0,
    internal_nx: int = 256,
) -> Dataset:
    """Sample u0 from a GRF and integrate the viscous Burgers equation.

    The solve runs on a fixed internal periodic grid (internal_nx points,
    rounded up to a multiple of the output width) and is subsampled to the
    output grid, so different output resolutions see the same trajectories.
    """
    if grid is None:
        grid = Grid.regular(("x", "t"), (128, 100), (True, False))
    if not grid.axes[0].periodic or grid.axes[1].periodic:
        raise ValueError("burgers grid needs periodic x and non-periodic t")
    if ic_spec is None:
        ic_spec = GrfSpec()
    n_x, n_t = grid.shape
    stride = max(1, math.ceil(internal_nx / n_x))
    nx_int = stride * n_x
    fine = Grid.regular(("x",), (nx_int,), (True,))
    samples = []
    resampled = 0
    for i in range(n):
        retry = 0
        while True:
            s = _sample_seed(seed, i, retry)
            u0 = sample_grf(fine, ic_spec, seed=s).values
            try:
                traj_xt = _burgers_trajectory(u0, nu, n_t, stride).T
                break
            except UnstableSampleError:
                retry += 1
                resampled += 1
                if retry > 8:
                    raise
        u0_out = np.broadcast_to(traj_xt[:, :1], grid.shape).copy()
        samples.append(
            Sample(
                inputs={
                    "u0": GridField(u0_out, grid),
                    "x": GridField(grid.coordinate_field(0), grid),
                    "t": GridField(grid.coordinate_field(1), grid),
                },
                target=GridField(traj_xt, grid),
            )
        )
    meta = {
        "pde": "burgers",
        "nu": nu,
        "seed": seed,
        "grf": ic_spec.to_json(),
        "noise_level": 0.0,
        "internal_nx": nx_int,
        "resampled": resampled,
    }
    return Dataset("burgers", grid, tuple(samples), meta)


# ---------------------------------------------------------------------------
# Darcy
# ---------------------------------------------------------------------------


def gen_darcy(
    n: int,
    grid: Optional[Grid] = None,
    k_spec: Optional[GrfSpec] = None,
    seed: int = 0,
    cg_tol: float = 1e-10,
) -> Dataset:
    """Thresholded-GRF permeability, f = 1, zero-Dirichlet CG solve."""
    if grid is None:
        grid = Grid.regular(("x", "y"), (61, 61), (False, False))
    if any(ax.periodic for ax in grid.axes):
        raise ValueError("darcy grid axes must be non-periodic")
    if grid.axes[0].n != grid.axes[1].n:
        raise ValueError("darcy grid must be square")
    if k_spec is None:
        k_spec = GrfSpec()
    h = grid.axes[0].h
    f = np.ones(grid.shape)
    samples = []
    for i in range(n):
        s = _sample_seed(seed, i)
        z = sample_grf(grid, k_spec, seed=s).values
        k = np.where(z >= 0.0, _D_HI, _D_LO)
        u = darcy_cg(k, f, h, tol=cg_tol)
        samples.append(
            Sample(
                inputs={
                    "k": GridField(k, grid),
                    "f": GridField(f, grid),
                    "x": GridField(grid.coordinate_field(0), grid),
                    "y": GridField(grid.coordinate_field(1), grid),
                },
                target=GridField(u, grid),
            )
        )
    meta = {
        "pde": "darcy",
        "seed": seed,
        "grf": k_spec.to_json(),
        "noise_level": 0.0,
        "k_hi": _D_HI,
        "k_lo": _D_LO,
        "cg_tol": cg_tol,
    }
    return Dataset("darcy", grid, tuple(samples), meta)


# ---------------------------------------------------------------------------
# Noise, serialization, downsampling
# ---------------------------------------------------------------------------


def add_noise(ds: Dataset, level: float, seed: int = 0) -> Dataset:
    """target <- target + level * std(target) * eps, per sample.

    Inputs are never touched.  level 0 returns the dataset unchanged
    (bit-exact).  The caller decides which split to noise; conventionally
    only training targets are.
    """
    if level < 0:
        raise ValueError("noise level must be >= 0")
    if level == 0:
        return ds
    out = []
    for i, smp in enumerate(ds.samples):
        rng = np.random.default_rng(np.random.SeedSequence(
            entropy=seed, spawn_key=(i,)))
        eps = rng.standard_normal(smp.target.values.shape)
        sd = float(np.std(smp.target.values))
        noisy = smp.target.values + level * sd * eps
        out.append(Sample(inputs=smp.inputs, target=GridField(noisy, ds.grid)))
    meta = dict(ds.meta)
    meta["noise_level"] = level
    meta["noise_seed"] = seed
    return Dataset(ds.pde, ds.grid, tuple(out), meta)


def _header(ds: Dataset) -> dict:
    return {
        "schema": 1,
        "pde": ds.pde,
        "axes": [
            {"name": a.name, "n": a.n, "h": a.h, "periodic": a.periodic}
            for a in ds.grid.axes
        ],
        "n_samples": len(ds.samples),
        "channels": list(ds.input_names) + ["target"],
        "meta": ds.meta,
    }


def save(ds: Dataset, path: str) -> None:
    """Binary container: magic, 8-byte LE header length, JSON header,
    float64 LE payload (samples contiguous, channels in header order)."""
    if not ds.samples:
        raise ValueError("refusing to save an empty dataset")
    header = json.dumps(_header(ds), sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for smp in ds.samples:
            for name in ds.input_names:
                fh.write(np.ascontiguousarray(
                    smp.inputs[name].values, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(
                smp.target.values, dtype="<f8").tobytes())


def load(path: str) -> Dataset:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise ValueError(f"bad magic {magic!r}; not a dataset file")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        try:
            header = json.loads(fh.read(hlen).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ValueError(f"corrupt header: {exc}") from exc
        axes = header["axes"]
        from .grid_compiler import Axis

        grid = Grid(tuple(
            Axis(a["name"], a["n"], a["h"], a["periodic"]) for a in axes
        ))
        channels = header["channels"]
        n_samples = header["n_samples"]
        count = int(np.prod(grid.shape))
        payload = fh.read()
    expect = n_samples * len(channels) * count * 8
    if len(payload) != expect:
        raise ValueError(
            f"payload size {len(payload)} != expected {expect} bytes"
        )
    flat = np.frombuffer(payload, dtype="<f8")
    samples = []
    pos = 0
    for _ in range(n_samples):
        fields = {}
        for name in channels:
            arr = flat[pos:pos + count].reshape(grid.shape).copy()
            fields[name] = GridField(arr, grid)
            pos += count
        target = fields.pop("target")
        samples.append(Sample(inputs=fields, target=target))
    return Dataset(header["pde"], grid, tuple(samples), header.get("meta", {}))


def downsample(ds: Dataset, factor: int) -> Dataset:
    """Strided subsampling; non-periodic axes keep both endpoints, which
    requires (n - 1) divisible by the factor (periodic: n divisible)."""
    if factor < 1:
        raise ValueError("factor must be >= 1")
    if factor == 1:
        return ds
    slices = []
    names, shape, periodic = [], [], []
    for ax in ds.grid.axes:
        if ax.periodic:
            if ax.n % factor:
                raise ValueError(
                    f"periodic axis {ax.name}: {ax.n} not divisible by {factor}"
                )
            shape.append(ax.n // factor)
        else:
            if (ax.n - 1) % factor:
                raise ValueError(
                    f"axis {ax.name}: n-1 = {ax.n - 1} not divisible by {factor}"
                )
            shape.append((ax.n - 1) // factor + 1)
        slices.append(slice(None, None, factor))
        names.append(ax.name)
        periodic.append(ax.periodic)
    grid = Grid.regular(names, shape, periodic)
    sl = tuple(slices)
    out = []
    for smp in ds.samples:
        inputs = {
            nm: GridField(fld.values[sl].copy(), grid)
            for nm, fld in smp.inputs.items()
        }
        out.append(Sample(inputs=inputs,
                          target=GridField(smp.target.values[sl].copy(), grid)))
    meta = dict(ds.meta)
    meta["downsampled_by"] = meta.get("downsampled_by", 1) * factor
    return Dataset(ds.pde, grid, tuple(out), meta)
