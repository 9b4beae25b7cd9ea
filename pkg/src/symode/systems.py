"""Ground-truth dynamical systems, reference solvers and fold analysis.

Seven benchmark families are provided: a nonlinear scalar ODE, three
bifurcating ODEs (saddle-node, pitchfork, Hopf), and three forced periodic
PDEs (diffusion-reaction, Kuramoto-Sivashinsky, 2-d Navier-Stokes in
vorticity form).  Every family pairs an exact tendency with a reference
integrator so datasets are reproducible from a seed: ODEs use adaptive
Dormand-Prince at tight tolerance, PDEs an integrating-factor RK4
pseudospectral scheme with 2/3-rule dealiasing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dataclass_field, replace

import numpy as np

from .grf import GrfConfig, ParamFunction, constant_param, sample_grf
from .integrate import BlowUpError, SolveConfig, ode_solve
from .spectral import (
    Grid,
    dealias_mask,
    spectral_derivative,
    stream_gradient,
    wavenumber_grid,
)

SYSTEM_IDS = ("ode_nonlinear", "saddle_node", "pitchfork", "hopf", "dr", "ks", "ns")

BLOWUP_LIMIT = 1e6
MAX_BLOWUP_FRACTION = 0.10


@dataclass(frozen=True)
class SystemSpec:
    """Identity and fixed coefficients of one benchmark system."""

    sid: str
    dim: int
    n_state: int
    n_param: int
    max_order: int
    t_span: tuple[float, float]
    lengths: tuple[float, ...]
    theta1: float = 0.0
    theta2: float = 0.0
    diffusion: float = 0.0
    reaction: float = 0.0
    viscosity: float = 0.0

    @property
    def needs_stream_function(self) -> bool:
        return self.sid == "ns"


_DEFAULTS = {
    "ode_nonlinear": dict(dim=0, n_state=1, max_order=0, t_span=(0.0, 1.0), lengths=()),
    "saddle_node": dict(
        dim=0, n_state=1, max_order=0, t_span=(0.0, 10.0), lengths=(), theta1=2.5, theta2=-1.0
    ),
    "pitchfork": dict(
        dim=0, n_state=1, max_order=0, t_span=(0.0, 10.0), lengths=(), theta1=0.5, theta2=-1.0
    ),
    "hopf": dict(dim=0, n_state=2, max_order=0, t_span=(0.0, 10.0), lengths=()),
    "dr": dict(
        dim=1,
        n_state=1,
        max_order=2,
        t_span=(0.0, 1.0),
        lengths=(1.0,),
        diffusion=0.01,
        reaction=0.01,
    ),
    "ks": dict(
        dim=1, n_state=1, max_order=4, t_span=(0.0, 20.0), lengths=(32.0 * math.pi,)
    ),
    "ns": dict(
        dim=2, n_state=1, max_order=2, t_span=(0.0, 20.0), lengths=(2.0, 2.0), viscosity=1e-3
    ),
}


def make_system(sid: str, **overrides) -> SystemSpec:
    if sid not in SYSTEM_IDS:
        raise ValueError(f"unknown system {sid!r}; choose from {SYSTEM_IDS}")
    kwargs = dict(_DEFAULTS[sid])
    kwargs.update(overrides)
    return SystemSpec(sid=sid, n_param=1, **kwargs)


def forcing_field(spec: SystemSpec, grid: Grid, u_value: np.ndarray) -> np.ndarray:
    """Compose the scalar parameter channel into the spatial forcing
    u(x, t); ``u_value`` may carry leading batch axes.  Returns an array of
    shape (*batch, *grid.shape, 1)."""
    u_value = np.asarray(u_value, dtype=float)
    if spec.dim == 0:
        return u_value[..., None]
    lead = u_value[(...,) + (None,) * (grid.dim + 1)]
    if spec.sid == "dr":
        x = grid.axis_coords(0)
        return np.pi * x[:, None] / 5.0 + lead
    if spec.sid == "ks":
        x = grid.axis_coords(0)
        return x[:, None] / 16.0 + lead
    if spec.sid == "ns":
        x, y = grid.meshgrid()
        shape = 0.1 * np.sin(2.0 * np.pi * (x + y)) + np.cos(2.0 * np.pi * (x + y))
        return lead * shape[..., None]
    raise ValueError(f"system {spec.sid!r} has no spatial forcing template")


def true_rhs(
    spec: SystemSpec, s: np.ndarray, u_field: np.ndarray, t: float, grid: Grid
) -> np.ndarray:
    """Exact tendency of the system at one instant.

    ``u_field`` is the composed forcing on the grid (see
    :func:`forcing_field`), shaped like ``s`` with a single channel.
    """
    s = np.asarray(s, dtype=float)
    u_field = np.asarray(u_field, dtype=float)
    if s.shape[-1] != spec.n_state:
        raise ValueError(f"expected {spec.n_state} state channels, got {s.shape[-1]}")
    if u_field.shape[:-1] != s.shape[:-1]:
        raise ValueError("state and forcing shapes are inconsistent")
    u = u_field[..., 0]
    if spec.sid == "ode_nonlinear":
        return (-s[..., 0] ** 2 + u)[..., None]
    if spec.sid == "saddle_node":
        x = s[..., 0]
        return (u + spec.theta1 * x + spec.theta2 * x**3)[..., None]
    if spec.sid == "pitchfork":
        x = s[..., 0]
        return (spec.theta1 + u * x + spec.theta2 * x**3)[..., None]
    if spec.sid == "hopf":
        s1, s2 = s[..., 0], s[..., 1]
        r2 = s1**2 + s2**2
        return np.stack([u * s1 - s2 - s1 * r2, s1 + u * s2 - s2 * r2], axis=-1)
    if spec.sid == "dr":
        f = s[..., 0]
        f_xx = spectral_derivative(f, grid, (2,))
        return (spec.diffusion * f_xx + spec.reaction * f**2 + u)[..., None]
    if spec.sid == "ks":
        f = s[..., 0]
        f_x = spectral_derivative(f, grid, (1,))
        f_xx = spectral_derivative(f, grid, (2,))
        f_xxxx = spectral_derivative(f, grid, (4,))
        return (-f * f_x - f_xx - u * f_xxxx)[..., None]
    if spec.sid == "ns":
        f = s[..., 0]
        gx, gy = stream_gradient(f, grid)
        f_x = spectral_derivative(f, grid, (1, 0))
        f_y = spectral_derivative(f, grid, (0, 1))
        lap = spectral_derivative(f, grid, (2, 0)) + spectral_derivative(f, grid, (0, 2))
        return (gx * f_y - gy * f_x + spec.viscosity * lap + u)[..., None]
    raise ValueError(f"unknown system {spec.sid!r}")


# ── configuration for dataset generation ────────────────────────────


@dataclass(frozen=True)
class ParamSampler:
    """Per-trajectory draw of the scalar parameter function.

    length_scale and output_scale are sampled uniformly from their ranges
    for every trajectory; ``constant`` short-circuits the GRF and makes
    u(t) identically equal to that value.
    """

    mean: float = 0.0
    length_scale_range: tuple[float, float] = (0.2, 2.0)
    output_scale_range: tuple[float, float] = (0.0, 10.0)
    n_knots: int = 32
    constant: float | None = None


@dataclass(frozen=True)
class IcSampler:
    """Initial-condition sampler: ``uniform`` draws each channel from
    [low, high]; ``band_limited`` draws a random real field with Fourier
    modes up to ``max_mode`` and unit peak amplitude (grid-independent:
    coefficients are drawn first, then evaluated on the grid);
    ``fixed`` uses the supplied array."""

    kind: str = "uniform"
    low: float = 0.0
    high: float = 1.0
    max_mode: int = 4
    zero_mean: bool = False
    values: np.ndarray | None = None


@dataclass(frozen=True)
class GenConfig:
    n_traj: int
    n_times: int
    t_span: tuple[float, float] | None = None
    grid_points: tuple[int, ...] | None = None
    param: ParamSampler = ParamSampler()
    ic: IcSampler = IcSampler()
    internal_dt: float | None = None
    rtol: float = 1e-9
    atol: float = 1e-9
    noise: float = 0.0

    def __post_init__(self):
        if self.n_traj < 1:
            raise ValueError("n_traj must be >= 1")
        if self.n_times < 8:
            raise ValueError("n_times must be >= 8")
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("tolerances must be positive")


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (n_times, *grid.shape, n_state)
    param_times: np.ndarray
    param_knots: np.ndarray

    def param_function(self) -> ParamFunction:
        return ParamFunction(self.param_times, self.param_knots)


@dataclass
class Dataset:
    spec: SystemSpec
    grid: Grid
    trajectories: list[Trajectory]
    meta: dict = dataclass_field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return self.trajectories[0].times


def default_internal_dt(sid: str) -> float:
    return 5e-4 if sid == "ns" else 1e-3


def _sample_ic(spec: SystemSpec, grid: Grid, ic: IcSampler, rng: np.random.Generator):
    if ic.kind == "fixed":
        if ic.values is None:
            raise ValueError("fixed initial-condition sampler needs values")
        return np.asarray(ic.values, dtype=float).copy()
    if spec.dim == 0:
        if ic.kind != "uniform":
            raise ValueError("ODE systems use uniform initial conditions")
        return rng.uniform(ic.low, ic.high, size=spec.n_state)
    if ic.kind != "band_limited":
        raise ValueError("PDE systems use band-limited initial conditions")
    field = np.zeros(grid.shape)
    mesh = grid.meshgrid()
    if grid.dim == 1:
        (x,) = mesh
        for m in range(1, ic.max_mode + 1):
            a, b = rng.standard_normal(2)
            arg = 2.0 * np.pi * m * x / grid.lengths[0]
            field += a * np.cos(arg) + b * np.sin(arg)
    else:
        x, y = mesh
        for mx in range(0, ic.max_mode + 1):
            for my in range(0, ic.max_mode + 1):
                if mx == 0 and my == 0:
                    continue
                a, b = rng.standard_normal(2)
                arg = 2.0 * np.pi * (mx * x / grid.lengths[0] + my * y / grid.lengths[1])
                field += a * np.cos(arg) + b * np.sin(arg)
    if ic.zero_mean:
        field -= field.mean()
    peak = np.abs(field).max()
    if peak > 0:
        field /= peak
    return field[..., None]


def _draw_param(
    spec: SystemSpec, sampler: ParamSampler, t_span, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    if sampler.constant is not None:
        pf = constant_param(sampler.constant, t_span)
        return pf.times, pf.values
    ell = rng.uniform(*sampler.length_scale_range)
    c = rng.uniform(*sampler.output_scale_range)
    cfg = GrfConfig(
        mean=sampler.mean,
        length_scale=ell,
        output_scale=c,
        n_samples=sampler.n_knots,
        t_span=t_span,
    )
    seed = int(rng.integers(0, 2**63 - 1))
    values = sample_grf(cfg, seed)
    return np.linspace(t_span[0], t_span[1], sampler.n_knots), values


def _check_blowup(s: np.ndarray, t: float) -> None:
    peak = float(np.abs(s).max())
    if not np.isfinite(peak) or peak > BLOWUP_LIMIT:
        raise BlowUpError(f"state magnitude {peak:.3e} exceeded {BLOWUP_LIMIT:g}", time=t)


# ── pseudospectral reference integrator for the PDE systems ─────────


class _PdeStepper:
    """Integrating-factor RK4 on the stiff linear part in Fourier space,
    with 2/3-rule dealiasing of nonlinear products.

    The linear symbol is refreshed at the start of every step (the KS
    hyper-diffusion coefficient tracks the spatial mean of the forcing), and
    the remainder is integrated explicitly by classical RK4 in the
    transformed variable.
    """

    def __init__(self, spec: SystemSpec, grid: Grid, pf: ParamFunction):
        self.spec = spec
        self.grid = grid
        self.pf = pf
        self.mask = dealias_mask(grid)
        ks = wavenumber_grid(grid)
        if grid.dim == 1:
            self.k = ks[0]
            self.k_sq = self.k**2
        else:
            kx, ky = ks
            self.kx, self.ky = kx[:, None], ky[None, :]
            self.k_sq = self.kx**2 + self.ky**2

    def forcing(self, t: float) -> np.ndarray:
        return forcing_field(self.spec, self.grid, np.asarray(self.pf(t)))[..., 0]

    def linear_symbol(self, t: float) -> np.ndarray:
        spec = self.spec
        if spec.sid == "dr":
            return -spec.diffusion * self.k_sq
        if spec.sid == "ks":
            u_bar = float(self.forcing(t).mean())
            return self.k_sq - u_bar * self.k_sq**2
        if spec.sid == "ns":
            return -spec.viscosity * self.k_sq
        raise ValueError(f"{spec.sid!r} is not a PDE system")

    def nonlinear(self, s_hat: np.ndarray, t: float, lam_t: float) -> np.ndarray:
        """Fourier transform of (full rhs - linear part), dealiased."""
        spec = self.spec
        mask = self.mask
        if spec.sid == "dr":
            s = np.fft.ifftn(mask * s_hat).real
            out = np.fft.fftn(spec.reaction * s**2) * mask
            out += np.fft.fftn(self.forcing(t))
            return out
        if spec.sid == "ks":
            s = np.fft.ifftn(mask * s_hat).real
            adv = -0.5j * self.k * np.fft.fftn(s**2) * mask
            u = self.forcing(t)
            u_bar_lam = float(self.forcing(lam_t).mean())
            s4 = np.fft.ifftn(self.k_sq**2 * s_hat).real
            rem = -np.fft.fftn((u - u_bar_lam) * s4) * mask
            return adv + rem
        if spec.sid == "ns":
            s = np.fft.ifftn(mask * s_hat).real
            gx, gy = stream_gradient(s, self.grid)
            s_x = np.fft.ifftn(1j * self.kx * mask * s_hat).real
            s_y = np.fft.ifftn(1j * self.ky * mask * s_hat).real
            out = np.fft.fftn(gx * s_y - gy * s_x) * mask
            out += np.fft.fftn(self.forcing(t))
            return out
        raise ValueError(f"{spec.sid!r} is not a PDE system")

    def run(self, s0: np.ndarray, times: np.ndarray, dt: float) -> np.ndarray:
        s_hat = np.fft.fftn(s0[..., 0])
        states = [s0.copy()]
        for i in range(len(times) - 1):
            t_a, t_b = float(times[i]), float(times[i + 1])
            n_sub = max(1, int(np.ceil((t_b - t_a) / dt - 1e-12)))
            h = (t_b - t_a) / n_sub
            for j in range(n_sub):
                t = t_a + j * h
                lam = self.linear_symbol(t)
                e_full = np.exp(h * lam)
                e_half = np.exp(0.5 * h * lam)
                n1 = self.nonlinear(s_hat, t, t)
                a2 = e_half * (s_hat + 0.5 * h * n1)
                n2 = self.nonlinear(a2, t + 0.5 * h, t)
                a3 = e_half * s_hat + 0.5 * h * n2
                n3 = self.nonlinear(a3, t + 0.5 * h, t)
                a4 = e_full * s_hat + h * e_half * n3
                n4 = self.nonlinear(a4, t + h, t)
                s_hat = e_full * s_hat + (h / 6.0) * (
                    e_full * n1 + 2.0 * e_half * (n2 + n3) + n4
                )
            s = np.fft.ifftn(s_hat).real
            _check_blowup(s, t_b)
            states.append(s[..., None])
            s_hat = np.fft.fftn(s)
        return np.stack(states, axis=0)


def _generate_one(
    spec: SystemSpec, gen: GenConfig, grid: Grid, times: np.ndarray, seed_seq
) -> Trajectory:
    rng = np.random.default_rng(seed_seq)
    t_span = (float(times[0]), float(times[-1]))
    p_times, p_knots = _draw_param(spec, gen.param, t_span, rng)
    pf = ParamFunction(p_times, p_knots)
    s0 = _sample_ic(spec, grid, gen.ic, rng)
    if spec.dim == 0:
        cfg = SolveConfig(method="dopri5", rtol=gen.rtol, atol=gen.atol)

        def rhs(s, u_val, t):
            _check_blowup(s, t)
            return true_rhs(spec, s, forcing_field(spec, grid, u_val), t, grid)

        states = ode_solve(rhs, s0, times, u=pf, cfg=cfg)
    else:
        dt = gen.internal_dt or default_internal_dt(spec.sid)
        states = _PdeStepper(spec, grid, pf).run(s0, times, dt)
    return Trajectory(times=times.copy(), states=states, param_times=p_times, param_knots=p_knots)


def generate_dataset(spec: SystemSpec, gen: GenConfig, seed: int, threads: int = 1) -> Dataset:
    """Generate seeded trajectories; each uses an independent sub-stream so
    results are identical regardless of scheduling (``threads`` only caps
    worker parallelism).  Trajectories that blow up are dropped (recorded in
    the metadata); generation fails outright when more than 10% of them
    do."""
    t_span = gen.t_span or spec.t_span
    times = np.linspace(t_span[0], t_span[1], gen.n_times)
    if spec.dim == 0:
        grid = Grid.for_ode()
    else:
        if gen.grid_points is None:
            raise ValueError("PDE systems need grid_points")
        grid = Grid(shape=tuple(gen.grid_points), lengths=spec.lengths)
    root = np.random.SeedSequence(seed)
    children = root.spawn(gen.n_traj + 1)

    def job(i: int):
        try:
            return i, _generate_one(spec, gen, grid, times, children[i]), None
        except BlowUpError as exc:
            return i, None, {"trajectory": i, "time": exc.time, "error": str(exc)}

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(job, range(gen.n_traj)))
    else:
        results = [job(i) for i in range(gen.n_traj)]
    trajectories = []
    failures = []
    for _, traj, failure in results:
        if failure is not None:
            failures.append(failure)
        else:
            trajectories.append(traj)
    if len(failures) > MAX_BLOWUP_FRACTION * gen.n_traj:
        raise RuntimeError(
            f"{len(failures)} of {gen.n_traj} trajectories blew up "
            f"(limit {MAX_BLOWUP_FRACTION:.0%}); first failure: {failures[0]}"
        )
    meta = {"seed": seed, "failures": failures, "noise": gen.noise}
    if gen.noise > 0:
        noise_rng = np.random.default_rng(children[-1])
        scale = gen.noise * float(np.mean([np.abs(tr.states).mean() for tr in trajectories]))
        for tr in trajectories:
            tr.states = tr.states + scale * noise_rng.standard_normal(tr.states.shape)
        meta["noise_sigma_abs"] = scale
    return Dataset(spec=spec, grid=grid, trajectories=trajectories, meta=meta)


# ── fold (saddle-node) points of the cubic ODE families ─────────────


def locate_fold(form: str, theta1: float, theta2: float) -> list[tuple[float, float]]:
    """Fold points (u*, s*) where equilibria of the cubic family collide,
    from solving f = 0 and f' = 0 in closed form.

    ``form="saddle_node"`` treats u as the constant term of
    u + theta1*s + theta2*s^3; ``form="pitchfork"`` treats u as the linear
    coefficient of theta1 + u*s + theta2*s^3.
    """
    if theta2 == 0:
        raise ValueError("theta2 must be nonzero for a cubic family")
    if form == "saddle_node":
        if theta1 == 0:
            return [(0.0, 0.0)]
        s_sq = -theta1 / (3.0 * theta2)
        if s_sq < 0:
            return []
        out = []
        for s_star in (math.sqrt(s_sq), -math.sqrt(s_sq)):
            u_star = -theta1 * s_star - theta2 * s_star**3
            out.append((u_star, s_star))
        out.sort()
        return out
    if form == "pitchfork":
        if theta1 == 0:
            return [(0.0, 0.0)]
        ratio = theta1 / (2.0 * theta2)
        s_star = math.copysign(abs(ratio) ** (1.0 / 3.0), ratio)
        u_star = -3.0 * theta2 * s_star**2
        return [(u_star, s_star)]
    raise ValueError(f"unknown form {form!r}")


def equilibria(form: str, u: float, theta1: float, theta2: float) -> np.ndarray:
    """Real equilibria of the cubic family at parameter value u (oracle
    companion to :func:`locate_fold`)."""
    if form == "saddle_node":
        coeffs = [theta2, 0.0, theta1, u]
    elif form == "pitchfork":
        coeffs = [theta2, 0.0, u, theta1]
    else:
        raise ValueError(f"unknown form {form!r}")
    roots = np.roots(coeffs)
    return np.sort(roots[np.abs(roots.imag) < 1e-9].real)
