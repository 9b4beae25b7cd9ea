"""Three-stage training with adaptive horizon, learning-rate and solver
schedules, plus evaluation metrics and gradient checking.

Stage 1 regresses the symbolic network onto temporal-derivative estimates
(no ODE solves).  Stage 2 fine-tunes it on multi-step rollout error with
taped reverse-mode gradients, growing the prediction horizon whenever the
epoch loss falls below a threshold and switching euler -> rk4 at a
configured epoch.  Stage 3 freezes the symbolic part and trains the
residual network with the same rollout machinery.

Reported train losses are the optimized objective (data MSE plus the L1
penalty when active); validation losses are plain data MSE.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .grf import ParamFunction
from .integrate import (
    BlowUpError,
    SolveConfig,
    ode_solve,
    rollout_vjp,
    rollout_with_tape,
)
from .mlp import MLPParams
from .model import ModelBundle, ModelRHS
from .symnet import (
    DictionarySpec,
    SymNetParams,
    build_dictionary,
    extract_equation,
    format_equation,
    symnet_forward,
    symnet_vjp,
)
from .systems import Dataset, forcing_field
from .spectral import temporal_derivative


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 0.01
    lr_stage1: float = 1e-2
    lr_stage2: float = 1e-3
    lr_stage3: float = 1e-3
    epochs_stage1: int = 1000
    epochs_stage2: int = 200
    epochs_stage3: int = 200
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 16
    horizon_start: int = 1
    horizon_max: int = 20
    horizon_threshold_rel: float = 1e-4
    solver_switch_epoch: int = 120
    lr_milestones: tuple[float, ...] = (0.5, 0.75)
    lr_decay: float = 0.5
    val_fraction: float = 0.1
    seed: int = 0
    td_method: str = "central_fd"
    n_layers: int = 3
    mlp_hidden: tuple[int, ...] = (64, 64)
    init_scale: float = 0.01
    segment_stride: int = 1

    def __post_init__(self):
        if not (self.lr_stage1 > 0 and self.lr_stage2 > 0 and self.lr_stage3 > 0):
            raise ValueError("learning rates must be positive")
        if self.horizon_start < 1 or self.horizon_max < self.horizon_start:
            raise ValueError("need 1 <= horizon_start <= horizon_max")
        if not self.horizon_threshold_rel > 0:
            raise ValueError("horizon threshold must be positive")
        if self.batch_size < 1 or self.segment_stride < 1:
            raise ValueError("batch_size and segment_stride must be >= 1")


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @staticmethod
    def create(n: int) -> "AdamState":
        return AdamState(m=np.zeros(n), v=np.zeros(n), step=0)


def adam_step(
    state: AdamState,
    params: np.ndarray,
    grads: np.ndarray,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[np.ndarray, AdamState]:
    """Bias-corrected Adam update; functional (returns new arrays)."""
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ValueError("parameter, gradient and moment shapes must match")
    step = state.step + 1
    m = beta1 * state.m + (1.0 - beta1) * grads
    v = beta2 * state.v + (1.0 - beta2) * grads**2
    m_hat = m / (1.0 - beta1**step)
    v_hat = v / (1.0 - beta2**step)
    new_params = params - lr * m_hat / (np.sqrt(v_hat) + eps)
    return new_params, AdamState(m=m, v=v, step=step)


@dataclass
class StageReport:
    stage: str
    train_loss: list[float] = dataclass_field(default_factory=list)
    val_loss: list[float] = dataclass_field(default_factory=list)
    horizon: list[int] = dataclass_field(default_factory=list)
    lr: list[float] = dataclass_field(default_factory=list)
    solver: list[str] = dataclass_field(default_factory=list)
    seconds: float = 0.0
    aborted: bool = False


@dataclass
class TrainReport:
    stages: list[StageReport] = dataclass_field(default_factory=list)
    equation: str = ""

    def csv_lines(self) -> list[str]:
        lines = ["stage,epoch,train_loss,val_loss,horizon,lr,solver"]
        for st in self.stages:
            for e in range(len(st.train_loss)):
                lines.append(
                    f"{st.stage},{e},{st.train_loss[e]!r},{st.val_loss[e]!r},"
                    f"{st.horizon[e]},{st.lr[e]!r},{st.solver[e]}"
                )
        return lines

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("\n".join(self.csv_lines()) + "\n")

    def write_text(self, path) -> None:
        with open(path, "w") as fh:
            for st in self.stages:
                status = "aborted" if st.aborted else "completed"
                final = st.train_loss[-1] if st.train_loss else float("nan")
                fh.write(
                    f"stage {st.stage}: {len(st.train_loss)} epochs, {status}, "
                    f"final train loss {final!r}, wall {st.seconds:.2f}s\n"
                )
            if self.equation:
                fh.write("\nextracted equation:\n")
                fh.write(self.equation + "\n")


def split_train_val(n_traj: int, val_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seed-stable split; validation gets round(f*n) trajectories (at least
    one when the fraction is positive and n > 1)."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x56414C]))
    perm = rng.permutation(n_traj)
    n_val = int(round(val_fraction * n_traj))
    if val_fraction > 0 and n_traj > 1:
        n_val = max(1, min(n_val, n_traj - 1))
    else:
        n_val = 0
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def _lr_at(base: float, epoch: int, total: int, cfg: TrainConfig) -> float:
    lr = base
    for frac in cfg.lr_milestones:
        if epoch >= int(frac * total):
            lr *= cfg.lr_decay
    return lr


def dictionary_spec_for(dataset: Dataset) -> DictionarySpec:
    spec = dataset.spec
    return DictionarySpec(
        dim=spec.dim,
        n_state=spec.n_state,
        n_param=spec.n_param,
        max_order=spec.max_order,
        stream_function=spec.needs_stream_function,
    )


def _l1_gradient(params: SymNetParams, alpha: float) -> np.ndarray:
    """Subgradient of the L1 penalty (zero at zero, output bias excluded)."""
    return alpha * params.penalty_mask() * np.sign(params.to_vector())


def _l1_value(params: SymNetParams, alpha: float) -> float:
    return alpha * float(np.sum(params.penalty_mask() * np.abs(params.to_vector())))


# ── stage 1: flow matching ──────────────────────────────────────────


def _precompute_flow_data(dataset: Dataset, dict_spec: DictionarySpec, td_method: str):
    grid = dataset.grid
    dicts, targets = [], []
    for tr in dataset.trajectories:
        pf = tr.param_function()
        u_fields = forcing_field(dataset.spec, grid, np.asarray(pf(tr.times)))
        dicts.append(build_dictionary(tr.states, u_fields, grid, dict_spec))
        dt = float(tr.times[1] - tr.times[0])
        targets.append(temporal_derivative(tr.states, dt, method=td_method))
    return dicts, targets


def _flow_mse(params: SymNetParams, dicts, targets, indices) -> float:
    total, count = 0.0, 0
    for i in indices:
        resid = symnet_forward(params, dicts[i]) - targets[i]
        total += float(np.sum(resid**2))
        count += resid.size
    return total / count if count else float("nan")


def stage1_flow_match(
    dataset: Dataset, params: SymNetParams, cfg: TrainConfig
) -> tuple[SymNetParams, StageReport]:
    """Regress the symbolic network onto estimated temporal derivatives."""
    t_start = time.perf_counter()
    if dataset.times.size < 4:
        raise ValueError("flow matching needs at least 4 stored times per trajectory")
    dict_spec = dictionary_spec_for(dataset)
    dicts, targets = _precompute_flow_data(dataset, dict_spec, cfg.td_method)
    train_idx, val_idx = split_train_val(len(dicts), cfg.val_fraction, cfg.seed)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    vec = params.to_vector()
    adam = AdamState.create(vec.size)
    report = StageReport(stage="1")
    last_good = vec.copy()
    for epoch in range(cfg.epochs_stage1):
        lr = _lr_at(cfg.lr_stage1, epoch, cfg.epochs_stage1, cfg)
        order = rng.permutation(train_idx)
        for lo in range(0, order.size, cfg.batch_size):
            batch = order[lo : lo + cfg.batch_size]
            x = np.concatenate([dicts[i].reshape(-1, dicts[i].shape[-1]) for i in batch])
            y = np.concatenate([targets[i].reshape(-1, targets[i].shape[-1]) for i in batch])
            resid = symnet_forward(params, x) - y
            upstream = (2.0 / resid.size) * resid
            grads, _ = symnet_vjp(params, x, upstream)
            gvec = grads.to_vector() + _l1_gradient(params, cfg.alpha)
            vec, adam = adam_step(adam, vec, gvec, lr, cfg.beta1, cfg.beta2, cfg.eps)
            params = params.from_vector(vec)
        train_mse = _flow_mse(params, dicts, targets, train_idx)
        train_loss = train_mse + _l1_value(params, cfg.alpha)
        val_loss = _flow_mse(params, dicts, targets, val_idx) if val_idx.size else float("nan")
        if not np.isfinite(train_loss):
            params = params.from_vector(last_good)
            report.aborted = True
            break
        last_good = vec.copy()
        report.train_loss.append(train_loss)
        report.val_loss.append(val_loss)
        report.horizon.append(0)
        report.lr.append(lr)
        report.solver.append("none")
    report.seconds = time.perf_counter() - t_start
    return params, report


# ── stages 2 and 3: rollout fine-tuning ─────────────────────────────


def _segment_arrays(states: np.ndarray, horizon: int, stride: int):
    n_t = states.shape[0]
    if horizon >= n_t:
        raise ValueError(f"horizon {horizon} too long for {n_t} stored times")
    starts = np.arange(0, n_t - horizon, stride)
    s0 = states[starts]
    offsets = starts[:, None] + np.arange(1, horizon + 1)[None, :]
    targets = states[offsets]  # (n_seg, horizon, *spatial, ds)
    targets = np.moveaxis(targets, 1, 0)  # (horizon, n_seg, ...)
    return starts, s0, targets


def _make_u_eval(dataset: Dataset, pf: ParamFunction, t_starts: np.ndarray):
    spec, grid = dataset.spec, dataset.grid

    def u_eval(tau):
        return forcing_field(spec, grid, np.asarray(pf(t_starts + tau)))

    return u_eval


def rollout_data_mse(
    rhs,
    dataset: Dataset,
    indices,
    horizon: int,
    method: str,
    stride: int = 1,
) -> float:
    """Mean squared multi-step prediction error over the given trajectories,
    with one fixed integrator step per stored interval."""
    times = dataset.times
    dt = float(times[1] - times[0])
    cfg = SolveConfig(method=method, dt=dt)
    t_eval = np.arange(horizon + 1) * dt
    total, count = 0.0, 0
    for i in indices:
        tr = dataset.trajectories[i]
        starts, s0, targets = _segment_arrays(tr.states, horizon, stride)
        u_eval = _make_u_eval(dataset, tr.param_function(), times[starts])
        out = ode_solve(rhs, s0, t_eval, u=u_eval, cfg=cfg)
        resid = out[1:] - targets
        total += float(np.sum(resid**2))
        count += resid.size
    return total / count if count else float("nan")


def _rollout_batch_grad(
    rhs: ModelRHS,
    dataset: Dataset,
    batch,
    horizon: int,
    method: str,
    stride: int,
) -> tuple[float, np.ndarray]:
    """Objective data term and its gradient over one batch of trajectories."""
    times = dataset.times
    dt = float(times[1] - times[0])
    cfg = SolveConfig(method=method, dt=dt)
    t_eval = np.arange(horizon + 1) * dt
    per_traj = []
    count = 0
    for i in batch:
        tr = dataset.trajectories[i]
        starts, s0, targets = _segment_arrays(tr.states, horizon, stride)
        u_eval = _make_u_eval(dataset, tr.param_function(), times[starts])
        out, tape = rollout_with_tape(rhs, s0, t_eval, u_eval, cfg)
        resid = out[1:] - targets
        per_traj.append((s0, u_eval, tape, resid))
        count += resid.size
    total = 0.0
    g = np.zeros(rhs.n_params)
    for s0, u_eval, tape, resid in per_traj:
        total += float(np.sum(resid**2))
        loss_grads = (2.0 / count) * resid
        gp, _ = rollout_vjp(rhs, s0, t_eval, u_eval, cfg, loss_grads, tape=tape)
        g += gp
    return total / count, g


def _train_rollout_stage(
    dataset: Dataset,
    rhs: ModelRHS,
    trainable: slice,
    penalized: SymNetParams | None,
    cfg: TrainConfig,
    stage_label: str,
    epochs: int,
    base_lr: float,
) -> StageReport:
    t_start = time.perf_counter()
    train_idx, val_idx = split_train_val(
        len(dataset.trajectories), cfg.val_fraction, cfg.seed
    )
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, int(stage_label[-1])]))
    horizon_cap = min(cfg.horizon_max, dataset.times.size - 1)
    horizon = min(cfg.horizon_start, horizon_cap)
    train_states = np.stack([dataset.trajectories[i].states for i in train_idx])
    threshold = cfg.horizon_threshold_rel * float(np.var(train_states))
    report = StageReport(stage=stage_label)
    vec = rhs.params_vector()
    adam = AdamState.create(vec[trainable].size)
    lr_scale = 1.0
    consecutive_failures = 0
    for epoch in range(epochs):
        method = "euler" if epoch < cfg.solver_switch_epoch else "rk4"
        lr = _lr_at(base_lr, epoch, epochs, cfg) * lr_scale
        order = rng.permutation(train_idx)
        for lo in range(0, order.size, cfg.batch_size):
            batch = order[lo : lo + cfg.batch_size]
            try:
                _, g = _rollout_batch_grad(
                    rhs, dataset, batch, horizon, method, cfg.segment_stride
                )
            except (BlowUpError, FloatingPointError):
                consecutive_failures += 1
                if consecutive_failures > 5:
                    raise RuntimeError(
                        f"stage {stage_label}: aborting after 5 consecutive rollout failures"
                    )
                horizon = max(1, horizon // 2)
                lr_scale *= 0.5
                continue
            consecutive_failures = 0
            g_train = g[trainable]
            if penalized is not None:
                sym = rhs.bundle.symnet
                g_train = g_train + _l1_gradient(sym, cfg.alpha)
            new_slice, adam = adam_step(
                adam, vec[trainable], g_train, lr, cfg.beta1, cfg.beta2, cfg.eps
            )
            vec = vec.copy()
            vec[trainable] = new_slice
            rhs.set_params_vector(vec)
        train_mse = rollout_data_mse(
            rhs, dataset, train_idx, horizon, method, cfg.segment_stride
        )
        train_loss = train_mse
        if penalized is not None:
            train_loss = train_loss + _l1_value(rhs.bundle.symnet, cfg.alpha)
        val_loss = (
            rollout_data_mse(rhs, dataset, val_idx, horizon, method, cfg.segment_stride)
            if val_idx.size
            else float("nan")
        )
        report.train_loss.append(train_loss)
        report.val_loss.append(val_loss)
        report.horizon.append(horizon)
        report.lr.append(lr)
        report.solver.append(method)
        if not np.isfinite(train_loss):
            report.aborted = True
            break
        if train_loss < threshold and horizon < horizon_cap:
            horizon += 1
    report.seconds = time.perf_counter() - t_start
    return report


def stage2_finetune(
    dataset: Dataset, params: SymNetParams, cfg: TrainConfig
) -> tuple[SymNetParams, StageReport]:
    """Fine-tune the symbolic network on multi-step rollout error."""
    bundle = ModelBundle(
        dict_spec=dictionary_spec_for(dataset),
        symnet=params.copy(),
        mlp=MLPParams.create([params.n_inputs, 1]),
        solve=SolveConfig(),
        system_id=dataset.spec.sid,
        use_mlp=False,
    )
    rhs = ModelRHS(bundle, dataset.grid)
    report = _train_rollout_stage(
        dataset,
        rhs,
        trainable=slice(0, rhs.n_sym),
        penalized=params,
        cfg=cfg,
        stage_label="2",
        epochs=cfg.epochs_stage2,
        base_lr=cfg.lr_stage2,
    )
    return bundle.symnet, report


def stage3_residual(
    dataset: Dataset, symnet: SymNetParams, mlp: MLPParams, cfg: TrainConfig, use_symnet: bool = True
) -> tuple[MLPParams, StageReport]:
    """Train the residual network with the symbolic part frozen (its
    parameters are not touched; only the residual slice is updated)."""
    bundle = ModelBundle(
        dict_spec=dictionary_spec_for(dataset),
        symnet=symnet,
        mlp=mlp.copy(),
        solve=SolveConfig(),
        system_id=dataset.spec.sid,
        use_symnet=use_symnet,
        use_mlp=True,
    )
    rhs = ModelRHS(bundle, dataset.grid)
    report = _train_rollout_stage(
        dataset,
        rhs,
        trainable=slice(rhs.n_sym, rhs.n_params),
        penalized=None,
        cfg=cfg,
        stage_label="3",
        epochs=cfg.epochs_stage3,
        base_lr=cfg.lr_stage3,
    )
    return bundle.mlp, report


STAGE_SETS = ("1", "1-2", "1-2-3", "e1", "e2")


def train_pipeline(
    dataset: Dataset, cfg: TrainConfig, stages: str = "1-2-3"
) -> tuple[ModelBundle, TrainReport]:
    """Run the selected training stages and assemble the model bundle.

    ``e2`` runs stages 1-2 only (residual network stays identically zero);
    ``e1`` trains the residual network alone with the symbolic part zeroed.
    """
    if stages not in STAGE_SETS:
        raise ValueError(f"stages must be one of {STAGE_SETS}, got {stages!r}")
    dict_spec = dictionary_spec_for(dataset)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 7]))
    d_s = dataset.spec.n_state
    symnet = SymNetParams.create(
        dict_spec.size, d_s, cfg.n_layers, rng=rng, scale=cfg.init_scale
    )
    mlp = MLPParams.create([dict_spec.size, *cfg.mlp_hidden, d_s], rng=rng, zero_output=True)
    report = TrainReport()
    use_symnet = stages != "e1"
    if stages == "e1":
        symnet = SymNetParams.create(dict_spec.size, d_s, cfg.n_layers, rng=None)
        mlp, st3 = stage3_residual(dataset, symnet, mlp, cfg, use_symnet=False)
        report.stages.append(st3)
    else:
        symnet, st1 = stage1_flow_match(dataset, symnet, cfg)
        report.stages.append(st1)
        if stages in ("1-2", "1-2-3", "e2"):
            symnet, st2 = stage2_finetune(dataset, symnet, cfg)
            report.stages.append(st2)
        if stages == "1-2-3":
            mlp, st3 = stage3_residual(dataset, symnet, mlp, cfg)
            report.stages.append(st3)
    bundle = ModelBundle(
        dict_spec=dict_spec,
        symnet=symnet,
        mlp=mlp,
        solve=SolveConfig(method="dopri5", rtol=1e-6, atol=1e-6),
        system_id=dataset.spec.sid,
        use_symnet=use_symnet,
        use_mlp=True,
        meta={"stages": stages, "seed": cfg.seed},
    )
    if use_symnet:
        try:
            report.equation = format_equation(extract_equation(symnet, dict_spec, 1e-4))
        except RuntimeError:
            report.equation = "(expansion too large; use the extract command with a threshold)"
    return bundle, report


# ── evaluation ──────────────────────────────────────────────────────


@dataclass
class EvalMetrics:
    mse: float
    normalized_mse: float
    per_trajectory: list[float]
    n_blowups: int


def evaluate_mse(
    rhs_factory,
    dataset: Dataset,
    solve_cfg: SolveConfig | None = None,
    horizon: int | None = None,
) -> EvalMetrics:
    """Rollout MSE of a model on a dataset (dictionary built on the
    dataset's own grid, so super-resolution needs no retraining).

    ``rhs_factory(grid)`` returns the vector-field callback.  With
    ``horizon=None`` each trajectory is rolled out from its initial state
    across all stored times; with an integer horizon, every stored state
    starts a fresh segment of that many stored steps.  Trajectories that
    blow up count as infinite MSE and are flagged.
    """
    cfg = solve_cfg or SolveConfig(method="dopri5", rtol=1e-6, atol=1e-6)
    rhs = rhs_factory(dataset.grid)
    spec, grid = dataset.spec, dataset.grid
    per_traj = []
    n_blowups = 0
    sq_sum, count = 0.0, 0
    for tr in dataset.trajectories:
        pf = tr.param_function()
        u_eval = lambda t: forcing_field(spec, grid, np.asarray(pf(t)))
        try:
            if horizon is None:
                out = ode_solve(rhs, tr.states[0], tr.times, u=u_eval, cfg=cfg)
                resid = out[1:] - tr.states[1:]
            else:
                starts, s0, targets = _segment_arrays(tr.states, horizon, 1)
                resids = []
                for j, start in enumerate(starts):
                    seg_times = tr.times[start : start + horizon + 1]
                    out = ode_solve(rhs, s0[j], seg_times, u=u_eval, cfg=cfg)
                    resids.append(out[1:] - targets[:, j])
                resid = np.stack(resids)
        except (BlowUpError, FloatingPointError, RuntimeError):
            per_traj.append(float("inf"))
            n_blowups += 1
            continue
        mse_i = float(np.mean(resid**2))
        per_traj.append(mse_i)
        sq_sum += float(np.sum(resid**2))
        count += resid.size
    mse = sq_sum / count if count else float("inf")
    all_states = np.stack([tr.states for tr in dataset.trajectories])
    variance = float(np.var(all_states))
    normalized = mse / variance if variance > 0 else float("inf")
    return EvalMetrics(
        mse=mse, normalized_mse=normalized, per_trajectory=per_traj, n_blowups=n_blowups
    )


def model_rhs_factory(bundle: ModelBundle):
    return lambda grid: ModelRHS(bundle, grid)


# ── gradient checking ───────────────────────────────────────────────


def grad_check(fn, params: np.ndarray, eps: float = 1e-6) -> float:
    """Max relative error between the analytic gradient of ``fn`` and
    central finite differences, coordinate by coordinate.

    ``fn(p)`` returns (loss, gradient).  The relative error uses a
    magnitude guard of 1e-12 in the denominator.
    """
    if not (1e-8 <= eps <= 1e-4):
        raise ValueError("eps must lie in [1e-8, 1e-4]")
    params = np.asarray(params, dtype=float)
    _, grad = fn(params)
    worst = 0.0
    for i in range(params.size):
        up = params.copy()
        up[i] += eps
        down = params.copy()
        down[i] -= eps
        fd = (fn(up)[0] - fn(down)[0]) / (2.0 * eps)
        rel = abs(grad[i] - fd) / (max(abs(grad[i]), abs(fd)) + 1e-12)
        worst = max(worst, rel)
    return worst
