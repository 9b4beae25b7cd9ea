"""Time integration of vector fields with time-varying parameter input.

Vector-field callbacks have signature ``rhs(s, u_val, t)`` where ``u_val``
is the parameter value at ``t`` (or None).  Fixed-step methods (euler, rk4)
land exactly on requested output times by shrinking the final sub-step and
can record a tape of every accepted step for reverse-mode differentiation;
dopri5 is the adaptive Dormand-Prince 5(4) pair with PI step-size control
and quartic dense output, and is reserved for evaluation (no gradients).
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field
from typing import Callable

import numpy as np

FIXED_STEP_METHODS = ("euler", "rk4")
METHODS = FIXED_STEP_METHODS + ("dopri5",)


class BlowUpError(RuntimeError):
    """State became non-finite (or exceeded bounds) during integration."""

    def __init__(self, message: str, time: float):
        super().__init__(message)
        self.time = time


@dataclass(frozen=True)
class SolveConfig:
    """Integration settings; dt applies to fixed-step methods, the
    tolerances and first_dt to dopri5."""

    method: str = "dopri5"
    dt: float = 1e-2
    rtol: float = 1e-6
    atol: float = 1e-6
    first_dt: float | None = None
    max_steps: int = 1_000_000

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("rtol and atol must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


def _check_finite(s: np.ndarray, t: float) -> None:
    if not np.all(np.isfinite(s)):
        raise BlowUpError(f"state became non-finite at t={t:.6g}", time=float(t))


def _u_at(u, t):
    return None if u is None else u(t)


# ── fixed-step stepping ─────────────────────────────────────────────


def _euler_step(rhs, s, t, h, u):
    k1 = rhs(s, _u_at(u, t), t)
    return s + h * k1, (k1,)


def _rk4_step(rhs, s, t, h, u):
    u_mid = _u_at(u, t + 0.5 * h)
    k1 = rhs(s, _u_at(u, t), t)
    k2 = rhs(s + 0.5 * h * k1, u_mid, t + 0.5 * h)
    k3 = rhs(s + 0.5 * h * k2, u_mid, t + 0.5 * h)
    k4 = rhs(s + h * k3, _u_at(u, t + h), t + h)
    return s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4), (k1, k2, k3, k4)


@dataclass
class RolloutTape:
    """Record of every accepted fixed-step sub-step of a rollout.

    Replaying the stored states and stage values reproduces the rollout
    bit-exactly and drives the reverse sweep of :func:`rollout_vjp`.
    """

    method: str
    steps: list[tuple] = dataclass_field(default_factory=list)
    # each entry: (t, h, s_before, stages)
    output_steps: list[int] = dataclass_field(default_factory=list)
    # steps completed when each output time (after the first) was reached


def _fixed_step_rollout(rhs, s0, t_eval, u, cfg, record: bool):
    s = np.asarray(s0, dtype=float).copy()
    tape = RolloutTape(method=cfg.method) if record else None
    stepper = _euler_step if cfg.method == "euler" else _rk4_step
    states = [s.copy()]
    n_steps = 0
    for i in range(len(t_eval) - 1):
        t_a, t_b = float(t_eval[i]), float(t_eval[i + 1])
        n_sub = max(1, int(np.ceil((t_b - t_a) / cfg.dt - 1e-12)))
        h = (t_b - t_a) / n_sub
        t = t_a
        for j in range(n_sub):
            if n_steps >= cfg.max_steps:
                raise RuntimeError(f"step budget {cfg.max_steps} exhausted at t={t:.6g}")
            s_new, stages = stepper(rhs, s, t, h, u)
            if record:
                tape.steps.append((t, h, s, stages))
            s = s_new
            t = t_a + (j + 1) * h
            _check_finite(s, t)
            n_steps += 1
        states.append(s.copy())
        if record:
            tape.output_steps.append(len(tape.steps))
    return np.stack(states, axis=0), tape


# ── Dormand-Prince 5(4) ─────────────────────────────────────────────

_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_E = np.array(
    [71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40]
)
# dense-output weights of the quartic continuous extension
_DP_D = np.array(
    [
        -12715105075 / 11282082432,
        0.0,
        87487479700 / 32700410799,
        -10690763975 / 1880347072,
        701980252875 / 199316789632,
        -1453857185 / 822651844,
        69997945 / 29380423,
    ]
)


def _dopri5(rhs, s0, t_eval, u, cfg):
    t0, t_end = float(t_eval[0]), float(t_eval[-1])
    s = np.asarray(s0, dtype=float).copy()
    t = t0
    h = cfg.first_dt if cfg.first_dt is not None else min(1e-2 * (t_end - t0), t_end - t0)
    states = [s.copy()]
    next_out = 1
    err_prev = 1.0
    k1 = rhs(s, _u_at(u, t), t)
    n_steps = 0
    while t < t_end - 1e-14 * max(1.0, abs(t_end)):
        if n_steps >= cfg.max_steps:
            raise RuntimeError(f"step budget {cfg.max_steps} exhausted at t={t:.6g}")
        h = min(h, t_end - t)
        ks = [k1]
        for i in range(1, 7):
            ti = t + _DP_C[i] * h
            si = s + h * sum(a * k for a, k in zip(_DP_A[i], ks))
            ks.append(rhs(si, _u_at(u, ti), ti))
        s_new = s + h * sum(b * k for b, k in zip(_DP_B5, ks) if b != 0.0)
        err_vec = h * sum(e * k for e, k in zip(_DP_E, ks) if e != 0.0)
        scale = cfg.atol + cfg.rtol * np.maximum(np.abs(s), np.abs(s_new))
        err = float(np.sqrt(np.mean((err_vec / scale) ** 2)))
        n_steps += 1
        if err <= 1.0:
            _check_finite(s_new, t + h)
            # dense output over the accepted step for output times inside it
            while next_out < len(t_eval) and t_eval[next_out] <= t + h + 1e-14 * max(
                1.0, abs(t + h)
            ):
                theta = (float(t_eval[next_out]) - t) / h
                delta = s_new - s
                r1 = s
                r2 = delta
                r3 = h * ks[0] - delta
                r4 = delta - h * ks[6] - r3
                r5 = h * sum(d * k for d, k in zip(_DP_D, ks) if d != 0.0)
                states.append(
                    r1 + theta * (r2 + (1 - theta) * (r3 + theta * (r4 + (1 - theta) * r5)))
                )
                next_out += 1
            t = t + h
            s = s_new
            k1 = ks[6]  # FSAL
            factor = 0.9 * err ** -0.14 * err_prev**0.08 if err > 0 else 5.0
            err_prev = max(err, 1e-10)
        else:
            factor = max(0.2, 0.9 * err**-0.2)
        h *= min(5.0, max(0.2, factor))
    # snap any trailing requested times equal to t_end
    while next_out < len(t_eval):
        states.append(s.copy())
        next_out += 1
    return np.stack(states, axis=0)


def ode_solve(
    rhs: Callable,
    s0: np.ndarray,
    t_eval: np.ndarray,
    u=None,
    cfg: SolveConfig = SolveConfig(),
) -> np.ndarray:
    """Integrate ``ds/dt = rhs(s, u(t), t)`` and return the states at the
    requested output times (the first entry of ``t_eval`` is the initial
    time and the returned array starts with ``s0``)."""
    t_eval = np.asarray(t_eval, dtype=float)
    if t_eval.ndim != 1 or t_eval.size < 2:
        raise ValueError("t_eval must contain at least initial and final times")
    if np.any(np.diff(t_eval) <= 0):
        raise ValueError("t_eval must be strictly increasing")
    s0 = np.asarray(s0, dtype=float)
    _check_finite(s0, float(t_eval[0]))
    if cfg.method == "dopri5":
        return _dopri5(rhs, s0, t_eval, u, cfg)
    states, _ = _fixed_step_rollout(rhs, s0, t_eval, u, cfg, record=False)
    return states


def rollout_with_tape(rhs, s0, t_eval, u, cfg):
    """Fixed-step rollout that records a :class:`RolloutTape`."""
    if cfg.method not in FIXED_STEP_METHODS:
        raise ValueError("taped rollouts require a fixed-step method (euler or rk4)")
    t_eval = np.asarray(t_eval, dtype=float)
    s0 = np.asarray(s0, dtype=float)
    return _fixed_step_rollout(rhs, s0, t_eval, u, cfg, record=True)


def rollout_vjp(
    rhs_with_params,
    s0: np.ndarray,
    t_eval: np.ndarray,
    u,
    cfg: SolveConfig,
    loss_grads: np.ndarray,
    tape: RolloutTape | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of a loss on the rollout outputs w.r.t. parameters and s0.

    ``rhs_with_params`` must expose ``__call__(s, u_val, t)``,
    ``vjp(s, u_val, t, w) -> (flat parameter gradient, state gradient)`` and
    ``n_params``.  ``loss_grads[i]`` is dLoss/d(state at t_eval[i+1]); the
    initial state carries no loss term.  The reverse sweep revisits every
    taped sub-step in exact reverse order, so the result is the exact
    gradient of the discrete rollout.
    """
    if cfg.method not in FIXED_STEP_METHODS:
        raise ValueError("gradients through dopri5 are unsupported; use euler or rk4")
    t_eval = np.asarray(t_eval, dtype=float)
    if tape is None:
        _, tape = rollout_with_tape(rhs_with_params, s0, t_eval, u, cfg)
    loss_grads = np.asarray(loss_grads, dtype=float)
    if loss_grads.shape[0] != len(t_eval) - 1:
        raise ValueError("need one loss gradient per output time after the first")

    g_params = np.zeros(rhs_with_params.n_params)
    w = np.zeros_like(np.asarray(s0, dtype=float))
    boundary = {step_count: i for i, step_count in enumerate(tape.output_steps)}
    for idx in range(len(tape.steps) - 1, -1, -1):
        if (idx + 1) in boundary:
            w = w + loss_grads[boundary[idx + 1]]
        t, h, s_before, stages = tape.steps[idx]
        if tape.method == "euler":
            gp, gs = rhs_with_params.vjp(s_before, _u_at(u, t), t, h * w)
            g_params += gp
            w = w + gs
        else:
            k1, k2, k3, k4 = stages
            u_0 = _u_at(u, t)
            u_mid = _u_at(u, t + 0.5 * h)
            u_1 = _u_at(u, t + h)
            d1 = (h / 6.0) * w
            d2 = (h / 3.0) * w
            d3 = (h / 3.0) * w
            d4 = (h / 6.0) * w
            w_new = w.copy()
            gp, ga4 = rhs_with_params.vjp(s_before + h * k3, u_1, t + h, d4)
            g_params += gp
            w_new += ga4
            d3 = d3 + h * ga4
            gp, ga3 = rhs_with_params.vjp(s_before + 0.5 * h * k2, u_mid, t + 0.5 * h, d3)
            g_params += gp
            w_new += ga3
            d2 = d2 + 0.5 * h * ga3
            gp, ga2 = rhs_with_params.vjp(s_before + 0.5 * h * k1, u_mid, t + 0.5 * h, d2)
            g_params += gp
            w_new += ga2
            d1 = d1 + 0.5 * h * ga2
            gp, ga1 = rhs_with_params.vjp(s_before, u_0, t, d1)
            g_params += gp
            w_new += ga1
            w = w_new
    return g_params, w
