"""Gaussian-random-field parameter functions.

A parameter function is drawn at uniformly spaced knots from a Gaussian
process with RBF kernel ``exp(-(t1-t2)^2 / (2 l^2))``, scaled by an output
factor, and turned into a continuously evaluable function with a natural
cubic spline.  Evaluation outside the knot span clamps to the endpoint
values, so adaptive solvers may probe slightly past the final time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

BASE_JITTER = 1e-10
MAX_JITTER = 1e-6


@dataclass(frozen=True)
class GrfConfig:
    """One draw's configuration: N(mean, RBF(length_scale)) times output_scale."""

    mean: float
    length_scale: float
    output_scale: float
    n_samples: int
    t_span: tuple[float, float]

    def __post_init__(self):
        if not self.length_scale > 0:
            raise ValueError("length_scale must be positive")
        if self.n_samples < 4:
            raise ValueError("n_samples must be >= 4")
        t0, t1 = self.t_span
        if not t1 > t0:
            raise ValueError("t_span must be increasing")


def rbf_covariance(times: np.ndarray, length_scale: float) -> np.ndarray:
    diff = times[:, None] - times[None, :]
    return np.exp(-(diff**2) / (2.0 * length_scale**2))


def sample_grf(cfg: GrfConfig, seed: int) -> np.ndarray:
    """Draw knot values of one parameter function, deterministic per seed.

    The covariance gets a small diagonal jitter for numerical positive
    definiteness; the jitter escalates by 10x up to 1e-6 before failing.
    """
    times = np.linspace(cfg.t_span[0], cfg.t_span[1], cfg.n_samples)
    cov = rbf_covariance(times, cfg.length_scale)
    jitter = BASE_JITTER
    chol = None
    while jitter <= MAX_JITTER:
        try:
            chol = np.linalg.cholesky(cov + jitter * np.eye(cfg.n_samples))
            break
        except np.linalg.LinAlgError:
            jitter *= 10.0
    if chol is None:
        raise RuntimeError(
            f"covariance not positive definite even with jitter {MAX_JITTER:g} "
            f"(length_scale={cfg.length_scale:g})"
        )
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(cfg.n_samples)
    return cfg.output_scale * (cfg.mean + chol @ z)


def grf_knot_times(cfg: GrfConfig) -> np.ndarray:
    return np.linspace(cfg.t_span[0], cfg.t_span[1], cfg.n_samples)


class ParamFunction:
    """Natural cubic spline through uniformly spaced knots, clamped outside."""

    def __init__(self, times: np.ndarray, values: np.ndarray):
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if times.ndim != 1 or times.size < 4:
            raise ValueError("need at least 4 knot times")
        if values.shape[0] != times.size:
            raise ValueError("times and values must have matching length")
        steps = np.diff(times)
        if np.any(steps <= 0):
            raise ValueError("knot times must be strictly ascending")
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-12):
            raise ValueError("knot times must be uniformly spaced")
        self._times = times
        self._values = values
        self._spline = CubicSpline(times, values, bc_type="natural")

    @property
    def times(self) -> np.ndarray:
        return self._times

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def t_span(self) -> tuple[float, float]:
        return float(self._times[0]), float(self._times[-1])

    def __call__(self, t):
        t_clamped = np.clip(t, self._times[0], self._times[-1])
        return self._spline(t_clamped)


def fit_spline(times: np.ndarray, values: np.ndarray) -> ParamFunction:
    """Natural cubic spline interpolant through the given knots."""
    return ParamFunction(times, values)


def constant_param(value: float, t_span: tuple[float, float]) -> ParamFunction:
    """Parameter function identically equal to ``value`` (spline of constant
    knots is exactly constant)."""
    times = np.linspace(t_span[0], t_span[1], 4)
    return ParamFunction(times, np.full(4, float(value)))
