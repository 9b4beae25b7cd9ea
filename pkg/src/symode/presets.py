"""Shipped experiment presets.

Each system gets a small "desk" profile (few trajectories, coarse grids,
short training) for laptop-scale runs and "paper-100" / "paper-1000"
profiles matching the published training-set sizes.  Every value can be
overridden through the configuration file.
"""

from __future__ import annotations

PROFILES = ("desk", "paper-100", "paper-1000")

# (gen overrides, train overrides) per system; profile scales trajectory
# counts and epochs.
_BASE = {
    "ode_nonlinear": {
        "gen": {
            "n_times": 65,
            "param": {
                "mean": 0.0,
                "length_scale_range": [0.2, 2.0],
                "output_scale_range": [0.0, 10.0],
                "n_knots": 32,
            },
            "ic": {"kind": "uniform", "low": 0.0, "high": 1.0},
        },
        "train": {"epochs_stage1": 800, "epochs_stage2": 40, "epochs_stage3": 30,
                  "solver_switch_epoch": 25, "alpha": 0.01},
    },
    "saddle_node": {
        "gen": {
            "n_times": 101,
            "t_span": [0.0, 10.0],
            "param": {
                "mean": 0.0,
                "length_scale_range": [1.0, 4.0],
                "output_scale_range": [0.0, 1.5],
                "n_knots": 32,
            },
            "ic": {"kind": "uniform", "low": -2.0, "high": 2.0},
        },
        "train": {"epochs_stage1": 800, "epochs_stage2": 30, "epochs_stage3": 20,
                  "solver_switch_epoch": 20, "alpha": 0.01},
    },
    "pitchfork": {
        "gen": {
            "n_times": 101,
            "t_span": [0.0, 10.0],
            "param": {
                "mean": 0.0,
                "length_scale_range": [1.0, 4.0],
                "output_scale_range": [0.0, 1.0],
                "n_knots": 32,
            },
            "ic": {"kind": "uniform", "low": -2.0, "high": 2.0},
        },
        "train": {"epochs_stage1": 800, "epochs_stage2": 30, "epochs_stage3": 20,
                  "solver_switch_epoch": 20, "alpha": 0.01},
    },
    "hopf": {
        "gen": {
            "n_times": 101,
            "t_span": [0.0, 10.0],
            "param": {
                "mean": 0.0,
                "length_scale_range": [1.0, 4.0],
                "output_scale_range": [0.2, 1.0],
                "n_knots": 32,
            },
            "ic": {"kind": "uniform", "low": -1.5, "high": 1.5},
        },
        "train": {"epochs_stage1": 1000, "epochs_stage2": 30, "epochs_stage3": 20,
                  "solver_switch_epoch": 20, "alpha": 0.005},
    },
    "dr": {
        "gen": {
            "n_times": 65,
            "grid_points": [32],
            "param": {
                "mean": 0.0,
                "length_scale_range": [0.5, 2.0],
                "output_scale_range": [0.0, 5.0],
                "n_knots": 32,
            },
            "ic": {"kind": "band_limited", "max_mode": 4},
        },
        "train": {"epochs_stage1": 400, "epochs_stage2": 30, "epochs_stage3": 20,
                  "solver_switch_epoch": 20, "alpha": 0.01},
    },
    "ks": {
        "gen": {
            "n_times": 101,
            "t_span": [0.0, 20.0],
            "grid_points": [32],
            "param": {
                "mean": 1.0,
                "length_scale_range": [2.0, 5.0],
                "output_scale_range": [0.2, 0.8],
                "n_knots": 32,
            },
            "ic": {"kind": "band_limited", "max_mode": 4},
        },
        "train": {"epochs_stage1": 400, "epochs_stage2": 20, "epochs_stage3": 15,
                  "solver_switch_epoch": 12, "alpha": 0.01},
    },
    "ns": {
        "gen": {
            "n_times": 26,
            "t_span": [0.0, 5.0],
            "grid_points": [16, 16],
            "param": {
                "mean": 0.0,
                "length_scale_range": [1.0, 4.0],
                "output_scale_range": [0.0, 1.0],
                "n_knots": 32,
            },
            "ic": {"kind": "band_limited", "max_mode": 4, "zero_mean": True},
        },
        "train": {"epochs_stage1": 300, "epochs_stage2": 15, "epochs_stage3": 10,
                  "solver_switch_epoch": 10, "alpha": 0.01},
    },
}

_PROFILE_TRAJ = {"desk": 200, "paper-100": 100, "paper-1000": 1000}
# PDE desk profiles stay light; hopf needs the full desk count for the
# extrapolation experiments.
_DESK_TRAJ = {"ode_nonlinear": 200, "saddle_node": 100, "pitchfork": 100,
              "hopf": 200, "dr": 200, "ks": 60, "ns": 20}


def preset(system: str, profile: str = "desk") -> dict:
    if system not in _BASE:
        raise ValueError(f"no preset for system {system!r}")
    if profile not in PROFILES:
        raise ValueError(f"profile must be one of {PROFILES}, got {profile!r}")
    import copy

    out = copy.deepcopy(_BASE[system])
    if profile == "desk":
        out["gen"]["n_traj"] = _DESK_TRAJ[system]
    else:
        out["gen"]["n_traj"] = _PROFILE_TRAJ[profile]
        out["train"]["epochs_stage1"] = max(out["train"]["epochs_stage1"], 1000)
        out["train"]["epochs_stage2"] = 200
        out["train"]["epochs_stage3"] = 200
        out["train"]["solver_switch_epoch"] = 120
    out["system"] = system
    out["profile"] = profile
    return out
