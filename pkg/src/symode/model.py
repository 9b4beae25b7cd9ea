"""Trained-model bundle: dictionary spec, both networks, solver settings.

The bundle is grid-independent: at evaluation time the dictionary is built
on whatever grid the data lives on, which is what makes super-resolution
evaluation possible.  Serialization is a single versioned JSON file with
float arrays embedded as base64-encoded little-endian bytes (bit-exact
round trip).
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field as dataclass_field
from pathlib import Path

import numpy as np

from .integrate import SolveConfig
from .mlp import MLPParams, mlp_forward, mlp_vjp
from .spectral import Grid
from .symnet import (
    DictionarySpec,
    SymNetParams,
    build_dictionary,
    build_dictionary_vjp,
    symnet_forward,
    symnet_vjp,
)

FORMAT_NAME = "symode-model"
FORMAT_VERSION = 1


@dataclass
class ModelBundle:
    dict_spec: DictionarySpec
    symnet: SymNetParams
    mlp: MLPParams
    solve: SolveConfig
    system_id: str
    use_symnet: bool = True
    use_mlp: bool = True
    meta: dict = dataclass_field(default_factory=dict)


class ModelRHS:
    """Learned vector field on a concrete grid.

    Implements the differentiable-callback protocol used by the rollout
    machinery: ``__call__(s, u_field, t)`` evaluates the tendency and
    ``vjp`` returns (flat parameter gradient, state gradient).  The flat
    parameter vector concatenates the symbolic-network parameters and the
    residual-network parameters, in that order.
    """

    def __init__(self, bundle: ModelBundle, grid: Grid):
        self.bundle = bundle
        self.grid = grid
        self.n_sym = bundle.symnet.n_params
        self.n_mlp = bundle.mlp.n_params
        self.n_params = self.n_sym + self.n_mlp

    def params_vector(self) -> np.ndarray:
        return np.concatenate([self.bundle.symnet.to_vector(), self.bundle.mlp.to_vector()])

    def set_params_vector(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=float)
        self.bundle.symnet = self.bundle.symnet.from_vector(vec[: self.n_sym])
        self.bundle.mlp = self.bundle.mlp.from_vector(vec[self.n_sym :])

    def __call__(self, s, u_field, t):
        dict_values = build_dictionary(s, u_field, self.grid, self.bundle.dict_spec)
        out = 0.0
        if self.bundle.use_symnet:
            out = symnet_forward(self.bundle.symnet, dict_values)
        if self.bundle.use_mlp:
            out = out + mlp_forward(self.bundle.mlp, dict_values)
        if not self.bundle.use_symnet and not self.bundle.use_mlp:
            out = np.zeros_like(np.asarray(s, dtype=float))
        return out

    def vjp(self, s, u_field, t, upstream):
        dict_values = build_dictionary(s, u_field, self.grid, self.bundle.dict_spec)
        g_dict = np.zeros_like(dict_values)
        g_sym = np.zeros(self.n_sym)
        g_mlp = np.zeros(self.n_mlp)
        if self.bundle.use_symnet:
            sym_grads, g_d = symnet_vjp(self.bundle.symnet, dict_values, upstream)
            g_sym = sym_grads.to_vector()
            g_dict += g_d
        if self.bundle.use_mlp:
            mlp_grads, g_d = mlp_vjp(self.bundle.mlp, dict_values, upstream)
            g_mlp = mlp_grads.to_vector()
            g_dict += g_d
        g_s, _ = build_dictionary_vjp(g_dict, self.grid, self.bundle.dict_spec)
        return np.concatenate([g_sym, g_mlp]), g_s


# ── serialization ───────────────────────────────────────────────────


def _encode(arr: np.ndarray) -> dict:
    arr = np.ascontiguousarray(arr, dtype="<f8")
    return {
        "shape": list(arr.shape),
        "data": base64.b64encode(arr.tobytes()).decode("ascii"),
    }


def _decode(obj: dict) -> np.ndarray:
    data = np.frombuffer(base64.b64decode(obj["data"]), dtype="<f8")
    return data.reshape(tuple(obj["shape"])).astype(float)


def save_model(bundle: ModelBundle, path: str | Path) -> None:
    doc = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "system": bundle.system_id,
        "use_symnet": bundle.use_symnet,
        "use_mlp": bundle.use_mlp,
        "dictionary": {
            "dim": bundle.dict_spec.dim,
            "n_state": bundle.dict_spec.n_state,
            "n_param": bundle.dict_spec.n_param,
            "max_order": bundle.dict_spec.max_order,
            "stream_function": bundle.dict_spec.stream_function,
        },
        "symnet": {
            "layers": [
                {"w": _encode(w), "b": _encode(b)}
                for w, b in zip(bundle.symnet.layer_weights, bundle.symnet.layer_biases)
            ],
            "w_out": _encode(bundle.symnet.w_out),
            "b_out": _encode(bundle.symnet.b_out),
        },
        "mlp": {
            "layers": [
                {"w": _encode(w), "b": _encode(b)}
                for w, b in zip(bundle.mlp.weights, bundle.mlp.biases)
            ]
        },
        "solve": {
            "method": bundle.solve.method,
            "dt": bundle.solve.dt,
            "rtol": bundle.solve.rtol,
            "atol": bundle.solve.atol,
            "max_steps": bundle.solve.max_steps,
        },
        "meta": bundle.meta,
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def load_model(path: str | Path) -> ModelBundle:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != FORMAT_NAME:
        raise ValueError(f"{path}: not a {FORMAT_NAME} file")
    if doc.get("version") != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported version {doc.get('version')}")
    d = doc["dictionary"]
    dict_spec = DictionarySpec(
        dim=d["dim"],
        n_state=d["n_state"],
        n_param=d["n_param"],
        max_order=d["max_order"],
        stream_function=d["stream_function"],
    )
    sym = doc["symnet"]
    symnet = SymNetParams(
        layer_weights=[_decode(layer["w"]) for layer in sym["layers"]],
        layer_biases=[_decode(layer["b"]) for layer in sym["layers"]],
        w_out=_decode(sym["w_out"]),
        b_out=_decode(sym["b_out"]),
    )
    mlp = MLPParams(
        weights=[_decode(layer["w"]) for layer in doc["mlp"]["layers"]],
        biases=[_decode(layer["b"]) for layer in doc["mlp"]["layers"]],
    )
    solve = SolveConfig(**doc["solve"])
    return ModelBundle(
        dict_spec=dict_spec,
        symnet=symnet,
        mlp=mlp,
        solve=solve,
        system_id=doc["system"],
        use_symnet=doc.get("use_symnet", True),
        use_mlp=doc.get("use_mlp", True),
        meta=doc.get("meta", {}),
    )
