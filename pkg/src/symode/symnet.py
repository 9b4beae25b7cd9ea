"""Multiplicative symbolic network over a dictionary of field symbols.

The dictionary stacks, at every grid point, the parameter channels, the
state channels, and all spatial derivatives of the state up to a maximum
order.  Each hidden layer forms one new product of two learned affine
combinations of the current entries and prepends it, so a depth-K network
spans polynomials of degree up to ``2**K`` over the dictionary.  Forward
evaluation, analytic reverse-mode gradients, and exact expansion into a
readable polynomial are provided.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .spectral import (
    Grid,
    spectral_derivative,
    spectral_derivative_adjoint,
    stream_gradient,
    stream_gradient_adjoint,
)

OVERFLOW_LIMIT = 1e12
EXPANSION_TERM_CAP = 1_000_000


def dictionary_size(d: int, d_s: int, d_u: int, q: int) -> int:
    """Number of dictionary entries for spatial dimension ``d``, state
    channels ``d_s``, parameter channels ``d_u``, and derivatives up to
    order ``q``.

    Follows the recursion S_1 = d_s*(q+1) + d_u and
    S_d = sum_i (S_{d-1}(d_s, i) - d_u) + d_u; a zero-dimensional system
    has no derivatives and the size is d_s + d_u.
    """
    if d not in (0, 1, 2, 3):
        raise ValueError(f"spatial dimension must be in 0..3, got {d}")
    if not (0 <= q <= 4):
        raise ValueError(f"derivative order must be in 0..4, got {q}")
    if d_s < 1 or d_u < 0:
        raise ValueError("need d_s >= 1 and d_u >= 0")
    if d == 0:
        return d_s + d_u
    if d == 1:
        return d_s * (q + 1) + d_u
    return sum(dictionary_size(d - 1, d_s, d_u, i) - d_u for i in range(q + 1)) + d_u


def derivative_multi_indices(dim: int, max_order: int) -> list[tuple[int, ...]]:
    """All derivative multi-indices with 1 <= total order <= max_order,
    ordered by total order, then lexicographically with the x-axis first
    (e.g. for order 2 in 2-d: xx, xy, yy)."""
    out: list[tuple[int, ...]] = []
    for total in range(1, max_order + 1):
        if dim == 1:
            out.append((total,))
        elif dim == 2:
            out.extend((total - j, j) for j in range(total + 1))
    return out


_AXIS_NAMES = "xy"


def _deriv_suffix(alpha: tuple[int, ...]) -> str:
    return "".join(_AXIS_NAMES[a] * n for a, n in enumerate(alpha))


@dataclass(frozen=True)
class DictionarySpec:
    """Canonical symbol ordering for a system's dictionary.

    Order: parameter channels, state channels, then state derivatives by
    total order then lexicographic multi-index (x-major) then state channel.
    When ``stream_function`` is set, the x- and y-gradients of the stream
    function of channel 0 (the field g solving laplacian(g) = -s) are
    appended at the end.
    """

    dim: int
    n_state: int
    n_param: int
    max_order: int
    stream_function: bool = False

    def __post_init__(self):
        if self.dim == 0 and self.max_order != 0:
            raise ValueError("a zero-dimensional system has no derivatives")
        if self.stream_function and self.dim != 2:
            raise ValueError("stream-function symbols require a 2-d grid")
        dictionary_size(self.dim, self.n_state, self.n_param, self.max_order)

    @property
    def size(self) -> int:
        base = dictionary_size(self.dim, self.n_state, self.n_param, self.max_order)
        return base + (2 if self.stream_function else 0)

    def labels(self) -> list[str]:
        params = ["u"] if self.n_param == 1 else [f"u{i + 1}" for i in range(self.n_param)]
        states = ["s"] if self.n_state == 1 else [f"s{i + 1}" for i in range(self.n_state)]
        out = params + states
        for alpha in derivative_multi_indices(self.dim, self.max_order):
            out.extend(f"{name}_{_deriv_suffix(alpha)}" for name in states)
        if self.stream_function:
            out.extend(["stream_x", "stream_y"])
        return out


def build_dictionary(
    s: np.ndarray, u_field: np.ndarray, grid: Grid, spec: DictionarySpec
) -> np.ndarray:
    """Stack dictionary symbol values over grid points.

    ``s`` has shape (..., *grid.shape, n_state) and ``u_field``
    (..., *grid.shape, n_param); the result appends a symbol axis of length
    ``spec.size`` in canonical order.
    """
    s = np.asarray(s, dtype=float)
    u_field = np.asarray(u_field, dtype=float)
    if s.shape[-1] != spec.n_state:
        raise ValueError(f"expected {spec.n_state} state channels, got {s.shape[-1]}")
    if u_field.shape[-1] != spec.n_param:
        raise ValueError(f"expected {spec.n_param} parameter channels, got {u_field.shape[-1]}")
    if s.shape[:-1] != u_field.shape[:-1]:
        raise ValueError("state and parameter fields must share grid axes")
    cols = [u_field[..., c] for c in range(spec.n_param)]
    cols.extend(s[..., c] for c in range(spec.n_state))
    for alpha in derivative_multi_indices(spec.dim, spec.max_order):
        for c in range(spec.n_state):
            cols.append(spectral_derivative(s[..., c], grid, alpha))
    if spec.stream_function:
        gx, gy = stream_gradient(s[..., 0], grid)
        cols.extend([gx, gy])
    return np.stack(cols, axis=-1)


def build_dictionary_vjp(
    g_dict: np.ndarray, grid: Grid, spec: DictionarySpec
) -> tuple[np.ndarray, np.ndarray]:
    """Backpropagate a gradient w.r.t. dictionary values onto the state and
    parameter fields.  Derivative entries use the adjoint spectral operator
    (integration by parts on the periodic domain)."""
    g_u = g_dict[..., : spec.n_param]
    g_s = np.array(g_dict[..., spec.n_param : spec.n_param + spec.n_state])
    idx = spec.n_param + spec.n_state
    for alpha in derivative_multi_indices(spec.dim, spec.max_order):
        for c in range(spec.n_state):
            g_s[..., c] += spectral_derivative_adjoint(g_dict[..., idx], grid, alpha)
            idx += 1
    if spec.stream_function:
        g_s[..., 0] += stream_gradient_adjoint(g_dict[..., idx], g_dict[..., idx + 1], grid)
        idx += 2
    return g_s, g_u


@dataclass
class SymNetParams:
    """Weights of the multiplicative symbolic network.

    Layer k holds a (2, n_inputs + k - 1) weight matrix and a length-2 bias
    producing the two affine factors whose product is prepended; the output
    layer maps the final stack to the state channels.
    """

    layer_weights: list[np.ndarray]
    layer_biases: list[np.ndarray]
    w_out: np.ndarray
    b_out: np.ndarray

    @property
    def n_inputs(self) -> int:
        return self.layer_weights[0].shape[1] if self.layer_weights else self.w_out.shape[1]

    @property
    def n_layers(self) -> int:
        return len(self.layer_weights)

    @property
    def n_outputs(self) -> int:
        return self.w_out.shape[0]

    def validate(self) -> None:
        n_in = self.n_inputs
        for k, (w, b) in enumerate(zip(self.layer_weights, self.layer_biases)):
            if w.shape != (2, n_in + k):
                raise ValueError(f"layer {k} weight shape {w.shape} != (2, {n_in + k})")
            if b.shape != (2,):
                raise ValueError(f"layer {k} bias shape {b.shape} != (2,)")
        if self.w_out.shape[1] != n_in + self.n_layers:
            raise ValueError("output layer width mismatch")
        if self.b_out.shape != (self.w_out.shape[0],):
            raise ValueError("output bias shape mismatch")
        for arr in self._arrays():
            if not np.all(np.isfinite(arr)):
                raise ValueError("parameters contain non-finite values")

    def _arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.layer_weights, self.layer_biases):
            out.extend([w, b])
        out.extend([self.w_out, self.b_out])
        return out

    @property
    def n_params(self) -> int:
        return sum(a.size for a in self._arrays())

    def to_vector(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self._arrays()])

    def from_vector(self, vec: np.ndarray) -> "SymNetParams":
        vec = np.asarray(vec, dtype=float)
        if vec.size != self.n_params:
            raise ValueError(f"expected vector of size {self.n_params}, got {vec.size}")
        pos = 0
        lw, lb = [], []
        for w, b in zip(self.layer_weights, self.layer_biases):
            lw.append(vec[pos : pos + w.size].reshape(w.shape))
            pos += w.size
            lb.append(vec[pos : pos + b.size].reshape(b.shape))
            pos += b.size
        w_out = vec[pos : pos + self.w_out.size].reshape(self.w_out.shape)
        pos += self.w_out.size
        b_out = vec[pos : pos + self.b_out.size].reshape(self.b_out.shape)
        return SymNetParams(lw, lb, w_out, b_out)

    def copy(self) -> "SymNetParams":
        return self.from_vector(self.to_vector())

    def penalty_mask(self) -> np.ndarray:
        """1.0 for entries subject to the L1 penalty (everything except the
        output bias)."""
        parts = []
        for w, b in zip(self.layer_weights, self.layer_biases):
            parts.extend([np.ones(w.size), np.ones(b.size)])
        parts.extend([np.ones(self.w_out.size), np.zeros(self.b_out.size)])
        return np.concatenate(parts)

    @staticmethod
    def create(
        n_inputs: int,
        n_outputs: int,
        n_layers: int,
        rng: np.random.Generator | None = None,
        scale: float = 0.01,
    ) -> "SymNetParams":
        """Near-zero random initialization (or exact zeros when rng is None)
        so early rollouts stay non-stiff."""
        if n_layers < 1:
            raise ValueError("need at least one hidden layer")

        def draw(shape):
            if rng is None:
                return np.zeros(shape)
            return scale * rng.standard_normal(shape)

        lw = [draw((2, n_inputs + k)) for k in range(n_layers)]
        lb = [np.zeros(2) for _ in range(n_layers)]
        return SymNetParams(lw, lb, draw((n_outputs, n_inputs + n_layers)), np.zeros(n_outputs))


def _forward_stack(params: SymNetParams, x: np.ndarray):
    stacks = [x]
    factors = []
    for k, (w, b) in enumerate(zip(params.layer_weights, params.layer_biases)):
        aff = stacks[-1] @ w.T + b
        prod = aff[..., 0] * aff[..., 1]
        peak = float(np.abs(prod).max()) if prod.size else 0.0
        if not np.isfinite(peak) or peak > OVERFLOW_LIMIT:
            raise FloatingPointError(
                f"product magnitude {peak:.3e} exceeds {OVERFLOW_LIMIT:g} in layer {k}"
            )
        factors.append(aff)
        stacks.append(np.concatenate([prod[..., None], stacks[-1]], axis=-1))
    return stacks, factors


def symnet_forward(params: SymNetParams, dict_values: np.ndarray) -> np.ndarray:
    """Evaluate the network pointwise over grid points.

    ``dict_values`` has shape (..., n_inputs); the result has shape
    (..., n_outputs).
    """
    x = np.asarray(dict_values, dtype=float)
    if x.shape[-1] != params.n_inputs:
        raise ValueError(f"expected {params.n_inputs} dictionary entries, got {x.shape[-1]}")
    stacks, _ = _forward_stack(params, x)
    return stacks[-1] @ params.w_out.T + params.b_out


def symnet_vjp(
    params: SymNetParams, dict_values: np.ndarray, upstream: np.ndarray
) -> tuple[SymNetParams, np.ndarray]:
    """Reverse-mode gradients of ``sum(upstream * symnet_forward)``.

    Returns parameter gradients (in a SymNetParams container of matching
    shapes) and the gradient w.r.t. the dictionary values, which chains the
    network into spatial-field gradients.
    """
    x = np.asarray(dict_values, dtype=float)
    upstream = np.asarray(upstream, dtype=float)
    stacks, factors = _forward_stack(params, x)
    flat = lambda a: a.reshape(-1, a.shape[-1])
    g_w_out = flat(upstream).T @ flat(stacks[-1])
    g_b_out = flat(upstream).sum(axis=0)
    g_stack = upstream @ params.w_out
    g_lw: list[np.ndarray] = [None] * params.n_layers
    g_lb: list[np.ndarray] = [None] * params.n_layers
    for k in range(params.n_layers - 1, -1, -1):
        g_prod = g_stack[..., 0]
        g_rest = g_stack[..., 1:]
        aff = factors[k]
        g_aff = np.stack([g_prod * aff[..., 1], g_prod * aff[..., 0]], axis=-1)
        g_lw[k] = flat(g_aff).T @ flat(stacks[k])
        g_lb[k] = flat(g_aff).sum(axis=0)
        g_stack = g_rest + g_aff @ params.layer_weights[k]
    grads = SymNetParams(g_lw, g_lb, g_w_out, g_b_out)
    return grads, g_stack


# ── exact polynomial expansion ──────────────────────────────────────

Monomial = tuple[int, ...]


def _poly_scale(poly: dict[Monomial, Fraction], c: Fraction) -> dict[Monomial, Fraction]:
    if c == 0:
        return {}
    return {m: c * v for m, v in poly.items()}


def _poly_add(into: dict[Monomial, Fraction], other: dict[Monomial, Fraction]) -> None:
    for m, v in other.items():
        acc = into.get(m, Fraction(0)) + v
        if acc == 0:
            into.pop(m, None)
        else:
            into[m] = acc


def _poly_mul(
    a: dict[Monomial, Fraction], b: dict[Monomial, Fraction]
) -> dict[Monomial, Fraction]:
    out: dict[Monomial, Fraction] = {}
    for ma, va in a.items():
        for mb, vb in b.items():
            m = tuple(i + j for i, j in zip(ma, mb))
            acc = out.get(m, Fraction(0)) + va * vb
            if acc == 0:
                out.pop(m, None)
            else:
                out[m] = acc
        if len(out) > EXPANSION_TERM_CAP:
            raise RuntimeError(
                f"expansion exceeded {EXPANSION_TERM_CAP} terms; "
                "raise the threshold or reduce network depth"
            )
    return out


def _expand(params: SymNetParams) -> list[dict[Monomial, Fraction]]:
    n = params.n_inputs
    zero = (0,) * n

    def unit(j: int) -> Monomial:
        m = [0] * n
        m[j] = 1
        return tuple(m)

    stack: list[dict[Monomial, Fraction]] = [{unit(j): Fraction(1)} for j in range(n)]
    for w, b in zip(params.layer_weights, params.layer_biases):
        halves = []
        for row in range(2):
            aff: dict[Monomial, Fraction] = {}
            if b[row] != 0:
                aff[zero] = Fraction(float(b[row]))
            for j, poly in enumerate(stack):
                _poly_add(aff, _poly_scale(poly, Fraction(float(w[row, j]))))
            halves.append(aff)
        stack.insert(0, _poly_mul(halves[0], halves[1]))
    outputs = []
    for c in range(params.n_outputs):
        out: dict[Monomial, Fraction] = {}
        if params.b_out[c] != 0:
            out[zero] = Fraction(float(params.b_out[c]))
        for j, poly in enumerate(stack):
            _poly_add(out, _poly_scale(poly, Fraction(float(params.w_out[c, j]))))
        outputs.append(out)
    return outputs


def monomial_label(m: Monomial, labels: list[str]) -> str:
    parts = []
    for j, power in enumerate(m):
        parts.extend([labels[j]] * power)
    return "·".join(parts) if parts else "1"


def extract_equation(
    params: SymNetParams, spec: DictionarySpec, threshold: float = 1e-8
) -> list[list[tuple[float, str]]]:
    """Expand the network into per-channel polynomials over the dictionary.

    Returns, for each output channel, (coefficient, monomial label) pairs
    with |coefficient| >= threshold, sorted by descending magnitude.  The
    expansion itself is exact (rational arithmetic over the float weights);
    coefficients are converted to float at the end.
    """
    labels = spec.labels()
    if len(labels) != params.n_inputs:
        raise ValueError(
            f"dictionary has {len(labels)} symbols but network expects {params.n_inputs}"
        )
    out = []
    for poly in _expand(params):
        terms = [
            (float(v), monomial_label(m, labels))
            for m, v in poly.items()
            if abs(float(v)) >= threshold
        ]
        terms.sort(key=lambda t: (-abs(t[0]), t[1]))
        out.append(terms)
    return out


def equation_terms_by_label(terms: list[tuple[float, str]]) -> dict[str, float]:
    return {label: coef for coef, label in terms}


def format_equation(channels: list[list[tuple[float, str]]], state_labels=None) -> str:
    """Human-readable rendering, one line per output channel."""
    lines = []
    for c, terms in enumerate(channels):
        lhs = f"d{state_labels[c] if state_labels else ('s' if len(channels) == 1 else f's{c + 1}')}/dt"
        if not terms:
            lines.append(f"{lhs} = 0")
            continue
        pieces = []
        for i, (coef, label) in enumerate(terms):
            mag = f"{abs(coef):.6g}"
            body = mag if label == "1" else f"{mag}·{label}"
            if i == 0:
                pieces.append(body if coef >= 0 else f"-{body}")
            else:
                pieces.append(f"{'+' if coef >= 0 else '-'} {body}")
        lines.append(f"{lhs} = " + " ".join(pieces))
    return "\n".join(lines)
