"""Symbolic network tests: dictionary sizing/building, forward evaluation,
reverse-mode gradients, and exact polynomial extraction."""

import itertools

import numpy as np
import pytest

from symode.spectral import Grid
from symode.symnet import (
    DictionarySpec,
    SymNetParams,
    build_dictionary,
    build_dictionary_vjp,
    dictionary_size,
    equation_terms_by_label,
    extract_equation,
    format_equation,
    symnet_forward,
    symnet_vjp,
)


def brute_force_size(d: int, d_s: int, d_u: int, q: int) -> int:
    """Independent oracle: enumerate derivative multi-indices directly."""
    if d == 0:
        return d_s + d_u
    count = 0
    for alpha in itertools.product(range(q + 1), repeat=d):
        if sum(alpha) <= q:
            count += 1
    return d_u + d_s * count


class TestDictionarySize:
    def test_1d_scalar_q4(self):
        # enumeration: u, s, s_x, s_xx, s_xxx, s_xxxx
        assert dictionary_size(1, 1, 1, 4) == 6

    def test_2d_scalar_q2(self):
        # adds s_y, s_xy, s_yy to the 1-d q=2 set
        assert dictionary_size(2, 1, 1, 2) == 7

    def test_3d_scalar_q4(self):
        # 35 state terms (C(7,3)) plus the parameter channel
        assert dictionary_size(3, 1, 1, 4) == 36

    def test_matches_enumeration_everywhere(self):
        for d in (1, 2, 3):
            for q in range(5):
                for d_s in (1, 2):
                    for d_u in (1, 2):
                        assert dictionary_size(d, d_s, d_u, q) == brute_force_size(
                            d, d_s, d_u, q
                        ), (d, d_s, d_u, q)

    def test_zero_dimensional(self):
        assert dictionary_size(0, 2, 1, 0) == 3

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            dictionary_size(4, 1, 1, 2)
        with pytest.raises(ValueError):
            dictionary_size(1, 1, 1, 5)


class TestDictionarySpec:
    def test_labels_1d(self):
        spec = DictionarySpec(dim=1, n_state=1, n_param=1, max_order=4)
        assert spec.labels() == ["u", "s", "s_x", "s_xx", "s_xxx", "s_xxxx"]

    def test_labels_2d_order(self):
        spec = DictionarySpec(dim=2, n_state=1, n_param=1, max_order=2)
        assert spec.labels() == ["u", "s", "s_x", "s_y", "s_xx", "s_xy", "s_yy"]

    def test_labels_multichannel(self):
        spec = DictionarySpec(dim=0, n_state=2, n_param=1, max_order=0)
        assert spec.labels() == ["u", "s1", "s2"]

    def test_stream_function_labels_appended(self):
        spec = DictionarySpec(dim=2, n_state=1, n_param=1, max_order=2, stream_function=True)
        assert spec.labels()[-2:] == ["stream_x", "stream_y"]
        assert spec.size == 9

    def test_label_count_matches_size(self):
        for d, q in [(0, 0), (1, 3), (2, 2)]:
            spec = DictionarySpec(dim=d, n_state=2, n_param=2, max_order=q)
            assert len(spec.labels()) == spec.size


class TestBuildDictionary:
    def test_zero_dimensional_concatenates(self):
        spec = DictionarySpec(dim=0, n_state=2, n_param=1, max_order=0)
        s = np.array([[1.0, 2.0], [3.0, 4.0]])
        u = np.array([[5.0], [6.0]])
        out = build_dictionary(s, u, Grid.for_ode(), spec)
        assert np.allclose(out, [[5.0, 1.0, 2.0], [6.0, 3.0, 4.0]])

    def test_sine_derivatives(self):
        g = Grid.line(64, 2 * np.pi)
        x = g.axis_coords(0)
        spec = DictionarySpec(dim=1, n_state=1, n_param=1, max_order=2)
        out = build_dictionary(np.sin(x)[:, None], np.full((64, 1), 0.5), g, spec)
        assert np.allclose(out[:, 0], 0.5)
        assert np.allclose(out[:, 1], np.sin(x), atol=1e-12)
        assert np.allclose(out[:, 2], np.cos(x), atol=1e-10)
        assert np.allclose(out[:, 3], -np.sin(x), atol=1e-10)

    def test_zero_state_passes_parameter_through(self):
        g = Grid.line(16, 1.0)
        spec = DictionarySpec(dim=1, n_state=1, n_param=1, max_order=2)
        u = np.linspace(0, 1, 16)[:, None]
        out = build_dictionary(np.zeros((16, 1)), u, g, spec)
        assert np.allclose(out[:, 0], u[:, 0])
        assert np.all(out[:, 1:] == 0.0)

    def test_vjp_matches_finite_differences(self):
        g = Grid.line(16, 2.0)
        spec = DictionarySpec(dim=1, n_state=1, n_param=1, max_order=3)
        rng = np.random.default_rng(0)
        s = rng.standard_normal((16, 1))
        u = rng.standard_normal((16, 1))
        w = rng.standard_normal((16, spec.size))
        loss = lambda s_: float(np.sum(w * build_dictionary(s_, u, g, spec)))
        g_s, g_u = build_dictionary_vjp(w, g, spec)
        eps = 1e-6
        for idx in [(0, 0), (5, 0), (11, 0)]:
            sp, sm = s.copy(), s.copy()
            sp[idx] += eps
            sm[idx] -= eps
            fd = (loss(sp) - loss(sm)) / (2 * eps)
            assert g_s[idx] == pytest.approx(fd, rel=1e-6, abs=1e-7)
        assert np.allclose(g_u, w[:, :1])


def hand_built_minus_s2_plus_u() -> tuple[SymNetParams, DictionarySpec]:
    """K = 1 network computing -s^2 + u over the dictionary [u, s]."""
    spec = DictionarySpec(dim=0, n_state=1, n_param=1, max_order=0)
    w1 = np.array([[0.0, 1.0], [0.0, 1.0]])  # psi = s, phi = s
    params = SymNetParams(
        layer_weights=[w1],
        layer_biases=[np.zeros(2)],
        w_out=np.array([[-1.0, 1.0, 0.0]]),  # -product + u
        b_out=np.zeros(1),
    )
    params.validate()
    return params, spec


def random_params(rng, n_inputs, n_outputs, n_layers, scale=0.4) -> SymNetParams:
    lw = [scale * rng.standard_normal((2, n_inputs + k)) for k in range(n_layers)]
    lb = [scale * rng.standard_normal(2) for _ in range(n_layers)]
    w_out = scale * rng.standard_normal((n_outputs, n_inputs + n_layers))
    b_out = scale * rng.standard_normal(n_outputs)
    return SymNetParams(lw, lb, w_out, b_out)


class TestForward:
    def test_all_zero_params_give_zero(self):
        spec = DictionarySpec(dim=0, n_state=1, n_param=1, max_order=0)
        params = SymNetParams.create(spec.size, 1, n_layers=2, rng=None)
        out = symnet_forward(params, np.random.default_rng(0).standard_normal((10, 2)))
        assert np.all(out == 0.0)

    def test_hand_built_minus_s2_plus_u(self):
        params, _ = hand_built_minus_s2_plus_u()
        s = np.linspace(-2, 2, 21)
        u = np.linspace(0, 5, 21)
        dict_values = np.stack([u, s], axis=-1)
        out = symnet_forward(params, dict_values)
        assert np.allclose(out[:, 0], -(s**2) + u, atol=1e-14)

    def test_cubic_reachable_with_two_layers(self):
        # layer 1 builds s^2, layer 2 multiplies by s
        w1 = np.array([[0.0, 1.0], [0.0, 1.0]])
        w2 = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])  # psi = s^2, phi = s
        params = SymNetParams(
            layer_weights=[w1, w2],
            layer_biases=[np.zeros(2), np.zeros(2)],
            w_out=np.array([[1.0, 0.0, 0.0, 0.0]]),
            b_out=np.zeros(1),
        )
        s = np.linspace(-1.5, 1.5, 11)
        out = symnet_forward(params, np.stack([np.zeros(11), s], axis=-1))
        assert np.allclose(out[:, 0], s**3, atol=1e-14)

    def test_overflow_reports_layer(self):
        params, _ = hand_built_minus_s2_plus_u()
        big = np.array([[0.0, 1e7]])
        with pytest.raises(FloatingPointError, match="layer 0"):
            symnet_forward(params, big)

    def test_permutation_consistency(self):
        rng = np.random.default_rng(5)
        params = random_params(rng, 4, 1, 2)
        x = rng.standard_normal((50, 4))
        perm = rng.permutation(4)
        permuted = SymNetParams(
            layer_weights=[params.layer_weights[0][:, perm]]
            + [
                np.concatenate([w[:, :k], w[:, k:][:, perm]], axis=1)
                for k, w in enumerate(params.layer_weights[1:], start=1)
            ],
            layer_biases=[b.copy() for b in params.layer_biases],
            w_out=np.concatenate(
                [params.w_out[:, : params.n_layers], params.w_out[:, params.n_layers :][:, perm]],
                axis=1,
            ),
            b_out=params.b_out.copy(),
        )
        out_a = symnet_forward(params, x)
        out_b = symnet_forward(permuted, x[:, perm])
        assert np.allclose(out_a, out_b, atol=1e-12)


class TestVjp:
    def test_zero_upstream_gives_zero_grads(self):
        rng = np.random.default_rng(1)
        params = random_params(rng, 3, 2, 2)
        x = rng.standard_normal((7, 3))
        grads, g_x = symnet_vjp(params, x, np.zeros((7, 2)))
        assert np.all(grads.to_vector() == 0.0)
        assert np.all(g_x == 0.0)

    def test_hand_derivative_single_product(self):
        # K=1, dictionary [a, b], psi = w00*a + w01*b, phi = w10*a + w11*b,
        # output = v * (psi*phi); pencil-and-paper gradients
        rng = np.random.default_rng(2)
        w = rng.standard_normal((2, 2))
        v = 1.7
        params = SymNetParams(
            layer_weights=[w.copy()],
            layer_biases=[np.zeros(2)],
            w_out=np.array([[v, 0.0, 0.0]]),
            b_out=np.zeros(1),
        )
        a, b = 0.8, -1.3
        x = np.array([[a, b]])
        psi = w[0, 0] * a + w[0, 1] * b
        phi = w[1, 0] * a + w[1, 1] * b
        grads, g_x = symnet_vjp(params, x, np.ones((1, 1)))
        expected_w = np.array([[v * phi * a, v * phi * b], [v * psi * a, v * psi * b]])
        assert np.allclose(grads.layer_weights[0], expected_w, atol=1e-12)
        assert np.allclose(grads.w_out, [[psi * phi, a, b]], atol=1e-12)
        expected_x = v * (phi * w[0] + psi * w[1]) + params.w_out[0, 1:]
        assert np.allclose(g_x[0], expected_x, atol=1e-12)

    @pytest.mark.parametrize("trial", range(12))
    def test_matches_finite_differences(self, trial):
        rng = np.random.default_rng(100 + trial)
        n_in = int(rng.integers(2, 6))
        n_out = int(rng.integers(1, 3))
        n_layers = int(rng.integers(1, 4))
        params = random_params(rng, n_in, n_out, n_layers)
        x = rng.standard_normal((5, n_in))
        upstream = rng.standard_normal((5, n_out))
        grads, g_x = symnet_vjp(params, x, upstream)

        vec = params.to_vector()

        def loss_of(v):
            return float(np.sum(upstream * symnet_forward(params.from_vector(v), x)))

        # FD cannot resolve coordinates whose gradient is far below the
        # vector scale, so the guard carries the gradient's own magnitude
        eps = 1e-6
        g_vec = grads.to_vector()
        scale = np.abs(g_vec).max()
        for i in range(vec.size):
            vp, vm = vec.copy(), vec.copy()
            vp[i] += eps
            vm[i] -= eps
            fd = (loss_of(vp) - loss_of(vm)) / (2 * eps)
            denom = max(abs(fd), abs(g_vec[i])) + 1e-3 * scale + 1e-12
            assert abs(fd - g_vec[i]) / denom < 1e-6

        x_scale = np.abs(g_x).max()
        for idx in [(0, 0), (2, n_in - 1)]:
            xp, xm = x.copy(), x.copy()
            xp[idx] += eps
            xm[idx] -= eps
            fd = (
                float(np.sum(upstream * symnet_forward(params, xp)))
                - float(np.sum(upstream * symnet_forward(params, xm)))
            ) / (2 * eps)
            denom = max(abs(fd), abs(g_x[idx])) + 1e-3 * x_scale + 1e-12
            assert abs(fd - g_x[idx]) / denom < 1e-6


class TestExtract:
    def test_hand_built_network_terms(self):
        params, spec = hand_built_minus_s2_plus_u()
        channels = extract_equation(params, spec, threshold=1e-8)
        assert channels == [[(-1.0, "s·s"), (1.0, "u")]]

    def test_all_zero_network_empty(self):
        spec = DictionarySpec(dim=0, n_state=1, n_param=1, max_order=0)
        params = SymNetParams.create(spec.size, 1, n_layers=2, rng=None)
        assert extract_equation(params, spec, threshold=1e-8) == [[]]

    def test_threshold_drops_small_terms(self):
        params, spec = hand_built_minus_s2_plus_u()
        params = params.copy()
        params.b_out = np.array([1e-6])
        channels = extract_equation(params, spec, threshold=1e-3)
        assert equation_terms_by_label(channels[0]) == {"s·s": -1.0, "u": 1.0}

    @pytest.mark.parametrize("trial", range(8))
    def test_expansion_consistent_with_forward(self, trial):
        rng = np.random.default_rng(300 + trial)
        n_in = int(rng.integers(2, 7))
        n_layers = int(rng.integers(1, 4))
        params = random_params(rng, n_in, 1, n_layers)
        spec_labels = [f"v{j}" for j in range(n_in)]
        channels = extract_equation(
            params,
            DictionarySpec(dim=0, n_state=n_in - 1, n_param=1, max_order=0),
            threshold=0.0,
        )
        x = rng.standard_normal((20, n_in))
        direct = symnet_forward(params, x)[:, 0]
        labels = DictionarySpec(dim=0, n_state=n_in - 1, n_param=1, max_order=0).labels()
        lab_to_col = {lab: i for i, lab in enumerate(labels)}
        total = np.zeros(20)
        for coef, label in channels[0]:
            term = np.full(20, coef)
            if label != "1":
                for sym in label.split("·"):
                    term = term * x[:, lab_to_col[sym]]
            total += term
        scale = np.abs(direct).max() + 1e-12
        assert np.abs(total - direct).max() / scale < 1e-9

    def test_degree_bounded_by_two_to_the_k(self):
        rng = np.random.default_rng(42)
        for n_layers in (1, 2, 3):
            params = random_params(rng, 3, 1, n_layers)
            spec = DictionarySpec(dim=0, n_state=2, n_param=1, max_order=0)
            channels = extract_equation(params, spec, threshold=0.0)
            max_deg = max(
                (0 if lab == "1" else len(lab.split("·")) for _, lab in channels[0]),
                default=0,
            )
            assert max_deg <= 2**n_layers

    def test_format_equation_readable(self):
        params, spec = hand_built_minus_s2_plus_u()
        text = format_equation(extract_equation(params, spec, 1e-8))
        assert text.startswith("ds/dt = ")
        assert "s·s" in text and "u" in text
