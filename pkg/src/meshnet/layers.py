"""Gauge-equivariant neural layers: convolution, attention, bias, nonlinearity.

All layers consume an :class:`EdgeGeometry` (directed edges plus the two
per-edge angles) and per-vertex coordinate features.  Kernels are evaluated
through their harmonic decomposition: the coefficient vector maps linearly
to a stack of constant matrices, one per ``cos(h * theta)`` / ``sin(h *
theta)`` term, so a whole mesh's messages reduce to a few dense matmuls.

Equivariance ingredients:

* neighbor features are rotated into the receiving frame using the
  per-edge transport angle before any kernel touches them;
* kernels are linear combinations of the constrained angular basis;
* biases act per irreducible component (additive on scalars, a rotation on
  2-dimensional components);
* the nonlinearity gates vector components by their norm only.

An ``additive`` bias mode (a plain vector added to all coordinates) is
included solely as a non-equivariant negative control for the harness.
"""

from __future__ import annotations

import numpy as np

from .autodiff import (
    Tensor,
    concat,
    parameter,
    segment_softmax,
    segment_sum,
    sparse_matmul,
    take_cols,
    take_rows,
)
from .errors import (
    ConfigError,
    EmptyNeighborhoodError,
    FeatureTypeError,
    FrameBindingError,
)
from .features import GeometricFeatureField
from .representations import (
    EquivariantKernel,
    FeatureType,
    init_coefficients,
    kernel_term_map,
)
from .tangent import FrameField, TransportData, transport_data

__all__ = [
    "EdgeGeometry",
    "GemConvLayer",
    "EmanAttentionLayer",
    "GaugeNonlinearity",
    "DenseLayer",
    "BIAS_MODES",
]

BIAS_MODES = ("angular", "additive", "none")


class EdgeGeometry:
    """Directed-edge arrays plus cached trigonometry for the layers.

    Layers only ever touch ``src``/``dst``/``degrees`` and the two angle
    arrays, so tests can hand-construct instances for degenerate cases.
    """

    def __init__(self, src, dst, theta, transport, degrees, n_vertices,
                 frame_token):
        self.src = np.asarray(src, dtype=np.int64)
        self.dst = np.asarray(dst, dtype=np.int64)
        self.theta = np.asarray(theta, dtype=np.float64)
        self.transport = np.asarray(transport, dtype=np.float64)
        self.degrees = np.asarray(degrees, dtype=np.int64)
        self.n_vertices = int(n_vertices)
        self.frame_token = frame_token
        self._theta_terms = {}
        self._rotation_tables = {}

    @classmethod
    def from_frames(cls, frames: FrameField, transport: TransportData | None = None):
        if transport is None:
            transport = transport_data(frames)
        if transport.frame_token != frames.token:
            raise FrameBindingError("transport data was computed for different frames")
        mesh = frames.mesh
        return cls(mesh.edge_src, mesh.edge_dst, transport.theta,
                   transport.transport, mesh.degrees, mesh.n_vertices,
                   frames.token)

    def theta_table(self, terms) -> np.ndarray:
        """(E, n_terms) values of each (kind, harmonic) term at every edge."""
        cols = []
        for kind, h in terms:
            key = (kind, h)
            if key not in self._theta_terms:
                f = np.cos if kind == "c" else np.sin
                self._theta_terms[key] = f(h * self.theta)
            cols.append(self._theta_terms[key])
        return np.stack(cols, axis=1)

    def rotation_tables(self, ftype: FeatureType):
        """Per-dim cos / signed-sin tables for applying the transport rotation."""
        key = ftype.orders
        if key not in self._rotation_tables:
            phase = self.transport[:, None] * ftype.order_of_dim[None, :]
            cosm = np.cos(phase)
            sinm = np.sin(phase) * ftype.partner_sign[None, :]
            self._rotation_tables[key] = (cosm, sinm)
        return self._rotation_tables[key]


def _transport_rotate(x_src: Tensor, ftype: FeatureType, geom: EdgeGeometry) -> Tensor:
    """Rotate gathered source features into the receiving frame."""
    cosm, sinm = geom.rotation_tables(ftype)
    return x_src * cosm + take_cols(x_src, ftype.partner) * sinm


class _Kernel:
    """Learnable coefficients of one equivariant kernel (self or neigh)."""

    def __init__(self, in_type, out_type, kind, rng):
        self.in_type, self.out_type, self.kind = in_type, out_type, kind
        self.coeffs = parameter(init_coefficients(in_type, out_type, kind, rng))
        self.terms, self.smat = kernel_term_map(in_type, out_type, kind)

    def matrices(self) -> Tensor:
        """Stack of harmonic matrices, shape (n_terms, out_dim, in_dim)."""
        return sparse_matmul(
            self.smat, self.coeffs,
            (len(self.terms), self.out_type.dim, self.in_type.dim),
        )

    def matrix(self) -> Tensor:
        """Constant matrix of a self-kind kernel."""
        return sparse_matmul(self.smat, self.coeffs,
                             (self.out_type.dim, self.in_type.dim))

    def messages(self, u: Tensor, geom: EdgeGeometry) -> Tensor:
        """Apply K(theta_e) to each row of ``u``: (E, in) -> (E, out)."""
        W = self.matrices()
        T, Co, Ci = len(self.terms), self.out_type.dim, self.in_type.dim
        P = (u @ W.reshape(T * Co, Ci).T).reshape((-1, T, Co))
        tt = geom.theta_table(self.terms)
        return (P * tt[:, :, None]).sum(axis=1)

    def as_domain_kernel(self) -> EquivariantKernel:
        """View as the plain (non-autodiff) kernel object for residual checks."""
        return EquivariantKernel(self.in_type, self.out_type, self.kind,
                                 self.coeffs.value.copy())


class _Bias:
    """Per-component bias: additive on scalars, rotation on vector components.

    ``additive`` mode adds a raw vector to every coordinate instead --
    intentionally not gauge equivariant.
    """

    def __init__(self, out_type: FeatureType, mode: str, rng):
        if mode not in BIAS_MODES:
            raise ConfigError(f"unknown bias mode {mode!r}")
        self.mode = mode
        self.out_type = out_type
        if mode == "angular":
            self.b = parameter(rng.uniform(-0.5, 0.5, out_type.n_components))
        elif mode == "additive":
            self.b = parameter(rng.uniform(-0.5, 0.5, out_type.dim))
        else:
            self.b = None
        t = out_type
        self._scalar_mask = (t.order_of_dim == 0).astype(np.float64)

    def apply(self, y: Tensor) -> Tensor:
        if self.mode == "none":
            return y
        if self.mode == "additive":
            return y + self.b
        t = self.out_type
        angle = take_rows(self.b, t.comp_of_dim)
        phase = angle * t.order_of_dim.astype(np.float64)
        cosv = phase.cos()
        sinv = phase.sin() * t.partner_sign
        rotated = y * cosv + take_cols(y, t.partner) * sinv
        return rotated + angle * self._scalar_mask

    def parameters(self):
        return [] if self.b is None else [("bias", self.b)]


def _check_input(layer, x: Tensor, geom: EdgeGeometry):
    if x.shape[1] != layer.in_type.dim:
        raise FeatureTypeError(
            f"layer expects type {layer.in_type} (dim {layer.in_type.dim}), "
            f"got feature dim {x.shape[1]}"
        )
    if (geom.degrees == 0).any():
        raise EmptyNeighborhoodError(int(np.where(geom.degrees == 0)[0][0]))


class GemConvLayer:
    """Anisotropic gauge-equivariant convolution.

    Output at p is ``K_self f_p`` plus the sum over neighbors q of
    ``K_neigh(theta_pq)`` applied to the transported neighbor feature,
    followed by the bias.
    """

    def __init__(self, in_type: FeatureType, out_type: FeatureType,
                 bias: str = "angular", rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng()
        self.in_type, self.out_type = in_type, out_type
        self.self_kernel = _Kernel(in_type, out_type, "self", rng)
        self.neigh_kernel = _Kernel(in_type, out_type, "neigh", rng)
        self.bias = _Bias(out_type, bias, rng)

    def forward(self, x: Tensor, geom: EdgeGeometry) -> Tensor:
        _check_input(self, x, geom)
        u = _transport_rotate(take_rows(x, geom.src), self.in_type, geom)
        msg = self.neigh_kernel.messages(u, geom)
        agg = segment_sum(msg, geom.dst, geom.n_vertices)
        y = x @ self.self_kernel.matrix().T + agg
        return self.bias.apply(y)

    def apply_field(self, field: GeometricFeatureField,
                    geom: EdgeGeometry) -> GeometricFeatureField:
        _check_field(self, field, geom)
        out = self.forward(Tensor(field.values), geom)
        return GeometricFeatureField(self.out_type, out.value, geom.frame_token)

    def parameters(self):
        return [("self_kernel", self.self_kernel.coeffs),
                ("neigh_kernel", self.neigh_kernel.coeffs),
                *self.bias.parameters()]


def _check_field(layer, field: GeometricFeatureField, geom: EdgeGeometry):
    if field.ftype != layer.in_type:
        raise FeatureTypeError(
            f"layer expects type {layer.in_type}, field has type {field.ftype}"
        )
    if field.frame_token not in (-1, geom.frame_token):
        raise FrameBindingError(
            "feature field and edge geometry come from different frame fields"
        )


def _head_type(out_type: FeatureType, heads: int) -> FeatureType:
    """Output type with every multiplicity divided by the head count.

    Periodic types split into their repeating pattern (so a single head
    reproduces the output type exactly); otherwise components regroup by
    ascending order.
    """
    orders = out_type.orders
    if len(orders) % heads == 0:
        period = len(orders) // heads
        if orders == orders[:period] * heads:
            return FeatureType(orders[:period])
    counts = {}
    for n in orders:
        counts[n] = counts.get(n, 0) + 1
    head_orders = []
    for n in sorted(counts):
        if counts[n] % heads:
            raise ConfigError(
                f"multiplicity of rho{n} in {out_type} not divisible by {heads} heads"
            )
        head_orders.extend([n] * (counts[n] // heads))
    return FeatureType(head_orders)


class EmanAttentionLayer:
    """Attention-weighted gauge-equivariant aggregation.

    Per vertex, queries come from a self-kind kernel, keys and values from
    angular kernels applied to transported neighbor features; attention
    weights are a softmax over the neighborhood of the scaled key-query
    inner products, and the output is the neighbor count times the
    attention-weighted value sum.  Attention logits are built from inner
    products of same-type features, so the weights are gauge-invariant
    scalars.

    ``self_contribution`` adds a self column to the softmax (and switches
    the normalizer to ``N_p + 1``); ``heads > 1`` runs projected attention
    per head and mixes the concatenated heads with an output matrix, all
    projections being self-kind kernels.
    """

    def __init__(self, in_type: FeatureType, out_type: FeatureType,
                 att_type: FeatureType | None = None, bias: str = "angular",
                 self_contribution: bool = False, heads: int = 1,
                 rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng()
        self.in_type, self.out_type = in_type, out_type
        self.att_type = att_type if att_type is not None else out_type
        self.self_contribution = self_contribution
        self.heads = heads
        if self_contribution and heads > 1:
            raise ConfigError("self contribution with multiple heads is not supported")
        self.query_kernel = _Kernel(in_type, self.att_type, "self", rng)
        self.key_kernel = _Kernel(in_type, self.att_type, "neigh", rng)
        self.value_kernel = _Kernel(in_type, out_type, "neigh", rng)
        if self_contribution:
            self.self_key_kernel = _Kernel(in_type, self.att_type, "self", rng)
            self.self_value_kernel = _Kernel(in_type, out_type, "self", rng)
        if heads > 1:
            ht = _head_type(out_type, heads)
            self.head_type = ht
            self.head_query = [_Kernel(self.att_type, ht, "self", rng) for _ in range(heads)]
            self.head_key = [_Kernel(self.att_type, ht, "self", rng) for _ in range(heads)]
            self.head_value = [_Kernel(out_type, ht, "self", rng) for _ in range(heads)]
            self.out_mix = _Kernel(heads * ht, out_type, "self", rng)
        self.bias = _Bias(out_type, bias, rng)

    # -- internals -----------------------------------------------------------

    def _qkv(self, x: Tensor, geom: EdgeGeometry):
        u = _transport_rotate(take_rows(x, geom.src), self.in_type, geom)
        K = self.key_kernel.messages(u, geom)
        V = self.value_kernel.messages(u, geom)
        Q = x @ self.query_kernel.matrix().T
        return Q, K, V

    def _attend(self, Q, K, V, geom, scale_dim, out_scale):
        s = (K * take_rows(Q, geom.dst)).sum(axis=1) * (1.0 / np.sqrt(scale_dim))
        alpha = segment_softmax(s, geom.dst, geom.n_vertices)
        out = segment_sum(V * alpha.reshape(-1, 1), geom.dst, geom.n_vertices)
        return out * out_scale, alpha

    def forward(self, x: Tensor, geom: EdgeGeometry) -> Tensor:
        if not self.self_contribution:
            _check_input(self, x, geom)
        elif x.shape[1] != self.in_type.dim:
            raise FeatureTypeError(
                f"layer expects type {self.in_type} (dim {self.in_type.dim}), "
                f"got feature dim {x.shape[1]}"
            )
        Q, K, V = self._qkv(x, geom)
        degrees = geom.degrees.astype(np.float64)[:, None]
        catt = self.att_type.dim
        if self.self_contribution:
            return self._forward_with_self(x, Q, K, V, geom, degrees)
        if self.heads > 1:
            return self._forward_multi_head(Q, K, V, geom, degrees)
        out, _ = self._attend(Q, K, V, geom, catt, degrees)
        return self.bias.apply(out)

    def _forward_with_self(self, x, Q, K, V, geom, degrees):
        n, E = geom.n_vertices, geom.src.shape[0]
        Kself = x @ self.self_key_kernel.matrix().T
        Vself = x @ self.self_value_kernel.matrix().T
        scale = 1.0 / np.sqrt(self.att_type.dim)
        s_edge = (K * take_rows(Q, geom.dst)).sum(axis=1) * scale
        s_self = (Kself * Q).sum(axis=1) * scale
        seg = np.concatenate([np.arange(n), geom.dst])  # self column first
        alpha = segment_softmax(concat([s_self, s_edge]), seg, n)
        a_self = take_rows(alpha, np.arange(n))
        a_edge = take_rows(alpha, n + np.arange(E))
        out = segment_sum(V * a_edge.reshape(-1, 1), geom.dst, n)
        out = out + Vself * a_self.reshape(-1, 1)
        return self.bias.apply(out * (degrees + 1.0))

    def _forward_multi_head(self, Q, K, V, geom, degrees):
        d = self.head_type.dim
        outs = []
        for i in range(self.heads):
            Qh = Q @ self.head_query[i].matrix().T
            Kh = K @ self.head_key[i].matrix().T
            Vh = V @ self.head_value[i].matrix().T
            out, _ = self._attend(Qh, Kh, Vh, geom, d, degrees)
            outs.append(out)
        mixed = concat(outs, axis=1) @ self.out_mix.matrix().T
        return self.bias.apply(mixed)

    # -- public helpers --------------------------------------------------------

    def attention_coefficients(self, x: Tensor, geom: EdgeGeometry) -> np.ndarray:
        """Softmax weights aligned with the directed-edge order.

        With self contribution, the first ``V`` entries are the self
        weights and the remaining ``E`` follow edge order.
        """
        Q, K, V = self._qkv(x, geom)
        scale = 1.0 / np.sqrt(self.att_type.dim)
        if self.self_contribution:
            n, E = geom.n_vertices, geom.src.shape[0]
            Kself = x @ self.self_key_kernel.matrix().T
            s_edge = (K * take_rows(Q, geom.dst)).sum(axis=1) * scale
            s_self = (Kself * Q).sum(axis=1) * scale
            seg = np.concatenate([np.arange(n), geom.dst])
            return segment_softmax(concat([s_self, s_edge]), seg, n).value
        s = (K * take_rows(Q, geom.dst)).sum(axis=1) * scale
        return segment_softmax(s, geom.dst, geom.n_vertices).value

    def apply_field(self, field: GeometricFeatureField,
                    geom: EdgeGeometry) -> GeometricFeatureField:
        _check_field(self, field, geom)
        out = self.forward(Tensor(field.values), geom)
        return GeometricFeatureField(self.out_type, out.value, geom.frame_token)

    def parameters(self):
        params = [("query_kernel", self.query_kernel.coeffs),
                  ("key_kernel", self.key_kernel.coeffs),
                  ("value_kernel", self.value_kernel.coeffs)]
        if self.self_contribution:
            params += [("self_key_kernel", self.self_key_kernel.coeffs),
                       ("self_value_kernel", self.self_value_kernel.coeffs)]
        if self.heads > 1:
            for i in range(self.heads):
                params += [(f"head{i}.query", self.head_query[i].coeffs),
                           (f"head{i}.key", self.head_key[i].coeffs),
                           (f"head{i}.value", self.head_value[i].coeffs)]
            params.append(("out_mix", self.out_mix.coeffs))
        return params + self.bias.parameters()


class GaugeNonlinearity:
    """Scalar channels pass through ReLU; vector channels are norm-gated.

    A vector component f becomes ``f * sigmoid(|f| + c) / (|f| + 1e-6)``
    with one learnable offset c per component.  Only the norm enters the
    gate, so the map commutes with per-vertex rotations of the components.
    """

    EPS = 1e-6

    def __init__(self, ftype: FeatureType):
        self.ftype = ftype
        k = len(ftype.vector_comps)
        self.c = parameter(np.ones(k)) if k else None
        t = ftype
        self._restore = np.argsort(np.concatenate([t.scalar_dims, t.vector_dims]))

    def forward(self, x: Tensor) -> Tensor:
        t = self.ftype
        pieces = []
        if t.scalar_dims.size:
            pieces.append(take_cols(x, t.scalar_dims).relu())
        if t.vector_dims.size:
            vec = take_cols(x, t.vector_dims)
            k = t.vector_dims.size // 2
            sq = (vec * vec).reshape(-1, k, 2).sum(axis=2)
            nrm = (sq + 1e-60).sqrt()
            gate = (nrm + self.c).sigmoid() / (nrm + self.EPS)
            pieces.append(vec * take_cols(gate, np.repeat(np.arange(k), 2)))
        out = pieces[0] if len(pieces) == 1 else concat(pieces, axis=1)
        return take_cols(out, self._restore)

    def apply_field(self, field: GeometricFeatureField) -> GeometricFeatureField:
        out = self.forward(Tensor(field.values))
        return GeometricFeatureField(field.ftype, out.value, field.frame_token)

    def parameters(self):
        return [] if self.c is None else [("gate_offset", self.c)]


class DenseLayer:
    """Plain affine map on scalar channels."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        s = 1.0 / np.sqrt(n_in)
        self.W = parameter(rng.uniform(-s, s, (n_in, n_out)))
        self.b = parameter(rng.uniform(-s, s, n_out))

    def forward(self, x: Tensor) -> Tensor:
        return x @ self.W + self.b

    def parameters(self):
        return [("W", self.W), ("b", self.b)]
