"""Trainable target estimator: predicts the class codeword from a noisy state.

Three stages, all with hand-written exact gradients:

1. condition fusion: the ``C`` conditioning layers are combined with
   softmax-normalized learnable scalar weights into one vector
2. mixing: the perturbed state and the fused condition are concatenated and
   projected ``2L -> L`` by an affine map
3. trunk: either ``mlp-baseline`` (stacked affine + SiLU with the timestep
   embedding concatenated to the input) or ``staged-transformer`` (the
   mixed vector reshaped into ``num_tokens`` tokens, then self-attention
   blocks whose RMS norms are scaled/shifted by affine functions of the
   timestep embedding, then a per-token output head)

Parameters live in one flat float64 buffer with named views, kept on the
float32 grid so the single-precision checkpoint container is lossless.
``forward`` and ``loss_and_gradients`` are pure given the parameters and
safe to call concurrently on shared read-only values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InvalidArgumentError, NumericError, OutOfDomainError

FF_MULT = 4  # feedforward width multiplier inside transformer blocks
RMS_EPS = 1e-6

MLP_BASELINE = "mlp-baseline"
STAGED_TRANSFORMER = "staged-transformer"


@dataclass(frozen=True)
class EstimatorConfig:
    """Architecture hyperparameters of the target estimator."""

    dim: int
    num_condition_layers: int
    trunk_variant: str = MLP_BASELINE
    trunk_depth: int = 2
    trunk_width: int = 128
    num_heads: int = 4
    num_tokens: int = 16
    time_embed_dim: int = 32

    def __post_init__(self):
        if self.dim <= 0:
            raise InvalidArgumentError("dim must be positive")
        if self.num_condition_layers < 1:
            raise InvalidArgumentError("need at least one condition layer")
        if self.trunk_variant not in (MLP_BASELINE, STAGED_TRANSFORMER):
            raise InvalidArgumentError(
                f"unknown trunk variant {self.trunk_variant!r}"
            )
        if self.trunk_depth < 1 or self.trunk_width < 1:
            raise InvalidArgumentError("trunk_depth and trunk_width must be >= 1")
        if self.time_embed_dim < 2 or self.time_embed_dim % 2:
            raise InvalidArgumentError("time_embed_dim must be even and >= 2")
        if self.trunk_variant == STAGED_TRANSFORMER:
            if self.num_tokens < 1 or self.dim % self.num_tokens:
                raise InvalidArgumentError(
                    f"num_tokens={self.num_tokens} must divide dim={self.dim}"
                )
            if self.num_heads < 1 or self.trunk_width % self.num_heads:
                raise InvalidArgumentError(
                    f"num_heads={self.num_heads} must divide "
                    f"trunk_width={self.trunk_width}"
                )

    @property
    def token_dim(self) -> int:
        return self.dim // self.num_tokens

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "num_condition_layers": self.num_condition_layers,
            "trunk_variant": self.trunk_variant,
            "trunk_depth": self.trunk_depth,
            "trunk_width": self.trunk_width,
            "num_heads": self.num_heads,
            "num_tokens": self.num_tokens,
            "time_embed_dim": self.time_embed_dim,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EstimatorConfig":
        return cls(**d)


def param_layout(config: EstimatorConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Declared parameter ordering: (name, shape) pairs."""
    l, c, e = config.dim, config.num_condition_layers, config.time_embed_dim
    w = config.trunk_width
    out: list[tuple[str, tuple[int, ...]]] = [
        ("fusion.layer_weights", (c,)),
        ("fusion.mix.weight", (l, 2 * l)),
        ("fusion.mix.bias", (l,)),
    ]
    if config.trunk_variant == MLP_BASELINE:
        fan = l + e
        for i in range(config.trunk_depth):
            out.append((f"trunk.layer{i}.weight", (w, fan)))
            out.append((f"trunk.layer{i}.bias", (w,)))
            fan = w
        out.append(("trunk.head.weight", (l, w)))
        out.append(("trunk.head.bias", (l,)))
        return out

    s, d = config.num_tokens, config.token_dim
    f = FF_MULT * w
    out.append(("trunk.token_embed.weight", (w, d)))
    out.append(("trunk.token_embed.bias", (w,)))
    out.append(("trunk.pos_embed", (s, w)))
    for i in range(config.trunk_depth):
        p = f"trunk.block{i}"
        for norm in ("norm1", "norm2"):
            for mod in ("scale", "shift"):
                out.append((f"{p}.{norm}.{mod}.weight", (w, e)))
                out.append((f"{p}.{norm}.{mod}.bias", (w,)))
        for proj in ("q", "k", "v", "out"):
            out.append((f"{p}.attn.{proj}.weight", (w, w)))
            out.append((f"{p}.attn.{proj}.bias", (w,)))
        out.append((f"{p}.ff.fc1.weight", (f, w)))
        out.append((f"{p}.ff.fc1.bias", (f,)))
        out.append((f"{p}.ff.fc2.weight", (w, f)))
        out.append((f"{p}.ff.fc2.bias", (w,)))
    for mod in ("scale", "shift"):
        out.append((f"trunk.final_norm.{mod}.weight", (w, e)))
        out.append((f"trunk.final_norm.{mod}.bias", (w,)))
    out.append(("trunk.head.weight", (d, w)))
    out.append(("trunk.head.bias", (d,)))
    return out


def parameter_count(config: EstimatorConfig) -> int:
    """Total trainable parameter count, from the layout alone."""
    return sum(int(np.prod(shape)) for _, shape in param_layout(config))


class EstimatorParams:
    """All trainable parameters as one flat float64 buffer plus named views.

    The buffer is value-semantic: mutate ``flat`` in place (views stay
    valid) or ``copy()`` for a snapshot.  Also used for gradient and
    optimizer-moment collections, which mirror the parameter structure.
    """

    def __init__(self, config: EstimatorConfig, flat: np.ndarray):
        layout = param_layout(config)
        total = sum(int(np.prod(shape)) for _, shape in layout)
        flat = np.ascontiguousarray(flat, dtype=np.float64)
        if flat.shape != (total,):
            raise InvalidArgumentError(
                f"flat buffer has {flat.shape}, layout needs ({total},)"
            )
        self.config = config
        self.flat = flat
        self.views: dict[str, np.ndarray] = {}
        offset = 0
        for name, shape in layout:
            size = int(np.prod(shape))
            self.views[name] = flat[offset : offset + size].reshape(shape)
            offset += size

    @classmethod
    def zeros(cls, config: EstimatorConfig) -> "EstimatorParams":
        return cls(config, np.zeros(parameter_count(config)))

    @classmethod
    def initialize(cls, config: EstimatorConfig, seed: int) -> "EstimatorParams":
        """Fan-in-scaled uniform weights; zero biases, modulation maps,
        positional embedding, and fusion weights (identity-style start)."""
        rng = np.random.default_rng(seed)
        params = cls.zeros(config)
        for name, view in params.views.items():
            if view.ndim == 2 and ".scale." not in name and ".shift." not in name:
                bound = 1.0 / np.sqrt(view.shape[1])
                view[:] = rng.uniform(-bound, bound, size=view.shape)
        # training state lives on the float32 grid from the first step on
        params.flat[:] = params.flat.astype(np.float32)
        return params

    @property
    def num_params(self) -> int:
        return self.flat.shape[0]

    def names(self) -> list[str]:
        return list(self.views)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.views[name]

    def copy(self) -> "EstimatorParams":
        return EstimatorParams(self.config, self.flat.copy())


def fuse_conditions(condition_stack: np.ndarray, layer_weights: np.ndarray) -> np.ndarray:
    """Softmax-weighted sum of the condition layers: ``(C, L) -> (L,)``."""
    condition_stack = np.asarray(condition_stack, dtype=np.float64)
    layer_weights = np.asarray(layer_weights, dtype=np.float64)
    if condition_stack.ndim != 2 or layer_weights.shape != (condition_stack.shape[0],):
        raise InvalidArgumentError(
            f"expected (C, L) stack with C weights, got {condition_stack.shape} "
            f"and {layer_weights.shape}"
        )
    return _softmax(layer_weights) @ condition_stack


def _softmax(x: np.ndarray) -> np.ndarray:
    shifted = x - np.max(x, axis=-1, keepdims=True)
    ex = np.exp(shifted)
    return ex / np.sum(ex, axis=-1, keepdims=True)


def timestep_embedding(t, dim: int) -> np.ndarray:
    """Sinusoidal embedding of ``t``: pairs ``sin(t/10000^(2j/dim))``,
    ``cos(t/10000^(2j/dim))`` for ``j = 0..dim/2-1``.  Deterministic."""
    if dim < 2 or dim % 2:
        raise InvalidArgumentError(f"time_embed_dim must be even, got {dim}")
    t_arr = np.asarray(t, dtype=np.float64)
    single = t_arr.ndim == 0
    t_arr = np.atleast_1d(t_arr)
    if np.any(t_arr < 0.0) or np.any(t_arr > 1.0):
        raise OutOfDomainError("timestep embedding defined for t in [0, 1]")
    j = np.arange(dim // 2, dtype=np.float64)
    divisor = np.power(10000.0, 2.0 * j / dim)
    angles = t_arr[:, None] / divisor[None, :]
    out = np.empty((t_arr.shape[0], dim))
    out[:, 0::2] = np.sin(angles)
    out[:, 1::2] = np.cos(angles)
    return out[0] if single else out


def _silu(x: np.ndarray) -> np.ndarray:
    return kernels.silu_fwd(np.ascontiguousarray(x).ravel()).reshape(x.shape)


def _silu_bwd(x: np.ndarray, dy: np.ndarray) -> np.ndarray:
    return kernels.silu_bwd(
        np.ascontiguousarray(x).ravel(), np.ascontiguousarray(dy).ravel()
    ).reshape(x.shape)


def _validate_batch(config, x_t, condition_stack, t):
    x_t = np.asarray(x_t, dtype=np.float64)
    condition_stack = np.asarray(condition_stack, dtype=np.float64)
    t_arr = np.asarray(t, dtype=np.float64)
    single = x_t.ndim == 1
    if single:
        x_t = x_t[None, :]
        condition_stack = condition_stack[None, :, :]
        t_arr = np.atleast_1d(t_arr)
    n = x_t.shape[0]
    l, c = config.dim, config.num_condition_layers
    if x_t.shape != (n, l):
        raise InvalidArgumentError(f"state shape {x_t.shape}, expected (n, {l})")
    if condition_stack.shape != (n, c, l):
        raise InvalidArgumentError(
            f"condition stack shape {condition_stack.shape}, expected (n, {c}, {l})"
        )
    if t_arr.shape != (n,):
        raise InvalidArgumentError("one timestep per batch row required")
    for name, arr in (("x_t", x_t), ("condition_stack", condition_stack), ("t", t_arr)):
        if not np.isfinite(arr).all():
            raise NumericError(f"non-finite values in {name} (stage: inputs)")
    return x_t, condition_stack, t_arr, single


def forward(
    params: EstimatorParams,
    x_t: np.ndarray,
    condition_stack: np.ndarray,
    t,
) -> np.ndarray:
    """Estimate the target codeword; accepts a single record or a batch."""
    x_t, condition_stack, t_arr, single = _validate_batch(
        params.config, x_t, condition_stack, t
    )
    out, _ = _forward_cached(params, x_t, condition_stack, t_arr)
    if not np.isfinite(out).all():
        raise NumericError("non-finite estimator output (stage: trunk)")
    return out[0] if single else out


def _forward_cached(params, xt, xc_stack, t_arr):
    config = params.config
    v = params.views
    cache: dict = {"xt": xt, "xc_stack": xc_stack}

    a = _softmax(v["fusion.layer_weights"])
    xc = np.einsum("c,ncl->nl", a, xc_stack)
    z = np.concatenate([xt, xc], axis=1)
    h0 = z @ v["fusion.mix.weight"].T + v["fusion.mix.bias"]
    e = timestep_embedding(t_arr, config.time_embed_dim)
    cache.update(a=a, z=z, h0=h0, e=e)

    if config.trunk_variant == MLP_BASELINE:
        out = _mlp_forward(params, h0, e, cache)
    else:
        out = _transformer_forward(params, h0, e, cache)
    cache["out"] = out
    return out, cache


def _mlp_forward(params, h0, e, cache):
    v = params.views
    act = np.concatenate([h0, e], axis=1)
    acts, pres = [act], []
    for i in range(params.config.trunk_depth):
        pre = act @ v[f"trunk.layer{i}.weight"].T + v[f"trunk.layer{i}.bias"]
        act = _silu(pre)
        pres.append(pre)
        acts.append(act)
    cache.update(mlp_acts=acts, mlp_pres=pres)
    return act @ v["trunk.head.weight"].T + v["trunk.head.bias"]


def _modulation(v, prefix, e):
    scale = e @ v[f"{prefix}.scale.weight"].T + v[f"{prefix}.scale.bias"]
    shift = e @ v[f"{prefix}.shift.weight"].T + v[f"{prefix}.shift.bias"]
    return scale, shift


def _transformer_forward(params, h0, e, cache):
    config = params.config
    v = params.views
    n = h0.shape[0]
    s, d, w, h = config.num_tokens, config.token_dim, config.trunk_width, config.num_heads
    dh = w // h

    tokens = h0.reshape(n, s, d)
    x = (tokens.reshape(n * s, d) @ v["trunk.token_embed.weight"].T).reshape(n, s, w)
    x = x + v["trunk.token_embed.bias"] + v["trunk.pos_embed"][None, :, :]
    cache.update(tokens=tokens)
    blocks = []
    for i in range(config.trunk_depth):
        p = f"trunk.block{i}"
        bc: dict = {"x_in": x}
        s1, sh1 = _modulation(v, f"{p}.norm1", e)
        normed1, rms1 = kernels.rmsnorm_mod_fwd(
            np.ascontiguousarray(x), s1, sh1, RMS_EPS
        )
        flat1 = normed1.reshape(n * s, w)
        q = (flat1 @ v[f"{p}.attn.q.weight"].T + v[f"{p}.attn.q.bias"]).reshape(n, s, h, dh)
        k = (flat1 @ v[f"{p}.attn.k.weight"].T + v[f"{p}.attn.k.bias"]).reshape(n, s, h, dh)
        vv = (flat1 @ v[f"{p}.attn.v.weight"].T + v[f"{p}.attn.v.bias"]).reshape(n, s, h, dh)
        q, k, vv = (m.transpose(0, 2, 1, 3) for m in (q, k, vv))
        scores = q @ k.transpose(0, 1, 3, 2) / np.sqrt(dh)
        scores -= scores.max(axis=-1, keepdims=True)
        expd = np.exp(scores)
        attn_w = expd / expd.sum(axis=-1, keepdims=True)
        ctx = (attn_w @ vv).transpose(0, 2, 1, 3).reshape(n * s, w)
        attn_out = (ctx @ v[f"{p}.attn.out.weight"].T + v[f"{p}.attn.out.bias"]).reshape(n, s, w)
        x_mid = x + attn_out
        s2, sh2 = _modulation(v, f"{p}.norm2", e)
        normed2, rms2 = kernels.rmsnorm_mod_fwd(
            np.ascontiguousarray(x_mid), s2, sh2, RMS_EPS
        )
        flat2 = normed2.reshape(n * s, w)
        f1 = flat2 @ v[f"{p}.ff.fc1.weight"].T + v[f"{p}.ff.fc1.bias"]
        af = _silu(f1)
        f2 = (af @ v[f"{p}.ff.fc2.weight"].T + v[f"{p}.ff.fc2.bias"]).reshape(n, s, w)
        x = x_mid + f2
        bc.update(
            s1=s1, sh1=sh1, rms1=rms1, normed1=normed1, q=q, k=k, v=vv,
            attn_w=attn_w, ctx=ctx, x_mid=x_mid, s2=s2, sh2=sh2, rms2=rms2,
            normed2=normed2, f1=f1, af=af,
        )
        blocks.append(bc)

    s_fin, sh_fin = _modulation(v, "trunk.final_norm", e)
    normed_fin, rms_fin = kernels.rmsnorm_mod_fwd(
        np.ascontiguousarray(x), s_fin, sh_fin, RMS_EPS
    )
    out_tokens = (
        normed_fin.reshape(n * s, w) @ v["trunk.head.weight"].T + v["trunk.head.bias"]
    ).reshape(n, s, d)
    cache.update(
        blocks=blocks, x_final=x, s_final=s_fin, sh_final=sh_fin,
        rms_final=rms_fin, normed_final=normed_fin,
    )
    return out_tokens.reshape(n, config.dim)


def loss_and_gradients(
    params: EstimatorParams,
    x_t: np.ndarray,
    condition_stack: np.ndarray,
    t,
    x0: np.ndarray,
) -> tuple[float, EstimatorParams]:
    """Mean squared-Euclidean-error loss over the batch and exact gradients.

    The gradient collection mirrors the parameter structure (same flat
    layout and named views).
    """
    xt, xc_stack, t_arr, single = _validate_batch(params.config, x_t, condition_stack, t)
    x0 = np.asarray(x0, dtype=np.float64)
    if single:
        x0 = x0[None, :]
    n = xt.shape[0]
    if n == 0:
        raise InvalidArgumentError("empty batch")
    if x0.shape != xt.shape:
        raise InvalidArgumentError(f"target shape {x0.shape} != state shape {xt.shape}")

    out, cache = _forward_cached(params, xt, xc_stack, t_arr)
    diff = out - x0
    loss = float(np.sum(diff * diff) / n)
    grads = EstimatorParams.zeros(params.config)
    _backward(params, grads, cache, 2.0 * diff / n)
    return loss, grads


def _backward(params, grads, cache, dout):
    config = params.config
    if config.trunk_variant == MLP_BASELINE:
        dh0 = _mlp_backward(params, grads, cache, dout)
    else:
        dh0 = _transformer_backward(params, grads, cache, dout)

    g = grads.views
    v = params.views
    g["fusion.mix.weight"] += dh0.T @ cache["z"]
    g["fusion.mix.bias"] += dh0.sum(axis=0)
    dz = dh0 @ v["fusion.mix.weight"]
    dxc = dz[:, config.dim :]
    da = np.einsum("nl,ncl->c", dxc, cache["xc_stack"])
    a = cache["a"]
    g["fusion.layer_weights"] += a * (da - np.dot(a, da))


def _mlp_backward(params, grads, cache, dout):
    v, g = params.views, grads.views
    acts, pres = cache["mlp_acts"], cache["mlp_pres"]
    g["trunk.head.weight"] += dout.T @ acts[-1]
    g["trunk.head.bias"] += dout.sum(axis=0)
    dact = dout @ v["trunk.head.weight"]
    for i in reversed(range(params.config.trunk_depth)):
        dpre = _silu_bwd(pres[i], dact)
        g[f"trunk.layer{i}.weight"] += dpre.T @ acts[i]
        g[f"trunk.layer{i}.bias"] += dpre.sum(axis=0)
        dact = dpre @ v[f"trunk.layer{i}.weight"]
    return dact[:, : params.config.dim]


def _mod_backward(grads, prefix, dscale, dshift, e):
    g = grads.views
    g[f"{prefix}.scale.weight"] += dscale.T @ e
    g[f"{prefix}.scale.bias"] += dscale.sum(axis=0)
    g[f"{prefix}.shift.weight"] += dshift.T @ e
    g[f"{prefix}.shift.bias"] += dshift.sum(axis=0)


def _transformer_backward(params, grads, cache, dout):
    config = params.config
    v, g = params.views, grads.views
    n = dout.shape[0]
    s, d, w, h = config.num_tokens, config.token_dim, config.trunk_width, config.num_heads
    dh = w // h
    e = cache["e"]

    dout_tokens = dout.reshape(n * s, d)
    normed_flat = cache["normed_final"].reshape(n * s, w)
    g["trunk.head.weight"] += dout_tokens.T @ normed_flat
    g["trunk.head.bias"] += dout_tokens.sum(axis=0)
    dnormed = (dout_tokens @ v["trunk.head.weight"]).reshape(n, s, w)
    dx, ds_fin, dsh_fin = kernels.rmsnorm_mod_bwd(
        np.ascontiguousarray(cache["x_final"]), cache["rms_final"],
        cache["s_final"], np.ascontiguousarray(dnormed),
    )
    _mod_backward(grads, "trunk.final_norm", ds_fin, dsh_fin, e)

    for i in reversed(range(config.trunk_depth)):
        p = f"trunk.block{i}"
        bc = cache["blocks"][i]
        # x = x_mid + ff(norm2(x_mid)); dx covers both addends
        df2 = dx.reshape(n * s, w)
        g[f"{p}.ff.fc2.weight"] += df2.T @ bc["af"]
        g[f"{p}.ff.fc2.bias"] += df2.sum(axis=0)
        daf = df2 @ v[f"{p}.ff.fc2.weight"]
        df1 = _silu_bwd(bc["f1"], daf)
        flat2 = bc["normed2"].reshape(n * s, w)
        g[f"{p}.ff.fc1.weight"] += df1.T @ flat2
        g[f"{p}.ff.fc1.bias"] += df1.sum(axis=0)
        dnormed2 = (df1 @ v[f"{p}.ff.fc1.weight"]).reshape(n, s, w)
        dx_mid, ds2, dsh2 = kernels.rmsnorm_mod_bwd(
            np.ascontiguousarray(bc["x_mid"]), bc["rms2"], bc["s2"],
            np.ascontiguousarray(dnormed2),
        )
        _mod_backward(grads, f"{p}.norm2", ds2, dsh2, e)
        dx_mid = dx_mid + dx

        # x_mid = x_in + attn(norm1(x_in))
        dattn_out = dx_mid.reshape(n * s, w)
        g[f"{p}.attn.out.weight"] += dattn_out.T @ bc["ctx"]
        g[f"{p}.attn.out.bias"] += dattn_out.sum(axis=0)
        dctx = (dattn_out @ v[f"{p}.attn.out.weight"]).reshape(n, s, h, dh)
        dctx = dctx.transpose(0, 2, 1, 3)
        attn_w, q, k, vv = bc["attn_w"], bc["q"], bc["k"], bc["v"]
        dattn_w = dctx @ vv.transpose(0, 1, 3, 2)
        dv = attn_w.transpose(0, 1, 3, 2) @ dctx
        dscores = attn_w * (dattn_w - np.sum(dattn_w * attn_w, axis=-1, keepdims=True))
        dq = dscores @ k / np.sqrt(dh)
        dk = dscores.transpose(0, 1, 3, 2) @ q / np.sqrt(dh)
        flat1 = bc["normed1"].reshape(n * s, w)
        dnormed1_flat = np.zeros((n * s, w))
        for name, grad_h in (("q", dq), ("k", dk), ("v", dv)):
            grad_flat = grad_h.transpose(0, 2, 1, 3).reshape(n * s, w)
            g[f"{p}.attn.{name}.weight"] += grad_flat.T @ flat1
            g[f"{p}.attn.{name}.bias"] += grad_flat.sum(axis=0)
            dnormed1_flat += grad_flat @ v[f"{p}.attn.{name}.weight"]
        dx_in, ds1, dsh1 = kernels.rmsnorm_mod_bwd(
            np.ascontiguousarray(bc["x_in"]), bc["rms1"], bc["s1"],
            np.ascontiguousarray(dnormed1_flat.reshape(n, s, w)),
        )
        _mod_backward(grads, f"{p}.norm1", ds1, dsh1, e)
        dx = dx_in + dx_mid

    g["trunk.pos_embed"] += dx.sum(axis=0)
    dx_flat = dx.reshape(n * s, w)
    tokens_flat = cache["tokens"].reshape(n * s, d)
    g["trunk.token_embed.weight"] += dx_flat.T @ tokens_flat
    g["trunk.token_embed.bias"] += dx_flat.sum(axis=0)
    dtokens = (dx_flat @ v["trunk.token_embed.weight"]).reshape(n, s, d)
    return dtokens.reshape(n, config.dim)
