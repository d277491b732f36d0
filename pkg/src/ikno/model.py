"""The end-to-end operator network.

Pipeline: positional-encoding tokenizer -> multi-branch kernel encoder onto
a latent grid -> small latent processor -> kernel decoder at query points
-> output head. All learnables live in one flat named parameter vector so
the optimizer and the finite-difference gradient oracle see a single
float64 array.

Kernel branches share their parameters between encoder and decoder. The
per-branch amplitude is stored as log(c) so positivity is structural; beta
and gamma are stored raw (only their magnitudes enter the kernel).

A fixed-window configuration replaces the learnable product kernel with the
non-learnable Euclidean linear-window kernel and dense latent-grid
operators; this is the controlled setting of the finite-order study.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .autodiff import Tensor, concat
from .errors import ChannelMismatchError, UnsupportedLevelsError
from .kernels import (
    AxisKernelParams,
    KernelBranch,
    LatentGrid,
    LinearWindowKernel,
    MultiScaleKernelParams,
    PointCloud,
    grid_linspace,
    window_axis_gram,
    window_cross,
    window_gram,
)
from .ops_ad import truncated_ad, tp_resolvent_ad, vanilla_resolvent_ad
from .rng import Rng64
from .tensor_linalg import dense_inverse, kron_materialize

__all__ = [
    "ModelConfig",
    "ParamVector",
    "param_layout",
    "init_params",
    "positional_encode",
    "tokenize",
    "encode",
    "process",
    "decode",
    "forward",
    "forward_graph",
    "decode_kernel_params",
    "alpha_indices",
    "gelu",
]

_GELU_C0 = 0.7978845608028654  # sqrt(2/pi)
_GELU_C1 = 0.044715


@dataclass(frozen=True)
class ModelConfig:
    dim: int
    grid_l: int
    hidden: int
    branches: int = 3
    in_channels: int = 1
    out_channels: int = 1
    nerf_levels: int = 1
    processor: str = "identity"  # identity | mlp | tiny_attention
    variant: str = "tp"  # vanilla | tp | truncated
    truncation_order: int = 1
    fixed_window: LinearWindowKernel | None = None

    def __post_init__(self):
        if self.branches < 1 or self.hidden < 1 or self.nerf_levels < 1:
            raise ValueError("branches, hidden, nerf_levels must be >= 1")
        if self.processor not in ("identity", "mlp", "tiny_attention"):
            raise ValueError(f"unknown processor {self.processor!r}")
        if self.variant not in ("vanilla", "tp", "truncated"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.fixed_window is not None and self.branches != 1:
            raise ValueError("fixed-window configs use a single kernel branch")

    @property
    def token_in(self) -> int:
        return 3 * self.dim + self.in_channels

    @property
    def kernel_learnable(self) -> bool:
        return self.fixed_window is None


@dataclass
class ParamVector:
    """Flat float64 parameter array with named segments."""

    values: np.ndarray
    segments: "OrderedDict[str, tuple[slice, tuple[int, ...]]]"

    def get(self, name: str) -> np.ndarray:
        sl, shape = self.segments[name]
        return self.values[sl].reshape(shape)

    def copy(self) -> "ParamVector":
        return ParamVector(self.values.copy(), self.segments)

    @property
    def size(self) -> int:
        return self.values.size


def param_layout(config: ModelConfig) -> "OrderedDict[str, tuple[int, ...]]":
    h, q, d = config.hidden, config.branches, config.dim
    layout: OrderedDict[str, tuple[int, ...]] = OrderedDict()
    if config.kernel_learnable:
        layout["kernel"] = (q * (1 + 3 * d),)
    layout["tokenizer.w0"] = (config.token_in, h)
    layout["tokenizer.b0"] = (h,)
    layout["tokenizer.w1"] = (h, h)
    layout["tokenizer.b1"] = (h,)
    layout["enc_fusion.w"] = (q * h, h)
    layout["enc_fusion.b"] = (h,)
    if config.processor == "mlp":
        layout["proc.w0"] = (h, h)
        layout["proc.b0"] = (h,)
        layout["proc.w1"] = (h, h)
        layout["proc.b1"] = (h,)
    elif config.processor == "tiny_attention":
        for name in ("wq", "wk", "wv", "wo"):
            layout[f"proc.{name}"] = (h, h)
    layout["dec_fusion.w"] = (q * h, h)
    layout["dec_fusion.b"] = (h,)
    layout["head.w0"] = (h, h)
    layout["head.b0"] = (h,)
    layout["head.w1"] = (h, config.out_channels)
    layout["head.b1"] = (config.out_channels,)
    return layout


def _segments(layout) -> "OrderedDict[str, tuple[slice, tuple[int, ...]]]":
    segs, off = OrderedDict(), 0
    for name, shape in layout.items():
        n = int(np.prod(shape))
        segs[name] = (slice(off, off + n), shape)
        off += n
    return segs


def _kernel_offsets(config: ModelConfig, branch: int) -> dict[str, int]:
    base = branch * (1 + 3 * config.dim)
    return {"alpha": base, "base": base + 1}


def init_params(config: ModelConfig, seed: int) -> ParamVector:
    """Seeded initialization.

    Kernel branches start at alpha = -1 with per-branch scale bases
    (1, 2, 4, ...); amplitudes start at c = 1. Fusion layers start as
    branch averaging so single-branch identities hold at init; other MLP
    weights are uniform in +-1/sqrt(fan_in).
    """
    layout = param_layout(config)
    segs = _segments(layout)
    total = sum(int(np.prod(s)) for s in layout.values())
    values = np.zeros(total)
    pv = ParamVector(values, segs)
    rng = Rng64(seed)
    h, q = config.hidden, config.branches

    if config.kernel_learnable:
        kern = pv.get("kernel")
        for b in range(q):
            off = _kernel_offsets(config, b)
            kern[off["alpha"]] = -1.0
            base_scale = float(2**b)
            for j in range(config.dim):
                o = off["base"] + 3 * j
                kern[o + 0] = 0.0  # log c = 0 -> c = 1
                kern[o + 1] = base_scale  # beta
                kern[o + 2] = base_scale  # gamma

    avg = np.concatenate([np.eye(h) / q for _ in range(q)], axis=0)
    for name, shape in layout.items():
        if name == "kernel":
            continue
        if name in ("enc_fusion.w", "dec_fusion.w"):
            pv.get(name)[...] = avg
        elif len(shape) == 1:
            pass  # biases stay zero
        else:
            bound = 1.0 / np.sqrt(shape[0])
            pv.get(name)[...] = rng.uniform_array(shape, -bound, bound)
    return pv


def decode_kernel_params(config: ModelConfig, pv: ParamVector) -> MultiScaleKernelParams:
    kern = pv.get("kernel")
    branches = []
    for b in range(config.branches):
        off = _kernel_offsets(config, b)
        axes = []
        for j in range(config.dim):
            o = off["base"] + 3 * j
            axes.append(
                AxisKernelParams(
                    c=float(np.exp(kern[o])), beta=float(kern[o + 1]), gamma=float(kern[o + 2])
                )
            )
        branches.append(KernelBranch(axis_params=tuple(axes), alpha=float(kern[off["alpha"]])))
    return MultiScaleKernelParams(branches=tuple(branches))


def alpha_indices(config: ModelConfig, pv: ParamVector) -> np.ndarray:
    """Flat indices of the per-branch alpha entries (for training clamps)."""
    if not config.kernel_learnable:
        return np.array([], dtype=np.intp)
    sl, _ = pv.segments["kernel"]
    return np.array(
        [sl.start + _kernel_offsets(config, b)["alpha"] for b in range(config.branches)],
        dtype=np.intp,
    )


# -- stages ------------------------------------------------------------------


def positional_encode(x, levels: int = 1) -> np.ndarray:
    """(x, cos x, sin x) per coordinate; layout: all coords, all cos, all sin."""
    if levels != 1:
        raise UnsupportedLevelsError(f"only 1 frequency level supported, got {levels}")
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    out = np.concatenate([arr, np.cos(arr), np.sin(arr)], axis=1)
    return out[0] if single else out


def gelu(x: Tensor) -> Tensor:
    inner = (x + _GELU_C1 * (x * x * x)) * _GELU_C0
    return 0.5 * x * (1.0 + inner.tanh())


@lru_cache(maxsize=32)
def _grid_for(dim: int, grid_l: int) -> LatentGrid:
    return grid_linspace(dim, grid_l)


@lru_cache(maxsize=32)
def _fixed_operator(config: ModelConfig) -> np.ndarray:
    """Dense latent-grid operator for fixed-window configs (study scale)."""
    grid = _grid_for(config.dim, config.grid_l)
    win = config.fixed_window
    m = grid.num_points
    if m > 4096:
        raise ValueError("fixed-window configs are capped at 4096 grid points")
    alpha = win.alpha
    if config.variant == "tp":
        axis_invs = [
            dense_inverse(np.eye(len(pts)) - alpha * window_axis_gram(win, pts))
            for pts in grid.per_axis_points
        ]
        return kron_materialize(axis_invs)
    kgg = window_gram(win, grid.points())
    if config.variant == "vanilla":
        return dense_inverse(np.eye(m) - alpha * kgg)
    op = np.eye(m)
    for _ in range(config.truncation_order):
        op = np.eye(m) + alpha * (kgg @ op)
    return op


class _Graph:
    """One forward pass over AD tensors; parameter slices are cached."""

    def __init__(self, config: ModelConfig, params_t: Tensor, pv: ParamVector):
        self.config = config
        self.params_t = params_t
        self.pv = pv
        self.grid = _grid_for(config.dim, config.grid_l)
        self._seg_cache: dict[str, Tensor] = {}
        self._gram_cache: dict[int, list[Tensor]] = {}

    def seg(self, name: str) -> Tensor:
        if name not in self._seg_cache:
            sl, shape = self.pv.segments[name]
            self._seg_cache[name] = self.params_t[sl].reshape(*shape)
        return self._seg_cache[name]

    def _kernel_scalar(self, flat_index: int) -> Tensor:
        return self.seg("kernel")[flat_index]

    def branch_alpha(self, b: int) -> Tensor:
        return self._kernel_scalar(_kernel_offsets(self.config, b)["alpha"])

    def axis_factors(self, b: int, dx: np.ndarray, axis: int) -> Tensor:
        """Base-kernel matrix over coordinate differences for one axis."""
        o = _kernel_offsets(self.config, b)["base"] + 3 * axis
        logc = self._kernel_scalar(o)
        beta = self._kernel_scalar(o + 1)
        gamma = self._kernel_scalar(o + 2)
        d = Tensor(dx)
        absd = Tensor(np.abs(dx))
        gauss = (-((beta * d) ** 2)).exp()
        lap = (-(gamma.abs() * absd)).exp()
        return logc.exp() * (gauss + lap)

    def axis_grams(self, b: int) -> list[Tensor]:
        if b not in self._gram_cache:
            grams = []
            for pts in self.grid.per_axis_points:
                dx = pts[:, None] - pts[None, :]
                grams.append(self.axis_factors(b, dx, len(grams)))
            self._gram_cache[b] = grams
        return self._gram_cache[b]

    def cross(self, b: int, rows: np.ndarray, cols: np.ndarray) -> Tensor:
        out = None
        for j in range(self.config.dim):
            dx = rows[:, j][:, None] - cols[:, j][None, :]
            f = self.axis_factors(b, dx, j)
            out = f if out is None else out * f
        return out

    def branch_operator(self, b: int, x: Tensor) -> Tensor:
        """Apply the branch's latent-grid operator to an (M, h) tensor."""
        cfg = self.config
        sizes = self.grid.axis_sizes
        h = x.shape[-1]
        xt = x.reshape(*sizes, h)
        grams = self.axis_grams(b)
        alpha = self.branch_alpha(b)
        if cfg.variant == "vanilla":
            yt = vanilla_resolvent_ad(xt, grams, alpha)
        elif cfg.variant == "tp":
            yt = tp_resolvent_ad(xt, grams, alpha)
        else:
            yt = truncated_ad(xt, grams, alpha, cfg.truncation_order)
        return yt.reshape(self.grid.num_points, h)

    # -- pipeline stages --

    def tokenize(self, cloud: PointCloud) -> Tensor:
        cfg = self.config
        n_ch = 0 if cloud.channels is None else cloud.channels.shape[1]
        if n_ch != cfg.in_channels:
            raise ChannelMismatchError(
                f"cloud has {n_ch} condition channels, config expects {cfg.in_channels}"
            )
        psi = np.concatenate(
            [cloud.coords, np.cos(cloud.coords), np.sin(cloud.coords)], axis=1
        )
        feats = psi if cloud.channels is None else np.concatenate([psi, cloud.channels], axis=1)
        x = Tensor(feats)
        hmid = gelu(x @ self.seg("tokenizer.w0") + self.seg("tokenizer.b0"))
        return hmid @ self.seg("tokenizer.w1") + self.seg("tokenizer.b1")

    def encode(self, v_p: Tensor, cloud: PointCloud) -> Tensor:
        cfg = self.config
        gp = self.grid.points()
        outs = []
        if cfg.fixed_window is not None:
            kgp = Tensor(window_cross(cfg.fixed_window, gp, cloud.coords))
            op = Tensor(_fixed_operator(cfg))
            outs.append(op @ (kgp @ v_p))
        else:
            for b in range(cfg.branches):
                kgp = self.cross(b, gp, cloud.coords)
                outs.append(self.branch_operator(b, kgp @ v_p))
        fused = outs[0] if len(outs) == 1 else concat(outs, axis=-1)
        return fused @ self.seg("enc_fusion.w") + self.seg("enc_fusion.b")

    def process(self, v_g: Tensor) -> Tensor:
        cfg = self.config
        if cfg.processor == "identity":
            return v_g
        if cfg.processor == "mlp":
            mid = gelu(v_g @ self.seg("proc.w0") + self.seg("proc.b0"))
            return v_g + (mid @ self.seg("proc.w1") + self.seg("proc.b1"))
        q = v_g @ self.seg("proc.wq")
        k = v_g @ self.seg("proc.wk")
        v = v_g @ self.seg("proc.wv")
        scores = (q @ k.T) * (1.0 / np.sqrt(cfg.hidden))
        shifted = scores - float(scores.data.max())  # constant shift, gradient-safe
        e = shifted.exp()
        attn = e / e.sum(axis=-1, keepdims=True)
        return v_g + (attn @ v) @ self.seg("proc.wo")

    def decode(self, v_gp: Tensor, queries: PointCloud) -> Tensor:
        cfg = self.config
        gp = self.grid.points()
        outs = []
        if cfg.fixed_window is not None:
            op = Tensor(_fixed_operator(cfg))
            kqg = Tensor(window_cross(cfg.fixed_window, queries.coords, gp))
            outs.append(kqg @ (op @ v_gp))
        else:
            for b in range(cfg.branches):
                w = self.branch_operator(b, v_gp)
                kqg = self.cross(b, queries.coords, gp)
                outs.append(kqg @ w)
        fused = outs[0] if len(outs) == 1 else concat(outs, axis=-1)
        fused = fused @ self.seg("dec_fusion.w") + self.seg("dec_fusion.b")
        mid = gelu(fused @ self.seg("head.w0") + self.seg("head.b0"))
        return mid @ self.seg("head.w1") + self.seg("head.b1")

    def forward(self, cloud: PointCloud, queries: PointCloud) -> Tensor:
        v_p = self.tokenize(cloud)
        v_g = self.encode(v_p, cloud)
        v_gp = self.process(v_g)
        return self.decode(v_gp, queries)


def forward_graph(config: ModelConfig, params_t: Tensor, pv: ParamVector, cloud: PointCloud, queries: PointCloud) -> Tensor:
    return _Graph(config, params_t, pv).forward(cloud, queries)


def _np_graph(config: ModelConfig, pv: ParamVector) -> _Graph:
    return _Graph(config, Tensor(pv.values), pv)


def tokenize(config: ModelConfig, pv: ParamVector, cloud: PointCloud) -> np.ndarray:
    return _np_graph(config, pv).tokenize(cloud).data


def encode(config: ModelConfig, pv: ParamVector, v_p: np.ndarray, cloud: PointCloud) -> np.ndarray:
    return _np_graph(config, pv).encode(Tensor(v_p), cloud).data


def process(config: ModelConfig, pv: ParamVector, v_g: np.ndarray) -> np.ndarray:
    return _np_graph(config, pv).process(Tensor(v_g)).data


def decode(config: ModelConfig, pv: ParamVector, v_gp: np.ndarray, queries: PointCloud) -> np.ndarray:
    return _np_graph(config, pv).decode(Tensor(v_gp), queries).data


def forward(config: ModelConfig, pv: ParamVector, cloud: PointCloud, queries: PointCloud) -> np.ndarray:
    return _np_graph(config, pv).forward(cloud, queries).data
