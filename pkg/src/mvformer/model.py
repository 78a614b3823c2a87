"""Four-stage convolutional vision backbone built from the mixer blocks.

Each block is norm -> token mixer -> residual, norm -> channel MLP ->
residual, with optional per-channel residual scaling (last two stages) and
per-sample stochastic depth whose probability ramps linearly over block
depth.  Stage boundaries downsample with a strided convolution: a 7x7
stride-4 stem on raw images, then pre-normalized 3x3 stride-2 reductions.
The classifier pools, layer-norms the pooled vector (instance statistics
are degenerate on 1x1 maps, so the pre-head norm is a plain layer norm),
and applies a two-layer MLP head.

Variant presets:

    name   embed dims            depths        drop path
    xT     64, 128, 320, 512     2, 2,  4, 2   0.2
    T      64, 128, 320, 512     3, 3,  9, 3   0.2
    S      64, 128, 320, 512     3, 12, 18, 3  0.3
    B      96, 192, 384, 576     3, 12, 18, 3  0.4
    micro   8,  16,  32,  64     1, 1,  2, 1   0.0   (desk-scale, 10 classes)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mixer import (
    ABLATION_MODES,
    ConfigError,
    StarReLU,
    TokenMixer,
    _trunc_normal,
    ablate_spec,
    make_stage_spec,
)
from .module import Module
from .norm import PlainNorm, make_norm
from .tensor import Tensor, add, conv2d, global_avg_pool, mul

STEM_GEOMETRY = (7, 4, 2)  # kernel, stride, pad for stage 1
DOWN_GEOMETRY = (3, 2, 1)  # kernel, stride, pad for stages 2-4

NORM_KINDS = ("mvn", "bn", "ln", "in")

PRESETS = {
    "xT": dict(embed_dims=(64, 128, 320, 512), depths=(2, 2, 4, 2), drop_path_rate=0.2),
    "T": dict(embed_dims=(64, 128, 320, 512), depths=(3, 3, 9, 3), drop_path_rate=0.2),
    "S": dict(embed_dims=(64, 128, 320, 512), depths=(3, 12, 18, 3), drop_path_rate=0.3),
    "B": dict(embed_dims=(96, 192, 384, 576), depths=(3, 12, 18, 3), drop_path_rate=0.4),
    "micro": dict(
        embed_dims=(8, 16, 32, 64), depths=(1, 1, 2, 1), drop_path_rate=0.0, num_classes=10
    ),
}


@dataclass(frozen=True)
class ModelConfig:
    """Variant descriptor; presets fill dims/depths, everything overridable."""

    embed_dims: tuple[int, int, int, int]
    depths: tuple[int, int, int, int]
    mlp_ratio: int = 4
    head_mlp_ratio: int = 4
    num_classes: int = 1000
    input_channels: int = 3
    drop_path_rate: float = 0.0
    res_scale_stages: tuple[int, ...] = (3, 4)
    block_norm: str = "mvn"
    ablation: str | None = None

    def __post_init__(self):
        if len(self.embed_dims) != 4 or len(self.depths) != 4:
            raise ConfigError("embed_dims and depths must have one entry per stage (4)")
        for d in self.embed_dims:
            if d % 2:
                raise ConfigError(f"embed dims must be even for the channel split, got {d}")
        for d in self.depths:
            if d < 1:
                raise ConfigError(f"stage depths must be >= 1, got {d}")
        if self.block_norm not in NORM_KINDS:
            raise ConfigError(f"block_norm must be one of {NORM_KINDS}, got {self.block_norm!r}")
        if not 0.0 <= self.drop_path_rate < 1.0:
            raise ConfigError(f"drop_path_rate must be in [0, 1), got {self.drop_path_rate}")
        if self.ablation is not None and self.ablation not in ABLATION_MODES:
            raise ConfigError(f"unknown ablation {self.ablation!r}")

    def stage_spec(self, stage):
        spec = make_stage_spec(stage, self.embed_dims[stage - 1])
        if self.ablation is not None:
            spec = ablate_spec(spec, self.ablation)
        return spec

    def block_drop_rates(self):
        """Per-block stochastic-depth probabilities, ramping 0 -> peak over depth."""
        total = sum(self.depths)
        if total == 1:
            return [0.0]
        return [self.drop_path_rate * i / (total - 1) for i in range(total)]


def model_config(preset, **overrides):
    """Resolve a preset name to a ModelConfig, with field overrides."""
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; expected one of {sorted(PRESETS)}")
    kwargs = dict(PRESETS[preset])
    kwargs.update(overrides)
    return ModelConfig(**kwargs)


def drop_path(x, prob, training, rng):
    """Per-sample stochastic depth: zero the branch with probability `prob`.

    Survivors are scaled by 1/(1-prob) so inference (identity) matches the
    training expectation.
    """
    if not training or prob <= 0.0:
        return x
    if rng is None:
        raise ValueError("training-mode drop path needs a random generator")
    keep = 1.0 - prob
    mask = (rng.random(x.shape[0]) < keep).astype(x.dtype) / keep
    return mul(x, Tensor(mask.reshape(-1, 1, 1, 1)))


class Mlp(Module):
    """Per-position channel MLP: C -> ratio*C -> C with StarReLU."""

    def __init__(self, channels, ratio, rng, out_channels=None):
        super().__init__()
        hidden = ratio * channels
        out_channels = out_channels if out_channels is not None else channels
        self.fc1_w = self.param("fc1_w", _trunc_normal(rng, (hidden, channels, 1, 1)))
        self.fc1_b = self.param("fc1_b", np.zeros((1, hidden, 1, 1)), decay=False)
        self.act = self.child("act", StarReLU())
        self.fc2_w = self.param("fc2_w", _trunc_normal(rng, (out_channels, hidden, 1, 1)))
        self.fc2_b = self.param("fc2_b", np.zeros((1, out_channels, 1, 1)), decay=False)

    def forward(self, x):
        y = conv2d(x, self.fc1_w, self.fc1_b)
        y = self.act.forward(y)
        return conv2d(y, self.fc2_w, self.fc2_b)


class Block(Module):
    """Mixer sub-block and MLP sub-block, each normalized and residual."""

    def __init__(self, spec, norm_kind, mlp_ratio, use_res_scale, drop_prob, rng):
        super().__init__()
        c = spec.channels
        self.drop_prob = drop_prob
        self.norm1 = self.child("norm1", make_norm(norm_kind, c))
        self.mixer = self.child("mixer", TokenMixer(spec, rng))
        self.norm2 = self.child("norm2", make_norm(norm_kind, c))
        self.mlp = self.child("mlp", Mlp(c, mlp_ratio, rng))
        self.res_scale1 = self.res_scale2 = None
        if use_res_scale:
            self.res_scale1 = self.param("res_scale1", np.ones((1, c, 1, 1)), decay=False)
            self.res_scale2 = self.param("res_scale2", np.ones((1, c, 1, 1)), decay=False)

    def forward(self, x, training=False, rng=None):
        branch = self.mixer.forward(self.norm1.forward(x, training))
        if self.res_scale1 is not None:
            branch = mul(branch, self.res_scale1)
        x = add(drop_path(branch, self.drop_prob, training, rng), x)
        branch = self.mlp.forward(self.norm2.forward(x, training))
        if self.res_scale2 is not None:
            branch = mul(branch, self.res_scale2)
        return add(drop_path(branch, self.drop_prob, training, rng), x)


class Downsample(Module):
    """Strided patch embedding; stages 2-4 pre-normalize their input."""

    def __init__(self, cin, cout, kernel, stride, pad, norm_kind, rng):
        super().__init__()
        self.stride = stride
        self.pad = pad
        self.norm = self.child("norm", make_norm(norm_kind, cin)) if norm_kind else None
        self.w = self.param("w", _trunc_normal(rng, (cout, cin, kernel, kernel)))
        self.b = self.param("b", np.zeros((1, cout, 1, 1)), decay=False)

    def forward(self, x, training=False):
        if self.norm is not None:
            x = self.norm.forward(x, training)
        return conv2d(x, self.w, self.b, stride=self.stride, pad=self.pad)


class MVFormer(Module):
    """The assembled backbone plus pooled MLP classifier."""

    def __init__(self, cfg, rng):
        super().__init__()
        self.cfg = cfg
        dims = cfg.embed_dims
        sk, ss, sp = STEM_GEOMETRY
        dk, ds, dp = DOWN_GEOMETRY
        self.embeds = [self.child("embed1", Downsample(cfg.input_channels, dims[0], sk, ss, sp, None, rng))]
        for stage in (2, 3, 4):
            self.embeds.append(
                self.child(
                    f"embed{stage}",
                    Downsample(dims[stage - 2], dims[stage - 1], dk, ds, dp, cfg.block_norm, rng),
                )
            )
        rates = cfg.block_drop_rates()
        self.stages = []
        idx = 0
        for stage in (1, 2, 3, 4):
            spec = cfg.stage_spec(stage)
            blocks = []
            for b in range(cfg.depths[stage - 1]):
                blk = Block(
                    spec,
                    cfg.block_norm,
                    cfg.mlp_ratio,
                    use_res_scale=stage in cfg.res_scale_stages,
                    drop_prob=rates[idx],
                    rng=rng,
                )
                blocks.append(self.child(f"stage{stage}_block{b}", blk))
                idx += 1
            self.stages.append(blocks)
        c_last = dims[3]
        hidden = cfg.head_mlp_ratio * c_last
        self.head_norm = self.child("head_norm", PlainNorm(c_last, "ln"))
        self.head_fc1_w = self.param("head_fc1_w", _trunc_normal(rng, (hidden, c_last, 1, 1)))
        self.head_fc1_b = self.param("head_fc1_b", np.zeros((1, hidden, 1, 1)), decay=False)
        self.head_act = self.child("head_act", StarReLU())
        self.head_fc2_w = self.param("head_fc2_w", _trunc_normal(rng, (cfg.num_classes, hidden, 1, 1)))
        self.head_fc2_b = self.param("head_fc2_b", np.zeros((1, cfg.num_classes, 1, 1)), decay=False)

    def features(self, x, training=False, rng=None):
        for stage in (1, 2, 3, 4):
            x = self.embeds[stage - 1].forward(x, training)
            for blk in self.stages[stage - 1]:
                x = blk.forward(x, training, rng)
        return x

    def forward(self, images, training=False, rng=None):
        """Images (n, c_in, h, w) -> logits (n, num_classes, 1, 1)."""
        x = self.features(images, training, rng)
        x = global_avg_pool(x)
        x = self.head_norm.forward(x, training)
        x = conv2d(x, self.head_fc1_w, self.head_fc1_b)
        x = self.head_act.forward(x)
        return conv2d(x, self.head_fc2_w, self.head_fc2_b)

    def mvn_sites(self):
        """Block norm sites in network order: (stage, block_index, site, norm)."""
        for stage in (1, 2, 3, 4):
            for b, blk in enumerate(self.stages[stage - 1]):
                yield stage, b, "mixer", blk.norm1
                yield stage, b, "mlp", blk.norm2


def build_model(cfg, seed=0):
    """Construct and initialize a model; same seed, bitwise-same parameters."""
    rng = np.random.default_rng(seed)
    model = MVFormer(cfg, rng)
    names = [n for n, _ in model.named_parameters()]
    if len(names) != len(set(names)):
        raise RuntimeError("parameter registry contains duplicate names")
    return model
