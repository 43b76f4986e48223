"""Neural operator assembly: lifting, spectral blocks, projection.

The operator applies a pointwise affine lift, then ``L`` blocks of
``pointwise linear + spectral convolution`` (instance-normalized by
default, ReLU between blocks but not after the last), then a pointwise
affine projection.  Grid coordinates are appended to the input channels
so the operator sees positions; nothing else depends on the resolution,
which is what lets one parameter set evaluate on any grid at least as
large as the retained mode count.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import tape
from .binio import FormatError, Reader, Writer
from .spectral import SpectralWeights, fourier_conv_forward, init_spectral_weights

CHECKPOINT_MAGIC = b"IFNM"
CHECKPOINT_VERSION = 1
NORM_EPS = 1e-6

ACTIVATIONS = ("relu",)
NORMALIZATIONS = ("none", "instance")
COORD_STYLES = ("periodic", "endpoint")


@dataclass
class FnoConfig:
    spatial_dims: int = 1
    layers: int = 4
    channels: int = 32
    lifting_width: int | None = None
    initial_modes: int | tuple[int, ...] = 1
    buffer_modes: int = 5
    activation: str = "relu"
    normalization: str = "instance"
    init_scale: float | None = None
    coords: str = "periodic"

    def validate(self):
        if self.spatial_dims not in (1, 2):
            raise ValueError("spatial_dims must be 1 or 2")
        if self.layers < 1 or self.channels < 1:
            raise ValueError("need layers >= 1 and channels >= 1")
        if self.lifting_width not in (None, self.channels):
            raise ValueError("lifting_width must equal channels (single affine lift)")
        if any(k < 1 for k in self.modes_per_dim()):
            raise ValueError("initial modes must be >= 1 per dimension")
        if self.buffer_modes < 0:
            raise ValueError("buffer modes must be >= 0")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"unknown normalization {self.normalization!r}")
        if self.coords not in COORD_STYLES:
            raise ValueError(f"unknown coords style {self.coords!r}")

    def modes_per_dim(self):
        if np.ndim(self.initial_modes) == 0:
            return (int(self.initial_modes),) * self.spatial_dims
        return tuple(int(k) for k in self.initial_modes)

    def scale(self):
        return 1.0 / self.channels if self.init_scale is None else float(self.init_scale)


@dataclass
class Block:
    spectral: SpectralWeights
    w: np.ndarray
    b: np.ndarray
    gamma: np.ndarray | None = None
    beta: np.ndarray | None = None


@dataclass
class FnoModel:
    config: FnoConfig
    input_channels: int
    output_channels: int
    lifting_w: np.ndarray = field(repr=False, default=None)
    lifting_b: np.ndarray = field(repr=False, default=None)
    blocks: list[Block] = field(repr=False, default_factory=list)
    proj_w: np.ndarray = field(repr=False, default=None)
    proj_b: np.ndarray = field(repr=False, default=None)

    # -- parameter traversal ------------------------------------------------

    def named_parameters(self):
        """Yield ``(name, array)`` in a fixed order; spectral arrays are complex."""
        yield "lifting.w", self.lifting_w
        yield "lifting.b", self.lifting_b
        for i, blk in enumerate(self.blocks):
            yield f"block{i}.spectral", blk.spectral.weights
            yield f"block{i}.w", blk.w
            yield f"block{i}.b", blk.b
            if blk.gamma is not None:
                yield f"block{i}.gamma", blk.gamma
                yield f"block{i}.beta", blk.beta
        yield "proj.w", self.proj_w
        yield "proj.b", self.proj_b

    def set_parameter(self, name, value):
        head, _, attr = name.partition(".")
        if head == "lifting":
            setattr(self, f"lifting_{attr}", value)
        elif head == "proj":
            setattr(self, f"proj_{attr}", value)
        elif head.startswith("block"):
            blk = self.blocks[int(head[5:])]
            if attr == "spectral":
                b = blk.spectral.buffer_modes
                effective = tuple(value.shape[d] - b for d in range(value.ndim - 2))
                blk.spectral = SpectralWeights(value, effective, b)
            else:
                setattr(blk, attr, value)
        else:
            raise KeyError(name)

    def num_parameters(self):
        """Real scalar count; complex entries count twice."""
        total = 0
        for _, arr in self.named_parameters():
            total += arr.size * (2 if np.iscomplexobj(arr) else 1)
        return total

    def modes(self):
        """Effective mode count per layer, one tuple per spatial dimension."""
        return [blk.spectral.effective_modes for blk in self.blocks]

    def max_retained(self):
        out = [0] * self.config.spatial_dims
        for blk in self.blocks:
            for d, m in enumerate(blk.spectral.retained):
                out[d] = max(out[d], m)
        return tuple(out)

    # -- forward ------------------------------------------------------------

    def coordinate_channels(self, grid_shape):
        axes = []
        for n in grid_shape:
            if self.config.coords == "periodic":
                axes.append(np.arange(n, dtype=np.float64) / n)
            else:
                axes.append(np.arange(n, dtype=np.float64) / max(n - 1, 1))
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def forward(self, v, tp=None):
        """Evaluate on one sample of shape ``grid x input_channels``.

        With a tape the pass is recorded against this model's parameters;
        without one it is a plain numpy evaluation.
        """
        v = np.asarray(v, dtype=np.float64)
        dims = self.config.spatial_dims
        if v.ndim != dims + 1 or v.shape[-1] != self.input_channels:
            raise ValueError(
                f"expected grid x {self.input_channels} channels for {dims}D input, "
                f"got shape {v.shape}"
            )
        grid = v.shape[:dims]
        for d, need in enumerate(self.max_retained()):
            if grid[d] < need:
                raise ValueError(
                    f"grid extent {grid[d]} along axis {d} is below the "
                    f"{need} retained modes"
                )
        vin = np.concatenate([v, self.coordinate_channels(grid)], axis=-1)

        def p(name, arr):
            return arr if tp is None else tp.param_leaf(name, arr)

        x = vin if tp is None else tp.leaf(vin)
        h = tape.apply(tp, "pointwise_linear", x, p("lifting.w", self.lifting_w),
                       p("lifting.b", self.lifting_b))
        last = len(self.blocks) - 1
        for i, blk in enumerate(self.blocks):
            conv = fourier_conv_forward(h, p(f"block{i}.spectral", blk.spectral.weights), tp)
            lin = tape.apply(tp, "pointwise_linear", h, p(f"block{i}.w", blk.w),
                             p(f"block{i}.b", blk.b))
            z = tape.apply(tp, "add", lin, conv)
            if i < last:
                # activation first, then the per-channel norm: normalizing the
                # raw block sum would erase per-channel shifts, leaving the
                # mode-0 transform slice and the biases with exactly zero
                # gradient (untrainable, and invisible to the mode scheduler)
                z = tape.apply(tp, "relu", z)
                if blk.gamma is not None:
                    z = tape.apply(tp, "instance_norm", z, p(f"block{i}.gamma", blk.gamma),
                                   p(f"block{i}.beta", blk.beta), eps=NORM_EPS)
            h = z
        return tape.apply(tp, "pointwise_linear", h, p("proj.w", self.proj_w),
                          p("proj.b", self.proj_b))


def init_model(config, input_channels, output_channels, seed):
    """Build a model with seeded Gaussian weights and zero biases."""
    config.validate()
    rng = np.random.default_rng(seed)
    c = config.channels
    lift_in = input_channels + config.spatial_dims

    def linear(fan_in, fan_out):
        return rng.standard_normal((fan_in, fan_out)) / np.sqrt(fan_in)

    model = FnoModel(replace(config), input_channels, output_channels)
    model.lifting_w = linear(lift_in, c)
    model.lifting_b = np.zeros(c)
    for layer in range(config.layers):
        spectral = init_spectral_weights(
            config.modes_per_dim(), config.buffer_modes, c, config.scale(), rng
        )
        blk = Block(spectral, linear(c, c), np.zeros(c))
        if config.normalization == "instance" and layer < config.layers - 1:
            blk.gamma = np.ones(c)
            blk.beta = np.zeros(c)
        model.blocks.append(blk)
    model.proj_w = linear(c, output_channels)
    model.proj_b = np.zeros(output_channels)
    return model


# ---------------------------------------------------------------------------
# checkpoint format: magic, version, config text, named parameter records
# ---------------------------------------------------------------------------


def _config_text(model):
    cfg = model.config
    fields = {
        "spatial_dims": cfg.spatial_dims,
        "layers": cfg.layers,
        "channels": cfg.channels,
        "initial_modes": ",".join(str(k) for k in cfg.modes_per_dim()),
        "buffer_modes": cfg.buffer_modes,
        "activation": cfg.activation,
        "normalization": cfg.normalization,
        "init_scale": repr(cfg.scale()),
        "coords": cfg.coords,
        "input_channels": model.input_channels,
        "output_channels": model.output_channels,
    }
    return "".join(f"{k}={v}\n" for k, v in fields.items())


def _config_from_text(text):
    kv = dict(line.split("=", 1) for line in text.splitlines() if line)
    cfg = FnoConfig(
        spatial_dims=int(kv["spatial_dims"]),
        layers=int(kv["layers"]),
        channels=int(kv["channels"]),
        initial_modes=tuple(int(k) for k in kv["initial_modes"].split(",")),
        buffer_modes=int(kv["buffer_modes"]),
        activation=kv["activation"],
        normalization=kv["normalization"],
        init_scale=float(kv["init_scale"]),
        coords=kv["coords"],
    )
    return cfg, int(kv["input_channels"]), int(kv["output_channels"])


def save_model(model, path):
    w = Writer()
    w.raw(CHECKPOINT_MAGIC)
    w.u32(CHECKPOINT_VERSION)
    w.text(_config_text(model))
    params = list(model.named_parameters())
    w.u32(len(params))
    for name, arr in params:
        data = name.encode("utf-8")
        w.u32(len(data))
        w.raw(data)
        w.u8(1 if np.iscomplexobj(arr) else 0)
        w.u8(arr.ndim)
        for n in arr.shape:
            w.u64(n)
        if np.iscomplexobj(arr):
            w.array_f64(np.ascontiguousarray(arr, dtype=np.complex128).view(np.float64))
        else:
            w.array_f64(arr)
    with open(path, "wb") as fh:
        fh.write(w.getvalue())


def load_model(path):
    with open(path, "rb") as fh:
        r = Reader(fh.read())
    r.expect_magic(CHECKPOINT_MAGIC)
    version = r.u32("version")
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version} at offset 4")
    cfg, in_ch, out_ch = _config_from_text(r.text("config"))
    cfg.validate()
    model = init_model(cfg, in_ch, out_ch, seed=0)
    count = r.u32("parameter count")
    for _ in range(count):
        name_len = r.u32("name length")
        name = r.raw(name_len, "name").decode("utf-8")
        is_complex = r.u8("dtype flag")
        rank = r.u8("rank")
        shape = tuple(r.u64("extent") for _ in range(rank))
        n = int(np.prod(shape)) if shape else 1
        if is_complex:
            flat = r.array_f64(2 * n, (n, 2), name)
            arr = np.ascontiguousarray(flat.view(np.complex128).reshape(shape))
        else:
            arr = r.array_f64(n, shape, name)
        model.set_parameter(name, arr)
    r.done()
    return model
