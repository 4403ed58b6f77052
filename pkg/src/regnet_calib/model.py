"""Two-stream NiN regressor: RGB and depth streams, a fusion stack, two FC layers."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import encoding
from .nn import functional as F
from .nn import checkpoint
from .nn.init import xavier_uniform
from .nn.tensor import Parameter, Tensor, as_tensor


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class NiNBlockSpec:
    """A ``k x k`` convolution followed by one or more ``1 x 1`` convolutions."""

    k: int
    stride: int
    channels: tuple

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        if len(self.channels) < 2:
            raise ConfigError("a NiN block needs a k x k conv and at least one 1 x 1 conv")
        if self.k < 1 or self.stride < 1 or min(self.channels) < 1:
            raise ConfigError(f"invalid NiN block {self}")

    @property
    def padding(self) -> int:
        return self.k // 2

    def out_size(self, n: int) -> int:
        return F.conv_output_size(n, self.k, self.stride, self.padding)


def _blocks(specs) -> tuple:
    return tuple(s if isinstance(s, NiNBlockSpec) else NiNBlockSpec(**s) for s in specs)


@dataclass(frozen=True)
class RegNetConfig:
    rgb_stream: tuple = (
        NiNBlockSpec(7, 2, (24, 24)),
        NiNBlockSpec(5, 2, (48, 48)),
        NiNBlockSpec(3, 2, (96, 96)),
    )
    depth_stream: tuple = (
        NiNBlockSpec(7, 2, (12, 12)),
        NiNBlockSpec(5, 2, (24, 24)),
        NiNBlockSpec(3, 2, (48, 48)),
    )
    fusion: tuple = (
        NiNBlockSpec(3, 1, (96, 96)),
        NiNBlockSpec(3, 1, (64, 64)),
    )
    fc_widths: tuple = (256, 8)
    representation: str = encoding.DUAL_QUATERNION
    input_height: int = 96
    input_width: int = 256

    def __post_init__(self):
        object.__setattr__(self, "rgb_stream", _blocks(self.rgb_stream))
        object.__setattr__(self, "depth_stream", _blocks(self.depth_stream))
        object.__setattr__(self, "fusion", _blocks(self.fusion))
        object.__setattr__(self, "fc_widths", tuple(int(v) for v in self.fc_widths))

    @property
    def output_width(self) -> int:
        return encoding.width(self.representation)

    def with_representation(self, representation: str) -> RegNetConfig:
        return replace(self, representation=representation,
                       fc_widths=(self.fc_widths[0], encoding.width(representation)))

    @classmethod
    def small(cls, representation: str = encoding.DUAL_QUATERNION, height: int = 16,
              width: int = 24) -> RegNetConfig:
        """A tiny network for fast tests."""
        return cls(
            rgb_stream=(NiNBlockSpec(3, 2, (4, 4)), NiNBlockSpec(3, 2, (6, 6))),
            depth_stream=(NiNBlockSpec(3, 2, (2, 2)), NiNBlockSpec(3, 2, (3, 3))),
            fusion=(NiNBlockSpec(3, 1, (8, 8)),),
            fc_widths=(12, encoding.width(representation)),
            representation=representation,
            input_height=height,
            input_width=width,
        )

    def stream_dims(self, blocks) -> tuple[int, int]:
        h, w = self.input_height, self.input_width
        for b in blocks:
            h, w = b.out_size(h), b.out_size(w)
        return h, w

    def validate(self) -> None:
        if len(self.fc_widths) != 2 or min(self.fc_widths) < 1:
            raise ConfigError("fc_widths must be two positive integers")
        if self.fc_widths[1] != self.output_width:
            raise ConfigError(
                f"output width {self.fc_widths[1]} does not match representation "
                f"{self.representation!r} ({self.output_width} values)"
            )
        if not (self.rgb_stream and self.depth_stream and self.fusion):
            raise ConfigError("both streams and the fusion stack need at least one block")
        for i, (r, d) in enumerate(zip(self.rgb_stream, self.depth_stream)):
            if any(dc > rc for dc, rc in zip(d.channels, r.channels)):
                raise ConfigError(f"depth stream block {i} has more channels than the RGB stream")
        rgb_hw, depth_hw = self.stream_dims(self.rgb_stream), self.stream_dims(self.depth_stream)
        if rgb_hw != depth_hw:
            raise ConfigError(
                f"streams disagree at the concatenation point: rgb stream gives {rgb_hw[0]}x{rgb_hw[1]}, "
                f"depth stream gives {depth_hw[0]}x{depth_hw[1]}"
            )
        if min(rgb_hw) < 1 or min(self.stream_dims(self.rgb_stream + self.fusion)) < 1:
            raise ConfigError("input is too small for the configured strides")

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("rgb_stream", "depth_stream", "fusion"):
            d[key] = [dict(b, channels=list(b["channels"])) for b in d[key]]
        d["fc_widths"] = list(self.fc_widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> RegNetConfig:
        return cls(**d)


@dataclass
class _Conv:
    weight: Parameter
    bias: Parameter
    stride: int
    padding: int


@dataclass
class RegNet:
    """The network. Build with ``RegNet(config, seed)``; weights are Xavier-initialized."""

    config: RegNetConfig
    seed: int = 0
    dtype: type = np.float32
    params: dict = field(default_factory=dict, repr=False)
    shape_trace: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.config.validate()
        rng = np.random.default_rng(self.seed)
        self._streams = {}
        c_rgb = self._build_stream("rgb", self.config.rgb_stream, 3, rng)
        c_depth = self._build_stream("depth", self.config.depth_stream, 1, rng)
        c_fused = self._build_stream("fusion", self.config.fusion, c_rgb + c_depth, rng)
        hidden, out = self.config.fc_widths
        self._fc = [self._linear("fc1", c_fused, hidden, rng), self._linear("fc2", hidden, out, rng)]
        self.shape_trace = self.trace_shapes()

    def _add(self, name: str, shape, rng) -> Parameter:
        p = Parameter(xavier_uniform(shape, rng, self.dtype), name=name)
        self.params[name] = p
        return p

    def _bias(self, name: str, n: int) -> Parameter:
        p = Parameter(np.zeros(n, dtype=self.dtype), name=name)
        self.params[name] = p
        return p

    def _build_stream(self, prefix: str, blocks, c_in: int, rng) -> int:
        layers = []
        for bi, block in enumerate(blocks):
            for ci, c_out in enumerate(block.channels):
                k, s, p = (block.k, block.stride, block.padding) if ci == 0 else (1, 1, 0)
                name = f"{prefix}.{bi}.{ci}"
                layers.append(_Conv(self._add(f"{name}.weight", (c_out, c_in, k, k), rng),
                                    self._bias(f"{name}.bias", c_out), s, p))
                c_in = c_out
        self._streams[prefix] = layers
        return c_in

    def _linear(self, name: str, n_in: int, n_out: int, rng) -> tuple:
        return self._add(f"{name}.weight", (n_out, n_in), rng), self._bias(f"{name}.bias", n_out)

    # -- evaluation ---------------------------------------------------------

    @staticmethod
    def _run(layers, x: Tensor, trace=None, prefix="") -> Tensor:
        for conv in layers:
            x = F.relu(F.conv2d(x, conv.weight, conv.bias, conv.stride, conv.padding))
            if trace is not None:
                trace.append((conv.weight.name.rsplit(".", 1)[0], x.shape))
        return x

    def forward(self, rgb, depth, trace=None) -> Tensor:
        """Raw (pre-decode) regression output for one ``3 x H x W`` image and ``1 x H x W`` depth map."""
        cfg = self.config
        rgb, depth = as_tensor(rgb), as_tensor(depth)
        if depth.data.ndim == 2 and not depth.requires_grad:
            depth = Tensor(depth.data[None])
        want = (cfg.input_height, cfg.input_width)
        if rgb.shape != (3,) + want or depth.shape != (1,) + want:
            raise ValueError(
                f"expected rgb 3x{want[0]}x{want[1]} and depth 1x{want[0]}x{want[1]}, "
                f"got {rgb.shape} and {depth.shape}"
            )
        if rgb.dtype != self.dtype and not rgb.requires_grad:
            rgb = Tensor(rgb.data.astype(self.dtype))
        if depth.dtype != self.dtype and not depth.requires_grad:
            depth = Tensor(depth.data.astype(self.dtype))
        a = self._run(self._streams["rgb"], rgb, trace)
        b = self._run(self._streams["depth"], depth, trace)
        x = F.concat_channels(a, b)
        if trace is not None:
            trace.append(("concat", x.shape))
        x = self._run(self._streams["fusion"], x, trace)
        x = F.global_max_pool(x)
        if trace is not None:
            trace.append(("global_max_pool", x.shape))
        (w1, b1), (w2, b2) = self._fc
        x = F.relu(F.fully_connected(x, w1, b1))
        if trace is not None:
            trace.append(("fc1", x.shape))
        x = F.fully_connected(x, w2, b2)
        if trace is not None:
            trace.append(("fc2", x.shape))
        return x

    __call__ = forward

    def predict(self, rgb, depth) -> np.ndarray:
        return np.asarray(self.forward(rgb, depth).data, dtype=np.float64)

    def trace_shapes(self) -> list:
        cfg = self.config
        trace = []
        self.forward(np.zeros((3, cfg.input_height, cfg.input_width), self.dtype),
                     np.zeros((1, cfg.input_height, cfg.input_width), self.dtype), trace)
        return trace

    # -- parameters -----------------------------------------------------------

    def parameters(self) -> list:
        return list(self.params.values())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def n_parameters(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def set_output_bias(self, values) -> None:
        self.params["fc2.bias"].data[...] = np.asarray(values, dtype=self.dtype)

    def state_dict(self) -> dict:
        return {name: p.data.copy() for name, p in self.params.items()}

    def load_state_dict(self, blobs: dict) -> None:
        missing = set(self.params) - set(blobs)
        if missing:
            raise checkpoint.CheckpointError(f"checkpoint lacks parameters: {sorted(missing)}")
        for name, p in self.params.items():
            if blobs[name].shape != p.data.shape:
                raise checkpoint.CheckpointError(
                    f"parameter {name} has shape {blobs[name].shape}, expected {p.data.shape}")
            p.data = np.array(blobs[name], dtype=self.dtype)


def build_model(config: RegNetConfig, seed: int = 0, dtype=np.float32) -> RegNet:
    return RegNet(config, seed=seed, dtype=dtype)


def format_shape_trace(model: RegNet) -> str:
    lines = [f"{'layer':<16}{'output shape':>16}"]
    lines += [f"{name:<16}{'x'.join(map(str, shape)):>16}" for name, shape in model.shape_trace]
    lines.append(f"parameters: {model.n_parameters()}")
    return "\n".join(lines)
