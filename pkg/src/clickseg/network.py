"""Encoder-decoder segmentation network, its loss, and checkpoint IO.

The model maps a 5-channel patch (RGB + inclusion guide + exclusion guide)
to a per-pixel foreground probability.  Layout: a stem conv, `depth`
encoder levels (residual block, optional multi-scale block, 2x downsample
with a channel-doubling transition), a residual bottleneck, and a mirrored
decoder (2x transposed-conv upsample, skip concatenation, fuse conv,
residual block, optional multi-scale block), finished by a 1x1 conv and a
sigmoid.  Every conv is followed by batchnorm.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import (
    CheckpointManifestError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    InvalidConfigError,
    InvalidInputError,
)
from .neural import (
    AdamState,
    BatchNormState,
    Tensor,
    add,
    batchnorm,
    concat,
    conv2d,
    conv_transpose2d,
    maxpool2,
    no_grad,
    relu,
    sigmoid,
)

MAGIC = b"NUCK"
FORMAT_VERSION = 1

KINDS = ("nucleus", "cell", "gland")


@dataclass(frozen=True)
class NetworkConfig:
    """Static shape of the model.  Parameter count is a pure function of this."""

    input_channels: int = 5
    base_width: int = 8
    depth: int = 3
    ms_block_levels: Tuple[int, ...] = (0, 1, 2)
    ms_dilations: Tuple[int, ...] = (1, 3, 6)
    patch_size: int = 64
    kind: str = "nucleus"
    dice_factor_two: bool = False

    def __post_init__(self):
        if self.input_channels != 5:
            raise InvalidConfigError(
                f"input_channels must be 5 (RGB + 2 guides), got {self.input_channels}")
        if self.depth < 1:
            raise InvalidConfigError(f"depth must be >= 1, got {self.depth}")
        if self.base_width < 1:
            raise InvalidConfigError(f"base_width must be >= 1, got {self.base_width}")
        levels = tuple(sorted(set(int(v) for v in self.ms_block_levels)))
        object.__setattr__(self, "ms_block_levels", levels)
        for lv in levels:
            if not 0 <= lv < self.depth:
                raise InvalidConfigError(
                    f"ms_block_levels entries must lie in [0, depth), got {lv}")
        dil = tuple(int(d) for d in self.ms_dilations)
        object.__setattr__(self, "ms_dilations", dil)
        if levels and (not dil or any(d < 1 for d in dil)):
            raise InvalidConfigError(f"ms_dilations must be positive, got {self.ms_dilations}")
        if self.patch_size < 1 or self.patch_size % (1 << self.depth) != 0:
            raise InvalidConfigError(
                f"patch_size must be a positive multiple of {1 << self.depth}, "
                f"got {self.patch_size}")
        if self.kind not in KINDS:
            raise InvalidConfigError(f"kind must be one of {KINDS}, got {self.kind!r}")

    def to_dict(self) -> dict:
        return {
            "input_channels": self.input_channels,
            "base_width": self.base_width,
            "depth": self.depth,
            "ms_block_levels": list(self.ms_block_levels),
            "ms_dilations": list(self.ms_dilations),
            "patch_size": self.patch_size,
            "kind": self.kind,
            "dice_factor_two": self.dice_factor_two,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        try:
            return cls(
                input_channels=int(d["input_channels"]),
                base_width=int(d["base_width"]),
                depth=int(d["depth"]),
                ms_block_levels=tuple(d["ms_block_levels"]),
                ms_dilations=tuple(d["ms_dilations"]),
                patch_size=int(d["patch_size"]),
                kind=str(d.get("kind", "nucleus")),
                dice_factor_two=bool(d.get("dice_factor_two", False)),
            )
        except (KeyError, TypeError) as e:
            raise InvalidConfigError(f"bad config dict: {e}") from e


def _he_conv(rng, cout: int, cin: int, k: int, dtype) -> Tensor:
    fan_in = cin * k * k
    w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(cout, cin, k, k))
    return Tensor(w.astype(dtype), requires_grad=True)


class _ConvBNRelu:
    """3x3 (or 1x1) conv -> batchnorm -> relu."""

    def __init__(self, cin, cout, rng, k=3, dilation=1, dtype=np.float32):
        self.w = _he_conv(rng, cout, cin, k, dtype)
        self.b = Tensor(np.zeros(cout, dtype=dtype), requires_grad=True)
        self.bn = BatchNormState.create(cout, dtype=dtype)
        self.dilation = dilation

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        y = conv2d(x, self.w, self.b, dilation=self.dilation)
        return relu(batchnorm(y, self.bn, training))

    def walk(self, prefix: str):
        yield prefix + ".w", self.w, True
        yield prefix + ".b", self.b, True
        yield from _walk_bn(prefix + ".bn", self.bn)


def _walk_bn(prefix: str, bn: BatchNormState):
    yield prefix + ".gamma", bn.gamma, True
    yield prefix + ".beta", bn.beta, True
    yield prefix + ".mean", bn.running_mean, False
    yield prefix + ".var", bn.running_var, False


class _ResBlock:
    """Two 3x3 convs with an identity shortcut; channel count is unchanged."""

    def __init__(self, c, rng, dtype=np.float32):
        self.c1 = _ConvBNRelu(c, c, rng, dtype=dtype)
        self.w2 = _he_conv(rng, c, c, 3, dtype)
        self.b2 = Tensor(np.zeros(c, dtype=dtype), requires_grad=True)
        self.bn2 = BatchNormState.create(c, dtype=dtype)

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        h = self.c1(x, training)
        h = batchnorm(conv2d(h, self.w2, self.b2), self.bn2, training)
        return relu(add(h, x))

    def walk(self, prefix: str):
        yield from self.c1.walk(prefix + ".c1")
        yield prefix + ".w2", self.w2, True
        yield prefix + ".b2", self.b2, True
        yield from _walk_bn(prefix + ".bn2", self.bn2)


class _MSBlock:
    """Parallel 3x3 convs at several dilations, concatenated, fused by 1x1."""

    def __init__(self, c, dilations, rng, dtype=np.float32):
        self.branches = [_ConvBNRelu(c, c, rng, dilation=d, dtype=dtype)
                         for d in dilations]
        self.fuse = _ConvBNRelu(len(dilations) * c, c, rng, k=1, dtype=dtype)

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        ys = [br(x, training) for br in self.branches]
        return self.fuse(concat(ys, axis=1), training)

    def walk(self, prefix: str):
        for i, br in enumerate(self.branches):
            yield from br.walk(f"{prefix}.branch{i}")
        yield from self.fuse.walk(prefix + ".fuse")


class _UpBlock:
    """2x transposed-conv upsample -> batchnorm -> relu, halving channels."""

    def __init__(self, cin, cout, rng, dtype=np.float32):
        fan_in = cin * 4
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(cin, cout, 2, 2))
        self.w = Tensor(w.astype(dtype), requires_grad=True)
        self.b = Tensor(np.zeros(cout, dtype=dtype), requires_grad=True)
        self.bn = BatchNormState.create(cout, dtype=dtype)

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        return relu(batchnorm(conv_transpose2d(x, self.w, self.b), self.bn, training))

    def walk(self, prefix: str):
        yield prefix + ".w", self.w, True
        yield prefix + ".b", self.b, True
        yield from _walk_bn(prefix + ".bn", self.bn)


class SegmentationModel:
    """The full encoder-decoder.  Build with `build(config, rng)`."""

    def __init__(self, config: NetworkConfig, rng):
        self.config = config
        dtype = np.float32
        d = config.depth
        widths = [config.base_width << i for i in range(d + 1)]
        ms_levels = set(config.ms_block_levels)

        self.stem = _ConvBNRelu(config.input_channels, widths[0], rng, dtype=dtype)
        self.enc = []
        for i in range(d):
            res = _ResBlock(widths[i], rng, dtype)
            ms = (_MSBlock(widths[i], config.ms_dilations, rng, dtype)
                  if i in ms_levels else None)
            trans = _ConvBNRelu(widths[i], widths[i + 1], rng, dtype=dtype)
            self.enc.append((res, ms, trans))
        self.bottleneck = _ResBlock(widths[d], rng, dtype)
        self.dec = []
        for i in reversed(range(d)):
            up = _UpBlock(widths[i + 1], widths[i], rng, dtype)
            fuse = _ConvBNRelu(2 * widths[i], widths[i], rng, dtype=dtype)
            res = _ResBlock(widths[i], rng, dtype)
            ms = (_MSBlock(widths[i], config.ms_dilations, rng, dtype)
                  if i in ms_levels else None)
            self.dec.append((up, fuse, res, ms))
        self.head_w = _he_conv(rng, 1, widths[0], 1, dtype)
        self.head_b = Tensor(np.zeros(1, dtype=dtype), requires_grad=True)

    # -- graph ----------------------------------------------------------

    def forward(self, x: Tensor, training: bool = False) -> Tensor:
        xd = x.data
        if xd.ndim != 4 or xd.shape[1] != self.config.input_channels:
            raise InvalidInputError(
                f"expected input (N, {self.config.input_channels}, H, W), got {xd.shape}")
        div = 1 << self.config.depth
        if xd.shape[2] % div or xd.shape[3] % div:
            raise InvalidInputError(
                f"spatial dims must be divisible by {div}, got {xd.shape[2:]}")
        h = self.stem(x, training)
        skips = []
        for res, ms, trans in self.enc:
            h = res(h, training)
            if ms is not None:
                h = ms(h, training)
            skips.append(h)
            h = trans(maxpool2(h), training)
        h = self.bottleneck(h, training)
        for (up, fuse, res, ms), skip in zip(self.dec, reversed(skips)):
            h = up(h, training)
            h = fuse(concat([h, skip], axis=1), training)
            h = res(h, training)
            if ms is not None:
                h = ms(h, training)
        return sigmoid(conv2d(h, self.head_w, self.head_b))

    def predict(self, patch: np.ndarray) -> np.ndarray:
        """Eval-mode probabilities for (5,H,W) or (N,5,H,W) float input."""
        arr = np.asarray(patch, dtype=np.float32)
        squeeze = arr.ndim == 3
        if squeeze:
            arr = arr[None]
        with no_grad():
            out = self.forward(Tensor(arr), training=False).data[:, 0]
        return out[0] if squeeze else out

    # -- parameter plumbing ----------------------------------------------

    def walk(self) -> Iterator[Tuple[str, Union[Tensor, np.ndarray], bool]]:
        """Yield (name, tensor-or-array, learnable) in a fixed order."""
        yield from self.stem.walk("stem")
        for i, (res, ms, trans) in enumerate(self.enc):
            yield from res.walk(f"enc{i}.res")
            if ms is not None:
                yield from ms.walk(f"enc{i}.ms")
            yield from trans.walk(f"enc{i}.trans")
        yield from self.bottleneck.walk("bottleneck")
        for j, (up, fuse, res, ms) in enumerate(self.dec):
            i = self.config.depth - 1 - j
            yield from up.walk(f"dec{i}.up")
            yield from fuse.walk(f"dec{i}.fuse")
            yield from res.walk(f"dec{i}.res")
            if ms is not None:
                yield from ms.walk(f"dec{i}.ms")
        yield "head.w", self.head_w, True
        yield "head.b", self.head_b, True

    def parameters(self) -> list:
        return [obj for _, obj, learn in self.walk() if learn]

    def param_count(self) -> int:
        return int(sum(p.data.size for p in self.parameters()))


def build(config: NetworkConfig, rng=None) -> SegmentationModel:
    if rng is None:
        rng = np.random.default_rng(0)
    return SegmentationModel(config, rng)


# -- loss ----------------------------------------------------------------


def weight_map(inclusion: np.ndarray, exclusion: np.ndarray) -> np.ndarray:
    """Per-pixel cross-entropy weights from the two guide masks.

    alpha = max(sum(exclusion) / sum(inclusion), 1); the map is
    1 + alpha^2 on inclusion pixels, 1 + alpha on exclusion pixels,
    1 elsewhere.  An empty inclusion mask is rejected.
    """
    g = np.asarray(inclusion)
    ge = np.asarray(exclusion)
    if g.shape != ge.shape:
        raise InvalidInputError(f"shape mismatch: {g.shape} vs {ge.shape}")
    g = (g != 0).astype(np.float64)
    ge = (ge != 0).astype(np.float64)
    if (g * ge).any():
        raise InvalidInputError("inclusion and exclusion masks overlap")
    sg = g.sum()
    if sg == 0:
        raise InvalidInputError("inclusion mask is empty")
    alpha = max(ge.sum() / sg, 1.0)
    return 1.0 + (alpha * alpha) * g + alpha * ge


def loss(pred: np.ndarray, target: np.ndarray, weights: np.ndarray,
         *, dice_factor_two: bool = False, eps: float = 1e-6,
         clamp: float = 1e-7):
    """Soft-dice plus weighted cross-entropy over one patch.

    Returns (value, grad) where grad is d(value)/d(pred), same shape as
    pred.  The dice term uses raw probabilities; only the logs are
    clamped.  `dice_factor_two` switches the overlap numerator between
    (inter + eps) / (sums + eps) and the 2x variant.
    """
    p = np.asarray(pred, dtype=np.float64)
    g = np.asarray(target, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if p.shape != g.shape or p.shape != w.shape:
        raise InvalidInputError(
            f"shape mismatch: pred {p.shape}, target {g.shape}, weights {w.shape}")
    if p.size == 0:
        raise InvalidInputError("empty prediction")
    if np.any((g != 0) & (g != 1)):
        raise InvalidInputError("target must be binary")

    inter = float((p * g).sum())
    denom = float(p.sum() + g.sum()) + eps
    if dice_factor_two:
        dice = 1.0 - (2.0 * inter + eps) / denom
        ddice = -(2.0 * g * denom - (2.0 * inter + eps)) / (denom * denom)
    else:
        dice = 1.0 - (inter + eps) / denom
        ddice = -(g * denom - (inter + eps)) / (denom * denom)

    pc = np.clip(p, clamp, 1.0 - clamp)
    n = p.size
    ce = float(-(w * (g * np.log(pc) + (1.0 - g) * np.log(1.0 - pc))).sum() / n)
    inside = (p > clamp) & (p < 1.0 - clamp)
    dce = np.where(inside, -w * (g / pc - (1.0 - g) / (1.0 - pc)) / n, 0.0)

    return dice + ce, ddice + dce


# -- checkpoint IO ---------------------------------------------------------


def save_checkpoint(model: SegmentationModel, path) -> None:
    """MAGIC + version byte + u32le header length + JSON header + f32le blobs."""
    manifest = []
    blobs = []
    offset = 0
    for name, obj, _ in model.walk():
        arr = obj.data if isinstance(obj, Tensor) else obj
        raw = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        manifest.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps({"config": model.config.to_dict(),
                         "tensors": manifest}).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(bytes([FORMAT_VERSION]))
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        for raw in blobs:
            f.write(raw)


def load_checkpoint(path) -> SegmentationModel:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 4 or data[:4] != MAGIC:
        raise CheckpointVersionError("not a model checkpoint (bad magic)")
    if len(data) < 9:
        raise CheckpointTruncatedError("checkpoint shorter than its fixed header")
    if data[4] != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"unsupported checkpoint version {data[4]} (expected {FORMAT_VERSION})")
    (hlen,) = struct.unpack("<I", data[5:9])
    if len(data) < 9 + hlen:
        raise CheckpointTruncatedError("checkpoint header is cut off")
    try:
        header = json.loads(data[9:9 + hlen].decode("utf-8"))
        config = NetworkConfig.from_dict(header["config"])
        manifest = header["tensors"]
    except (ValueError, KeyError, InvalidConfigError) as e:
        raise CheckpointManifestError(f"bad checkpoint header: {e}") from e

    model = build(config, np.random.default_rng(0))
    targets = {name: obj for name, obj, _ in model.walk()}
    seen = set()
    blob = data[9 + hlen:]
    for entry in manifest:
        try:
            name = entry["name"]
            shape = tuple(int(s) for s in entry["shape"])
            off = int(entry["offset"])
        except (KeyError, TypeError, ValueError) as e:
            raise CheckpointManifestError(f"bad manifest entry: {entry}") from e
        if name not in targets:
            raise CheckpointManifestError(f"unknown tensor {name!r} in manifest")
        obj = targets[name]
        arr = obj.data if isinstance(obj, Tensor) else obj
        if shape != arr.shape:
            raise CheckpointManifestError(
                f"tensor {name!r}: manifest shape {shape} != model shape {arr.shape}")
        nbytes = int(np.prod(shape, dtype=np.int64)) * 4
        if off < 0 or off + nbytes > len(blob):
            raise CheckpointTruncatedError(
                f"tensor {name!r} extends past end of file")
        vals = np.frombuffer(blob[off:off + nbytes], dtype="<f4").reshape(shape)
        arr[...] = vals
        seen.add(name)
    missing = set(targets) - seen
    if missing:
        raise CheckpointManifestError(f"manifest missing tensors: {sorted(missing)}")
    return model
