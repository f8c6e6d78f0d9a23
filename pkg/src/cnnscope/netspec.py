"""Network architecture descriptions and the arithmetic derived from them.

A NetSpec is an ordered list of layer descriptions plus the input shape.
From it we derive per-layer output shapes, receptive fields (size, stride
and the padding-induced left/top offset), and pixel bounding boxes for
individual neurons.  Everything here is pure data + pure functions; the
numeric kernels live in :mod:`cnnscope.kernels`.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import NetSpecError, SelectionError

__all__ = [
    "Conv",
    "Relu",
    "MaxPool",
    "Fc",
    "Softmax",
    "LayerSpec",
    "ReceptiveField",
    "PixelBox",
    "NetSpec",
    "parse_netspec",
    "print_netspec",
    "builtin_netspec",
    "BUILTIN_NAMES",
    "shape_trace",
    "receptive_fields",
    "neuron_bbox",
]


@dataclass(frozen=True)
class Conv:
    name: str
    out_channels: int
    kernel: tuple[int, int]  # (kh, kw)
    stride: int = 1
    pad: int = 0


@dataclass(frozen=True)
class Relu:
    name: str


@dataclass(frozen=True)
class MaxPool:
    name: str
    window: tuple[int, int]  # (kh, kw)
    stride: int = 1


@dataclass(frozen=True)
class Fc:
    name: str
    out_features: int


@dataclass(frozen=True)
class Softmax:
    name: str


LayerSpec = Conv | Relu | MaxPool | Fc | Softmax


@dataclass(frozen=True)
class ReceptiveField:
    """Input-pixel footprint of one neuron of a layer.

    ``size`` is the side length of the covered square, ``stride`` the pixel
    spacing between horizontally adjacent neurons, and ``offset`` the
    left/top shift of neuron (0, 0)'s square relative to the image origin
    (accumulated padding; the square starts at pixel ``-offset``).
    """

    size: int
    stride: int
    offset: int


@dataclass(frozen=True)
class PixelBox:
    """A rectangle in image coordinates; ``clipped`` marks a box that ran
    past the image border and was cut back to it."""

    top: int
    left: int
    height: int
    width: int
    clipped: bool = False

    @property
    def bottom(self) -> int:
        return self.top + self.height

    @property
    def right(self) -> int:
        return self.left + self.width


def _check_layer(layer: LayerSpec) -> None:
    if isinstance(layer, Conv):
        kh, kw = layer.kernel
        if kh < 1 or kw < 1:
            raise NetSpecError(f"conv {layer.name}: kernel dims must be >= 1")
        if layer.stride < 1:
            raise NetSpecError(f"conv {layer.name}: stride must be >= 1")
        if layer.pad < 0:
            raise NetSpecError(f"conv {layer.name}: pad must be >= 0")
        if layer.out_channels < 1:
            raise NetSpecError(f"conv {layer.name}: out_channels must be >= 1")
    elif isinstance(layer, MaxPool):
        kh, kw = layer.window
        if kh < 1 or kw < 1:
            raise NetSpecError(f"pool {layer.name}: window dims must be >= 1")
        if layer.stride < 1:
            raise NetSpecError(f"pool {layer.name}: stride must be >= 1")
    elif isinstance(layer, Fc):
        if layer.out_features < 1:
            raise NetSpecError(f"fc {layer.name}: out_features must be >= 1")


@dataclass(frozen=True)
class NetSpec:
    input_shape: tuple[int, int, int]  # (channels, height, width)
    layers: tuple[LayerSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        c, h, w = self.input_shape
        if c < 1 or h < 1 or w < 1:
            raise NetSpecError(f"input shape {self.input_shape} has dims < 1")
        seen = set()
        fc_seen = False
        for layer in self.layers:
            if layer.name in seen:
                raise NetSpecError(f"duplicate layer name {layer.name!r}")
            seen.add(layer.name)
            _check_layer(layer)
            if isinstance(layer, Fc):
                fc_seen = True
            elif isinstance(layer, (Conv, MaxPool)) and fc_seen:
                raise NetSpecError(
                    f"layer {layer.name!r}: conv/pool may not follow a fc layer"
                )
        shape_trace(self)  # raises if any spatial dim underflows

    def layer(self, name: str) -> LayerSpec:
        for layer in self.layers:
            if layer.name == name:
                return layer
        raise NetSpecError(f"no layer named {name!r}")

    def index_of(self, name: str) -> int:
        for i, layer in enumerate(self.layers):
            if layer.name == name:
                return i
        raise NetSpecError(f"no layer named {name!r}")


def _out_dim(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def shape_trace(net: NetSpec) -> list[tuple[str, tuple[int, ...]]]:
    """Output shape of every layer, in order.

    Conv/pool shapes follow ``floor((in + 2*pad - kernel) / stride) + 1``;
    fc flattens its input.  Raises NetSpecError naming the first layer whose
    spatial output would fall below 1x1.
    """
    shape: tuple[int, ...] = net.input_shape
    out = []
    for layer in net.layers:
        if isinstance(layer, Conv):
            c, h, w = shape
            oh = _out_dim(h, layer.kernel[0], layer.stride, layer.pad)
            ow = _out_dim(w, layer.kernel[1], layer.stride, layer.pad)
            if oh < 1 or ow < 1:
                raise NetSpecError(
                    f"layer {layer.name!r}: output shape {oh}x{ow} underflows"
                )
            shape = (layer.out_channels, oh, ow)
        elif isinstance(layer, MaxPool):
            c, h, w = shape
            oh = _out_dim(h, layer.window[0], layer.stride, 0)
            ow = _out_dim(w, layer.window[1], layer.stride, 0)
            if oh < 1 or ow < 1:
                raise NetSpecError(
                    f"layer {layer.name!r}: output shape {oh}x{ow} underflows"
                )
            shape = (c, oh, ow)
        elif isinstance(layer, Fc):
            shape = (layer.out_features,)
        # Relu and Softmax preserve shape.
        out.append((layer.name, shape))
    return out


def receptive_fields(net: NetSpec) -> list[tuple[str, ReceptiveField]]:
    """Receptive field of each conv/relu/pool layer in input-pixel units.

    Recurrence over the layer sequence, starting from a 1x1 field with
    stride 1 and offset 0:

        size   <- size + (k - 1) * stride
        stride <- stride * layer_stride      (after the size update)
        offset <- offset + pad * stride_before

    Relu changes nothing.  The walk stops at the first fc or softmax layer:
    from there on every neuron sees the whole image.
    """
    size, stride, offset = 1, 1, 0
    out = []
    for layer in net.layers:
        if isinstance(layer, (Fc, Softmax)):
            break
        if isinstance(layer, Conv):
            size = size + (layer.kernel[0] - 1) * stride
            offset = offset + layer.pad * stride
            stride = stride * layer.stride
        elif isinstance(layer, MaxPool):
            size = size + (layer.window[0] - 1) * stride
            stride = stride * layer.stride
        out.append((layer.name, ReceptiveField(size, stride, offset)))
    return out


def _field_at(net: NetSpec, layer_name: str) -> ReceptiveField:
    for name, field in receptive_fields(net):
        if name == layer_name:
            return field
    raise SelectionError(
        f"layer {layer_name!r} has no receptive field (fc/softmax or unknown)"
    )


def neuron_bbox(net: NetSpec, layer: str, pos: tuple[int, int]) -> PixelBox:
    """Image rectangle covered by the neuron at ``pos`` = (row, col).

    The unclipped box is ``[row*stride - offset, col*stride - offset]`` with
    side ``size``; it is clipped to the image bounds and flagged when
    clipping occurred.
    """
    field = _field_at(net, layer)
    shape = dict(shape_trace(net))[layer]
    row, col = pos
    if not (0 <= row < shape[1] and 0 <= col < shape[2]):
        raise SelectionError(
            f"position {pos} outside layer {layer!r} extent {shape[1]}x{shape[2]}"
        )
    _, img_h, img_w = net.input_shape
    top = row * field.stride - field.offset
    left = col * field.stride - field.offset
    bottom = top + field.size
    right = left + field.size
    ctop, cleft = max(top, 0), max(left, 0)
    cbottom, cright = min(bottom, img_h), min(right, img_w)
    clipped = (ctop, cleft, cbottom, cright) != (top, left, bottom, right)
    return PixelBox(ctop, cleft, cbottom - ctop, cright - cleft, clipped)


# ---------------------------------------------------------------------------
# Architecture DSL
#
#   input <C> <H> <W>
#   conv <name> <out_channels> <KH>x<KW> [stride <s>] [pad <p>]
#   relu <name>
#   pool <name> <KH>x<KW> [stride <s>]
#   fc <name> <out_features>
#   softmax <name>
#
# One directive per line, `#` starts a comment.
# ---------------------------------------------------------------------------


def _parse_int(token: str, what: str, line: int) -> int:
    try:
        return int(token)
    except ValueError:
        raise NetSpecError(f"{what}: expected integer, got {token!r}", line)


def _parse_kernel(token: str, line: int) -> tuple[int, int]:
    parts = token.split("x")
    if len(parts) != 2:
        raise NetSpecError(f"expected <KH>x<KW>, got {token!r}", line)
    return (_parse_int(parts[0], "kernel height", line),
            _parse_int(parts[1], "kernel width", line))


def _parse_options(tokens: list[str], allowed: tuple[str, ...], line: int) -> dict:
    opts = {}
    i = 0
    while i < len(tokens):
        key = tokens[i]
        if key not in allowed:
            raise NetSpecError(f"unknown option {key!r}", line)
        if key in opts:
            raise NetSpecError(f"option {key!r} given twice", line)
        if i + 1 >= len(tokens):
            raise NetSpecError(f"option {key!r} missing its value", line)
        opts[key] = _parse_int(tokens[i + 1], key, line)
        i += 2
    return opts


def parse_netspec(text: str) -> NetSpec:
    """Parse the line-oriented architecture DSL into a NetSpec.

    Errors carry the 1-based line number of the offending directive.
    """
    input_shape = None
    input_line = None
    layers: list[LayerSpec] = []
    names: dict[str, int] = {}
    fc_line = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        keyword, args = tokens[0], tokens[1:]

        if keyword == "input":
            if input_shape is not None:
                raise NetSpecError(
                    f"duplicate input directive (first on line {input_line})", lineno
                )
            if len(args) != 3:
                raise NetSpecError("input takes exactly <C> <H> <W>", lineno)
            input_shape = tuple(_parse_int(a, "input dim", lineno) for a in args)
            input_line = lineno
            continue

        if input_shape is None:
            raise NetSpecError("input directive must precede any layer", lineno)

        if keyword == "conv":
            if len(args) < 3:
                raise NetSpecError("conv takes <name> <out_channels> <KH>x<KW>", lineno)
            name = args[0]
            out_channels = _parse_int(args[1], "out_channels", lineno)
            kernel = _parse_kernel(args[2], lineno)
            opts = _parse_options(args[3:], ("stride", "pad"), lineno)
            layer: LayerSpec = Conv(name, out_channels, kernel,
                                    opts.get("stride", 1), opts.get("pad", 0))
        elif keyword == "relu":
            if len(args) != 1:
                raise NetSpecError("relu takes exactly <name>", lineno)
            layer = Relu(args[0])
        elif keyword == "pool":
            if len(args) < 2:
                raise NetSpecError("pool takes <name> <KH>x<KW>", lineno)
            name = args[0]
            window = _parse_kernel(args[1], lineno)
            opts = _parse_options(args[2:], ("stride",), lineno)
            layer = MaxPool(name, window, opts.get("stride", 1))
        elif keyword == "fc":
            if len(args) != 2:
                raise NetSpecError("fc takes <name> <out_features>", lineno)
            layer = Fc(args[0], _parse_int(args[1], "out_features", lineno))
        elif keyword == "softmax":
            if len(args) != 1:
                raise NetSpecError("softmax takes exactly <name>", lineno)
            layer = Softmax(args[0])
        else:
            raise NetSpecError(f"unknown layer keyword {keyword!r}", lineno)

        if layer.name in names:
            raise NetSpecError(
                f"duplicate layer name {layer.name!r} (first on line {names[layer.name]})",
                lineno,
            )
        names[layer.name] = lineno
        if isinstance(layer, Fc):
            fc_line = lineno
        elif isinstance(layer, (Conv, MaxPool)) and fc_line is not None:
            raise NetSpecError(
                f"conv/pool layer {layer.name!r} after fc (line {fc_line})", lineno
            )
        try:
            _check_layer(layer)
        except NetSpecError as e:
            raise NetSpecError(str(e), lineno) from None
        layers.append(layer)

    if input_shape is None:
        raise NetSpecError("missing input directive")
    return NetSpec(input_shape, tuple(layers))


def print_netspec(net: NetSpec) -> str:
    """Render a NetSpec back to DSL text (parse -> print -> parse is exact)."""
    c, h, w = net.input_shape
    lines = [f"input {c} {h} {w}"]
    for layer in net.layers:
        if isinstance(layer, Conv):
            kh, kw = layer.kernel
            lines.append(
                f"conv {layer.name} {layer.out_channels} {kh}x{kw}"
                f" stride {layer.stride} pad {layer.pad}"
            )
        elif isinstance(layer, Relu):
            lines.append(f"relu {layer.name}")
        elif isinstance(layer, MaxPool):
            kh, kw = layer.window
            lines.append(f"pool {layer.name} {kh}x{kw} stride {layer.stride}")
        elif isinstance(layer, Fc):
            lines.append(f"fc {layer.name} {layer.out_features}")
        else:
            lines.append(f"softmax {layer.name}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Built-in architectures
# ---------------------------------------------------------------------------

BUILTIN_NAMES = ("vggcnn16", "alexcnn")


def _vggcnn16() -> NetSpec:
    # 13 conv layers in 5 groups (64, 128, 256, 512, 512 filters), each group
    # followed by 2x2/s2 max-pooling; all convs 3x3 stride 1 pad 1; then the
    # usual 4096/4096/1000 fully-connected head.
    group_sizes = (2, 2, 3, 3, 3)
    group_channels = (64, 128, 256, 512, 512)
    layers: list[LayerSpec] = []
    for g, (count, channels) in enumerate(zip(group_sizes, group_channels), start=1):
        for i in range(1, count + 1):
            layers.append(Conv(f"c{g}_{i}", channels, (3, 3), stride=1, pad=1))
            layers.append(Relu(f"r{g}_{i}"))
        layers.append(MaxPool(f"p{g}", (2, 2), stride=2))
    layers += [
        Fc("fc6", 4096), Relu("r6"),
        Fc("fc7", 4096), Relu("r7"),
        Fc("fc8", 1000),
        Softmax("prob"),
    ]
    return NetSpec((3, 224, 224), tuple(layers))


def _alexcnn() -> NetSpec:
    # Five conv layers; pooling (2x2/s2) after conv1, conv2 and conv5.  conv1
    # is 96 filters 11x11 stride 4 pad 2; the remaining convs use stride 1
    # pad 1 (256 filters 5x5, then 384/384/256 filters 3x3).
    layers: tuple[LayerSpec, ...] = (
        Conv("c1", 96, (11, 11), stride=4, pad=2), Relu("r1"),
        MaxPool("p1", (2, 2), stride=2),
        Conv("c2", 256, (5, 5), stride=1, pad=1), Relu("r2"),
        MaxPool("p2", (2, 2), stride=2),
        Conv("c3", 384, (3, 3), stride=1, pad=1), Relu("r3"),
        Conv("c4", 384, (3, 3), stride=1, pad=1), Relu("r4"),
        Conv("c5", 256, (3, 3), stride=1, pad=1), Relu("r5"),
        MaxPool("p5", (2, 2), stride=2),
        Fc("fc6", 4096), Relu("r6"),
        Fc("fc7", 4096), Relu("r7"),
        Fc("fc8", 1000),
        Softmax("prob"),
    )
    return NetSpec((3, 224, 224), layers)


def builtin_netspec(which: str) -> NetSpec:
    """Return one of the two built-in 224x224 architectures."""
    if which == "vggcnn16":
        return _vggcnn16()
    if which == "alexcnn":
        return _alexcnn()
    raise NetSpecError(f"unknown builtin {which!r} (have {', '.join(BUILTIN_NAMES)})")
