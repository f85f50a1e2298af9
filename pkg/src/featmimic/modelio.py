"""On-disk formats: network descriptions, weight blobs, descriptor sets,
galleries and 8-bit raster images.

Network description (text, '#' comments, one directive per line)::

    featmimic-network 1
    input 1 32 32              # channels height width, or a single length
    domain 0 255
    means 128.0                # one value per channel, optional
    layer conv2d conv1 out=8 kernel=3x3 stride=1x1 pad=1x1
    layer relu relu1
    layer maxpool2d pool1 window=2x2 stride=2x2
    layer flatten flat
    layer dense fc1 out=64
    layer softmax probs
    tap descriptor fc1 pre_activation

Weight blob (binary): 8-byte magic ``FMWTBLOB``, little-endian uint32
version (1), then the parameters of each parameterized layer in
declaration order as little-endian float32 (conv: kernel then bias,
dense: weight then bias).  Dense and conv input sizes are inferred by
shape composition, so the blob carries no shape headers.

Descriptor file (binary): little-endian uint32 vector length, uint32
count, then count*length float32 values.  Identity labels live in a
sidecar text manifest at ``<path>.ids`` (one label per line; galleries
append the enrollment count after a tab).

Images: binary PGM (P5) for one channel, PPM (P6) for three, maxval 255.
Arrays are channel-first float32 holding integral values in [0, 255].
"""

import struct

import numpy as np

from featmimic.network import (
    Conv2d,
    Dense,
    Flatten,
    MaxPool2d,
    NetworkSpec,
    Relu,
    Softmax,
    Tap,
)
from featmimic.verification import GalleryTemplate

WEIGHT_MAGIC = b"FMWTBLOB"
WEIGHT_VERSION = 1

_KINDS = {
    "dense": Dense,
    "conv2d": Conv2d,
    "relu": Relu,
    "maxpool2d": MaxPool2d,
    "flatten": Flatten,
    "softmax": Softmax,
}


def _pair(text, what):
    parts = text.split("x")
    if len(parts) != 2:
        raise ValueError(f"{what}: expected AxB, got {text!r}")
    return int(parts[0]), int(parts[1])


def _parse_kv(tokens, line_no):
    out = {}
    for tok in tokens:
        if "=" not in tok:
            raise ValueError(f"line {line_no}: expected key=value, got {tok!r}")
        key, val = tok.split("=", 1)
        out[key] = val
    return out


def _describe_layers(path):
    """First parse pass: raw directives without weights."""
    header_seen = False
    input_shape = None
    domain = (0.0, 255.0)
    means = ()
    layers = []
    taps = {}
    with open(path, "r", encoding="ascii") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            head = tokens[0]
            if not header_seen:
                if head != "featmimic-network" or tokens[1:] != ["1"]:
                    raise ValueError(
                        f"{path}: not a featmimic network description (line {line_no})"
                    )
                header_seen = True
                continue
            if head == "input":
                input_shape = tuple(int(v) for v in tokens[1:])
            elif head == "domain":
                if len(tokens) != 3:
                    raise ValueError(f"line {line_no}: domain needs two values")
                domain = (float(tokens[1]), float(tokens[2]))
            elif head == "means":
                means = tuple(float(v) for v in tokens[1:])
            elif head == "layer":
                if len(tokens) < 3:
                    raise ValueError(f"line {line_no}: layer needs kind and name")
                kind, name = tokens[1], tokens[2]
                if kind not in _KINDS:
                    raise ValueError(f"line {line_no}: unknown layer kind {kind!r}")
                layers.append((kind, name, _parse_kv(tokens[3:], line_no)))
            elif head == "tap":
                if len(tokens) != 4:
                    raise ValueError(f"line {line_no}: tap needs name, layer, phase")
                taps[tokens[1]] = Tap(tokens[2], tokens[3])
            else:
                raise ValueError(f"line {line_no}: unknown directive {head!r}")
    if not header_seen:
        raise ValueError(f"{path}: empty description")
    if input_shape is None:
        raise ValueError(f"{path}: missing input directive")
    return input_shape, domain, means, layers, taps


def _shape_through(kind, params, shape, name):
    if kind == "conv2d":
        f = int(params["out"])
        kh, kw = _pair(params["kernel"], name)
        sh, sw = _pair(params.get("stride", "1x1"), name)
        ph, pw = _pair(params.get("pad", "0x0"), name)
        c, h, w = shape
        return (f, (h + 2 * ph - kh) // sh + 1, (w + 2 * pw - kw) // sw + 1)
    if kind == "maxpool2d":
        wh, ww = _pair(params["window"], name)
        sh, sw = _pair(params.get("stride", params["window"]), name)
        c, h, w = shape
        return (c, (h - wh) // sh + 1, (w - ww) // sw + 1)
    if kind == "flatten":
        return (int(np.prod(shape)),)
    if kind == "dense":
        return (int(params["out"]),)
    return shape


def load_network(description_path, weights_path) -> NetworkSpec:
    """Assemble a NetworkSpec from a description file and a weight blob."""
    input_shape, domain, means, raw_layers, taps = _describe_layers(description_path)
    with open(weights_path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != WEIGHT_MAGIC:
        raise ValueError(f"{weights_path}: bad magic, not a weight blob")
    (version,) = struct.unpack("<I", blob[8:12])
    if version != WEIGHT_VERSION:
        raise ValueError(f"{weights_path}: unsupported version {version}")
    values = np.frombuffer(blob, dtype="<f4", offset=12)

    layers = []
    shape = input_shape
    cursor = 0

    def take(count, shape_out):
        nonlocal cursor
        if cursor + count > values.size:
            raise ValueError(f"{weights_path}: truncated blob")
        chunk = values[cursor : cursor + count].reshape(shape_out)
        cursor += count
        return np.array(chunk, dtype=np.float32)

    for kind, name, params in raw_layers:
        if kind == "conv2d":
            f = int(params["out"])
            kh, kw = _pair(params["kernel"], name)
            sh, sw = _pair(params.get("stride", "1x1"), name)
            ph, pw = _pair(params.get("pad", "0x0"), name)
            c = shape[0]
            kernel = take(f * c * kh * kw, (f, c, kh, kw))
            bias = take(f, (f,))
            layers.append(Conv2d(name, kernel, bias, (sh, sw), (ph, pw)))
        elif kind == "dense":
            out = int(params["out"])
            weight = take(out * shape[0], (out, shape[0]))
            bias = take(out, (out,))
            layers.append(Dense(name, weight, bias))
        elif kind == "maxpool2d":
            wh, ww = _pair(params["window"], name)
            sh, sw = _pair(params.get("stride", params["window"]), name)
            layers.append(MaxPool2d(name, (wh, ww), (sh, sw)))
        elif kind == "relu":
            layers.append(Relu(name))
        elif kind == "flatten":
            layers.append(Flatten(name))
        else:
            layers.append(Softmax(name))
        shape = _shape_through(kind, params, shape, name)
    if cursor != values.size:
        raise ValueError(
            f"{weights_path}: {values.size - cursor} unused trailing values"
        )
    return NetworkSpec(
        layers=tuple(layers),
        input_shape=input_shape,
        pixel_domain=domain,
        channel_means=means,
        taps=taps,
    )


def save_network(net: NetworkSpec, description_path, weights_path):
    """Write the description/weight pair that load_network reads."""
    lines = ["featmimic-network 1"]
    lines.append("input " + " ".join(str(d) for d in net.input_shape))
    lines.append(f"domain {net.pixel_domain[0]:g} {net.pixel_domain[1]:g}")
    if net.channel_means:
        lines.append("means " + " ".join(repr(m) for m in net.channel_means))
    for layer in net.layers:
        if isinstance(layer, Conv2d):
            f, _, kh, kw = layer.kernel.shape
            sh, sw = layer.stride
            ph, pw = layer.padding
            lines.append(
                f"layer conv2d {layer.name} out={f} kernel={kh}x{kw} "
                f"stride={sh}x{sw} pad={ph}x{pw}"
            )
        elif isinstance(layer, Dense):
            lines.append(f"layer dense {layer.name} out={layer.weight.shape[0]}")
        elif isinstance(layer, MaxPool2d):
            wh, ww = layer.window
            sh, sw = layer.stride
            lines.append(
                f"layer maxpool2d {layer.name} window={wh}x{ww} stride={sh}x{sw}"
            )
        else:
            lines.append(f"layer {layer.kind} {layer.name}")
    for tap_name in sorted(net.taps):
        tap = net.taps[tap_name]
        lines.append(f"tap {tap_name} {tap.layer} {tap.phase}")
    with open(description_path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")

    parts = [WEIGHT_MAGIC, struct.pack("<I", WEIGHT_VERSION)]
    for layer in net.layers:
        if isinstance(layer, Conv2d):
            parts.append(layer.kernel.astype("<f4").tobytes())
            parts.append(layer.bias.astype("<f4").tobytes())
        elif isinstance(layer, Dense):
            parts.append(layer.weight.astype("<f4").tobytes())
            parts.append(layer.bias.astype("<f4").tobytes())
    with open(weights_path, "wb") as fh:
        fh.write(b"".join(parts))


def _sidecar(path):
    return str(path) + ".ids"


def save_descriptors(path, labels, vectors):
    """Write a descriptor set plus its identity sidecar."""
    arr = np.ascontiguousarray(np.asarray(vectors, dtype=np.float32))
    if arr.ndim != 2:
        raise ValueError("vectors must be (count, length)")
    labels = list(labels)
    if len(labels) != arr.shape[0]:
        raise ValueError("one label per vector required")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<II", arr.shape[1], arr.shape[0]))
        fh.write(arr.astype("<f4").tobytes())
    with open(_sidecar(path), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("".join(f"{label}\n" for label in labels))


def load_descriptors(path):
    """Returns (labels, vectors) written by save_descriptors."""
    with open(path, "rb") as fh:
        header = fh.read(8)
        if len(header) != 8:
            raise ValueError(f"{path}: truncated descriptor header")
        length, count = struct.unpack("<II", header)
        data = fh.read()
    expect = length * count * 4
    if len(data) != expect:
        raise ValueError(f"{path}: expected {expect} payload bytes, got {len(data)}")
    vectors = np.frombuffer(data, dtype="<f4").reshape(count, length).copy()
    with open(_sidecar(path), "r", encoding="utf-8") as fh:
        labels = [line.strip() for line in fh if line.strip()]
    if len(labels) != count:
        raise ValueError(f"{path}: sidecar has {len(labels)} labels for {count} vectors")
    return labels, vectors


def save_gallery(path, templates):
    templates = list(templates)
    arr = np.stack([t.mean_descriptor for t in templates]).astype(np.float32)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<II", arr.shape[1], arr.shape[0]))
        fh.write(arr.astype("<f4").tobytes())
    with open(_sidecar(path), "w", encoding="utf-8", newline="\n") as fh:
        for t in templates:
            fh.write(f"{t.identity}\t{t.enrollment_count}\n")


def load_gallery(path):
    with open(path, "rb") as fh:
        header = fh.read(8)
        if len(header) != 8:
            raise ValueError(f"{path}: truncated gallery header")
        length, count = struct.unpack("<II", header)
        data = fh.read()
    expect = length * count * 4
    if len(data) != expect:
        raise ValueError(f"{path}: expected {expect} payload bytes, got {len(data)}")
    vectors = np.frombuffer(data, dtype="<f4").reshape(count, length)
    templates = []
    with open(_sidecar(path), "r", encoding="utf-8") as fh:
        rows = [line.rstrip("\n") for line in fh if line.strip()]
    if len(rows) != count:
        raise ValueError(f"{path}: sidecar has {len(rows)} rows for {count} vectors")
    for row, vec in zip(rows, vectors):
        identity, count_text = row.split("\t")
        templates.append(GalleryTemplate(identity, vec.copy(), int(count_text)))
    return templates


def _read_token(fh):
    tok = b""
    while True:
        ch = fh.read(1)
        if not ch:
            raise ValueError("unexpected end of raster header")
        if ch == b"#":
            while ch not in (b"\n", b""):
                ch = fh.read(1)
            continue
        if ch.isspace():
            if tok:
                return tok
            continue
        tok += ch


def read_image(path) -> np.ndarray:
    """Read a P5/P6 raster as channel-first float32 in [0, 255]."""
    with open(path, "rb") as fh:
        magic = fh.read(2)
        if magic not in (b"P5", b"P6"):
            raise ValueError(f"{path}: not a binary PGM/PPM file")
        width = int(_read_token(fh))
        height = int(_read_token(fh))
        maxval = int(_read_token(fh))
        if maxval != 255:
            raise ValueError(f"{path}: only maxval 255 supported, got {maxval}")
        channels = 1 if magic == b"P5" else 3
        data = fh.read(width * height * channels)
    if len(data) != width * height * channels:
        raise ValueError(f"{path}: truncated pixel data")
    flat = np.frombuffer(data, dtype=np.uint8).astype(np.float32)
    if channels == 1:
        return flat.reshape(1, height, width)
    return flat.reshape(height, width, 3).transpose(2, 0, 1).copy()


def write_image(path, image):
    """Write a channel-first array of integral values in [0, 255]."""
    arr = np.asarray(image, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[0] not in (1, 3):
        raise ValueError(f"expected (1,h,w) or (3,h,w), got {arr.shape}")
    if arr.min() < 0 or arr.max() > 255 or not np.array_equal(arr, np.trunc(arr)):
        raise ValueError("image values must be integers in [0, 255]")
    c, h, w = arr.shape
    magic = b"P5" if c == 1 else b"P6"
    if c == 1:
        payload = arr[0].astype(np.uint8).tobytes()
    else:
        payload = arr.transpose(1, 2, 0).astype(np.uint8).tobytes()
    with open(path, "wb") as fh:
        fh.write(magic + b"\n" + f"{w} {h}\n255\n".encode("ascii"))
        fh.write(payload)
