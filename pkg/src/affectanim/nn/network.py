"""Sequential network container, the two architectures, and the model file format."""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from affectanim.nn.layers import Dropout, LayerConfig, make_layer

MAGIC = b"AFNN1\n"


class Network:
    """A stack of layers with deterministic initialisation from ``seed``."""

    def __init__(self, layers, input_shape, seed: int = 0, dtype=np.float32, name: str = ""):
        self.configs = [c if isinstance(c, LayerConfig) else LayerConfig.from_dict(c) for c in layers]
        self.input_shape = tuple(int(v) for v in input_shape)
        self.seed = int(seed)
        self.dtype = np.dtype(dtype)
        self.name = name
        self.layers = [make_layer(c) for c in self.configs]
        init_rng = np.random.default_rng([self.seed, 0])
        drop_rng = np.random.default_rng([self.seed, 1])
        shape = self.input_shape
        self.shapes = [shape]
        for layer in self.layers:
            shape = layer.build(shape, init_rng, self.dtype)
            self.shapes.append(shape)
            if isinstance(layer, Dropout):
                layer.rng = drop_rng

    @property
    def output_shape(self) -> tuple:
        return self.shapes[-1]

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        x = np.asarray(x, dtype=self.dtype)
        if x.shape[1:] != self.input_shape:
            raise ValueError(f"{self.name or 'network'}: expected input {self.input_shape}, got {x.shape[1:]}")
        for layer in self.layers:
            x = layer.forward(x, train)
        return x

    __call__ = forward

    def backward(self, dy: np.ndarray, input_grad: bool = True) -> np.ndarray | None:
        """Backpropagate ``dy``; parameter gradients land in each layer's ``grads``."""
        dy = np.asarray(dy, dtype=self.dtype)
        for i in range(len(self.layers) - 1, -1, -1):
            dy = self.layers[i].backward(dy, need_dx=input_grad or i > 0)
        return dy

    def predict(self, x: np.ndarray, batch_size: int = 512) -> np.ndarray:
        x = np.asarray(x)
        if len(x) == 0:
            return np.zeros((0,) + self.output_shape, dtype=self.dtype)
        return np.concatenate([self.forward(x[i : i + batch_size]) for i in range(0, len(x), batch_size)])

    def parameters(self) -> list[np.ndarray]:
        return [layer.params[k] for layer in self.layers for k in sorted(layer.params)]

    def gradients(self) -> list[np.ndarray]:
        return [layer.grads[k] for layer in self.layers for k in sorted(layer.params)]

    def named_parameters(self):
        for i, layer in enumerate(self.layers):
            for k in sorted(layer.params):
                yield f"{i}.{layer.kind}.{k}", layer.params[k]

    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def freeze_dropout(self, frozen: bool = True) -> None:
        """Reuse the last dropout masks on subsequent training passes (for gradient checks)."""
        for layer in self.layers:
            if isinstance(layer, Dropout):
                layer.frozen = frozen

    def header(self) -> dict:
        return {
            "name": self.name,
            "input_shape": list(self.input_shape),
            "seed": self.seed,
            "layers": [c.to_dict() for c in self.configs],
            "params": [{"name": n, "shape": list(p.shape)} for n, p in self.named_parameters()],
        }

    def save(self, path) -> None:
        blob = b"".join(np.ascontiguousarray(p, dtype="<f4").tobytes() for p in self.parameters())
        header = self.header()
        header["dtype"] = "float32"
        header["sha256"] = hashlib.sha256(blob).hexdigest()
        head = json.dumps(header, sort_keys=True).encode()
        Path(path).write_bytes(MAGIC + struct.pack("<Q", len(head)) + head + blob)

    @classmethod
    def load(cls, path, dtype=np.float32) -> "Network":
        raw = Path(path).read_bytes()
        if not raw.startswith(MAGIC):
            raise ValueError(f"{path}: not a model file")
        off = len(MAGIC)
        (n,) = struct.unpack("<Q", raw[off : off + 8])
        header = json.loads(raw[off + 8 : off + 8 + n])
        blob = raw[off + 8 + n :]
        if hashlib.sha256(blob).hexdigest() != header["sha256"]:
            raise ValueError(f"{path}: weight checksum mismatch")
        net = cls(header["layers"], header["input_shape"], header["seed"], dtype, header.get("name", ""))
        flat = np.frombuffer(blob, dtype="<f4")
        pos = 0
        for p in net.parameters():
            p[...] = flat[pos : pos + p.size].reshape(p.shape)
            pos += p.size
        if pos != flat.size:
            raise ValueError(f"{path}: weight blob size does not match the layer list")
        return net


def dern_layers(n_classes: int = 7, widths=(32, 64, 128), fc: int = 256, dropout: float = 0.5):
    c1, c2, c3 = widths
    return [
        LayerConfig("conv", c1, (5, 5)), LayerConfig("relu"),
        LayerConfig("maxpool", filter=(3, 3), stride=(2, 2)),
        LayerConfig("conv", c2, (5, 5)), LayerConfig("relu"),
        LayerConfig("maxpool", filter=(3, 3), stride=(2, 2)),
        LayerConfig("conv", c3, (5, 5)), LayerConfig("relu"),
        LayerConfig("maxpool", filter=(3, 3), stride=(2, 2)),
        LayerConfig("flatten"),
        LayerConfig("fc", fc), LayerConfig("relu"),
        LayerConfig("dropout", rate=dropout),
        LayerConfig("fc", n_classes), LayerConfig("softmax"),
    ]


def dsrn_layers(n_out: int = 90, widths=(32, 64, 128, 128), fc=(1024, 500), dropout: float = 0.5):
    c1, c2, c3, c4 = widths
    f1, f2 = fc
    return [
        LayerConfig("conv", c1, (5, 1)), LayerConfig("relu"),
        LayerConfig("maxpool", filter=(3, 1), stride=(2, 1)),
        LayerConfig("conv", c2, (5, 1)), LayerConfig("relu"),
        LayerConfig("maxpool", filter=(3, 1), stride=(2, 1)),
        LayerConfig("conv", c3, (5, 1)), LayerConfig("relu"),
        LayerConfig("maxpool", filter=(2, 1), stride=(2, 1)),
        LayerConfig("conv", c4, (3, 1)), LayerConfig("relu"),
        LayerConfig("maxpool", filter=(2, 1), stride=(2, 1)),
        LayerConfig("flatten"),
        LayerConfig("fc", f1), LayerConfig("relu"),
        LayerConfig("dropout", rate=dropout),
        LayerConfig("fc", f2), LayerConfig("relu"),
        LayerConfig("dropout", rate=dropout),
        LayerConfig("fc", n_out),
    ]


def build_dern(ka: int = 15, n_mels: int = 40, seed: int = 0, dtype=np.float32, **kw) -> Network:
    return Network(dern_layers(**kw), (n_mels, ka, 1), seed, dtype, name="dern")


def build_dsrn(ka: int = 15, kv: int = 5, n_params: int = 18, n_mels: int = 40, seed: int = 0,
               dtype=np.float32, **kw) -> Network:
    return Network(dsrn_layers(n_out=n_params * kv, **kw), (n_mels, ka, 1), seed, dtype, name="dsrn")
