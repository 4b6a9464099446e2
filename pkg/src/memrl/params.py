"""Learnable-parameter registry, Adam, and checkpoint serialization.

A ParameterStore maps hierarchical names to leaf tensors plus per-entry Adam
state. Rollout workers never share a live graph: each takes a value snapshot,
accumulates gradients locally, and a coordinator averages gradients back into
the master store before stepping.
"""

import json
import struct

import numpy as np

from .autodiff import DTYPE, Tensor

_MAGIC = b"MEMRLCK1"


class ParameterStore:
    def __init__(self):
        self._entries = {}
        self._adam_m = {}
        self._adam_v = {}
        self.step_count = 0

    def parameter(self, name, array):
        """Register a learnable array under a unique name."""
        if name in self._entries:
            raise ValueError(f"parameter {name!r} already registered")
        t = Tensor(np.asarray(array, dtype=DTYPE), requires_grad=True)
        self._entries[name] = t
        return t

    def __getitem__(self, name):
        return self._entries[name]

    def __contains__(self, name):
        return name in self._entries

    def names(self):
        return list(self._entries)

    def items(self):
        return self._entries.items()

    def num_values(self):
        return sum(t.data.size for t in self._entries.values())

    def zero_grads(self):
        for t in self._entries.values():
            t.grad = None

    # -- worker contract ----------------------------------------------------

    def snapshot(self):
        """Value copy for a rollout worker; no optimizer state travels."""
        s = ParameterStore()
        for name, t in self._entries.items():
            s.parameter(name, t.data.copy())
        return s

    def sync_values(self, source):
        """Copy values in from another store (same names/shapes)."""
        for name, t in self._entries.items():
            np.copyto(t.data, source._entries[name].data)

    def accumulate_gradients(self, workers):
        """Average worker gradients into this store's grad slots."""
        inv = 1.0 / len(workers)
        for name, t in self._entries.items():
            for w in workers:
                g = w._entries[name].grad
                if g is None:
                    continue
                if t.grad is None:
                    t.grad = np.zeros_like(t.data)
                t.grad += g * inv

    # -- updates -------------------------------------------------------------

    def global_grad_norm(self):
        total = 0.0
        for t in self._entries.values():
            if t.grad is not None:
                total += float((t.grad * t.grad).sum())
        return float(np.sqrt(total))

    def clip_gradients(self, max_norm):
        norm = self.global_grad_norm()
        if norm > max_norm and norm > 0.0:
            f = max_norm / norm
            for t in self._entries.values():
                if t.grad is not None:
                    t.grad *= f
        return norm

    def adam_step(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        """Bias-corrected Adam update; zeroes gradients afterwards.

        A non-finite gradient aborts before any parameter moves.
        """
        for name, t in self._entries.items():
            if t.grad is not None and not np.all(np.isfinite(t.grad)):
                raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
        self.step_count += 1
        c1 = 1.0 - beta1 ** self.step_count
        c2 = 1.0 - beta2 ** self.step_count
        for name, t in self._entries.items():
            g = t.grad
            if g is None:
                g = 0.0
            m = self._adam_m.get(name)
            if m is None:
                m = self._adam_m[name] = np.zeros_like(t.data)
                self._adam_v[name] = np.zeros_like(t.data)
            v = self._adam_v[name]
            m *= beta1
            m += (1.0 - beta1) * g
            v *= beta2
            v += (1.0 - beta2) * np.square(g)
            t.data -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
        self.zero_grads()

    # -- checkpoints -----------------------------------------------------------

    def save(self, path, meta=None):
        save_arrays(path, {n: t.data for n, t in self._entries.items()}, meta)

    def load(self, path):
        """Load a checkpoint, verifying every name and shape both ways."""
        meta, arrays = load_arrays(path)
        missing = set(self._entries) - set(arrays)
        extra = set(arrays) - set(self._entries)
        if missing or extra:
            raise ValueError(f"checkpoint mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for name, arr in arrays.items():
            t = self._entries[name]
            if t.data.shape != arr.shape:
                raise ValueError(
                    f"checkpoint shape mismatch for {name!r}: {arr.shape} vs {t.data.shape}"
                )
            np.copyto(t.data, arr)
        return meta

    def load_partial(self, path):
        """Initialize from the overlapping subset of a checkpoint (used to
        seed a policy run from a pretrained-solver checkpoint). Shapes of
        loaded names are still verified. Returns the loaded names."""
        _, arrays = load_arrays(path)
        loaded = []
        for name, arr in arrays.items():
            if name not in self._entries:
                continue
            t = self._entries[name]
            if t.data.shape != arr.shape:
                raise ValueError(
                    f"checkpoint shape mismatch for {name!r}: {arr.shape} vs {t.data.shape}"
                )
            np.copyto(t.data, arr)
            loaded.append(name)
        return loaded


def save_arrays(path, arrays, meta=None):
    """Manifest (name, shape, dtype, offset) + one little-endian blob."""
    manifest = []
    blobs = []
    offset = 0
    for name, arr in arrays.items():
        raw = np.ascontiguousarray(arr, dtype=DTYPE).astype("<f8").tobytes()
        manifest.append(
            {"name": name, "shape": list(arr.shape), "dtype": "<f8", "offset": offset}
        )
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps({"meta": meta or {}, "params": manifest}).encode()
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<Q", len(header)))
        f.write(header)
        for raw in blobs:
            f.write(raw)


def load_arrays(path):
    with open(path, "rb") as f:
        if f.read(8) != _MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        (hlen,) = struct.unpack("<Q", f.read(8))
        header = json.loads(f.read(hlen).decode())
        blob = f.read()
    arrays = {}
    for ent in header["params"]:
        shape = tuple(ent["shape"])
        n = int(np.prod(shape)) if shape else 1
        start = ent["offset"]
        arr = np.frombuffer(blob, dtype=ent["dtype"], count=n, offset=start)
        arrays[ent["name"]] = arr.reshape(shape).astype(DTYPE)
    return header["meta"], arrays
