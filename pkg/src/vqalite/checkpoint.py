"""Binary tensor checkpoints.

Layout, all integers little-endian:

    magic   4 bytes  "VQAC"
    version u32      currently 1
    count   u32      number of tensors
    then per tensor:
      name_len u16, name bytes (UTF-8), rank u8, dims u32 each,
      payload: raw float32 values, C order

Values are stored as float32, which is the training precision, so a
save/load round-trip reproduces evaluation bit for bit.
"""

import struct

import numpy as np

MAGIC = b"VQAC"
VERSION = 1


class CheckpointError(RuntimeError):
    pass


class BadMagicError(CheckpointError):
    pass


class BadVersionError(CheckpointError):
    pass


class TruncatedError(CheckpointError):
    pass


def save_checkpoint(named_tensors, path):
    """named_tensors: iterable of (name, tensor-or-ndarray) pairs."""
    items = [(name, np.asarray(getattr(t, "data", t))) for name, t in named_tensors]
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(items)))
        for name, arr in items:
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read_exact(fh, n, what):
    data = fh.read(n)
    if len(data) != n:
        raise TruncatedError(f"checkpoint ends early while reading {what}")
    return data


def load_checkpoint(path):
    """Returns an ordered dict of name -> float32 ndarray."""
    out = {}
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic bytes")
        if magic != MAGIC:
            raise BadMagicError(f"bad magic {magic!r}; not a checkpoint file")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != VERSION:
            raise BadVersionError(f"unsupported checkpoint version {version}, expected {VERSION}")
        (count,) = struct.unpack("<I", _read_exact(fh, 4, "tensor count"))
        for i in range(count):
            (name_len,) = struct.unpack("<H", _read_exact(fh, 2, f"name length of tensor {i}"))
            name = _read_exact(fh, name_len, f"name of tensor {i}").decode("utf-8")
            (rank,) = struct.unpack("<B", _read_exact(fh, 1, f"rank of {name}"))
            shape = tuple(
                struct.unpack("<I", _read_exact(fh, 4, f"dim {d} of {name}"))[0]
                for d in range(rank)
            )
            n_values = int(np.prod(shape)) if shape else 1
            payload = _read_exact(fh, 4 * n_values, f"values of {name}")
            out[name] = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
        trailing = fh.read(1)
        if trailing:
            raise CheckpointError("trailing bytes after final tensor")
    return out


def save_model(model, path):
    save_checkpoint(model.named_state(), path)


def load_model(model, path):
    """Load a checkpoint into an already-constructed model, strictly."""
    state = load_checkpoint(path)
    for name, t in model.named_state():
        if name not in state:
            raise CheckpointError(f"checkpoint is missing tensor {name!r}")
        arr = state.pop(name)
        if arr.shape != t.data.shape:
            raise CheckpointError(
                f"shape mismatch for {name!r}: checkpoint {arr.shape}, model {t.data.shape}"
            )
        t.data = arr.astype(t.data.dtype)
    if state:
        raise CheckpointError(f"checkpoint has unexpected tensors: {sorted(state)}")
    return model
