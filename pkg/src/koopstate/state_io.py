"""Hidden-state tensors, readout heads, and the toolkit's on-disk formats.

Array files use a strict subset of the NPY format (version 1.0, little-endian
float32/float64, C order) so states exported from any ML framework load
without conversion code; anything outside the subset is rejected with an
error naming the offending header field.
"""

from __future__ import annotations

import ast
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import NpyFormatError
from .validation import check_real_matrix, check_real_vector, first_nonfinite

NPY_MAGIC = b"\x93NUMPY"
_SUPPORTED_DESCRS = ("<f4", "<f8")
_HEADER_KEYS = {"descr", "fortran_order", "shape"}

READOUT_ARGMAX = "argmax-classifier"
READOUT_SIGMOID = "sigmoid-binary"
READOUT_KINDS = (READOUT_ARGMAX, READOUT_SIGMOID)


@dataclass
class HiddenStateTensor:
    """A batch of hidden-state trajectories: ``data[s, t]`` is a k-vector.

    ``mask`` marks valid steps; when present, the valid steps of every
    sample must form a prefix (padding is trailing).
    """

    data: np.ndarray
    mask: np.ndarray | None = None

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.data, dtype=np.float64))
        if arr.ndim != 3:
            raise ValueError(f"state tensor must be 3-D (s, n, k), got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise ValueError(f"state tensor dimensions must be >= 1, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            idx = first_nonfinite(arr)
            raise ValueError(f"state tensor contains a non-finite entry at index {idx}")
        self.data = arr
        if self.mask is not None:
            m = np.ascontiguousarray(np.asarray(self.mask, dtype=bool))
            if m.shape != arr.shape[:2]:
                raise ValueError(
                    f"mask shape {m.shape} does not match tensor shape {arr.shape[:2]}"
                )
            if not np.all(m[:, 1:] <= m[:, :-1]):
                bad = int(np.flatnonzero(np.any(m[:, 1:] > m[:, :-1], axis=1))[0])
                raise ValueError(f"mask of sample {bad} is not a valid-prefix mask")
            self.mask = m

    @property
    def samples(self) -> int:
        return self.data.shape[0]

    @property
    def timesteps(self) -> int:
        return self.data.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.data.shape[2]

    def valid_lengths(self) -> np.ndarray:
        """Number of valid steps per sample."""
        if self.mask is None:
            return np.full(self.samples, self.timesteps, dtype=np.int64)
        return self.mask.sum(axis=1).astype(np.int64)

    def stacked_valid(self) -> np.ndarray:
        """All valid states as a (rows, k) matrix, sample-major then time."""
        if self.mask is None:
            return self.data.reshape(-1, self.hidden_dim)
        return self.data[self.mask]


@dataclass
class ReadoutHead:
    """The network component mapping a state to output logits and a category."""

    weights: np.ndarray
    bias: np.ndarray
    kind: str

    def __post_init__(self):
        self.weights = check_real_matrix(self.weights, "readout weights")
        self.bias = check_real_vector(self.bias, "readout bias")
        if self.bias.shape[0] != self.weights.shape[1]:
            raise ValueError(
                f"bias length {self.bias.shape[0]} does not match "
                f"{self.weights.shape[1]} output columns"
            )
        if self.weights.shape[1] < 1:
            raise ValueError("readout needs at least one output column")
        if self.kind not in READOUT_KINDS:
            raise ValueError(f"readout kind must be one of {READOUT_KINDS}, got {self.kind!r}")
        if self.kind == READOUT_SIGMOID and self.weights.shape[1] != 1:
            raise ValueError("sigmoid-binary readout requires exactly one output column")


@dataclass
class DatasetManifest:
    """Pointers to the files of one dataset. Paths resolve against ``base_dir``."""

    name: str
    tensor_path: str
    labels_path: str | None = None
    readout_path: tuple[str, str] | None = None  # (weights, bias)
    readout_kind: str | None = None
    lengths_path: str | None = None
    base_dir: Path = field(default_factory=Path)

    def resolve(self, p: str) -> Path:
        path = Path(p)
        return path if path.is_absolute() else self.base_dir / path

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "tensor_path": self.tensor_path,
            "labels_path": self.labels_path,
            "readout_path": list(self.readout_path) if self.readout_path else None,
            "readout_kind": self.readout_kind,
            "lengths_path": self.lengths_path,
        }

    def referenced_paths(self) -> list[Path]:
        out = [self.resolve(self.tensor_path)]
        if self.labels_path:
            out.append(self.resolve(self.labels_path))
        if self.readout_path:
            out.extend(self.resolve(p) for p in self.readout_path)
        if self.lengths_path:
            out.append(self.resolve(self.lengths_path))
        return out


# ---------------------------------------------------------------------------
# NPY subset
# ---------------------------------------------------------------------------


def _write_npy(path, arr: np.ndarray) -> None:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    header = (
        "{'descr': '<f8', 'fortran_order': False, 'shape': "
        f"{_shape_literal(arr.shape)}, }}"
    )
    # magic(6) + version(2) + length(2) + header must be a multiple of 64,
    # with the header space-padded and newline-terminated.
    base = len(NPY_MAGIC) + 2 + 2
    total = base + len(header) + 1
    pad = (64 - total % 64) % 64
    header_bytes = (header + " " * pad + "\n").encode("ascii")
    with open(path, "wb") as fh:
        fh.write(NPY_MAGIC)
        fh.write(bytes((1, 0)))
        fh.write(struct.pack("<H", len(header_bytes)))
        fh.write(header_bytes)
        fh.write(arr.tobytes(order="C"))


def _shape_literal(shape: tuple[int, ...]) -> str:
    if len(shape) == 1:
        return f"({shape[0]},)"
    return "(" + ", ".join(str(d) for d in shape) + ")"


def _read_npy(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(len(NPY_MAGIC))
        if magic != NPY_MAGIC:
            raise NpyFormatError(
                f"{path}: bad magic bytes {magic!r}, expected {NPY_MAGIC!r}", "magic"
            )
        version = fh.read(2)
        if version != bytes((1, 0)):
            got = tuple(version) if len(version) == 2 else version
            raise NpyFormatError(
                f"{path}: unsupported NPY version {got}, only (1, 0) is supported",
                "version",
            )
        raw_len = fh.read(2)
        if len(raw_len) != 2:
            raise NpyFormatError(f"{path}: truncated header length field", "header")
        (header_len,) = struct.unpack("<H", raw_len)
        header_bytes = fh.read(header_len)
        if len(header_bytes) != header_len:
            raise NpyFormatError(f"{path}: truncated header", "header")
        header = _parse_header(path, header_bytes)
        shape = header["shape"]
        descr = header["descr"]
        itemsize = 4 if descr == "<f4" else 8
        count = 1
        for d in shape:
            count *= d
        payload = fh.read(count * itemsize + 1)
        if len(payload) != count * itemsize:
            raise NpyFormatError(
                f"{path}: data payload has {len(payload)} bytes where the header "
                f"declares {count * itemsize}",
                "data",
            )
    arr = np.frombuffer(payload, dtype=np.dtype(descr)).reshape(shape)
    return arr.astype(np.float64)  # widen <f4; also makes a writable copy


def _parse_header(path, header_bytes: bytes) -> dict:
    try:
        text = header_bytes.decode("ascii")
    except UnicodeDecodeError as exc:
        raise NpyFormatError(f"{path}: header is not ASCII: {exc}", "header") from exc
    if not text.endswith("\n"):
        raise NpyFormatError(f"{path}: header is not newline-terminated", "header")
    try:
        parsed = ast.literal_eval(text.strip())
    except (ValueError, SyntaxError) as exc:
        raise NpyFormatError(f"{path}: header is not a literal dict: {exc}", "header") from exc
    if not isinstance(parsed, dict) or set(parsed) != _HEADER_KEYS:
        raise NpyFormatError(
            f"{path}: header keys {sorted(parsed) if isinstance(parsed, dict) else parsed!r} "
            f"differ from {sorted(_HEADER_KEYS)}",
            "header",
        )
    descr = parsed["descr"]
    if descr not in _SUPPORTED_DESCRS:
        raise NpyFormatError(
            f"{path}: dtype descr {descr!r} unsupported, expected one of {_SUPPORTED_DESCRS}",
            "descr",
        )
    if parsed["fortran_order"] is not False:
        raise NpyFormatError(
            f"{path}: fortran_order is {parsed['fortran_order']!r}, only False (C order) "
            "is supported",
            "fortran_order",
        )
    shape = parsed["shape"]
    if (
        not isinstance(shape, tuple)
        or not 1 <= len(shape) <= 3
        or not all(isinstance(d, int) and d >= 0 for d in shape)
    ):
        raise NpyFormatError(
            f"{path}: shape {shape!r} must be a 1-, 2- or 3-tuple of non-negative ints",
            "shape",
        )
    return parsed


def load_tensor(path) -> HiddenStateTensor:
    """Load an (s, n, k) hidden-state tensor from an NPY-subset file."""
    arr = _read_npy(path)
    if arr.ndim != 3:
        raise NpyFormatError(
            f"{path}: expected a 3-D (s, n, k) tensor, file declares shape {arr.shape}",
            "shape",
        )
    if not np.isfinite(arr).all():
        idx = first_nonfinite(arr)
        raise ValueError(f"{path}: non-finite value at index {idx}")
    return HiddenStateTensor(arr)


def save_tensor(tensor: HiddenStateTensor, path) -> None:
    """Write a tensor so that ``load_tensor`` reproduces it bit-exactly."""
    _write_npy(path, tensor.data)


def load_matrix(path) -> np.ndarray:
    arr = _read_npy(path)
    if arr.ndim != 2:
        raise NpyFormatError(
            f"{path}: expected a 2-D matrix, file declares shape {arr.shape}", "shape"
        )
    if not np.isfinite(arr).all():
        idx = first_nonfinite(arr)
        raise ValueError(f"{path}: non-finite value at index {idx}")
    return arr


def save_matrix(matrix, path) -> None:
    _write_npy(path, check_real_matrix(matrix, "matrix"))


def load_vector(path) -> np.ndarray:
    arr = _read_npy(path)
    if arr.ndim != 1:
        raise NpyFormatError(
            f"{path}: expected a 1-D vector, file declares shape {arr.shape}", "shape"
        )
    if not np.isfinite(arr).all():
        idx = first_nonfinite(arr)
        raise ValueError(f"{path}: non-finite value at index {idx}")
    return arr


def save_vector(vector, path) -> None:
    _write_npy(path, check_real_vector(vector, "vector"))


# ---------------------------------------------------------------------------
# Labels, lengths, manifests
# ---------------------------------------------------------------------------


def load_labels(path) -> np.ndarray:
    """One non-negative integer per line; line index is the sample index."""
    labels = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            text = line.strip()
            if not text:
                continue
            try:
                value = int(text)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno + 1}: not an integer: {text!r}") from exc
            if value < 0:
                raise ValueError(f"{path}:{lineno + 1}: labels must be non-negative")
            labels.append(value)
    return np.asarray(labels, dtype=np.int64)


def save_labels(labels, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for value in np.asarray(labels).ravel():
            fh.write(f"{int(value)}\n")


def mask_from_lengths(lengths, timesteps: int) -> np.ndarray:
    """Valid-prefix boolean mask from per-sample valid lengths."""
    lengths = np.asarray(lengths, dtype=np.int64)
    if np.any(lengths < 0) or np.any(lengths > timesteps):
        raise ValueError(f"valid lengths must lie in [0, {timesteps}]")
    return np.arange(timesteps)[None, :] < lengths[:, None]


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: manifest must be a JSON object")
    for key in ("name", "tensor_path"):
        if key not in doc:
            raise ValueError(f"{path}: manifest is missing required field {key!r}")
    readout = doc.get("readout_path")
    if readout is not None:
        if not (isinstance(readout, (list, tuple)) and len(readout) == 2):
            raise ValueError(
                f"{path}: readout_path must be a [weights, bias] pair of paths"
            )
        readout = (str(readout[0]), str(readout[1]))
        kind = doc.get("readout_kind")
        if kind not in READOUT_KINDS:
            raise ValueError(
                f"{path}: readout_kind must be one of {READOUT_KINDS}, got {kind!r}"
            )
    manifest = DatasetManifest(
        name=str(doc["name"]),
        tensor_path=str(doc["tensor_path"]),
        labels_path=None if doc.get("labels_path") is None else str(doc["labels_path"]),
        readout_path=readout,
        readout_kind=doc.get("readout_kind"),
        lengths_path=None if doc.get("lengths_path") is None else str(doc["lengths_path"]),
        base_dir=path.parent,
    )
    for p in manifest.referenced_paths():
        if not p.exists():
            raise FileNotFoundError(f"{path}: referenced file does not exist: {p}")
    return manifest


def save_manifest(manifest: DatasetManifest, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_dataset(
    manifest: DatasetManifest,
) -> tuple[HiddenStateTensor, np.ndarray | None, ReadoutHead | None]:
    """Load and cross-validate everything a manifest points at."""
    tensor = load_tensor(manifest.resolve(manifest.tensor_path))
    if manifest.lengths_path:
        lengths = load_labels(manifest.resolve(manifest.lengths_path))
        mask = mask_from_lengths(lengths, tensor.timesteps)
        tensor = HiddenStateTensor(tensor.data, mask)
    labels = None
    if manifest.labels_path:
        labels = load_labels(manifest.resolve(manifest.labels_path))
        if labels.shape[0] != tensor.samples:
            raise ValueError(
                f"{manifest.labels_path}: {labels.shape[0]} labels for "
                f"{tensor.samples} samples"
            )
    readout = None
    if manifest.readout_path:
        weights = load_matrix(manifest.resolve(manifest.readout_path[0]))
        bias = load_vector(manifest.resolve(manifest.readout_path[1]))
        readout = ReadoutHead(weights, bias, manifest.readout_kind)
        if weights.shape[0] != tensor.hidden_dim:
            raise ValueError(
                f"readout weights expect {weights.shape[0]}-dim states, tensor has "
                f"hidden_dim {tensor.hidden_dim}"
            )
    return tensor, labels, readout


# ---------------------------------------------------------------------------
# Tensor -> matrix operations
# ---------------------------------------------------------------------------


def flatten_valid(
    tensor: HiddenStateTensor, include_padded: bool = False
) -> tuple[np.ndarray, np.ndarray]:
    """Stack all consecutive valid state pairs into (X, Y) with Y one step ahead.

    Pairs straddling the valid/padded boundary are excluded unless
    ``include_padded`` is set, which treats every step as valid (the
    zero-padded fitting convention).
    """
    lengths = (
        np.full(tensor.samples, tensor.timesteps, dtype=np.int64)
        if include_padded
        else tensor.valid_lengths()
    )
    short = np.flatnonzero(lengths < 2)
    if short.size:
        raise ValueError(
            f"sample {int(short[0])} has {int(lengths[short[0]])} valid steps; "
            "at least 2 are required to form a transition pair"
        )
    xs, ys = [], []
    for s in range(tensor.samples):
        n_valid = int(lengths[s])
        xs.append(tensor.data[s, : n_valid - 1])
        ys.append(tensor.data[s, 1:n_valid])
    return np.concatenate(xs, axis=0), np.concatenate(ys, axis=0)


def apply_readout(head: ReadoutHead, states) -> tuple[np.ndarray, np.ndarray]:
    """Logits and predicted categories for each state row.

    Argmax readouts resolve ties toward the lowest index; sigmoid-binary
    readouts predict 1 only for strictly positive logits (logistic > 0.5).
    """
    rows = check_real_matrix(states, "states")
    if rows.shape[1] != head.weights.shape[0]:
        raise ValueError(
            f"states have {rows.shape[1]} features, readout expects "
            f"{head.weights.shape[0]}"
        )
    logits = rows @ head.weights + head.bias
    if head.kind == READOUT_ARGMAX:
        categories = np.argmax(logits, axis=1).astype(np.int64)
    else:
        categories = (logits[:, 0] > 0.0).astype(np.int64)
    return logits, categories
