"""Synthetic sequence models and dynamics generators.

These make the analysis pipeline verifiable at desk scale: exact linear
dynamics (the one case the operator fit recovers perfectly), a constructed
line-attractor counter network whose first coordinate integrates sentiment
tokens, seeded recurrent cells, and labeled cluster data for separation
metrics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .state_io import (
    READOUT_SIGMOID,
    HiddenStateTensor,
    ReadoutHead,
    apply_readout,
)
from .validation import check_real_matrix

MAX_SPECTRAL_RADIUS = 1.05


@dataclass
class LinearDynamics:
    """Autonomous linear update ``h_next = transition @ h``."""

    transition: np.ndarray

    def __post_init__(self):
        self.transition = check_real_matrix(self.transition, "transition")
        if self.transition.shape[0] != self.transition.shape[1]:
            raise ValueError(f"transition must be square, got {self.transition.shape}")

    @property
    def dim(self) -> int:
        return self.transition.shape[0]

    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.transition))))

    @classmethod
    def random(cls, dim: int, spectral_radius: float, seed: int) -> "LinearDynamics":
        """Seeded dense matrix rescaled to the requested spectral radius."""
        rng = np.random.default_rng(seed)
        matrix = rng.normal(size=(dim, dim))
        radius = np.max(np.abs(np.linalg.eigvals(matrix)))
        if radius == 0.0:
            raise ValueError("drew a nilpotent matrix; use another seed")
        return cls(matrix * (spectral_radius / radius))

    @classmethod
    def rotation_plus_decay(cls, theta: float, decays=()) -> "LinearDynamics":
        """Block matrix: a plane rotation by ``theta`` plus diagonal decay modes."""
        decays = tuple(float(d) for d in decays)
        dim = 2 + len(decays)
        matrix = np.zeros((dim, dim))
        matrix[:2, :2] = [
            [np.cos(theta), -np.sin(theta)],
            [np.sin(theta), np.cos(theta)],
        ]
        for i, d in enumerate(decays):
            matrix[2 + i, 2 + i] = d
        return cls(matrix)


def gen_linear(
    dynamics: LinearDynamics,
    samples: int,
    steps: int,
    noise_rel: float = 0.0,
    seed: int = 0,
    force: bool = False,
    initial_states=None,
) -> HiddenStateTensor:
    """Trajectories of the linear system from seeded unit-norm initial states.

    The initial state is recorded as step 0. Each later step optionally adds
    noise of relative size ``noise_rel`` along a seeded standard-normal
    direction. Spectral radii above 1.05 are refused unless ``force`` is
    set, since such trajectories blow up. ``initial_states`` (samples, k)
    overrides the seeded unit-norm draws.
    """
    if steps < 2:
        raise ValueError(f"steps must be >= 2, got {steps}")
    if noise_rel < 0:
        raise ValueError(f"noise_rel must be >= 0, got {noise_rel}")
    radius = dynamics.spectral_radius()
    if radius > MAX_SPECTRAL_RADIUS and not force:
        raise ValueError(
            f"spectral radius {radius:.4f} exceeds {MAX_SPECTRAL_RADIUS}; "
            "pass force=True to generate unstable trajectories anyway"
        )
    rng = np.random.default_rng(seed)
    k = dynamics.dim
    data = np.zeros((samples, steps, k))
    if initial_states is None:
        initial = rng.normal(size=(samples, k))
        initial /= np.linalg.norm(initial, axis=1, keepdims=True)
    else:
        initial = check_real_matrix(initial_states, "initial_states")
        if initial.shape != (samples, k):
            raise ValueError(
                f"initial_states must have shape ({samples}, {k}), got {initial.shape}"
            )
    data[:, 0] = initial
    for t in range(1, steps):
        nxt = data[:, t - 1] @ dynamics.transition.T
        if noise_rel > 0:
            direction = rng.normal(size=(samples, k))
            direction /= np.linalg.norm(direction, axis=1, keepdims=True)
            nxt = nxt + noise_rel * np.linalg.norm(
                data[:, t - 1], axis=1, keepdims=True
            ) * direction
        data[:, t] = nxt
    return HiddenStateTensor(data)


def gen_labeled_clusters(
    hidden_dim: int,
    samples: int,
    steps: int,
    separation: float = 10.0,
    seed: int = 0,
    contraction: float = 0.9,
    jitter: float = 0.05,
    same_distribution: bool = False,
) -> tuple[HiddenStateTensor, np.ndarray]:
    """Two-class trajectories around class-specific attractor points.

    Class c's states contract toward a fixed point at +-separation/2 along
    the first axis with per-step jitter. ``same_distribution`` collapses
    both attractors to the origin, producing labels carrying no signal (a
    null control).
    """
    if hidden_dim < 1 or samples < 2 or steps < 1:
        raise ValueError("need hidden_dim >= 1, samples >= 2, steps >= 1")
    if not 0.0 <= contraction < 1.0:
        raise ValueError(f"contraction must lie in [0, 1), got {contraction}")
    rng = np.random.default_rng(seed)
    data = np.zeros((samples, steps, hidden_dim))
    labels = np.arange(samples) % 2
    for s in range(samples):
        center = np.zeros(hidden_dim)
        if not same_distribution:
            center[0] = separation / 2 if labels[s] else -separation / 2
        h = center + rng.normal(size=hidden_dim)
        for t in range(steps):
            h = center + contraction * (h - center) + jitter * rng.normal(size=hidden_dim)
            data[s, t] = h
    return HiddenStateTensor(data), labels.astype(np.int64)


# ---------------------------------------------------------------------------
# Counter network (constructed line attractor)
# ---------------------------------------------------------------------------


@dataclass
class TokenVocabulary:
    positive: tuple[str, ...] = ("good", "great", "amazing", "wonderful")
    negative: tuple[str, ...] = ("bad", "awful", "boring", "mess")
    neutral: tuple[str, ...] = ("the", "movie", "plot", "and", "a", "it")

    def __post_init__(self):
        for name in ("positive", "negative", "neutral"):
            tokens = tuple(getattr(self, name))
            if not tokens:
                raise ValueError(f"vocabulary class {name!r} must not be empty")
            setattr(self, name, tokens)
        all_tokens = self.positive + self.negative + self.neutral
        if len(set(all_tokens)) != len(all_tokens):
            raise ValueError("vocabulary classes must not share tokens")

    @property
    def tokens(self) -> tuple[str, ...]:
        return self.positive + self.negative + self.neutral


DEFAULT_VOCAB = TokenVocabulary()


@dataclass
class CounterRnn:
    """Linear recurrent net whose first coordinate counts sentiment tokens.

    The transition is diag(1, decay, ..., decay): coordinate 0 is a perfect
    integrator (a line attractor direction), every other coordinate decays.
    """

    hidden_dim: int
    decay: float
    vocab: TokenVocabulary
    token_index: dict[str, int]
    input_weights: np.ndarray  # (k, m)
    transition: np.ndarray  # (k, k) diagonal
    readout: ReadoutHead

    def run(self, streams) -> HiddenStateTensor:
        """States for each token stream; the zero initial state is not recorded."""
        streams = [list(stream) for stream in streams]
        if not streams:
            raise ValueError("need at least one token stream")
        length = len(streams[0])
        if length < 1 or any(len(s) != length for s in streams):
            raise ValueError("all token streams must share one positive length")
        data = np.zeros((len(streams), length, self.hidden_dim))
        for i, stream in enumerate(streams):
            h = np.zeros(self.hidden_dim)
            for t, token in enumerate(stream):
                if token not in self.token_index:
                    raise ValueError(f"unknown token {token!r}")
                h = self.transition @ h + self.input_weights[:, self.token_index[token]]
                data[i, t] = h
        return HiddenStateTensor(data)

    def categories(self, tensor: HiddenStateTensor) -> np.ndarray:
        """Readout categories for every (sample, step) state, flattened."""
        _, cats = apply_readout(self.readout, tensor.data.reshape(-1, self.hidden_dim))
        return cats.reshape(tensor.samples, tensor.timesteps)


def build_counter_rnn(
    hidden_dim: int,
    decay: float = 0.5,
    vocab: TokenVocabulary = DEFAULT_VOCAB,
    seed: int = 0,
) -> CounterRnn:
    """Construct the counter network analytically (nothing is trained).

    Positive tokens add +1 to coordinate 0, negative tokens -1; neutral
    tokens inject seeded vectors of magnitude < 0.1 into the decaying
    coordinates. The readout is the sign of coordinate 0 (sigmoid-binary).
    """
    if hidden_dim < 2:
        raise ValueError(f"hidden_dim must be >= 2, got {hidden_dim}")
    if not 0.0 < decay < 1.0:
        raise ValueError(f"decay must lie in (0, 1), got {decay}")
    rng = np.random.default_rng(seed)
    tokens = vocab.tokens
    token_index = {tok: i for i, tok in enumerate(tokens)}
    weights = np.zeros((hidden_dim, len(tokens)))
    for tok in vocab.positive:
        weights[0, token_index[tok]] = 1.0
    for tok in vocab.negative:
        weights[0, token_index[tok]] = -1.0
    for tok in vocab.neutral:
        direction = rng.normal(size=hidden_dim - 1)
        direction /= np.linalg.norm(direction)
        weights[1:, token_index[tok]] = rng.uniform(0.02, 0.09) * direction
    transition = np.diag([1.0] + [decay] * (hidden_dim - 1))
    readout_weights = np.zeros((hidden_dim, 1))
    readout_weights[0, 0] = 1.0
    readout = ReadoutHead(readout_weights, np.zeros(1), READOUT_SIGMOID)
    return CounterRnn(
        hidden_dim=hidden_dim,
        decay=decay,
        vocab=vocab,
        token_index=token_index,
        input_weights=weights,
        transition=transition,
        readout=readout,
    )


def sample_token_streams(
    vocab: TokenVocabulary,
    samples: int,
    length: int,
    seed: int = 0,
    neutral_prob: float = 0.5,
    bias_strength: float = 0.3,
) -> list[list[str]]:
    """Seeded token streams with a per-sample net sentiment.

    Each stream draws a sentiment bias of +-``bias_strength``; sentiment
    tokens are then positive with probability 0.5 + bias. The drift keeps
    each stream's counter away from the decision boundary, mirroring
    documents with a definite overall sentiment.
    """
    if not 0.0 <= neutral_prob < 1.0:
        raise ValueError(f"neutral_prob must lie in [0, 1), got {neutral_prob}")
    if not 0.0 <= bias_strength <= 0.5:
        raise ValueError(f"bias_strength must lie in [0, 0.5], got {bias_strength}")
    rng = np.random.default_rng(seed)
    streams = []
    for _ in range(samples):
        p_pos = 0.5 + rng.choice([-1.0, 1.0]) * bias_strength
        stream = []
        for _ in range(length):
            if rng.uniform() < neutral_prob:
                stream.append(vocab.neutral[rng.integers(len(vocab.neutral))])
            elif rng.uniform() < p_pos:
                stream.append(vocab.positive[rng.integers(len(vocab.positive))])
            else:
                stream.append(vocab.negative[rng.integers(len(vocab.negative))])
        streams.append(stream)
    return streams


# ---------------------------------------------------------------------------
# Seeded recurrent cells
# ---------------------------------------------------------------------------

CELL_ELMAN = "elman-tanh"
CELL_GRU = "gru"
CELL_KINDS = (CELL_ELMAN, CELL_GRU)

_ELMAN_WEIGHTS = ("w", "w_in", "b")
_GRU_WEIGHTS = ("w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_h", "u_h", "b_h")


def _weight_shape(name: str, hidden_dim: int, input_dim: int) -> tuple[int, ...]:
    if name.startswith("b"):
        return (hidden_dim,)
    if name.startswith("u") or name == "w_in":
        return (hidden_dim, input_dim)
    return (hidden_dim, hidden_dim)


@dataclass
class RecurrentCell:
    """A standard recurrent cell with an explicit, seeded weight set.

    Elman weights: w (k, k), w_in (k, m), b (k,). GRU weights: per gate
    g in {z, r, h}: w_g (k, k) recurrent, u_g (k, m) input, b_g (k,);
    the reset gate multiplies the hidden state inside the candidate's
    recurrent term.
    """

    kind: str
    input_dim: int
    hidden_dim: int
    weights: dict[str, np.ndarray] = field(repr=False)

    def __post_init__(self):
        if self.kind not in CELL_KINDS:
            raise ValueError(f"cell kind must be one of {CELL_KINDS}, got {self.kind!r}")
        expected = _ELMAN_WEIGHTS if self.kind == CELL_ELMAN else _GRU_WEIGHTS
        if set(self.weights) != set(expected):
            raise ValueError(f"{self.kind} cell needs weights {expected}")
        for name, arr in self.weights.items():
            arr = np.asarray(arr, dtype=np.float64)
            shape = _weight_shape(name, self.hidden_dim, self.input_dim)
            if arr.shape != shape:
                raise ValueError(f"weight {name!r} must have shape {shape}, got {arr.shape}")
            self.weights[name] = arr

    @classmethod
    def seeded(cls, kind: str, input_dim: int, hidden_dim: int, seed: int) -> "RecurrentCell":
        """Uniform(-1/sqrt(k), 1/sqrt(k)) weights from one seed."""
        if kind not in CELL_KINDS:
            raise ValueError(f"cell kind must be one of {CELL_KINDS}, got {kind!r}")
        rng = np.random.default_rng(seed)
        scale = 1.0 / np.sqrt(hidden_dim)
        names = _ELMAN_WEIGHTS if kind == CELL_ELMAN else _GRU_WEIGHTS
        weights = {
            name: rng.uniform(-scale, scale, size=_weight_shape(name, hidden_dim, input_dim))
            for name in names
        }
        return cls(kind=kind, input_dim=input_dim, hidden_dim=hidden_dim, weights=weights)


def _logistic(x):
    return 1.0 / (1.0 + np.exp(-x))


def run_cell(cell: RecurrentCell, inputs) -> HiddenStateTensor:
    """Forward pass over an (s, n, m) input array, starting from the zero state."""
    arr = np.asarray(inputs, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"inputs must be 3-D (s, n, m), got shape {arr.shape}")
    if arr.shape[2] != cell.input_dim:
        raise ValueError(
            f"inputs have {arr.shape[2]} features, cell expects {cell.input_dim}"
        )
    s, n, _ = arr.shape
    w = cell.weights
    data = np.zeros((s, n, cell.hidden_dim))
    h = np.zeros((s, cell.hidden_dim))
    for t in range(n):
        x = arr[:, t, :]
        if cell.kind == CELL_ELMAN:
            h = np.tanh(h @ w["w"].T + x @ w["w_in"].T + w["b"])
        else:
            z = _logistic(h @ w["w_z"].T + x @ w["u_z"].T + w["b_z"])
            r = _logistic(h @ w["w_r"].T + x @ w["u_r"].T + w["b_r"])
            candidate = np.tanh((r * h) @ w["w_h"].T + x @ w["u_h"].T + w["b_h"])
            h = z * h + (1.0 - z) * candidate
        data[:, t] = h
    return HiddenStateTensor(data)


def linear_decoder(states, decoder) -> np.ndarray:
    """Decode state rows into output signals: ``states @ decoder``."""
    rows = check_real_matrix(states, "states")
    dec = check_real_matrix(decoder, "decoder")
    if rows.shape[1] != dec.shape[0]:
        raise ValueError(
            f"states have {rows.shape[1]} features, decoder expects {dec.shape[0]}"
        )
    return rows @ dec
