"""Forward-only numeric kernels for box proposal, refinement and the band prior.

Everything here works on normalized coordinates. Box tuples are in center
form ``(xc, yc, w, h)``. Feature grids are ``(H, W, C)`` arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import geometry
from .geometry import BBox, Extent
from .jsonio import read_json, write_json

PROPOSAL_SCALE = 0.05
INITIAL_BOX_SIZE = 0.1
DEFAULT_BANDS = 4
DEFAULT_SIGMA = 0.3
DEFAULT_MU = 0.0
DEFAULT_HIDDEN = 16
NEUTRAL_CORRELATION = 0.5


class LogitDomainError(ValueError):
    """A value handed to the inverse sigmoid was not strictly inside (0, 1)."""


# -- logistic helpers ------------------------------------------------------------


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))


def logit(p):
    p = np.asarray(p, dtype=np.float64)
    _check_open_unit(p)
    return np.log(p) - np.log1p(-p)


def _check_open_unit(p):
    p = np.asarray(p, dtype=np.float64)
    if np.any(~(p > 0.0) | ~(p < 1.0)):
        raise LogitDomainError(f"inverse sigmoid needs values in (0, 1), got {p.tolist()}")


def shift_in_logit_space(p, delta):
    """Compute sigmoid(delta + logit(p)) elementwise.

    Written as p*e^d / (p*e^d + 1 - p) so that delta == 0 returns p exactly.
    """
    p = np.asarray(p, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    _check_open_unit(p)
    p, delta = np.broadcast_arrays(p, delta)
    out = np.empty_like(p)
    pos = delta > 0
    # large positive shifts: divide through by e^d to avoid overflow
    e = np.exp(-delta[pos])
    out[pos] = p[pos] / (p[pos] + (1.0 - p[pos]) * e)
    e = np.exp(delta[~pos])
    num = p[~pos] * e
    out[~pos] = num / (num + (1.0 - p[~pos]))
    return out


# -- deformable attention ----------------------------------------------------


def _sample_pixel(level: np.ndarray, px: float, py: float) -> np.ndarray:
    """Bilinear read at pixel coordinates; neighbours outside the grid count as zero."""
    h, w, c = level.shape
    x0, y0 = math.floor(px), math.floor(py)
    fx, fy = px - x0, py - y0
    out = np.zeros(c, dtype=np.float64)
    for dy, wy in ((0, 1.0 - fy), (1, fy)):
        for dx, wx in ((0, 1.0 - fx), (1, fx)):
            weight = wx * wy
            if weight == 0.0:
                continue
            xi, yi = x0 + dx, y0 + dy
            if 0 <= xi < w and 0 <= yi < h:
                out += weight * level[yi, xi]
    return out


def to_pixel(level_shape, point) -> tuple[float, float]:
    """Map a normalized point onto a level's pixel grid (corner nodes at 0 and 1)."""
    h, w = level_shape[:2]
    return (point[0] * (w - 1), point[1] * (h - 1))


def bilinear_sample(level, point) -> np.ndarray:
    level = np.asarray(level, dtype=np.float64)
    if level.ndim == 2:
        level = level[..., None]
    px, py = to_pixel(level.shape, point)
    return _sample_pixel(level, px, py)


@dataclass
class AttentionSpec:
    """Parameters of one multi-scale deformable attention evaluation.

    ``offsets`` has shape (M, L, K, 2) in pixel units of each level and
    ``logits`` shape (M, L, K). When ``offset_proj``/``logit_proj`` are set,
    both are instead computed as linear maps of the query vector.
    """

    output_proj: np.ndarray  # (M, C_out, C_v)
    value_proj: np.ndarray  # (M, C_v, C)
    offsets: Optional[np.ndarray] = None
    logits: Optional[np.ndarray] = None
    offset_proj: Optional[np.ndarray] = None  # (M*L*K*2, C_q)
    logit_proj: Optional[np.ndarray] = None  # (M*L*K, C_q)
    n_levels: Optional[int] = None
    n_points: Optional[int] = None

    def __post_init__(self):
        self.output_proj = np.asarray(self.output_proj, dtype=np.float64)
        self.value_proj = np.asarray(self.value_proj, dtype=np.float64)
        if self.output_proj.ndim != 3 or self.value_proj.ndim != 3:
            raise ValueError("projections must be stacked per head: (M, rows, cols)")
        if self.output_proj.shape[0] != self.value_proj.shape[0]:
            raise ValueError("output and value projections disagree on head count")
        if self.output_proj.shape[2] != self.value_proj.shape[1]:
            raise ValueError(
                f"output projection expects {self.output_proj.shape[2]} value channels, "
                f"value projection gives {self.value_proj.shape[1]}"
            )

    @property
    def n_heads(self) -> int:
        return self.output_proj.shape[0]

    def sampling(self, query=None):
        """Return (offsets, logits) for the given query."""
        if self.offsets is not None and self.logits is not None:
            return np.asarray(self.offsets, float), np.asarray(self.logits, float)
        if query is None or self.offset_proj is None or self.logit_proj is None:
            raise ValueError("spec has neither fixed offsets/logits nor query projections")
        m, lv, k = self.n_heads, self.n_levels, self.n_points
        q = np.asarray(query, dtype=np.float64)
        offsets = (np.asarray(self.offset_proj) @ q).reshape(m, lv, k, 2)
        logits = (np.asarray(self.logit_proj) @ q).reshape(m, lv, k)
        return offsets, logits


def attention_weights(logits) -> np.ndarray:
    """Softmax over (level, point) separately for each head."""
    logits = np.asarray(logits, dtype=np.float64)
    m = logits.shape[0]
    flat = logits.reshape(m, -1)
    flat = flat - flat.max(axis=1, keepdims=True)
    e = np.exp(flat)
    return (e / e.sum(axis=1, keepdims=True)).reshape(logits.shape)


def ms_deform_attn(query, spec: AttentionSpec, pyramid: Sequence[np.ndarray], ref) -> np.ndarray:
    levels = [np.asarray(lv, dtype=np.float64) for lv in pyramid]
    if not levels:
        raise ValueError("feature pyramid needs at least one level")
    levels = [lv[..., None] if lv.ndim == 2 else lv for lv in levels]
    channels = {lv.shape[-1] for lv in levels}
    if len(channels) != 1:
        raise ValueError(f"pyramid levels disagree on channel count: {sorted(channels)}")
    (c,) = channels
    if spec.value_proj.shape[2] != c:
        raise ValueError(f"value projection expects {spec.value_proj.shape[2]} channels, pyramid has {c}")

    offsets, logits = spec.sampling(query)
    m, n_levels, k = logits.shape
    if m != spec.n_heads or n_levels != len(levels) or offsets.shape != (m, n_levels, k, 2):
        raise ValueError(
            f"sampling shape {offsets.shape}/{logits.shape} does not match "
            f"{spec.n_heads} heads over {len(levels)} levels"
        )
    weights = attention_weights(logits)

    out = np.zeros(spec.output_proj.shape[1])
    for head in range(m):
        acc = np.zeros(c)
        for li, level in enumerate(levels):
            px, py = to_pixel(level.shape, ref)
            for pt in range(k):
                dx, dy = offsets[head, li, pt]
                acc += weights[head, li, pt] * _sample_pixel(level, px + dx, py + dy)
        out += spec.output_proj[head] @ (spec.value_proj[head] @ acc)
    return out


# -- proposals and iterative refinement -----------------------------------------


def gen_proposals(refs, deltas, s: float = PROPOSAL_SCALE) -> list[tuple]:
    """First-stage proposals from reference points.

    ``refs`` holds ``(px, py, level)`` triples with 1-based level; the anchor
    size at level l is 2**(l-1) * s.
    """
    if not 0.0 < s < 1.0:
        raise ValueError("proposal scale must lie in (0, 1)")
    out = []
    for (px, py, level), delta in zip(refs, deltas, strict=True):
        size = s * 2.0 ** (int(level) - 1)
        prior = np.array([px, py, size, size], dtype=np.float64)
        out.append(tuple(float(v) for v in shift_in_logit_space(prior, delta)))
    return out


def refine_box(prev, delta) -> tuple:
    return tuple(float(v) for v in shift_in_logit_space(np.asarray(prev, float), delta))


def initial_box(ref) -> tuple:
    return (float(ref[0]), float(ref[1]), INITIAL_BOX_SIZE, INITIAL_BOX_SIZE)


def refine_iteratively(start, layer_deltas, model: "PriorModel | None" = None) -> list[tuple]:
    """Run the decoder stack: one logit-space update per layer.

    When a prior model is given, its band-weighted offset is added to each
    layer's delta. Returns the box after every layer.
    """
    box = tuple(start)
    history = []
    for delta in layer_deltas:
        delta = np.asarray(delta, dtype=np.float64)
        if model is not None:
            delta = delta + pg_refine(box, model)
        box = refine_box(box, delta)
        history.append(box)
    return history


# -- prior group distribution ----------------------------------------------------


@dataclass
class MLP:
    """4 -> H -> H -> 4 network with ReLU between layers."""

    weights: list  # each (out, in)
    biases: list

    def __post_init__(self):
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in self.biases]
        if len(self.weights) != 3 or len(self.biases) != 3:
            raise ValueError("the prior MLP has exactly three layers")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ValueError(f"layer {i}: weight {w.shape} incompatible with bias {b.shape}")
            if i and w.shape[1] != self.weights[i - 1].shape[0]:
                raise ValueError(f"layer {i} input does not match previous layer output")
        if self.dims[0] != 4 or self.dims[-1] != 4:
            raise ValueError(f"MLP must map 4-vectors to 4-vectors, got dims {self.dims}")

    @property
    def dims(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    def __call__(self, x) -> np.ndarray:
        h = np.asarray(x, dtype=np.float64)
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = w @ h + b
            if i < 2:
                h = np.maximum(h, 0.0)
        return h

    @classmethod
    def random(cls, hidden: int = DEFAULT_HIDDEN, seed: int = 0) -> "MLP":
        rng = np.random.default_rng(seed)
        dims = [4, hidden, hidden, 4]
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            bound = 1.0 / math.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
            biases.append(rng.uniform(-bound, bound, size=fan_out))
        return cls(weights, biases)

    @classmethod
    def zeros(cls, hidden: int = DEFAULT_HIDDEN) -> "MLP":
        dims = [4, hidden, hidden, 4]
        return cls(
            [np.zeros((o, i)) for i, o in zip(dims[:-1], dims[1:])],
            [np.zeros(o) for o in dims[1:]],
        )


@dataclass
class PriorModel:
    matrices: np.ndarray  # (N, 4, 4)
    mlp: MLP
    sigma: float = DEFAULT_SIGMA
    mu: float = DEFAULT_MU
    counts: list = field(default_factory=list)

    def __post_init__(self):
        self.matrices = np.asarray(self.matrices, dtype=np.float64)
        if self.matrices.ndim != 3 or self.matrices.shape[1:] != (4, 4) or len(self.matrices) < 1:
            raise ValueError(f"expected (N, 4, 4) correlation matrices, got {self.matrices.shape}")
        if np.any(self.matrices < 0) or np.any(self.matrices > 1):
            raise ValueError("correlation matrix entries must lie in [0, 1]")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    @property
    def n_bands(self) -> int:
        return self.matrices.shape[0]

    def to_dict(self) -> dict:
        return {
            "n_bands": self.n_bands,
            "sigma": self.sigma,
            "mu": self.mu,
            "matrices": [m.ravel().tolist() for m in self.matrices],
            "mlp": {
                "dims": self.mlp.dims,
                "layers": [
                    {"w": w.ravel().tolist(), "b": b.tolist()}
                    for w, b in zip(self.mlp.weights, self.mlp.biases)
                ],
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PriorModel":
        n = int(data["n_bands"])
        matrices = np.asarray(data["matrices"], dtype=np.float64).reshape(n, 4, 4)
        dims = list(data["mlp"]["dims"])
        layers = data["mlp"]["layers"]
        if len(dims) != 4 or len(layers) != 3:
            raise ValueError("prior MLP needs dims [4, H, H, 4] and three layers")
        weights = [
            np.asarray(layer["w"], dtype=np.float64).reshape(dims[i + 1], dims[i])
            for i, layer in enumerate(layers)
        ]
        biases = [np.asarray(layer["b"], dtype=np.float64) for layer in layers]
        return cls(matrices, MLP(weights, biases), float(data["sigma"]), float(data.get("mu", 0.0)))

    def save(self, path):
        return write_json(path, self.to_dict())

    @classmethod
    def load(cls, path) -> "PriorModel":
        return cls.from_dict(read_json(path))


def assign_band(box, n_bands: int) -> int:
    """Index of the horizontal band holding the box center (half-open bands)."""
    yc = box[1] if isinstance(box, (tuple, list, np.ndarray)) else box.center[1]
    return min(int(math.floor(yc * n_bands)), n_bands - 1)


def band_center(j: int, n_bands: int) -> float:
    return (j + 0.5) / n_bands


def gaussian_density(d: float, sigma: float, mu: float = 0.0) -> float:
    return math.exp(-0.5 * ((d - mu) / sigma) ** 2) / math.sqrt(2.0 * math.pi * sigma**2)


def gaussian_weight(box, j: int, model: PriorModel) -> float:
    """Influence of band ``j`` on a center-form box, from its vertical distance."""
    if not 0 <= j < model.n_bands:
        raise IndexError(f"band {j} outside 0..{model.n_bands - 1}")
    d = abs(box[1] - band_center(j, model.n_bands))
    return gaussian_density(d, model.sigma, model.mu)


def band_weights(box, model: PriorModel) -> np.ndarray:
    return np.array([gaussian_weight(box, j, model) for j in range(model.n_bands)])


def pg_refine(box, model: PriorModel, alphas=None) -> np.ndarray:
    """Band-weighted correction: sum_j alpha_j * MLP(C_j @ b)."""
    b = np.asarray(box, dtype=np.float64)
    if alphas is None:
        alphas = band_weights(b, model)
    alphas = np.asarray(alphas, dtype=np.float64)
    if alphas.shape != (model.n_bands,):
        raise ValueError(f"expected {model.n_bands} band weights, got {alphas.shape}")
    out = np.zeros(4)
    for alpha, mat in zip(alphas, model.matrices):
        out += alpha * model.mlp(mat @ b)
    return out


def pearson_matrix(samples) -> np.ndarray:
    """4x4 Pearson correlation of the columns; undefined entries become 0."""
    x = np.asarray(samples, dtype=np.float64)
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered
    std = np.sqrt(np.diag(cov))
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = cov / np.outer(std, std)
    corr = np.where(np.isfinite(corr), corr, 0.0)
    corr = np.clip((corr + corr.T) / 2.0, -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)
    return corr


def fit_prior(
    corpus,
    n_bands: int = DEFAULT_BANDS,
    sigma: float = DEFAULT_SIGMA,
    mu: float = DEFAULT_MU,
    hidden: int = DEFAULT_HIDDEN,
    seed: int = 0,
) -> PriorModel:
    """Estimate per-band correlation matrices from (screen, boxes) pairs.

    Pearson entries c are mapped to (c + 1) / 2. Bands holding fewer than two
    boxes get the neutral all-0.5 matrix. MLP weights are a seeded random
    initialization; trained weights are loaded from file instead.
    """
    corpus = list(corpus)
    if not corpus:
        raise ValueError("cannot fit a prior on an empty corpus")
    if n_bands < 1:
        raise ValueError("need at least one band")
    members = [[] for _ in range(n_bands)]
    for screen, boxes in corpus:
        for box in boxes:
            cf = geometry.center_form(geometry.normalize(box, screen))
            members[assign_band(cf, n_bands)].append(cf)
    matrices = np.full((n_bands, 4, 4), NEUTRAL_CORRELATION)
    for j, rows in enumerate(members):
        if len(rows) >= 2:
            matrices[j] = (pearson_matrix(rows) + 1.0) / 2.0
    model = PriorModel(matrices, MLP.random(hidden, seed), sigma, mu)
    model.counts = [len(rows) for rows in members]
    return model


def load_corpus(paths) -> list[tuple[Extent, list[BBox]]]:
    corpus = []
    for path in paths:
        det = geometry.load_detections(path)
        corpus.append((det.screen, det.boxes))
    return corpus
