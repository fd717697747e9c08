"""Listener-behavior generation: codebook, quantizer, and predictor.

The predictor is a desk-scale stand-in for a learned model, built from
seeded linear maps so that every run is a pure function of (dims, seed,
rng state): mean-pooled FLAME and mel windows plus the mean embedding of
the listener's own recent codes are concatenated and projected to K
logits; a code is sampled from softmax(logits / tau) and decoded to w_out
frame vectors. The codebook doubles as the code-embedding table, and past
frames are re-encoded to codes through a small encoder projection, one
code per w_out frames.

Codebook training is Lloyd's algorithm with empty (or duplicate) clusters
re-seeded to the farthest point, which keeps the per-iteration error
non-increasing.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .config import PipelineConfig
from .errors import ContractError, FormatError, NumericError
from .fusion import FusionWindow

MODEL_MAGIC = b"L2L1"

# decoder weights are kept small so decoded rotation components stay far
# inside the (-pi, pi) frame contract
DECODER_SCALE = 0.1


@dataclass(frozen=True)
class Codebook:
    """K reference vectors; index = code."""

    entries: np.ndarray  # (K, code_dim) float32
    training_errors: tuple[float, ...] = ()

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=np.float32)
        if entries.ndim != 2 or entries.shape[0] < 1:
            raise ContractError(f"codebook needs a (K, code_dim) matrix, got {entries.shape}")
        if not np.isfinite(entries).all():
            raise NumericError("codebook entries must be finite")
        object.__setattr__(self, "entries", entries)

    @property
    def K(self) -> int:
        return self.entries.shape[0]

    @property
    def code_dim(self) -> int:
        return self.entries.shape[1]


def quantize(x: np.ndarray, cb: Codebook) -> int:
    """Index of the nearest entry (Euclidean); ties go to the lowest index."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (cb.code_dim,):
        raise ContractError(f"vector shape {x.shape} != (code_dim={cb.code_dim},)")
    d2 = ((cb.entries.astype(np.float64) - x) ** 2).sum(axis=1)
    return int(np.argmin(d2))


def _assign(data: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(labels, squared distance to own centroid) for every data row."""
    # |a-b|^2 expansion keeps memory at (N, K) instead of (N, K, dim)
    d2 = (
        (data**2).sum(axis=1)[:, None]
        - 2.0 * data @ centroids.T
        + (centroids**2).sum(axis=1)[None, :]
    )
    np.maximum(d2, 0.0, out=d2)
    labels = d2.argmin(axis=1)
    return labels, d2[np.arange(len(data)), labels]


def train_codebook(
    data: np.ndarray, K: int, max_iters: int = 50, seed: int = 0
) -> Codebook:
    """Lloyd iterations over data rows; needs at least K samples.

    Stops when assignments stabilize or after max_iters. The recorded
    error sequence (total squared quantization error after each
    iteration) is non-increasing.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise ContractError("training data must be a (N, code_dim) matrix")
    if len(data) < K:
        raise ContractError(f"need at least K={K} samples, got {len(data)}")
    rng = np.random.default_rng(seed)
    centroids = data[rng.choice(len(data), size=K, replace=False)].copy()

    errors: list[float] = []
    labels = None
    for _ in range(max_iters):
        new_labels, d2 = _assign(data, centroids)
        for k in range(K):
            members = new_labels == k
            if members.any():
                centroids[k] = data[members].mean(axis=0)
        # empty or duplicate clusters grab the farthest point: its distance
        # drops to zero and nobody else gets worse, so error stays monotone
        _, seen = np.unique(centroids, axis=0, return_index=True)
        duplicates = set(range(K)) - set(seen.tolist())
        empties = set(range(K)) - set(np.unique(new_labels).tolist())
        relabels, d2 = _assign(data, centroids)
        for k in sorted(empties | duplicates):
            centroids[k] = data[d2.argmax()]
            relabels, d2 = _assign(data, centroids)
        errors.append(float(d2.sum()))
        if labels is not None and np.array_equal(relabels, labels):
            break
        labels = relabels
    return Codebook(entries=centroids.astype(np.float32), training_errors=tuple(errors))


@dataclass(frozen=True)
class PredictorModel:
    """Seeded linear predictor; the codebook is also the embedding table."""

    flame_map: np.ndarray  # (frame_dim, code_dim)
    mel_map: np.ndarray  # (l, code_dim)
    encoder_map: np.ndarray  # (w_out * frame_dim, code_dim)
    codebook: Codebook  # (K, code_dim)
    logits_map: np.ndarray  # (3 * code_dim, K)
    decoder_map: np.ndarray  # (code_dim, w_out * frame_dim)
    expr_dim: int
    l: int
    w_out: int
    tau: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for name in ("flame_map", "mel_map", "encoder_map", "logits_map", "decoder_map"):
            arr = np.asarray(getattr(self, name), dtype=np.float32)
            if not np.isfinite(arr).all():
                raise NumericError(f"{name} contains non-finite values")
            object.__setattr__(self, name, arr)
        if self.tau <= 0:
            raise ContractError(f"tau must be positive, got {self.tau}")
        cd = self.codebook.code_dim
        frame_dim = self.expr_dim + 6
        expected = {
            "flame_map": (frame_dim, cd),
            "mel_map": (self.l, cd),
            "encoder_map": (self.w_out * frame_dim, cd),
            "logits_map": (3 * cd, self.codebook.K),
            "decoder_map": (cd, self.w_out * frame_dim),
        }
        for name, shape in expected.items():
            got = getattr(self, name).shape
            if got != shape:
                raise ContractError(f"{name} shape {got}, expected {shape}")

    @property
    def frame_dim(self) -> int:
        return self.expr_dim + 6

    @property
    def K(self) -> int:
        return self.codebook.K

    @property
    def code_dim(self) -> int:
        return self.codebook.code_dim

    @classmethod
    def build(
        cls,
        cfg: PipelineConfig,
        seed: int | None = None,
        codebook: Codebook | None = None,
        tau: float = 1.0,
    ) -> "PredictorModel":
        """Deterministic construction from config dims and a seed."""
        seed = cfg.seed if seed is None else seed
        if cfg.t_history % cfg.w_out != 0:
            raise ContractError(
                f"t_history={cfg.t_history} must be a multiple of w_out={cfg.w_out}"
            )
        rng = np.random.default_rng(seed)
        frame_dim = cfg.frame_dim
        cd = cfg.code_dim

        def mat(rows, cols, scale):
            return (rng.standard_normal((rows, cols)) * scale).astype(np.float32)

        flame_map = mat(frame_dim, cd, 1.0 / np.sqrt(frame_dim))
        mel_map = mat(cfg.l, cd, 1.0 / np.sqrt(cfg.l))
        encoder_map = mat(cfg.w_out * frame_dim, cd, 1.0 / np.sqrt(cfg.w_out * frame_dim))
        cb = codebook or Codebook(entries=rng.standard_normal((cfg.K, cd)).astype(np.float32))
        logits_map = mat(3 * cd, cb.K, 1.0 / np.sqrt(3 * cd))
        decoder_map = mat(cd, cfg.w_out * frame_dim, DECODER_SCALE / np.sqrt(cd))
        return cls(
            flame_map=flame_map,
            mel_map=mel_map,
            encoder_map=encoder_map,
            codebook=cb,
            logits_map=logits_map,
            decoder_map=decoder_map,
            expr_dim=cfg.expr_dim,
            l=cfg.l,
            w_out=cfg.w_out,
            tau=tau,
            seed=seed,
        )


def softmax(logits: np.ndarray, tau: float = 1.0) -> np.ndarray:
    """Numerically stable softmax over logits / tau, computed in float64."""
    z = np.asarray(logits, dtype=np.float64) / tau
    z -= z.max()
    e = np.exp(z)
    return e / e.sum()


@dataclass(frozen=True)
class PredictStep:
    code_index: int
    frames: np.ndarray  # (w_out, frame_dim) float32
    logits: np.ndarray  # (K,) float32
    probs: np.ndarray  # (K,) float64


def encode_history(model: PredictorModel, listener_past: np.ndarray) -> np.ndarray:
    """Mean embedding of the codes for each w_out-frame group of history."""
    t_history = listener_past.shape[0]
    if t_history % model.w_out != 0:
        raise ContractError(
            f"history length {t_history} not a multiple of w_out={model.w_out}"
        )
    groups = listener_past.reshape(t_history // model.w_out, model.w_out * model.frame_dim)
    embedded = np.empty((len(groups), model.code_dim), dtype=np.float32)
    for g, row in enumerate(groups):
        idx = quantize(row @ model.encoder_map, model.codebook)
        embedded[g] = model.codebook.entries[idx]
    return embedded.mean(axis=0)


def predict_step(
    model: PredictorModel,
    window: FusionWindow,
    rng: np.random.Generator | None = None,
    greedy: bool = False,
) -> PredictStep:
    """One autoregressive step: sample a code, decode w_out frame vectors.

    greedy=True takes argmax(logits) and never touches the rng (the tau
    to zero limit); otherwise exactly one rng.random() draw is consumed.
    """
    if window.speaker_flame.shape[1] != model.frame_dim:
        raise ContractError(
            f"window frame dim {window.speaker_flame.shape[1]} != model {model.frame_dim}"
        )
    if window.speaker_mel.shape[1] != model.l:
        raise ContractError(f"window mel dim {window.speaker_mel.shape[1]} != model {model.l}")

    flame_ctx = window.speaker_flame.mean(axis=0) @ model.flame_map
    mel_ctx = window.speaker_mel.mean(axis=0) @ model.mel_map
    past_ctx = encode_history(model, window.listener_past)
    fused = np.concatenate([flame_ctx, mel_ctx, past_ctx])
    logits = fused @ model.logits_map
    if not np.isfinite(logits).all():
        raise NumericError("non-finite logits")

    probs = softmax(logits, model.tau)
    if greedy:
        index = int(np.argmax(logits))
    else:
        if rng is None:
            raise ContractError("sampling requires an rng (or pass greedy=True)")
        u = rng.random()
        index = int(min(np.searchsorted(np.cumsum(probs), u, side="right"), model.K - 1))

    decoded = model.codebook.entries[index] @ model.decoder_map
    frames = decoded.reshape(model.w_out, model.frame_dim)
    return PredictStep(code_index=index, frames=frames, logits=logits, probs=probs)


def generate(
    model: PredictorModel,
    window_stream,
    n_steps: int,
    history_q=None,
    rng: np.random.Generator | None = None,
    greedy: bool = False,
) -> np.ndarray:
    """Run n_steps predictions; returns (n_steps * w_out, frame_dim).

    window_stream yields one FusionWindow per step. When a history queue
    is given, each step's outputs are pushed into it before the next
    window is drawn, closing the autoregressive loop.
    """
    from .fusion import push_history

    outputs = np.zeros((n_steps * model.w_out, model.frame_dim), dtype=np.float32)
    it = iter(window_stream)
    for step in range(n_steps):
        window = next(it)
        result = predict_step(model, window, rng=rng, greedy=greedy)
        outputs[step * model.w_out : (step + 1) * model.w_out] = result.frames
        if history_q is not None:
            push_history(history_q, result.frames)
    return outputs


def l2_loss(pred: np.ndarray, gt: np.ndarray) -> float:
    """Sum over frames of squared Euclidean distance, divided by frame count."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ContractError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    if pred.ndim != 2 or len(pred) == 0:
        raise ContractError("need non-empty (N, dim) frame matrices")
    return float(((pred - gt) ** 2).sum() / len(pred))


# ---------------------------------------------------------------------------
# Weight file: magic L2L1; u32 expr_dim, l, K, code_dim, w_out; f32 tau;
# then f32 blocks in this order: flame_map, mel_map, encoder_map,
# codebook entries, logits_map, decoder_map. Row-major, little-endian.

_MODEL_HEADER = struct.Struct("<4sIIIIIf")


def save_model(path: str, model: PredictorModel) -> None:
    with open(path, "wb") as fh:
        fh.write(
            _MODEL_HEADER.pack(
                MODEL_MAGIC,
                model.expr_dim,
                model.l,
                model.K,
                model.code_dim,
                model.w_out,
                model.tau,
            )
        )
        for block in (
            model.flame_map,
            model.mel_map,
            model.encoder_map,
            model.codebook.entries,
            model.logits_map,
            model.decoder_map,
        ):
            fh.write(np.ascontiguousarray(block, dtype="<f4").tobytes())


def load_model(path: str) -> PredictorModel:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _MODEL_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, expr_dim, l, K, code_dim, w_out, tau = _MODEL_HEADER.unpack_from(data, 0)
    if magic != MODEL_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    frame_dim = expr_dim + 6
    shapes = [
        (frame_dim, code_dim),
        (l, code_dim),
        (w_out * frame_dim, code_dim),
        (K, code_dim),
        (3 * code_dim, K),
        (code_dim, w_out * frame_dim),
    ]
    expected = _MODEL_HEADER.size + 4 * sum(r * c for r, c in shapes)
    if len(data) != expected:
        raise FormatError(
            f"{path}: size {len(data)} does not match header (expected {expected})"
        )
    blocks = []
    off = _MODEL_HEADER.size
    for rows, cols in shapes:
        count = rows * cols
        blocks.append(
            np.frombuffer(data, dtype="<f4", count=count, offset=off).reshape(rows, cols).copy()
        )
        off += 4 * count
    flame_map, mel_map, encoder_map, cb_entries, logits_map, decoder_map = blocks
    return PredictorModel(
        flame_map=flame_map,
        mel_map=mel_map,
        encoder_map=encoder_map,
        codebook=Codebook(entries=cb_entries),
        logits_map=logits_map,
        decoder_map=decoder_map,
        expr_dim=expr_dim,
        l=l,
        w_out=w_out,
        tau=tau,
    )
