from dataclasses import dataclass, field
from itertools import product
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from tqdm import tqdm

from mocap_text.config import settings
from mocap_text.core import tensor as T
from mocap_text.core.tensor import GradientTape, Tensor
from mocap_text.exceptions import DatasetError, DimensionError
from mocap_text.models.caption_model import CaptionModel
from mocap_text.models.decoder_model import decode_step, initial_state
from mocap_text.models.params import Parameters, gradients_by_name, watch_all
from mocap_text.models.sample_model import MotionSample, Normalization
from mocap_text.models.vocabulary_model import PAD_ID, SOS_ID, Vocabulary
from mocap_text.schemas.model_schemas import EncoderKind, ModelConfig
from mocap_text.schemas.training_schemas import TeacherForcingMode, TrainingConfig
from mocap_text.services.decoding_service import greedy_decode
from mocap_text.services.metrics_service import bleu4, strip_special
from mocap_text.services.vocabulary_service import tokenize

TrainingPair = Tuple[MotionSample, List[str]]


@dataclass
class AdamState:
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


@dataclass
class TrainingResult:
    model: CaptionModel
    losses: List[float]


def sequence_loss(logits, targets, beta: float = 1.0, lengths=None) -> Tensor:
    """
    Length-normalized cross entropy.

    loss = -(1/B) * sum_b |y_b|^-beta * sum_k log P(y_bk)

    Args:
        logits: (B, L, V), or (L, V) for one sequence
        targets: Token ids (B, L) or (L,); targets end with <eos> and omit <sos>
        beta (float): Length-normalization exponent
        lengths: True target lengths (B,); positions past them are ignored

    Returns:
        Tensor: Scalar loss

    Raises:
        DimensionError: If logits and targets disagree in length
    """
    logits = T.as_tensor(logits)
    targets = np.asarray(targets, dtype=np.int64)
    if logits.ndim == 2:
        logits = T.reshape(logits, (1,) + logits.shape)
        targets = targets.reshape(1, -1)
    if logits.shape[:-1] != targets.shape:
        raise DimensionError(
            f"logits cover {logits.shape[:-1]} positions, targets {targets.shape}"
        )
    batch, steps = targets.shape
    if steps == 0:
        raise DimensionError("sequence_loss needs at least one target token")
    if lengths is None:
        lengths = np.full(batch, steps, dtype=np.int64)
    lengths = np.asarray(lengths, dtype=np.int64)

    mask = np.arange(steps)[None, :] < lengths[:, None]
    weights = mask / (lengths[:, None].astype(np.float64) ** beta) / batch
    picked = T.pick(T.log_softmax(logits), targets)
    return -T.sum(picked * weights)


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> Tuple[Parameters, AdamState]:
    """
    One bias-corrected Adam update.

    Args:
        params (Mapping[str, np.ndarray]): Current values
        grads (Mapping[str, np.ndarray]): Gradients with the same names and shapes
        state (AdamState): Moments from the previous step
        lr (float): Learning rate

    Returns:
        Tuple[Parameters, AdamState]: New values and moments; inputs are not mutated
    """
    step = state.step + 1
    new_params, m, v = {}, {}, {}
    for name, value in params.items():
        g = grads[name]
        if g.shape != value.shape:
            raise DimensionError(f"gradient for {name} has shape {g.shape}, expected {value.shape}")
        m[name] = beta1 * state.m.get(name, np.zeros_like(value)) + (1 - beta1) * g
        v[name] = beta2 * state.v.get(name, np.zeros_like(value)) + (1 - beta2) * g * g
        m_hat = m[name] / (1 - beta1**step)
        v_hat = v[name] / (1 - beta2**step)
        new_params[name] = value - lr * m_hat / (np.sqrt(v_hat) + eps)
    return new_params, AdamState(step=step, m=m, v=v)


def clip_gradients(
    grads: Mapping[str, np.ndarray], max_norm: Optional[float]
) -> Tuple[Parameters, float]:
    """Scale all gradients by one factor so their global L2 norm is at most ``max_norm``"""
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if max_norm is None or norm <= max_norm or norm == 0.0:
        return dict(grads), norm
    scale = max_norm / norm
    return {name: g * scale for name, g in grads.items()}, norm


def pad_targets(token_lists: Sequence[List[int]]) -> Tuple[np.ndarray, np.ndarray]:
    lengths = np.array([len(t) for t in token_lists], dtype=np.int64)
    targets = np.full((len(token_lists), int(lengths.max())), PAD_ID, dtype=np.int64)
    for i, tokens in enumerate(token_lists):
        targets[i, : len(tokens)] = tokens
    return targets, lengths


def forward_loss(
    model: CaptionModel,
    tensors: Mapping[str, Tensor],
    motions: List[np.ndarray],
    targets: np.ndarray,
    lengths: np.ndarray,
    cfg: TrainingConfig,
    rng: np.random.Generator,
) -> Tensor:
    """
    Unroll the decoder over a padded batch with teacher forcing.

    At each step the ground-truth previous token is fed with probability
    ``teacher_forcing_ratio``; otherwise the argmax of the previous logits.
    """
    enc, keys = model.encode(motions, tensors)
    state = initial_state(enc, model.config, tensors)
    batch, steps = targets.shape
    prev = np.full(batch, SOS_ID, dtype=np.int64)
    sequence_coin = rng.random() < cfg.teacher_forcing_ratio

    logits = []
    for t in range(steps):
        out = decode_step(state, prev, enc, keys, tensors, model.config)
        logits.append(out.logits)
        state = out.state
        if cfg.teacher_forcing_mode == TeacherForcingMode.SEQUENCE:
            forced = sequence_coin
        else:
            forced = rng.random() < cfg.teacher_forcing_ratio
        prev = targets[:, t] if forced else np.argmax(out.logits.data, axis=-1)
    return sequence_loss(T.stack(logits, axis=1), targets, cfg.beta, lengths)


def train(
    pairs: Sequence[TrainingPair],
    model: CaptionModel,
    cfg: TrainingConfig,
    on_epoch: Optional[Callable[[int, float], None]] = None,
) -> TrainingResult:
    """
    Fit ``model`` on (motion, tokens) pairs with Adam.

    The seeded generator fixes batch order and teacher-forcing draws, so equal
    seeds and inputs give bitwise-identical loss curves.

    Args:
        pairs (Sequence[TrainingPair]): Training pairs
        model (CaptionModel): Starting point, not mutated
        cfg (TrainingConfig): Optimization settings
        on_epoch (Optional[Callable]): Called with (epoch, mean loss)

    Returns:
        TrainingResult: Trained copy and the per-epoch mean loss

    Raises:
        DatasetError: If ``pairs`` is empty
    """
    if not pairs:
        raise DatasetError("cannot train on an empty dataset")
    model = model.copy()
    rng = np.random.default_rng(cfg.seed)
    encoded = [model.vocabulary.encode(tokens) for _, tokens in pairs]
    adam = AdamState()
    losses: List[float] = []

    epochs = range(cfg.epochs)
    if settings.show_progress:
        epochs = tqdm(epochs, desc="train", unit="epoch")
    for epoch in epochs:
        order = rng.permutation(len(pairs))
        batch_losses = []
        for start in range(0, len(order), cfg.batch_size):
            index = order[start : start + cfg.batch_size]
            targets, lengths = pad_targets([encoded[i] for i in index])
            tape = GradientTape()
            tensors = watch_all(tape, model.params)
            loss = forward_loss(
                model,
                tensors,
                [pairs[i][0].frames for i in index],
                targets,
                lengths,
                cfg,
                rng,
            )
            grads = gradients_by_name(tensors, T.backward(loss))
            grads, norm = clip_gradients(grads, cfg.grad_clip)
            model.params, adam = adam_step(model.params, grads, adam, cfg.learning_rate)
            batch_losses.append(loss.item())
        epoch_loss = float(np.mean(batch_losses))
        losses.append(epoch_loss)
        logger.debug(f"epoch {epoch + 1}/{cfg.epochs} loss={epoch_loss:.6f}")
        if on_epoch is not None:
            on_epoch(epoch, epoch_loss)

    if losses:
        logger.info(f"Trained {cfg.epochs} epochs, final loss {losses[-1]:.6f}")
    return TrainingResult(model=model, losses=losses)


def evaluate_loss(
    pairs: Sequence[TrainingPair], model: CaptionModel, beta: float = 1.0, batch_size: int = 32
) -> float:
    """Mean fully teacher-forced loss without recording a tape"""
    if not pairs:
        raise DatasetError("cannot evaluate on an empty dataset")
    cfg = TrainingConfig(teacher_forcing_ratio=1.0, beta=beta)
    tensors = {name: Tensor(value) for name, value in model.params.items()}
    rng = np.random.default_rng(0)
    totals = []
    for start in range(0, len(pairs), batch_size):
        chunk = pairs[start : start + batch_size]
        targets, lengths = pad_targets([model.vocabulary.encode(t) for _, t in chunk])
        loss = forward_loss(model, tensors, [m.frames for m, _ in chunk], targets, lengths, cfg, rng)
        totals.append(loss.item() * len(chunk))
    return float(sum(totals) / len(pairs))


@dataclass
class GridResult:
    label: str
    model_config: ModelConfig
    final_loss: float
    val_bleu4: Optional[float]


def expand_grid(
    base: ModelConfig,
    layers: Sequence[int] = (2, 4),
    widths: Sequence[int] = (64, 128, 256),
    half_widths: Sequence[int] = (5,),
    masks: Sequence[bool] = (True,),
) -> List[Tuple[str, ModelConfig]]:
    """
    Model configurations of a sequential hyperparameter sweep.

    MLP layer count and width only vary for the MLP encoder; the last MLP
    layer always matches the decoder hidden size.
    """
    mlp = base.encoder.kind == EncoderKind.MLP
    shapes = [(L, d) for L in layers for d in widths] if mlp else [(None, None)]
    configs = []
    for (n_layers, width), half_width, mask in product(shapes, half_widths, masks):
        update = base.model_copy(deep=True)
        label = f"D={half_width} mask={mask}"
        if mlp:
            update.encoder.mlp_layers = n_layers
            update.encoder.mlp_dims = [width] * (n_layers - 1) + [base.decoder.hidden_dim]
            label = f"L={n_layers} d={width} " + label
        update.attention.half_width = half_width
        update.attention.mask = mask
        configs.append((label, ModelConfig.model_validate(update.model_dump())))
    return configs


def run_grid(
    pairs: Sequence[TrainingPair],
    val_samples: Sequence[MotionSample],
    vocabulary: Vocabulary,
    configs: Sequence[Tuple[str, ModelConfig]],
    training: TrainingConfig,
    normalization: Optional[Normalization] = None,
) -> List[GridResult]:
    """Train every configuration in turn and score greedy BLEU@4 on ``val_samples``"""
    results = []
    for label, model_config in configs:
        logger.info(f"Grid run {label}")
        model = CaptionModel.create(model_config, vocabulary, training.seed, normalization)
        trained = train(pairs, model, training)
        bleu = None
        if val_samples:
            predictions = [
                list(strip_special(greedy_decode(trained.model, s.frames).words))
                for s in val_samples
            ]
            references = [[tokenize(d) for d in s.descriptions] for s in val_samples]
            bleu = bleu4(predictions, references)
        final = trained.losses[-1] if trained.losses else float("nan")
        results.append(GridResult(label, model_config, final, bleu))
    return results
