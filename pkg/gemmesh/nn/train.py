"""L1 regression training with Adam, seeded splits and best-validation retention."""
import copy
import logging
from typing import Optional, Sequence

import numpy as np
import torch
from scipy.spatial.transform import Rotation

from gemmesh.config import RunConfig, parse_run_config
from gemmesh.constants import TEST, TRAIN, VALIDATION
from gemmesh.errors import ConfigInvalidError, NonFiniteError
from gemmesh.nn.checkpoint import Checkpoint
from gemmesh.nn.data import Sample, collate, collate_labels, rotate_context
from gemmesh.nn.metrics import metrics
from gemmesh.nn.model import MeshUNet


def split_indices(n: int, fractions: Sequence[float], seed: int) -> dict:
    """Seeded shuffle of range(n) cut into train/val/test index lists (each sorted)."""
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(round(fractions[0] * n))
    n_val = min(int(round(fractions[1] * n)), n - n_train)
    return {
        TRAIN: sorted(order[:n_train].tolist()),
        VALIDATION: sorted(order[n_train : n_train + n_val].tolist()),
        TEST: sorted(order[n_train + n_val :].tolist()),
    }


def l1_loss(pred: torch.Tensor, label: torch.Tensor) -> torch.Tensor:
    """Mean absolute error over vertices, time steps and channels."""
    return torch.mean(torch.abs(pred - label))


def rotate_label(label: np.ndarray, rotation: np.ndarray) -> np.ndarray:
    return label @ rotation.T if label.shape[-1] == 3 else label


def gradients(model: torch.nn.Module, batch, labels: torch.Tensor) -> tuple:
    """Back-propagate the L1 loss of one batch.

    Raises:
        NonFiniteError: The loss or any parameter gradient is NaN or infinite.

    Returns:
        tuple: (loss tensor, prediction tensor, dict of parameter name to gradient)
    """
    model.zero_grad(set_to_none=True)
    pred = model(batch)
    loss = l1_loss(pred, labels)
    if not torch.isfinite(loss):
        raise NonFiniteError(f"loss is {loss.item()}")
    loss.backward()
    grads = {}
    for name, param in model.named_parameters():
        grad = torch.zeros_like(param) if param.grad is None else param.grad
        if not torch.isfinite(grad).all():
            raise NonFiniteError(f"gradient of {name} is not finite")
        grads[name] = grad
    return loss, pred, grads


def predict(model: torch.nn.Module, contexts: Sequence, config, batch_size: int) -> list:
    """Evaluation-mode predictions as (V, T, C) numpy arrays, one per mesh context."""
    model.eval()
    preds = []
    with torch.no_grad():
        for start in range(0, len(contexts), batch_size):
            batch = collate(list(contexts[start : start + batch_size]), config)
            preds.extend(p.numpy() for p in batch.split(model(batch)))
    return preds


def _evaluate(model, samples, config, batch_size) -> dict:
    preds = predict(model, [s.context for s in samples], config, batch_size)
    labels = [s.label for s in samples]
    loss = float(np.mean([np.abs(p - lab).mean() for p, lab in zip(preds, labels)]))
    _, summary = metrics(preds, labels)
    return {"loss": loss, "nmae": summary["nmae"]["mean"], "eps": summary["eps"]["mean"]}


def _snapshot(
    model, run: RunConfig, history, epoch, extra, optimizer=None, rng=None
) -> Checkpoint:
    return Checkpoint(
        config=run.model_dump(mode="json"),
        model_state=copy.deepcopy(model.state_dict()),
        optimizer_state=None if optimizer is None else copy.deepcopy(optimizer.state_dict()),
        rng_state={} if rng is None else {"numpy": rng.bit_generator.state},
        history=list(history),
        epoch=epoch,
        extra=dict(extra),
    )


def train(
    model: torch.nn.Module,
    samples: Sequence[Sample],
    run: RunConfig,
    epochs: Optional[int] = None,
) -> Checkpoint:
    """Fit `model` to the training split and keep the best validation weights.

    Args:
        model (torch.nn.Module): A model built from run.model.
        samples (list): Prepared samples, split by a seeded shuffle.
        run (RunConfig): Model and training configuration.
        epochs (int, optional): Overrides run.train.epochs.

    Raises:
        NonFiniteError: A loss or gradient became non-finite; carries the last good checkpoint.

    Returns:
        Checkpoint: Best-validation weights, final optimizer state and the metric history.
    """
    cfg, model_cfg = run.train, run.model
    epochs = cfg.epochs if epochs is None else epochs
    splits = split_indices(len(samples), cfg.split, cfg.seed)
    train_ids = splits[TRAIN][: cfg.train_size] if cfg.train_size else splits[TRAIN]
    if not train_ids:
        raise ConfigInvalidError(f"the training split of {len(samples)} samples is empty")
    val_ids = splits[VALIDATION]
    logging.info(
        f"Training on {len(train_ids)} samples, validating on {len(val_ids)}, "
        f"holding out {len(splits[TEST])}"
    )
    extra = {"splits": splits, "train_ids": train_ids, "best_epoch": 0}

    rng = np.random.default_rng(cfg.seed)
    optimizer = torch.optim.Adam(
        model.parameters(), lr=cfg.learning_rate, betas=tuple(cfg.betas), eps=cfg.eps
    )
    history = []
    best_loss = np.inf
    best = _snapshot(model, run, history, 0, extra)
    for epoch in range(1, epochs + 1):
        model.train()
        order = rng.permutation(train_ids)
        losses, preds, labels = [], [], []
        for start in range(0, len(order), cfg.batch_size):
            chunk = [samples[i] for i in order[start : start + cfg.batch_size]]
            contexts = [s.context for s in chunk]
            targets = [s.label for s in chunk]
            if cfg.augment_rotations:
                rotations = [Rotation.random(None, rng).as_matrix() for _ in chunk]
                contexts = [rotate_context(c, r) for c, r in zip(contexts, rotations)]
                targets = [rotate_label(t, r) for t, r in zip(targets, rotations)]
            batch = collate(contexts, model_cfg)
            target = collate_labels(targets)
            try:
                loss, pred, _ = gradients(model, batch, target)
            except NonFiniteError as e:
                raise NonFiniteError(f"epoch {epoch}: {e}", checkpoint=best) from e
            optimizer.step()
            losses.append(loss.item())
            preds.extend(p.detach().numpy() for p in batch.split(pred))
            labels.extend(targets)

        _, summary = metrics(preds, labels)
        train_row = {
            "epoch": epoch,
            "split": TRAIN,
            "loss": float(np.mean(losses)),
            "nmae": summary["nmae"]["mean"],
            "eps": summary["eps"]["mean"],
        }
        history.append(train_row)
        score = train_row["loss"]
        message = f"Epoch {epoch}/{epochs}: train loss {train_row['loss']:.5f}"
        if val_ids:
            val = _evaluate(model, [samples[i] for i in val_ids], model_cfg, cfg.batch_size)
            history.append({"epoch": epoch, "split": VALIDATION, **val})
            score = val["loss"]
            message += f", val loss {val['loss']:.5f}, val NMAE {val['nmae']:.4f}"
        logging.info(message)

        if score < best_loss:
            best_loss = score
            extra["best_epoch"] = epoch
            best = _snapshot(model, run, history, epoch, extra)

    model.load_state_dict(best.model_state)
    logging.info(f"Keeping weights from epoch {extra['best_epoch']} (loss {best_loss:.5f})")
    final = _snapshot(model, run, history, epochs, extra, optimizer, rng)
    return final


def restore_model(checkpoint: Checkpoint) -> tuple:
    """Rebuild the model stored in a checkpoint.

    Raises:
        ConfigInvalidError: The stored configuration no longer validates or the
            weights do not fit it.

    Returns:
        tuple: (MeshUNet with the stored weights, RunConfig)
    """
    run = parse_run_config(checkpoint.config)
    model = MeshUNet(run.model)
    try:
        model.load_state_dict(checkpoint.model_state)
    except RuntimeError as e:
        raise ConfigInvalidError(f"checkpoint weights do not fit its config: {e}") from e
    return model, run
