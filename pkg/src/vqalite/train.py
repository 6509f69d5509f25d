"""Training loop, evaluation, and the ablation / token-size runners."""

import json
import os
import time
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .checkpoint import load_model, save_model
from .config import ModelConfig
from .counting import build_box_geometry
from .data import ANSWER_INDEX, render_scene_u8
from .metrics import MetricReport, compute_report
from .model import ABLATION_MODES, VqaModel, cross_entropy
from .optim import Adam
from .text import build_vocabulary, ids_and_length
from .vision import FEATURE_SIZE


@dataclass
class PreparedData:
    """Dataset compiled to arrays: rendered scenes, token ids, targets,
    and per-sample box geometry for the counter."""

    samples: list
    images_u8: np.ndarray
    ids: np.ndarray
    lengths: np.ndarray
    targets: np.ndarray
    geoms: list


def prepare(samples, vocab, tau=0.5, kappa=20.0):
    if not samples:
        raise ValueError("cannot prepare an empty dataset")
    n = len(samples)
    images = np.empty((n, 3, 64, 64), dtype=np.uint8)
    ids = np.empty((n, 12), dtype=np.int64)
    lengths = np.empty(n, dtype=np.int64)
    targets = np.empty(n, dtype=np.int64)
    geoms = []
    for i, s in enumerate(samples):
        images[i] = render_scene_u8(s.scene)
        row, ln = ids_and_length(s.question_tokens, vocab)
        ids[i] = row
        lengths[i] = ln
        targets[i] = ANSWER_INDEX[s.answer]
        geoms.append(
            build_box_geometry(s.scene.boxes(), FEATURE_SIZE, FEATURE_SIZE, tau, kappa)
        )
    return PreparedData(samples, images, ids, lengths, targets, geoms)


def forward_batch(model, prep, idx):
    dtype = model.text.embedding.data.dtype
    images = T.Tensor(prep.images_u8[idx].astype(dtype) / dtype.type(255))
    geoms = [prep.geoms[i] for i in idx]
    return model(images, prep.ids[idx], prep.lengths[idx], geoms)


def evaluate(model, prep, batch_size=256):
    """MetricReport plus the raw per-sample correctness map (id -> bool)."""
    was_training = model.training
    model.eval()
    correct = {}
    try:
        with T.no_grad():
            for start in range(0, len(prep.samples), batch_size):
                idx = np.arange(start, min(start + batch_size, len(prep.samples)))
                logits = forward_batch(model, prep, idx)
                preds = np.argmax(logits.data, axis=1)
                for j, i in enumerate(idx):
                    correct[prep.samples[i].id] = bool(preds[j] == prep.targets[i])
    finally:
        model.train(was_training)
    return compute_report(prep.samples, correct), correct


def build_model(config, vocab_size, num_answers, mode="none"):
    streams = np.random.SeedSequence(config.seed).spawn(3)
    init_rng = np.random.default_rng(streams[0])
    dropout_rng = np.random.default_rng(streams[1])
    model = VqaModel(
        init_rng,
        vocab_size,
        num_answers,
        embedding_dim=config.embedding_dim,
        gru_hidden=config.gru_hidden,
        common_width=config.attn_width,
        fused_width=config.fused_width,
        max_count=config.max_count,
        dropout_rate=config.dropout_rate,
        mode=mode,
        dropout_rng=dropout_rng,
    )
    shuffle_rng = np.random.default_rng(streams[2])
    return model, shuffle_rng


@dataclass
class TrainResult:
    best_val: MetricReport
    best_epoch: int
    epochs_run: int
    final_train: MetricReport
    history: list
    checkpoint_path: str
    losses: list
    elapsed: float


def train(
    config,
    train_samples,
    val_samples,
    out_dir,
    mode="none",
    early_stop=None,
    verbose=True,
):
    """Train a model and keep the checkpoint with the best val all(s).

    ``early_stop`` is an optional (train_acc, val_acc) pair: once the
    running train accuracy and the val report both clear it, a full
    train-set evaluation confirms the train side and training halts.
    Leave it None for fixed-length runs (ablation comparisons).
    """
    if mode not in ABLATION_MODES:
        raise ValueError(f"unknown ablation mode {mode!r}")
    config.validate()
    os.makedirs(out_dir, exist_ok=True)

    vocab = build_vocabulary((s.question_tokens for s in train_samples), config.token_size)
    vocab.save(os.path.join(out_dir, "vocab.txt"))
    config.save(os.path.join(out_dir, "config.txt"))

    t0 = time.time()
    train_prep = prepare(train_samples, vocab, config.count_tau, config.count_kappa)
    val_prep = prepare(val_samples, vocab, config.count_tau, config.count_kappa)

    model, shuffle_rng = build_model(config, len(vocab), len(ANSWER_INDEX), mode)
    optimizer = Adam(model.parameters(), lr=config.learning_rate)

    n = len(train_samples)
    ckpt_path = os.path.join(out_dir, "model.ckpt")
    log_path = os.path.join(out_dir, "train_log.jsonl")
    best_val = None
    best_epoch = -1
    history = []
    losses = []
    final_train = None
    epochs_run = 0

    with open(log_path, "w", encoding="utf-8") as log:
        for epoch in range(1, config.epochs + 1):
            model.train()
            order = shuffle_rng.permutation(n)
            epoch_loss = 0.0
            seen = 0
            running = {}
            batch_starts = range(0, n, config.batch_size)
            for bi, start in enumerate(batch_starts):
                idx = order[start : start + config.batch_size]
                if idx.size < 2:
                    continue
                logits = forward_batch(model, train_prep, idx)
                loss = cross_entropy(logits, train_prep.targets[idx], config.label_smoothing)
                value = loss.item()
                if not np.isfinite(value):
                    raise RuntimeError(
                        f"non-finite loss {value} at epoch {epoch}, batch {bi} "
                        f"(sample ids {[train_prep.samples[i].id for i in idx[:4]]}...)"
                    )
                preds = np.argmax(logits.data, axis=1)
                for j, i in enumerate(idx):
                    running[train_prep.samples[i].id] = bool(preds[j] == train_prep.targets[i])
                loss.backward()
                optimizer.step()
                epoch_loss += value * idx.size
                seen += idx.size

            epochs_run = epoch
            mean_loss = epoch_loss / seen
            losses.append(mean_loss)
            running_report = compute_report(train_prep.samples, running)
            val_report, _ = evaluate(model, val_prep)

            log.write(
                json.dumps(
                    {
                        "epoch": epoch,
                        "split": "train",
                        "loss": mean_loss,
                        "report": running_report.to_dict(),
                    }
                )
                + "\n"
            )
            log.write(
                json.dumps(
                    {"epoch": epoch, "split": "val", "loss": None, "report": val_report.to_dict()}
                )
                + "\n"
            )
            log.flush()
            history.append(
                {"epoch": epoch, "loss": mean_loss, "train": running_report, "val": val_report}
            )
            if verbose:
                print(
                    f"epoch {epoch:3d}  loss {mean_loss:.4f}  "
                    f"train all(s) {running_report.all_s:.3f}  "
                    f"val all(s) {val_report.all_s:.3f}",
                    flush=True,
                )

            if best_val is None or val_report.all_s > best_val.all_s:
                best_val = val_report
                best_epoch = epoch
                save_model(model, ckpt_path)

            if early_stop is not None:
                train_target, val_target = early_stop
                if running_report.all_s >= train_target and val_report.all_s >= val_target:
                    final_train, _ = evaluate(model, train_prep)
                    if final_train.all_s >= train_target:
                        if verbose:
                            print(
                                f"early stop at epoch {epoch}: train all(s) "
                                f"{final_train.all_s:.3f}, val all(s) {val_report.all_s:.3f}",
                                flush=True,
                            )
                        break
                    final_train = None

    if final_train is None:
        final_train, _ = evaluate(model, train_prep)

    return TrainResult(
        best_val=best_val,
        best_epoch=best_epoch,
        epochs_run=epochs_run,
        final_train=final_train,
        history=history,
        checkpoint_path=ckpt_path,
        losses=losses,
        elapsed=time.time() - t0,
    )


def load_for_eval(config, ckpt_path, vocab_size, mode="none"):
    model, _ = build_model(config, vocab_size, len(ANSWER_INDEX), mode)
    load_model(model, ckpt_path)
    model.eval()
    return model


def run_ablations(config, train_samples, val_samples, out_dir, modes=ABLATION_MODES, verbose=True):
    """Train one model per ablation mode under identical settings."""
    results = {}
    for mode in modes:
        if verbose:
            print(f"=== mode {mode} ===", flush=True)
        results[mode] = train(
            config,
            train_samples,
            val_samples,
            os.path.join(out_dir, mode.replace("-", "_")),
            mode=mode,
            early_stop=None,
            verbose=verbose,
        )
    return results


def ablation_table(results):
    """Rows per mode, columns per metric cell, evaluated at best val."""
    from .metrics import HEADERS

    width = max(len(h) for h in HEADERS) + 2
    name_width = max(len(m) for m in results) + 2
    lines = ["".ljust(name_width) + "".join(h.rjust(width) for h in HEADERS)]
    for mode, res in results.items():
        row = "".join(f"{100.0 * v:.2f}".rjust(width) for v in res.best_val.values())
        lines.append(mode.ljust(name_width) + row)
    return "\n".join(lines)
