"""Epoch loop: batches, optimizer steps, per-epoch validation, checkpoints.

Everything is seeded from the model config: one stream orders batches, one
drives dropout masks.  The best checkpoint (highest validation BLEU-4,
ties broken by lower validation loss, then earlier epoch) is kept on disk
alongside the final one, so a numeric abort still leaves the last good
model behind.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .corpus import AST_SPECIALS, COMMENT_SPECIALS, Sample, Vocab, make_batches
from .metrics import bleu_n
from .model import Adam, ModelConfig, Summarizer, train_step
from .tensor import Graph

BEST_CHECKPOINT = "checkpoint_best.bin"
FINAL_CHECKPOINT = "checkpoint_final.bin"
TRAIN_LOG = "train_log.jsonl"


@dataclass
class EpochRecord:
    epoch: int
    steps: int
    train_loss: float
    valid_bleu4: Optional[float]
    valid_loss: Optional[float]


@dataclass
class TrainResult:
    epochs: List[EpochRecord] = field(default_factory=list)
    best_epoch: Optional[int] = None
    best_bleu4: Optional[float] = None


def checkpoint_meta(model: Summarizer, extra: Optional[dict] = None) -> dict:
    meta = {
        "config": model.config.to_dict(),
        "seed": model.config.seed,
        "ast_vocab_digest": model.ast_vocab.digest(),
        "comment_vocab_digest": model.comment_vocab.digest(),
        "ast_vocab_entries": [list(e) for e in model.ast_vocab.entries],
        "comment_vocab_entries": [list(e) for e in model.comment_vocab.entries],
    }
    if extra:
        meta.update(extra)
    return meta


def model_from_checkpoint(path) -> Summarizer:
    """Rebuild a model from a self-contained checkpoint archive."""
    params, meta = load_checkpoint(path)
    config = ModelConfig.from_dict(meta["config"])
    ast_vocab = Vocab(AST_SPECIALS, [tuple(e) for e in meta["ast_vocab_entries"]])
    comment_vocab = Vocab(COMMENT_SPECIALS,
                          [tuple(e) for e in meta["comment_vocab_entries"]])
    model = Summarizer(config, ast_vocab, comment_vocab)
    model.load_parameters(params)
    return model


def validate(model: Summarizer, samples: Sequence[Sample]) -> tuple:
    """Greedy-decode BLEU-4 and teacher-forced loss on a held-out split."""
    if not samples:
        return None, None
    cands = [model.generate(s.ast)[0] for s in samples]
    refs = [s.comment for s in samples]
    bleu = bleu_n(cands, refs, n=4)
    g = Graph()
    loss = float(g.value(model.batch_loss(g, samples, training=False))[0])
    return bleu, loss


def train_model(model: Summarizer, train_samples: Sequence[Sample],
                valid_samples: Sequence[Sample], out_dir,
                log_every_step: bool = False) -> TrainResult:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = model.config
    opt = Adam(model.named_parameters(), lr=cfg.lr)
    batch_seed, dropout_seed = np.random.SeedSequence(cfg.seed).spawn(2)
    batch_rng = np.random.default_rng(batch_seed)
    dropout_rng = np.random.default_rng(dropout_seed)

    result = TrainResult()
    best_key = None
    steps = 0
    log_path = out_dir / TRAIN_LOG
    with open(log_path, "w", encoding="utf-8") as log:
        log.write(json.dumps({"config": cfg.to_dict(), "seed": cfg.seed},
                             sort_keys=True) + "\n")
        try:
            for epoch in range(1, cfg.epochs + 1):
                losses = []
                for batch in make_batches(train_samples, cfg.batch, batch_rng):
                    loss = train_step(model, batch, opt, dropout_rng)
                    losses.append(loss)
                    steps += 1
                    if log_every_step:
                        log.write(json.dumps(
                            {"step": steps, "epoch": epoch, "loss": loss},
                            sort_keys=True) + "\n")
                bleu, vloss = validate(model, valid_samples)
                record = EpochRecord(epoch=epoch, steps=steps,
                                     train_loss=sum(losses) / len(losses),
                                     valid_bleu4=bleu, valid_loss=vloss)
                result.epochs.append(record)
                log.write(json.dumps(
                    {"step": steps, "epoch": epoch, "loss": record.train_loss,
                     "valid_bleu4": bleu, "valid_loss": vloss},
                    sort_keys=True) + "\n")
                key = None
                if bleu is not None:
                    key = (bleu, -vloss, -epoch)
                if key is not None and (best_key is None or key > best_key):
                    best_key = key
                    result.best_epoch = epoch
                    result.best_bleu4 = bleu
                    save_checkpoint(out_dir / BEST_CHECKPOINT,
                                    model.named_parameters(),
                                    checkpoint_meta(model, {"epoch": epoch,
                                                            "valid_bleu4": bleu}))
        finally:
            save_checkpoint(out_dir / FINAL_CHECKPOINT, model.named_parameters(),
                            checkpoint_meta(model, {"epoch": len(result.epochs)}))
            if best_key is None:
                save_checkpoint(out_dir / BEST_CHECKPOINT, model.named_parameters(),
                                checkpoint_meta(model,
                                                {"epoch": len(result.epochs)}))
    return result
