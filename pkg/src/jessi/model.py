"""The full classifier: joint encoder, suggestion head and optional domain head."""

from __future__ import annotations

import numpy as np

from .encoders import JointEncoder, JointEncoding, ModelConfig
from .heads import MlpHead, predict_domain, predict_suggestion
from .nn import Module
from .tensor import RngStream, Tensor, load_checkpoint, no_grad, save_checkpoint
from .text import Batch, Vocab, make_batches

FORMAT_VERSION = 1


class JessiModel(Module):
    def __init__(self, cfg: ModelConfig, rng: RngStream, table_g=None, table_c=None, dtype=np.float32):
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        self.encoder = JointEncoder(cfg, rng.child("encoder"), table_g, table_c, dtype)
        head = dict(hidden=cfg.mlp_hidden, dropout=cfg.dropout, dtype=dtype, max_norm=cfg.max_norm)
        self.mlp_y = MlpHead(cfg.joint_width, rng.child("mlp_y"), **head)
        self.mlp_d = MlpHead(cfg.joint_width, rng.child("mlp_d"), **head) if cfg.domain_adversarial else None
        self.name_parameters()

    def encode(self, batch: Batch, rng: RngStream | None = None) -> JointEncoding:
        return self.encoder(batch.token_ids, batch.mask, rng if self.training else None)

    def suggestion_probs(self, joint: JointEncoding, rng: RngStream | None = None) -> Tensor:
        return predict_suggestion(self.mlp_y, joint.joint, rng if self.training else None)

    def domain_probs(self, joint: JointEncoding, rng: RngStream | None = None) -> Tensor:
        if self.mlp_d is None:
            raise RuntimeError("model was built without a domain classifier")
        return predict_domain(self.mlp_d, joint.joint, rng if self.training else None)

    def predict_proba(self, examples, batch_size: int = 256) -> np.ndarray:
        """Suggestion probabilities for encoded examples, in input order."""
        was_training = self.training
        self.eval()
        out = []
        with no_grad():
            for batch in make_batches(examples, batch_size):
                out.append(self.suggestion_probs(self.encode(batch)).data)
        self.train(was_training)
        return np.concatenate(out) if out else np.zeros((0, 2), dtype=self.dtype)

    def predict(self, examples, batch_size: int = 256) -> np.ndarray:
        return self.predict_proba(examples, batch_size).argmax(axis=1)

    def joint_vectors(self, examples, batch_size: int = 256) -> np.ndarray:
        was_training = self.training
        self.eval()
        out = []
        with no_grad():
            for batch in make_batches(examples, batch_size):
                out.append(self.encode(batch).joint.data)
        self.train(was_training)
        return np.concatenate(out)


def save_model(path, model: JessiModel, vocab: Vocab, extra: dict | None = None) -> None:
    meta = {
        "format": FORMAT_VERSION,
        "model": model.cfg.to_dict(),
        "vocab": vocab.to_list(),
        "min_frequency": vocab.min_frequency,
        "dtype": str(model.dtype),
    }
    if extra:
        meta["extra"] = extra
    save_checkpoint(path, model.state_dict(), meta)


def load_model(path) -> tuple[JessiModel, Vocab, dict]:
    tensors, meta = load_checkpoint(path)
    if not meta or meta.get("format") != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported or missing model header")
    cfg = ModelConfig.from_dict(meta["model"])
    vocab = Vocab.from_list(meta["vocab"], meta.get("min_frequency", 1))
    model = JessiModel(cfg, RngStream(0), dtype=np.dtype(meta.get("dtype", "float32")))
    model.load_state_dict(tensors)
    return model, vocab, meta.get("extra", {})
