"""Token embedding backends.

Two kinds: a pretrained transformer (the documented default, matching
the evaluation protocol this tool mirrors) and a hermetic hashed
character-trigram embedder that needs no model files or network, used
by the test suite and available anywhere as `trigram-v1`.
"""

import hashlib
import math

from .errors import ModelUnavailable

DEFAULT_MODEL = "microsoft/deberta-xlarge-mnli"
TRIGRAM_MODEL = "trigram-v1"
_TRIGRAM_DIM = 256


class TrigramBackend:
    """Deterministic character-trigram hashing embedder.

    Tokens sharing surface trigrams land near each other; disjoint
    tokens are near-orthogonal. No state, no model files.
    """

    name = TRIGRAM_MODEL

    def embed_tokens(self, tokens: list[str]) -> list[list[float]]:
        return [self._embed(token) for token in tokens]

    @staticmethod
    def _embed(token: str) -> list[float]:
        padded = f"^{token}$"
        vector = [0.0] * _TRIGRAM_DIM
        for i in range(len(padded) - 2):
            trigram = padded[i : i + 3]
            digest = hashlib.blake2b(trigram.encode("utf-8"), digest_size=8).digest()
            index = int.from_bytes(digest[:4], "big") % _TRIGRAM_DIM
            sign = 1.0 if digest[4] & 1 else -1.0
            vector[index] += sign
        norm = math.sqrt(sum(v * v for v in vector))
        if norm > 0:
            vector = [v / norm for v in vector]
        return vector


class TransformersBackend:
    """Pretrained-model embedder; loads lazily, fails as ModelUnavailable.

    Each whitespace token is embedded as the mean of its subword vectors
    from the model's last hidden layer, batched by `batch_size`.
    """

    def __init__(self, model_name: str = DEFAULT_MODEL, batch_size: int = 32):
        self.name = model_name
        self.batch_size = batch_size
        try:
            import torch  # noqa: F401
            from transformers import AutoModel, AutoTokenizer
        except ImportError as exc:
            raise ModelUnavailable(
                f"model {model_name!r} needs the 'transformers' and 'torch' packages "
                f"(pip install semantic-scorer[model]): {exc}"
            ) from exc
        try:
            self._tokenizer = AutoTokenizer.from_pretrained(model_name)
            self._model = AutoModel.from_pretrained(model_name)
            self._model.eval()
        except Exception as exc:  # model missing locally, no network, etc.
            raise ModelUnavailable(f"cannot load model {model_name!r}: {exc}") from exc

    def embed_tokens(self, tokens: list[str]) -> list[list[float]]:
        import torch

        vectors: list[list[float]] = []
        for start in range(0, len(tokens), self.batch_size):
            batch = tokens[start : start + self.batch_size]
            encoded = self._tokenizer(batch, return_tensors="pt", padding=True, truncation=True)
            with torch.no_grad():
                hidden = self._model(**encoded).last_hidden_state
            mask = encoded["attention_mask"].unsqueeze(-1)
            summed = (hidden * mask).sum(dim=1)
            counts = mask.sum(dim=1).clamp(min=1)
            mean = summed / counts
            normalized = mean / mean.norm(dim=1, keepdim=True).clamp(min=1e-12)
            vectors.extend(normalized.tolist())
        return vectors


def make_backend(model_name: str = DEFAULT_MODEL, batch_size: int = 32):
    if model_name == TRIGRAM_MODEL:
        return TrigramBackend()
    return TransformersBackend(model_name, batch_size)
