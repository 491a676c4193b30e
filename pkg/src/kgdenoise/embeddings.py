"""Entity embeddings: TransE / DistMult / ComplEx trainers and external vectors.

ComplEx vectors are stored as ``[real parts | imaginary parts]`` so every table
holds plain real arrays; ``EmbeddingTable.dimension`` is the complex dimension
in that case and each stored vector has length ``2 * dimension``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import IO, Iterable, Protocol, Sequence

import numpy as np

from .graph import Entity, KnowledgeGraph

logger = logging.getLogger(__name__)

MODELS = ("transe", "distmult", "complex")
MODEL_TAGS = MODELS + ("external",)


class CoverageError(LookupError):
    def __init__(self, missing: Iterable[str]):
        self.missing = sorted(missing)
        shown = ", ".join(repr(m) for m in self.missing[:10])
        more = f" (+{len(self.missing) - 10} more)" if len(self.missing) > 10 else ""
        super().__init__(f"no embedding for entity id(s) {shown}{more}")


class EmbeddingFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"{message} (line {line})" if line is not None else message)
        self.line = line


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"non-finite loss {loss} at epoch {epoch}")
        self.epoch = epoch
        self.loss = loss


@dataclass
class EmbeddingTable:
    dimension: int
    entity_vectors: dict[str, np.ndarray]
    relation_vectors: dict[str, np.ndarray] | None = None
    model_tag: str = "external"

    def __post_init__(self) -> None:
        if self.dimension < 1:
            raise ValueError("dimension must be positive")
        if self.model_tag not in MODEL_TAGS:
            raise ValueError(f"unknown model tag {self.model_tag!r}")
        for kind, vectors in (("entity", self.entity_vectors), ("relation", self.relation_vectors or {})):
            for key, vec in vectors.items():
                if np.shape(vec) != (self.width,):
                    raise ValueError(
                        f"{kind} vector for {key!r} has shape {np.shape(vec)}, expected ({self.width},)"
                    )

    @property
    def width(self) -> int:
        """Stored vector length."""
        return 2 * self.dimension if self.model_tag == "complex" else self.dimension

    def __contains__(self, entity_id: object) -> bool:
        return entity_id in self.entity_vectors

    def vector(self, entity_id: str) -> np.ndarray:
        try:
            return self.entity_vectors[entity_id]
        except KeyError:
            raise CoverageError([entity_id]) from None

    def matrix(self, ids: Sequence[str]) -> np.ndarray:
        self.check_coverage(ids)
        if not ids:
            return np.zeros((0, self.width))
        return np.stack([self.entity_vectors[i] for i in ids])

    def check_coverage(self, ids: Iterable[str]) -> None:
        missing = [i for i in ids if i not in self.entity_vectors]
        if missing:
            raise CoverageError(missing)


@dataclass
class TrainConfig:
    dimension: int = 64
    epochs: int = 100
    learning_rate: float = 0.05
    negatives_per_positive: int = 1
    margin: float = 1.0
    batch_size: int = 128
    seed: int = 0
    norm: str = "L2"
    # L2 penalty for the bilinear models; ignored by TransE
    regularization: float = 1e-3

    def __post_init__(self) -> None:
        for name in ("dimension", "epochs", "negatives_per_positive", "batch_size"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if not self.learning_rate > 0 or not self.margin > 0:
            raise ValueError("learning_rate and margin must be positive")
        if self.regularization < 0:
            raise ValueError("regularization must be non-negative")
        if self.norm not in ("L1", "L2"):
            raise ValueError("norm must be 'L1' or 'L2'")


# --------------------------------------------------------------------------
# scoring functions
# --------------------------------------------------------------------------


def _check_lengths(*vectors) -> None:
    shapes = {np.shape(v) for v in vectors}
    if len(shapes) != 1:
        raise ValueError(f"vector length mismatch: {sorted(shapes)}")


def score_transe(h, r, t, norm: str = "L2") -> float:
    """Negative translation distance ``-||h + r - t||``; higher is more plausible."""
    _check_lengths(h, r, t)
    diff = np.asarray(h, float) + np.asarray(r, float) - np.asarray(t, float)
    return -float(np.linalg.norm(diff, ord=1 if norm == "L1" else 2))


def score_distmult(h, r, t) -> float:
    _check_lengths(h, r, t)
    return float(np.sum(np.asarray(h, float) * np.asarray(r, float) * np.asarray(t, float)))


def score_complex(h, r, t) -> float:
    """``Re(sum(h * r * conj(t)))`` for complex vectors."""
    _check_lengths(h, r, t)
    h, r, t = (np.asarray(x, complex) for x in (h, r, t))
    return float(np.real(np.sum(h * r * np.conj(t))))


def to_complex(stored: np.ndarray) -> np.ndarray:
    """Convert a ``[real | imag]`` stored vector to a complex array."""
    d = stored.shape[-1] // 2
    return stored[..., :d] + 1j * stored[..., d:]


def score_triple(table: EmbeddingTable, head: str, relation: str, tail: str, norm: str = "L2") -> float:
    if table.relation_vectors is None:
        raise ValueError("table has no relation vectors")
    h, r, t = table.vector(head), table.relation_vectors[relation], table.vector(tail)
    if table.model_tag == "transe":
        return score_transe(h, r, t, norm)
    if table.model_tag == "distmult":
        return score_distmult(h, r, t)
    if table.model_tag == "complex":
        return score_complex(to_complex(h), to_complex(r), to_complex(t))
    raise ValueError(f"cannot score triples with a {table.model_tag!r} table")


def tail_ranks(
    table: EmbeddingTable, triples: Iterable[tuple[str, str, str]], norm: str = "L2"
) -> list[float]:
    """Rank of each true tail among all entities (1 = best); ties share the mean rank."""
    ids = sorted(table.entity_vectors)
    out = []
    for h, r, t in triples:
        scores = np.array([score_triple(table, h, r, c, norm) for c in ids])
        s = score_triple(table, h, r, t, norm)
        out.append(1 + float(np.sum(scores > s)) + (float(np.sum(scores == s)) - 1) / 2)
    return out


# --------------------------------------------------------------------------
# batched scores with gradients
# --------------------------------------------------------------------------


def _batch_scores(model: str, H, R, T, norm: str):
    """Return scores and their gradients w.r.t. H, R, T for row-aligned batches."""
    if model == "transe":
        diff = H + R - T
        if norm == "L1":
            s = -np.abs(diff).sum(axis=1)
            g = -np.sign(diff)
        else:
            n = np.linalg.norm(diff, axis=1)
            s = -n
            safe = np.where(n > 0, n, 1.0)[:, None]
            g = -diff / safe
        return s, g, g, -g
    if model == "distmult":
        return (H * R * T).sum(axis=1), R * T, H * T, H * R
    if model == "complex":
        d = H.shape[1] // 2
        hr, hi = H[:, :d], H[:, d:]
        rr, ri = R[:, :d], R[:, d:]
        tr, ti = T[:, :d], T[:, d:]
        s = (hr * rr * tr + hi * rr * ti + hr * ri * ti - hi * ri * tr).sum(axis=1)
        gH = np.hstack([rr * tr + ri * ti, rr * ti - ri * tr])
        gR = np.hstack([hr * tr + hi * ti, hr * ti - hi * tr])
        gT = np.hstack([hr * rr - hi * ri, hi * rr + hr * ri])
        return s, gH, gR, gT
    raise ValueError(f"unknown model {model!r}")


def _softplus(x):
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    return np.exp(-np.logaddexp(0.0, -x))


def loss_and_gradients(
    model: str,
    E: np.ndarray,
    R: np.ndarray,
    positives: np.ndarray,
    negatives: np.ndarray,
    config: TrainConfig,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean batch loss and dense gradients for entity matrix ``E`` and relation matrix ``R``.

    ``positives`` has shape ``(B, 3)`` of ``(head, relation, tail)`` indices and
    ``negatives`` shape ``(B * k, 3)``, where negative ``j`` was corrupted from
    positive ``j // k``. TransE uses margin ranking; the bilinear models use
    logistic loss with an L2 penalty on the rows touched.
    """
    k = len(negatives) // max(len(positives), 1)
    gE = np.zeros_like(E)
    gR = np.zeros_like(R)

    def scores(idx):
        return _batch_scores(model, E[idx[:, 0]], R[idx[:, 1]], E[idx[:, 2]], config.norm)

    def scatter(idx, coef, gH, gRel, gT):
        np.add.at(gE, idx[:, 0], coef[:, None] * gH)
        np.add.at(gR, idx[:, 1], coef[:, None] * gRel)
        np.add.at(gE, idx[:, 2], coef[:, None] * gT)

    sp, *gp = scores(positives)
    sn, *gn = scores(negatives)

    if model == "transe":
        sp_rep = np.repeat(sp, k)
        viol = config.margin - sp_rep + sn
        active = (viol > 0).astype(float)
        n = len(negatives)
        loss = float(np.sum(np.maximum(viol, 0.0)) / n)
        coef_neg = active / n
        coef_pos = -coef_neg.reshape(-1, k).sum(axis=1)
        scatter(positives, coef_pos, *gp)
        scatter(negatives, coef_neg, *gn)
        return loss, gE, gR

    n = len(positives) + len(negatives)
    loss = float((np.sum(_softplus(-sp)) + np.sum(_softplus(sn))) / n)
    scatter(positives, -_sigmoid(-sp) / n, *gp)
    scatter(negatives, _sigmoid(sn) / n, *gn)
    lam = config.regularization
    if lam > 0:
        for idx in (positives, negatives):
            h, r, t = E[idx[:, 0]], R[idx[:, 1]], E[idx[:, 2]]
            loss += float(lam * (np.sum(h * h) + np.sum(r * r) + np.sum(t * t)) / n)
            np.add.at(gE, idx[:, 0], 2 * lam * h / n)
            np.add.at(gR, idx[:, 1], 2 * lam * r / n)
            np.add.at(gE, idx[:, 2], 2 * lam * t / n)
    return loss, gE, gR


# --------------------------------------------------------------------------
# training
# --------------------------------------------------------------------------


def _xavier_uniform(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols))


def _unit_rows(M: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(M, axis=1, keepdims=True)
    return M / np.where(norms > 0, norms, 1.0)


def corrupt(
    positives: np.ndarray,
    n_entities: int,
    k: int,
    known: set[tuple[int, int, int]],
    rng: np.random.Generator,
    max_tries: int = 50,
) -> np.ndarray:
    """Uniform negative sampling: replace head or tail (p = 1/2 each) with a random entity.

    Corruptions that reproduce an observed triple are redrawn, up to
    ``max_tries`` times.
    """
    negs = np.repeat(positives, k, axis=0)
    side = np.where(rng.random(len(negs)) < 0.5, 0, 2)
    negs[np.arange(len(negs)), side] = rng.integers(n_entities, size=len(negs))
    for j in range(len(negs)):
        tries = 0
        while tuple(negs[j]) in known and tries < max_tries:
            negs[j, side[j]] = rng.integers(n_entities)
            tries += 1
    return negs


def train_kg_embeddings(graph: KnowledgeGraph, model: str, config: TrainConfig | None = None) -> EmbeddingTable:
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}; expected one of {MODELS}")
    if not graph.entities:
        raise ValueError("cannot train embeddings on an empty graph")
    config = config or TrainConfig()
    rng = np.random.default_rng(config.seed)

    ent_ids = sorted(graph.entity_ids)
    rel_ids = sorted(graph.relation_labels)
    e_idx = {e: i for i, e in enumerate(ent_ids)}
    r_idx = {r: i for i, r in enumerate(rel_ids)}
    keys = sorted({(e_idx[t.source], r_idx[t.relation], e_idx[t.target]) for t in graph.triples})
    triples = np.array(keys, dtype=np.int64).reshape(-1, 3)
    known = set(keys)

    width = 2 * config.dimension if model == "complex" else config.dimension
    E = _xavier_uniform(rng, len(ent_ids), width)
    R = _xavier_uniform(rng, max(len(rel_ids), 1), width)[: len(rel_ids)]
    if model == "transe":
        E, R = _unit_rows(E), _unit_rows(R)

    for epoch in range(config.epochs):
        if len(triples) == 0:
            break
        order = rng.permutation(len(triples))
        epoch_loss = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = triples[order[start : start + config.batch_size]]
            negs = corrupt(batch, len(ent_ids), config.negatives_per_positive, known, rng)
            loss, gE, gR = loss_and_gradients(model, E, R, batch, negs, config)
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch, loss)
            E -= config.learning_rate * gE
            R -= config.learning_rate * gR
            epoch_loss += loss * len(batch)
        if model == "transe":
            E = _unit_rows(E)
        if not np.all(np.isfinite(E)) or not np.all(np.isfinite(R)):
            raise TrainingDivergedError(epoch, float("nan"))
        logger.debug("epoch %d loss %.6f", epoch, epoch_loss / len(triples))

    return EmbeddingTable(
        dimension=config.dimension,
        entity_vectors={e: E[i].copy() for e, i in e_idx.items()},
        relation_vectors={r: R[i].copy() for r, i in r_idx.items()},
        model_tag=model,
    )


# --------------------------------------------------------------------------
# external vectors
# --------------------------------------------------------------------------


def load_external_embeddings(stream: IO[bytes] | IO[str], expected_ids: Iterable[str] | None = None) -> EmbeddingTable:
    """Read JSONL records ``{"id": str, "vector": [numbers]}``."""
    data = stream.read()
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    vectors: dict[str, np.ndarray] = {}
    dim = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            eid = rec["id"]
            vec = np.asarray(rec["vector"], dtype=float)
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise EmbeddingFormatError(f"cannot parse embedding record: {exc}", lineno) from exc
        if not isinstance(eid, str) or vec.ndim != 1 or vec.size == 0:
            raise EmbeddingFormatError("record needs a string id and a non-empty flat vector", lineno)
        if dim is None:
            dim = vec.size
        elif vec.size != dim:
            raise EmbeddingFormatError(f"vector for {eid!r} has dimension {vec.size}, expected {dim}", lineno)
        if eid in vectors:
            raise EmbeddingFormatError(f"duplicate id {eid!r}", lineno)
        vectors[eid] = vec
    if dim is None:
        raise EmbeddingFormatError("no embedding records found")
    table = EmbeddingTable(dim, vectors, None, "external")
    if expected_ids is not None:
        table.check_coverage(expected_ids)
    return table


class TextEmbedder(Protocol):
    def embed_texts(self, texts: Sequence[str]) -> list[Sequence[float]]: ...


def description_text(entity: Entity) -> str:
    return f"{entity.name}: {entity.description}" if entity.description else entity.name


def embed_descriptions(entities: Sequence[Entity], client: TextEmbedder) -> EmbeddingTable:
    """Embed ``"name: description"`` (name alone when the description is empty) per entity."""
    entities = list(entities)
    if not entities:
        raise ValueError("no entities to embed")
    vectors = client.embed_texts([description_text(e) for e in entities])
    if len(vectors) != len(entities):
        raise ValueError(f"embedder returned {len(vectors)} vectors for {len(entities)} texts")
    arr = [np.asarray(v, dtype=float) for v in vectors]
    return EmbeddingTable(arr[0].size, {e.id: v for e, v in zip(entities, arr)}, None, "external")
