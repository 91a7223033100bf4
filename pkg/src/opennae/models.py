"""Open-set identification models and their scores.

NAE
    An ensemble of ``D -> 160 -> 2`` adapters.  Learner ``n`` is trained to
    separate two random halves of the gallery subjects (partition ``B_n``);
    a probe's score for subject ``g`` is the sum over learners of the output
    the learner assigns to ``g``'s side.
NAN
    A single multi-class ``D -> 512 -> 128 -> |G|`` adapter whose logits are
    the subject scores.
COS
    Best cosine similarity between the probe and any record of the subject.
"""
from __future__ import annotations

import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .augment import NegativeSet
from .losses import DEFAULT_MARGIN, LOSSES, softmax
from .nn import DenseNet, TrainConfig, fit, forward, init_net, net_from_arrays, net_to_arrays
from .store import EmbeddingSet, Gallery

ZERO, ONE = 0, 1
NAE_HIDDEN = 160
NAN_HIDDEN = (512, 128)
NAN_EPOCHS = 200
AGGREGATES = ("logit", "softmax")


def derive_seed(seed: int, *keys: int) -> int:
    """Independent 63-bit seed for the stream ``(seed, *keys)``."""
    return int(np.random.SeedSequence([seed, *keys]).generate_state(2, np.uint64)[0] >> np.uint64(1))


@dataclass(frozen=True)
class Partition:
    """Side (``ZERO``/``ONE``) of every gallery subject, in subject order."""
    assignment: np.ndarray
    seed: int

    def side(self, subject_index: int) -> int:
        return int(self.assignment[subject_index])


def make_partitions(subjects, count: int, seed: int = 0) -> list[Partition]:
    """Draw ``count`` fair-coin bipartitions; one-sided draws are redrawn."""
    n_subj = len(subjects)
    if n_subj < 2:
        raise ValueError("partitioning needs at least two subjects")
    if count < 1:
        raise ValueError("need at least one partition")
    out = []
    for n in range(count):
        rng = np.random.default_rng((seed, n))
        while True:
            a = rng.integers(0, 2, size=n_subj)
            if 0 < a.sum() < n_subj:
                break
        a.setflags(write=False)
        out.append(Partition(a, seed))
    return out


def default_ensemble_size(n_subjects: int) -> int:
    return max(1, int(round(0.5 * n_subjects)))


@dataclass
class ScoreTable:
    """Probe-by-subject similarity matrix; columns follow ``subjects``."""
    scores: np.ndarray
    subjects: tuple[str, ...]
    probe_labels: tuple[str, ...] | None = None

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.subjects = tuple(self.subjects)
        if self.scores.ndim != 2 or self.scores.shape[1] != len(self.subjects):
            raise ValueError("score matrix must have one column per subject")
        if not np.isfinite(self.scores).all():
            raise ValueError("scores must be finite")
        if self.probe_labels is not None:
            self.probe_labels = tuple(self.probe_labels)
            if len(self.probe_labels) != self.scores.shape[0]:
                raise ValueError("one label per probe row required")

    def top(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-probe best subject index (first in subject order on ties) and its score."""
        idx = np.argmax(self.scores, axis=1)
        return idx, self.scores[np.arange(len(idx)), idx]


def identify(table: ScoreTable, theta: float) -> list[str | None]:
    """Best-scoring subject per probe, or ``None`` when its score is below ``theta``."""
    idx, best = table.top()
    return [table.subjects[i] if b >= theta else None for i, b in zip(idx, best)]


def _probe_matrix(probes, dim: int) -> tuple[np.ndarray, tuple[str, ...] | None]:
    if isinstance(probes, EmbeddingSet):
        x, labels = probes.vectors, probes.labels
    else:
        x, labels = np.asarray(probes, dtype=np.float64), None
        if x.ndim == 1:
            x = x[None, :]
    if x.ndim != 2 or x.shape[1] != dim:
        raise ValueError(f"probe dimension {x.shape[-1]} does not match model dimension {dim}")
    return x, labels


def _resolve_negatives(loss: str, negatives: NegativeSet | None, dim: int) -> np.ndarray:
    if loss not in LOSSES:
        raise ValueError(f"unknown loss {loss!r}; choose from {LOSSES}")
    neg = np.empty((0, dim)) if negatives is None else np.asarray(negatives.vectors)
    if len(neg) and neg.shape[1] != dim:
        raise ValueError("negative set dimension does not match gallery")
    if loss == "cel" and len(neg):
        warnings.warn("cel ignores negative samples", stacklevel=3)
        return np.empty((0, dim))
    if loss != "cel" and not len(neg):
        warnings.warn(f"{loss} without negatives: training on known samples only", stacklevel=3)
    return neg


@dataclass
class Ensemble:
    learners: list[DenseNet]
    partitions: list[Partition]
    subjects: tuple[str, ...]
    config: dict = field(default_factory=dict)
    aggregate: str = "logit"

    def __post_init__(self):
        if not self.learners or len(self.learners) != len(self.partitions):
            raise ValueError("ensemble needs one partition per learner and at least one learner")
        dims = {net.input_dim for net in self.learners}
        if len(dims) != 1 or any(net.output_dim != 2 for net in self.learners):
            raise ValueError("learners must share the input dimension and have two outputs")
        if any(len(p.assignment) != len(self.subjects) for p in self.partitions):
            raise ValueError("partition size does not match subject count")
        if self.aggregate not in AGGREGATES:
            raise ValueError(f"aggregate must be one of {AGGREGATES}")

    @property
    def dim(self) -> int:
        return self.learners[0].input_dim

    @property
    def assignment_matrix(self) -> np.ndarray:
        return np.stack([p.assignment for p in self.partitions]).astype(np.int64)

    def __len__(self) -> int:
        return len(self.learners)


def _train_learner(n, gallery, neg, partition, loss, margin, hidden, config, seed):
    net = init_net((gallery.dim, hidden, 2), derive_seed(seed, n, 0))
    targets = partition.assignment[gallery.class_index]
    fit(net, gallery.vectors, targets, neg, loss=loss, margin=margin,
        config=config.replace(seed=derive_seed(seed, n, 1)))
    return net


def train_ensemble(gallery: Gallery, negatives: NegativeSet | None = None, loss: str = "mel",
                   margin: float = DEFAULT_MARGIN, config: TrainConfig | None = None,
                   ensemble_size: int | None = None, hidden: int = NAE_HIDDEN,
                   aggregate: str = "logit", n_jobs: int = 1) -> Ensemble:
    """Train a neural adapter ensemble.

    Every learner sees all gallery records relabeled by its own partition and
    the same negatives.  Learner ``n`` draws its initial weights and batch
    order from ``(config.seed, n)``, so ``n_jobs`` does not change the result.
    """
    config = config or TrainConfig()
    size = default_ensemble_size(len(gallery.subjects)) if ensemble_size is None else ensemble_size
    neg = _resolve_negatives(loss, negatives, gallery.dim)
    partitions = make_partitions(gallery.subjects, size, config.seed)

    def work(n):
        return _train_learner(n, gallery, neg, partitions[n], loss, margin, hidden, config,
                              config.seed)

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            learners = list(pool.map(work, range(size)))
    else:
        learners = [work(n) for n in range(size)]
    snapshot = {"loss": loss, "margin": margin, "hidden": hidden, "ensemble_size": size,
                "n_negatives": int(len(neg)), "train": asdict(config)}
    return Ensemble(learners, partitions, gallery.subjects, snapshot, aggregate)


def learner_activations(ensemble: Ensemble, x: np.ndarray) -> np.ndarray:
    """Stacked per-learner outputs, shape ``(|E|, n_probes, 2)``."""
    act = np.stack([forward(net, x) for net in ensemble.learners])
    if ensemble.aggregate == "softmax":
        act = softmax(act, axis=-1)
    return act


def score_ensemble(ensemble: Ensemble, probes) -> ScoreTable:
    x, labels = _probe_matrix(probes, ensemble.dim)
    act = learner_activations(ensemble, x)
    sim = kernels.aggregate_scores(act, ensemble.assignment_matrix)
    return ScoreTable(sim, ensemble.subjects, labels)


@dataclass
class NanModel:
    net: DenseNet
    subjects: tuple[str, ...]
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        self.subjects = tuple(self.subjects)
        if self.net.output_dim != len(self.subjects):
            raise ValueError("output width must equal the number of gallery subjects")

    @property
    def dim(self) -> int:
        return self.net.input_dim


def train_nan(gallery: Gallery, negatives: NegativeSet | None = None, loss: str = "mel",
              margin: float = DEFAULT_MARGIN, config: TrainConfig | None = None,
              hidden: tuple[int, ...] = NAN_HIDDEN) -> NanModel:
    """Train the multi-class adapter baseline (200 epochs unless configured)."""
    config = config or TrainConfig(epochs=NAN_EPOCHS)
    neg = _resolve_negatives(loss, negatives, gallery.dim)
    dims = (gallery.dim, *hidden, len(gallery.subjects))
    net = init_net(dims, derive_seed(config.seed, 0))
    fit(net, gallery.vectors, gallery.class_index, neg, loss=loss, margin=margin,
        config=config.replace(seed=derive_seed(config.seed, 1)))
    snapshot = {"loss": loss, "margin": margin, "hidden": list(hidden),
                "n_negatives": int(len(neg)), "train": asdict(config)}
    return NanModel(net, gallery.subjects, snapshot)


def score_nan(model: NanModel, probes) -> ScoreTable:
    x, labels = _probe_matrix(probes, model.dim)
    return ScoreTable(forward(model.net, x), model.subjects, labels)


def score_cos(gallery: Gallery, probes) -> ScoreTable:
    """Max cosine similarity between each probe and each subject's records."""
    x, labels = _probe_matrix(probes, gallery.dim)
    if np.any(~np.any(x != 0.0, axis=1)) or np.any(~np.any(gallery.vectors != 0.0, axis=1)):
        raise ValueError("cosine similarity undefined for zero vectors")
    sim = kernels.max_cosine_per_subject(x, gallery.vectors, gallery.class_index,
                                         len(gallery.subjects))
    return ScoreTable(np.clip(sim, -1.0, 1.0), gallery.subjects, labels)


MODEL_FORMAT = "opennae.model/1"


def save_model(model: Ensemble | NanModel, path) -> None:
    """Serialize an ensemble or NAN model to a single ``.npz`` archive."""
    arrays = {"format": np.asarray(MODEL_FORMAT),
              "subjects": np.asarray(json.dumps(list(model.subjects)))}
    if isinstance(model, Ensemble):
        meta = {"kind": "nae", "aggregate": model.aggregate, "config": model.config,
                "seeds": [p.seed for p in model.partitions]}
        arrays["assignment"] = model.assignment_matrix
        for n, net in enumerate(model.learners):
            arrays.update(net_to_arrays(net, f"l{n}_"))
    elif isinstance(model, NanModel):
        meta = {"kind": "nan", "config": model.config}
        arrays.update(net_to_arrays(model.net, "net_"))
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    arrays["meta"] = np.asarray(json.dumps(meta))
    with Path(path).open("wb") as fh:
        np.savez(fh, **arrays)


def load_model(path) -> Ensemble | NanModel:
    with np.load(path, allow_pickle=False) as data:
        if "format" not in data or str(data["format"]) != MODEL_FORMAT:
            raise ValueError(f"{path}: not an opennae model file")
        meta = json.loads(str(data["meta"]))
        subjects = tuple(json.loads(str(data["subjects"])))
        if meta["kind"] == "nan":
            return NanModel(net_from_arrays(data, "net_"), subjects, meta["config"])
        assign = np.array(data["assignment"])
        learners, partitions = [], []
        for n, seed in enumerate(meta["seeds"]):
            learners.append(net_from_arrays(data, f"l{n}_"))
            a = assign[n].copy()
            a.setflags(write=False)
            partitions.append(Partition(a, seed))
        return Ensemble(learners, partitions, subjects, meta["config"], meta["aggregate"])


def score(model, probes, gallery: Gallery | None = None) -> ScoreTable:
    """Score probes with any model; ``model="cos"`` needs ``gallery``."""
    if isinstance(model, Ensemble):
        return score_ensemble(model, probes)
    if isinstance(model, NanModel):
        return score_nan(model, probes)
    if model == "cos":
        if gallery is None:
            raise ValueError("cosine scoring needs the gallery")
        return score_cos(gallery, probes)
    raise TypeError(f"unsupported model {model!r}")
