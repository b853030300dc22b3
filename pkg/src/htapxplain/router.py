"""Engine router: a small tree-convolution network over plan pairs.

Each plan node becomes a feature vector (operator one-hot, relation one-hot,
log-scaled optimizer cost and row estimates).  Two convolution layers slide a
filter over (node, left child, right child) triples with zero vectors standing
in for missing children, a max pool collapses the tree to a fixed-size code,
and the codes of both plans feed a tiny classifier head.  Forward and backward
passes are plain numpy; gradients are exact and checkable by finite
differences.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateDataError,
    DimensionError,
    DivergenceError,
    FormatVersionError,
    ParamError,
    VocabError,
)
from .plans import NODE_TYPES, UNKNOWN_NODE_TYPE, Engine, ExecutionResult, PlanPair, PlanTree

MODEL_FORMAT_VERSION = 1

CONV1_OUT = 16
CONV2_OUT = 8
HEAD_HIDDEN = 8
N_CLASSES = 2  # index 0 = TP, index 1 = AP; argmax ties resolve to TP
PAIR_DIM = 2 * CONV2_OUT

CLASS_ORDER = (Engine.TP, Engine.AP)


@dataclass(frozen=True)
class Featurizer:
    """Maps plan nodes to fixed-width vectors; part of the persisted model."""

    node_types: tuple[str, ...]
    tables: tuple[str, ...]
    cost_log_scale: float = 5.0
    rows_log_scale: float = 5.0

    @classmethod
    def default(cls) -> "Featurizer":
        from .workload import TPCH_CATALOG

        return cls(
            node_types=NODE_TYPES + (UNKNOWN_NODE_TYPE,),
            tables=TPCH_CATALOG.names(),
        )

    @property
    def feature_dim(self) -> int:
        return len(self.node_types) + len(self.tables) + 2

    def featurize_tree(self, tree: PlanTree) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Vectorize one plan: node features plus left/right child indices.

        Children index -1 means absent; forward passes remap that to a zero
        sentinel row.
        """
        type_index = {t: i for i, t in enumerate(self.node_types)}
        table_index = {t: i for i, t in enumerate(self.tables)}
        nodes = list(tree.root.walk())
        n, d = len(nodes), self.feature_dim
        pos = {id(node): i for i, node in enumerate(nodes)}
        x = np.zeros((n, d), dtype=np.float64)
        left = np.full(n, -1, dtype=np.int64)
        right = np.full(n, -1, dtype=np.int64)
        for i, node in enumerate(nodes):
            if node.node_type not in type_index:
                raise VocabError(f"operator {node.node_type!r} not in featurizer vocabulary")
            x[i, type_index[node.node_type]] = 1.0
            if node.relation_name is not None:
                if node.relation_name not in table_index:
                    raise VocabError(
                        f"relation {node.relation_name!r} not in featurizer tables"
                    )
                x[i, len(self.node_types) + table_index[node.relation_name]] = 1.0
            x[i, d - 2] = np.log1p(node.total_cost) / self.cost_log_scale
            x[i, d - 1] = np.log1p(node.plan_rows) / self.rows_log_scale
            if node.children:
                left[i] = pos[id(node.children[0])]
            if len(node.children) > 1:
                right[i] = pos[id(node.children[1])]
        return x, left, right

    def to_dict(self) -> dict:
        return {
            "node_types": list(self.node_types),
            "tables": list(self.tables),
            "cost_log_scale": self.cost_log_scale,
            "rows_log_scale": self.rows_log_scale,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Featurizer":
        return cls(
            node_types=tuple(doc["node_types"]),
            tables=tuple(doc["tables"]),
            cost_log_scale=float(doc["cost_log_scale"]),
            rows_log_scale=float(doc["rows_log_scale"]),
        )


@dataclass(frozen=True)
class Hyperparams:
    learning_rate: float = 0.01
    epochs: int = 200
    batch_size: int = 16
    init_scale: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.epochs < 1 or self.batch_size < 1:
            raise ParamError("learning_rate, epochs and batch_size must be positive")
        if self.init_scale <= 0:
            raise ParamError("init_scale must be positive")


PARAM_SHAPES = {
    "w1": lambda d: (CONV1_OUT, 3 * d),
    "b1": lambda d: (CONV1_OUT,),
    "w2": lambda d: (CONV2_OUT, 3 * CONV1_OUT),
    "b2": lambda d: (CONV2_OUT,),
    "w3": lambda d: (HEAD_HIDDEN, PAIR_DIM),
    "b3": lambda d: (HEAD_HIDDEN,),
    "w4": lambda d: (N_CLASSES, HEAD_HIDDEN),
    "b4": lambda d: (N_CLASSES,),
}


@dataclass
class RouterModel:
    featurizer: Featurizer
    params: dict[str, np.ndarray]

    def __post_init__(self):
        d = self.featurizer.feature_dim
        for name, shape_of in PARAM_SHAPES.items():
            if name not in self.params:
                raise DimensionError(f"missing parameter {name!r}")
            want = shape_of(d)
            got = self.params[name].shape
            if got != want:
                raise DimensionError(f"parameter {name!r} has shape {got}, expected {want}")


def init_model(
    featurizer: Featurizer | None = None,
    init_scale: float = 0.1,
    seed: int = 0,
) -> RouterModel:
    featurizer = featurizer or Featurizer.default()
    rng = np.random.RandomState(seed)
    d = featurizer.feature_dim
    params = {
        name: rng.standard_normal(shape_of(d)) * init_scale
        for name, shape_of in PARAM_SHAPES.items()
    }
    return RouterModel(featurizer=featurizer, params=params)


# --- forward ----------------------------------------------------------------

def _relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


def _pad(h: np.ndarray) -> np.ndarray:
    return np.vstack([np.zeros((1, h.shape[1])), h])


def _tree_forward(params: dict, x: np.ndarray, left: np.ndarray, right: np.ndarray) -> dict:
    li, ri = left + 1, right + 1  # sentinel row 0
    xp = _pad(x)
    t1 = np.hstack([x, xp[li], xp[ri]])
    z1 = t1 @ params["w1"].T + params["b1"]
    h1 = _relu(z1)
    h1p = _pad(h1)
    t2 = np.hstack([h1, h1p[li], h1p[ri]])
    z2 = t2 @ params["w2"].T + params["b2"]
    pooled = z2.max(axis=0)
    return {
        "li": li, "ri": ri, "t1": t1, "z1": z1, "t2": t2, "z2": z2,
        "pool_idx": z2.argmax(axis=0), "code": pooled,
    }


def _tree_backward(params: dict, cache: dict, dcode: np.ndarray, grads: dict) -> None:
    n = cache["z2"].shape[0]
    dz2 = np.zeros_like(cache["z2"])
    dz2[cache["pool_idx"], np.arange(CONV2_OUT)] = dcode
    grads["w2"] += dz2.T @ cache["t2"]
    grads["b2"] += dz2.sum(axis=0)
    dt2 = dz2 @ params["w2"]
    dh1 = dt2[:, :CONV1_OUT].copy()
    dh1p = np.zeros((n + 1, CONV1_OUT))
    np.add.at(dh1p, cache["li"], dt2[:, CONV1_OUT:2 * CONV1_OUT])
    np.add.at(dh1p, cache["ri"], dt2[:, 2 * CONV1_OUT:])
    dh1 += dh1p[1:]
    dz1 = dh1 * (cache["z1"] > 0)
    grads["w1"] += dz1.T @ cache["t1"]
    grads["b1"] += dz1.sum(axis=0)


def encode_plan(model: RouterModel, tree: PlanTree) -> np.ndarray:
    """Fixed 8-value code for one plan; deterministic for identical input."""
    x, left, right = model.featurizer.featurize_tree(tree)
    return _tree_forward(model.params, x, left, right)["code"]


def embed_pair(model: RouterModel, pair: PlanPair) -> np.ndarray:
    """16-value pair embedding: AP code first, then TP code."""
    return np.concatenate([encode_plan(model, pair.ap_plan), encode_plan(model, pair.tp_plan)])


def _head_forward(params: dict, embedding: np.ndarray) -> dict:
    z3 = params["w3"] @ embedding + params["b3"]
    h3 = _relu(z3)
    logits = params["w4"] @ h3 + params["b4"]
    shifted = logits - logits.max()
    exp = np.exp(shifted)
    probs = exp / exp.sum()
    return {"z3": z3, "h3": h3, "logits": logits, "probs": probs}


def predict(model: RouterModel, pair: PlanPair) -> tuple[Engine, np.ndarray]:
    """Predicted winner plus class probabilities ordered (TP, AP)."""
    out = _head_forward(model.params, embed_pair(model, pair))
    return CLASS_ORDER[int(np.argmax(out["logits"]))], out["probs"]


def _pair_caches(model: RouterModel, pair: PlanPair) -> tuple[dict, dict]:
    fz = model.featurizer
    ap = _tree_forward(model.params, *fz.featurize_tree(pair.ap_plan))
    tp = _tree_forward(model.params, *fz.featurize_tree(pair.tp_plan))
    return ap, tp


def _example_loss_and_grads(
    params: dict, ap_cache: dict, tp_cache: dict, label: int, grads: dict | None
) -> float:
    embedding = np.concatenate([ap_cache["code"], tp_cache["code"]])
    head = _head_forward(params, embedding)
    loss = -float(np.log(max(head["probs"][label], 1e-300)))
    if grads is None:
        return loss
    dlogits = head["probs"].copy()
    dlogits[label] -= 1.0
    grads["w4"] += np.outer(dlogits, head["h3"])
    grads["b4"] += dlogits
    dh3 = params["w4"].T @ dlogits
    dz3 = dh3 * (head["z3"] > 0)
    grads["w3"] += np.outer(dz3, embedding)
    grads["b3"] += dz3
    dembed = params["w3"].T @ dz3
    _tree_backward(params, ap_cache, dembed[:CONV2_OUT], grads)
    _tree_backward(params, tp_cache, dembed[CONV2_OUT:], grads)
    return loss


def _zero_grads(params: dict) -> dict:
    return {name: np.zeros_like(value) for name, value in params.items()}


def _label_of(result: ExecutionResult) -> int:
    return CLASS_ORDER.index(result.winner)


@dataclass
class TrainReport:
    epoch_losses: list[float] = field(default_factory=list)
    holdout_accuracies: list[float] = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.epoch_losses[-1]

    @property
    def final_accuracy(self) -> float:
        return self.holdout_accuracies[-1] if self.holdout_accuracies else float("nan")


def accuracy(model: RouterModel, data: list[tuple[PlanPair, ExecutionResult]]) -> float:
    if not data:
        raise ParamError("cannot score an empty dataset")
    hits = sum(predict(model, pair)[0] is result.winner for pair, result in data)
    return hits / len(data)


def train(
    train_data: list[tuple[PlanPair, ExecutionResult]],
    hyper: Hyperparams = Hyperparams(),
    holdout: list[tuple[PlanPair, ExecutionResult]] | None = None,
    featurizer: Featurizer | None = None,
) -> tuple[RouterModel, TrainReport]:
    """Mini-batch SGD on softmax cross-entropy from a fresh seeded model."""
    if not train_data:
        raise ParamError("training needs at least one example")
    labels = [_label_of(result) for _, result in train_data]
    if len(set(labels)) < 2:
        raise DegenerateDataError("training data contains a single class")
    model = init_model(featurizer, init_scale=hyper.init_scale, seed=hyper.seed)

    # plans never change during training, so featurize once
    feats = [
        (model.featurizer.featurize_tree(pair.ap_plan),
         model.featurizer.featurize_tree(pair.tp_plan))
        for pair, _ in train_data
    ]
    rng = np.random.RandomState(hyper.seed)
    report = TrainReport()
    params = model.params
    # divergence surfaces as a non-finite loss below, so numpy's own
    # overflow chatter on the way there is just noise
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(hyper.epochs):
            order = rng.permutation(len(train_data))
            total = 0.0
            for start in range(0, len(order), hyper.batch_size):
                batch = order[start:start + hyper.batch_size]
                grads = _zero_grads(params)
                for i in batch:
                    ap_feat, tp_feat = feats[i]
                    ap_cache = _tree_forward(params, *ap_feat)
                    tp_cache = _tree_forward(params, *tp_feat)
                    total += _example_loss_and_grads(
                        params, ap_cache, tp_cache, labels[i], grads
                    )
                scale = hyper.learning_rate / len(batch)
                for name in params:
                    params[name] -= scale * grads[name]
            mean_loss = total / len(train_data)
            if not np.isfinite(mean_loss):
                raise DivergenceError(f"loss became {mean_loss} during training")
            report.epoch_losses.append(mean_loss)
            if holdout:
                report.holdout_accuracies.append(accuracy(model, holdout))
    return model, report


# --- gradient verification ---------------------------------------------------

def _dataset_loss(params: dict, feats: list, labels: list[int]) -> float:
    total = 0.0
    for (ap_feat, tp_feat), label in zip(feats, labels):
        ap_cache = _tree_forward(params, *ap_feat)
        tp_cache = _tree_forward(params, *tp_feat)
        total += _example_loss_and_grads(params, ap_cache, tp_cache, label, None)
    return total / len(labels)


def gradient_check(
    model: RouterModel,
    example: tuple[PlanPair, ExecutionResult],
    step: float = 1e-5,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Coordinates where both gradients vanish (< 1e-8, locally flat loss) are
    skipped: the ratio is meaningless there.
    """
    pair, result = example
    feats = [
        (model.featurizer.featurize_tree(pair.ap_plan),
         model.featurizer.featurize_tree(pair.tp_plan))
    ]
    labels = [_label_of(result)]
    params = model.params
    grads = _zero_grads(params)
    ap_feat, tp_feat = feats[0]
    ap_cache = _tree_forward(params, *ap_feat)
    tp_cache = _tree_forward(params, *tp_feat)
    _example_loss_and_grads(params, ap_cache, tp_cache, labels[0], grads)

    worst = 0.0
    for name, grad in grads.items():
        flat = params[name].reshape(-1)
        gflat = grad.reshape(-1)
        for j in range(flat.size):
            keep = flat[j]
            flat[j] = keep + step
            hi = _dataset_loss(params, feats, labels)
            flat[j] = keep - step
            lo = _dataset_loss(params, feats, labels)
            flat[j] = keep
            numeric = (hi - lo) / (2 * step)
            if abs(numeric) < 1e-8 and abs(gflat[j]) < 1e-8:
                continue
            denom = max(abs(numeric) + abs(gflat[j]), 1e-8)
            worst = max(worst, abs(numeric - gflat[j]) / denom)
    return worst


# --- persistence --------------------------------------------------------------

def save_model(model: RouterModel, path: str) -> None:
    doc = {
        "version": MODEL_FORMAT_VERSION,
        "class_order": [e.value for e in CLASS_ORDER],
        "featurizer": model.featurizer.to_dict(),
        "params": {name: value.tolist() for name, value in model.params.items()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_model(path: str) -> RouterModel:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("version") != MODEL_FORMAT_VERSION:
        raise FormatVersionError(
            f"model version {doc.get('version')!r} != {MODEL_FORMAT_VERSION}"
        )
    featurizer = Featurizer.from_dict(doc["featurizer"])
    params = {name: np.asarray(value, dtype=np.float64) for name, value in doc["params"].items()}
    return RouterModel(featurizer=featurizer, params=params)
