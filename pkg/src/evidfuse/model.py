"""Multi-source fusion model: encoders, evidential layers, Dempster
fusion, the class-weighted training objective, and the training loop.

Each evidence source owns an encoder, an evidential layer, and an
auxiliary logit head.  A forward pass maps every source to a mass
function, fuses the masses with Dempster's rule, and converts the
result to probabilities with the pignistic transform.  The objective is
the class-weighted log loss on those probabilities plus per-source
class-weighted cross-entropies on the auxiliary logits, each scaled by
the source's auxiliary weight.

Training runs mini-batch Adam with early stopping on the validation
overall loss, restoring the best-validation parameters.  All internal
forward code runs on either plain arrays (inference) or tape tensors
(training); parameters travel as flat name->array dicts.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tape
from .encoders import (
    AuxHead,
    ENCODER_OUTPUT_DIM,
    MlpEncoder,
    ResNetEncoder,
    TextHeadEncoder,
    encode,
    init_aux_head,
    init_encoder,
    sample_dropout_masks,
)
from .errors import ConfigError, DataError, TrainingDivergedError
from .evidential import EnnParams, enn_forward, evidence_batch, init_enn
from .masses import Frame, SimpleMass, combine_many, degree_of_conflict, pignistic
from .rng import substream

PROB_FLOOR = 1e-12
DEFAULT_PROTOTYPES = 20
DEFAULT_AUX_WEIGHT_STRUCTURED = 2.0
DEFAULT_AUX_WEIGHT_TEXT = 1.0
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class SourceSpec:
    """One evidence source: where its input comes from and how it is encoded."""

    name: str
    encoder_kind: str                 # mlp | resnet | text-head
    aux_weight: float
    feature_names: tuple | None = None  # structured columns; None = embedding input

    def __post_init__(self):
        if self.aux_weight < 0:
            raise ConfigError(f"source {self.name!r}: aux weight must be >= 0")
        if self.feature_names is not None:
            object.__setattr__(self, "feature_names", tuple(self.feature_names))

    def to_json_dict(self):
        return {
            "name": self.name,
            "encoder_kind": self.encoder_kind,
            "aux_weight": self.aux_weight,
            "feature_names": list(self.feature_names) if self.feature_names else None,
        }

    @staticmethod
    def from_json_dict(d):
        return SourceSpec(d["name"], d["encoder_kind"], d["aux_weight"],
                          tuple(d["feature_names"]) if d.get("feature_names") else None)


@dataclass(eq=False)
class FusionSource:
    spec: SourceSpec
    encoder: object
    enn: EnnParams
    aux: AuxHead


@dataclass(eq=False)
class FusionModel:
    frame: Frame
    sources: list
    class_weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.class_weights, dtype=np.float64)
        if w.shape != (self.frame.m,) or np.any(w <= 0):
            raise ConfigError("class weights must be positive, one per class")
        names = [s.spec.name for s in self.sources]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate source names: {names}")
        for s in self.sources:
            if s.enn.m != self.frame.m:
                raise ConfigError(f"source {s.spec.name!r} evidential layer has wrong class count")
        object.__setattr__(self, "class_weights", w)

    @property
    def n_sources(self):
        return len(self.sources)


@dataclass(frozen=True, eq=False)
class Prediction:
    fused_mass: SimpleMass
    probs: np.ndarray
    per_source_masses: list
    predicted_class: int
    ignorance: float
    conflict: np.ndarray  # pairwise degree of conflict between sources

    def to_json_dict(self):
        return {
            "fused_mass": self.fused_mass.to_json_dict(),
            "probs": self.probs.tolist(),
            "per_source_masses": [m.to_json_dict() for m in self.per_source_masses],
            "predicted_class": self.predicted_class,
            "ignorance": self.ignorance,
            "conflict": self.conflict.tolist(),
        }


# ---------------------------------------------------------------------------
# parameter plumbing

def param_dict(model: FusionModel) -> dict:
    """Every trainable scalar array under a stable dotted name."""
    out = {}
    for i, src in enumerate(model.sources):
        for key in sorted(src.encoder.params):
            out[f"src{i}.encoder.{key}"] = src.encoder.params[key]
        for key, arr in src.enn.as_param_dict().items():
            out[f"src{i}.enn.{key}"] = arr
        for key in sorted(src.aux.params):
            out[f"src{i}.aux.{key}"] = src.aux.params[key]
    return out


def with_params(model: FusionModel, params: dict) -> FusionModel:
    """Rebuild the model around a replacement parameter dict."""
    sources = []
    for i, src in enumerate(model.sources):
        enc_params = {k: np.asarray(params[f"src{i}.encoder.{k}"]) for k in src.encoder.params}
        encoder = type(src.encoder)(**{**src.encoder.__dict__, "params": enc_params})
        enn = EnnParams.from_param_dict(
            {k: np.asarray(params[f"src{i}.enn.{k}"]) for k in src.enn.as_param_dict()}
        )
        aux_params = {k: np.asarray(params[f"src{i}.aux.{k}"]) for k in src.aux.params}
        aux = AuxHead(params=aux_params, input_dim=src.aux.input_dim, n_classes=src.aux.n_classes)
        sources.append(FusionSource(src.spec, encoder, enn, aux))
    return FusionModel(model.frame, sources, model.class_weights)


def _source_param_view(params: dict, i: int, component: str, keys) -> dict:
    return {k: params[f"src{i}.{component}.{k}"] for k in keys}


# ---------------------------------------------------------------------------
# forward passes

def _check_inputs(model, inputs):
    if len(inputs) != model.n_sources:
        raise DataError(
            f"model has {model.n_sources} sources but got {len(inputs)} input blocks"
        )
    mats = []
    n = None
    for src, x in zip(model.sources, inputs):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != src.encoder.input_dim:
            raise DataError(
                f"source {src.spec.name!r} expects (N, {src.encoder.input_dim}) inputs, got {x.shape}"
            )
        if n is None:
            n = x.shape[0]
        elif x.shape[0] != n:
            raise DataError("per-source input blocks disagree on batch size")
        mats.append(x)
    return mats


def combine_batch(pairs):
    """Fold Dempster combination over (singletons, ignorance) batch pairs."""
    singles, ign = pairs[0]
    for s, g in pairs[1:]:
        cross = singles * s + singles * g + s * ign
        ign = ign * g
        denom = ad.sum_along(cross, axis=1, keepdims=True) + ign
        singles = cross / denom
        ign = ign / denom
    return singles, ign


def batch_internals(model, inputs, params=None, masks=None):
    """Per-source evidence, fused evidence, probabilities, aux logits.

    ``params`` substitutes leaf tensors during training; ``masks`` is a
    per-source list of dropout masks (None disables dropout).
    """
    mats = _check_inputs(model, inputs)
    source_pairs = []
    aux_logit_list = []
    for i, (src, x) in enumerate(zip(model.sources, mats)):
        if params is None:
            enc_p, enn_p, aux_p = src.encoder.params, src.enn.as_param_dict(), src.aux.params
        else:
            enc_p = _source_param_view(params, i, "encoder", src.encoder.params)
            enn_p = _source_param_view(params, i, "enn", src.enn.as_param_dict())
            aux_p = _source_param_view(params, i, "aux", src.aux.params)
        z = src.encoder.forward(x, params=enc_p, masks=masks[i] if masks else None)
        source_pairs.append(evidence_batch(z, **enn_p))
        aux_logit_list.append(src.aux.forward(z, params=aux_p))
    fused_singles, fused_ign = combine_batch(source_pairs)
    probs = fused_singles + fused_ign / model.frame.m
    return {
        "per_source": source_pairs,
        "fused": (fused_singles, fused_ign),
        "probs": probs,
        "aux_logits": aux_logit_list,
    }


def forward(model: FusionModel, sample_inputs, mode: str = "eval",
            dropout_rng=None) -> Prediction:
    """Single-sample prediction via the exact mass-algebra path."""
    sample_inputs = list(sample_inputs)
    if len(sample_inputs) != model.n_sources:
        raise DataError(
            f"sample provides {len(sample_inputs)} source inputs, model needs {model.n_sources}"
        )
    per_source = []
    for src, x in zip(model.sources, sample_inputs):
        if x is None:
            raise DataError(f"missing input for source {src.spec.name!r}")
        z = encode(src.encoder, np.asarray(x, dtype=np.float64), mode=mode, rng=dropout_rng)
        per_source.append(enn_forward(z, src.enn, model.frame))
    fused = combine_many(per_source)
    probs = pignistic(fused)
    k = len(per_source)
    conflict = np.zeros((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            conflict[i, j] = conflict[j, i] = degree_of_conflict(per_source[i], per_source[j])
    return Prediction(
        fused_mass=fused,
        probs=probs,
        per_source_masses=per_source,
        predicted_class=int(np.argmax(probs)),
        ignorance=fused.ignorance,
        conflict=conflict,
    )


def predict_batch(model: FusionModel, inputs) -> list:
    """Eval-mode predictions for a whole split (vectorized forward)."""
    internals = batch_internals(model, inputs)
    singles, ign = internals["fused"]
    probs = internals["probs"]
    n = probs.shape[0]
    per_source = [
        [SimpleMass(model.frame, s[i], float(g[i, 0])) for s, g in internals["per_source"]]
        for i in range(n)
    ]
    out = []
    for i in range(n):
        masses = per_source[i]
        k = len(masses)
        conflict = np.zeros((k, k))
        for a in range(k):
            for b in range(a + 1, k):
                conflict[a, b] = conflict[b, a] = degree_of_conflict(masses[a], masses[b])
        out.append(Prediction(
            fused_mass=SimpleMass(model.frame, singles[i], float(ign[i, 0])),
            probs=probs[i],
            per_source_masses=masses,
            predicted_class=int(np.argmax(probs[i])),
            ignorance=float(ign[i, 0]),
            conflict=conflict,
        ))
    return out


def predict_probs(model: FusionModel, inputs) -> np.ndarray:
    """(N, M) pignistic probabilities, eval mode."""
    return batch_internals(model, inputs)["probs"]


# ---------------------------------------------------------------------------
# losses

def loss_main(probs, labels, class_weights):
    """Class-weighted negative log of the predicted true-class probability."""
    m = len(ad.value_of(class_weights))
    onehot = np.eye(m)[np.asarray(labels)]
    weights = onehot @ np.asarray(ad.value_of(class_weights))
    p_true = ad.sum_along(probs * onehot, axis=1)
    return -ad.mean_all(weights * ad.log(ad.maximum(p_true, PROB_FLOOR)))


def loss_aux(logits, labels, class_weights):
    """Class-weighted cross entropy over softmaxed logits (max-shifted)."""
    m = len(ad.value_of(class_weights))
    onehot = np.eye(m)[np.asarray(labels)]
    weights = onehot @ np.asarray(ad.value_of(class_weights))
    shifted = logits - np.max(ad.value_of(logits), axis=1, keepdims=True)
    log_norm = ad.log(ad.sum_along(ad.exp(shifted), axis=1, keepdims=True))
    log_probs = shifted - log_norm
    return -ad.mean_all(weights * ad.sum_along(onehot * log_probs, axis=1))


def loss_overall(model: FusionModel, inputs, labels, params=None, masks=None):
    """Main loss plus auxiliary-weighted per-source cross entropies."""
    internals = batch_internals(model, inputs, params=params, masks=masks)
    total = loss_main(internals["probs"], labels, model.class_weights)
    for src, logits in zip(model.sources, internals["aux_logits"]):
        if src.spec.aux_weight != 0.0:
            total = total + src.spec.aux_weight * loss_aux(logits, labels, model.class_weights)
    return total


def make_dropout_masks(model: FusionModel, n: int, rng) -> list:
    return [
        sample_dropout_masks(src.encoder, n, src.encoder.dropout, rng)
        for src in model.sources
    ]


def loss_and_grad(model: FusionModel, inputs, labels, params=None, masks=None):
    """Overall loss and its gradient for every trainable parameter.

    Frozen inputs (e.g. precomputed text embeddings) are data, not
    parameters, so they never get gradient slots.
    """
    if params is None:
        params = param_dict(model)
    tape = Tape()
    leaves = {name: tape.leaf(arr) for name, arr in params.items()}
    loss_t = loss_overall(model, inputs, labels, params=leaves, masks=masks)
    loss_value = float(loss_t.value)
    if not np.isfinite(loss_value):
        raise TrainingDivergedError(f"non-finite loss {loss_value!r}")
    tape.backward(loss_t)
    grads = {
        name: (leaf.grad if leaf.grad is not None else np.zeros_like(leaf.value))
        for name, leaf in leaves.items()
    }
    return loss_value, grads


# ---------------------------------------------------------------------------
# training

@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    max_epochs: int = 150
    patience: int = 10
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 0:
            raise ConfigError("batch_size/max_epochs must be >= 1 and patience >= 0")
        if self.learning_rate < 0:
            raise ConfigError("learning rate must be >= 0")


@dataclass
class TrainResult:
    model: FusionModel
    history: list = field(default_factory=list)
    best_epoch: int = -1
    best_val_loss: float = float("inf")


def train(model: FusionModel, train_inputs, train_labels, val_inputs, val_labels,
          config: TrainConfig) -> TrainResult:
    """Mini-batch Adam with early stopping on validation overall loss.

    Stops once the validation loss has not improved for ``patience``
    consecutive epochs (patience 0 disables early stopping) and returns
    the parameters from the best-validation epoch.
    """
    train_labels = np.asarray(train_labels)
    val_labels = np.asarray(val_labels)
    n = len(train_labels)
    if n == 0 or len(val_labels) == 0:
        raise DataError("training and validation splits must be non-empty")

    shuffle_rng = substream(config.seed, "shuffle")
    dropout_rng = substream(config.seed, "dropout")

    params = {k: v.copy() for k, v in param_dict(model).items()}
    adam_m = {k: np.zeros_like(v) for k, v in params.items()}
    adam_v = {k: np.zeros_like(v) for k, v in params.items()}
    step = 0

    best_params = {k: v.copy() for k, v in params.items()}
    best_val = float("inf")
    best_epoch = -1
    history = []
    wait = 0

    def fail(message):
        raise TrainingDivergedError(
            message,
            checkpoint=with_params(model, best_params),
            history=history,
        )

    b1, b2, eps, lr = (config.adam_beta1, config.adam_beta2,
                       config.adam_eps, config.learning_rate)
    for epoch in range(config.max_epochs):
        order = shuffle_rng.permutation(n)
        train_loss_sum = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            batch_inputs = [x[idx] for x in train_inputs]
            masks = make_dropout_masks(model, len(idx), dropout_rng)
            try:
                loss, grads = loss_and_grad(model, batch_inputs, train_labels[idx],
                                            params=params, masks=masks)
            except TrainingDivergedError:
                fail(f"training loss diverged at epoch {epoch}")
            train_loss_sum += loss * len(idx)
            step += 1
            correction = np.sqrt(1.0 - b2 ** step) / (1.0 - b1 ** step)
            for name, g in grads.items():
                adam_m[name] = b1 * adam_m[name] + (1.0 - b1) * g
                adam_v[name] = b2 * adam_v[name] + (1.0 - b2) * (g * g)
                params[name] = params[name] - lr * correction * adam_m[name] / (
                    np.sqrt(adam_v[name]) + eps
                )
        val_loss = float(ad.value_of(
            loss_overall(model, val_inputs, val_labels, params=params)
        ))
        if not np.isfinite(val_loss):
            fail(f"validation loss diverged at epoch {epoch}")
        history.append({
            "epoch": epoch,
            "train_loss": train_loss_sum / n,
            "val_loss": val_loss,
        })
        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_params = {k: v.copy() for k, v in params.items()}
            wait = 0
        else:
            wait += 1
            if wait >= config.patience > 0:
                break

    return TrainResult(
        model=with_params(model, best_params),
        history=history,
        best_epoch=best_epoch,
        best_val_loss=best_val,
    )


# ---------------------------------------------------------------------------
# model construction and checkpoints

def init_model(frame: Frame, specs, train_inputs, train_labels, seed: int,
               prototypes: int = DEFAULT_PROTOTYPES, encoder_overrides=None) -> FusionModel:
    """Seeded model construction.

    Encoders get random seeded weights; each source's evidential layer
    is initialized on its encoder's untrained output for the training
    inputs (k-means prototypes, label-frequency memberships).
    """
    train_labels = np.asarray(train_labels)
    sources = []
    overrides = encoder_overrides or {}
    for spec, x in zip(specs, train_inputs):
        x = np.asarray(x, dtype=np.float64)
        encoder = init_encoder(spec.encoder_kind, x.shape[1],
                               substream(seed, f"init.encoder.{spec.name}"),
                               **overrides.get(spec.name, {}))
        z = encode(encoder, x)
        enn_seed = int(substream(seed, f"init.enn.{spec.name}").integers(0, 2 ** 31 - 1))
        enn = init_enn(z, train_labels, prototypes, enn_seed, m=frame.m)
        aux = init_aux_head(encoder.output_dim, frame.m,
                            substream(seed, f"init.aux.{spec.name}"))
        sources.append(FusionSource(spec, encoder, enn, aux))
    counts = np.bincount(train_labels, minlength=frame.m)
    if np.any(counts == 0):
        raise DataError("every class must appear in the training labels")
    weights = len(train_labels) / (frame.m * counts.astype(np.float64))
    return FusionModel(frame, sources, weights)


_ENCODER_CLASSES = {"mlp": MlpEncoder, "resnet": ResNetEncoder, "text-head": TextHeadEncoder}


def _encoder_to_json(encoder):
    meta = {
        "kind": encoder.kind,
        "input_dim": encoder.input_dim,
        "hidden_dim": encoder.hidden_dim,
        "output_dim": encoder.output_dim,
        "dropout": encoder.dropout,
        "params": {k: v.tolist() for k, v in encoder.params.items()},
    }
    if isinstance(encoder, ResNetEncoder):
        meta["n_blocks"] = encoder.n_blocks
    return meta


def _encoder_from_json(meta):
    cls = _ENCODER_CLASSES[meta["kind"]]
    params = {k: np.asarray(v, dtype=np.float64) for k, v in meta["params"].items()}
    kwargs = dict(params=params, input_dim=meta["input_dim"],
                  hidden_dim=meta["hidden_dim"], output_dim=meta["output_dim"],
                  dropout=meta["dropout"])
    if meta["kind"] == "resnet":
        kwargs["n_blocks"] = meta["n_blocks"]
    return cls(**kwargs)


def model_to_json_dict(model: FusionModel, config_hash: str = "", extra=None) -> dict:
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "config_hash": config_hash,
        "frame": {"labels": list(model.frame.labels)},
        "class_weights": model.class_weights.tolist(),
        "sources": [
            {
                "spec": src.spec.to_json_dict(),
                "encoder": _encoder_to_json(src.encoder),
                "enn": {k: v.tolist() for k, v in src.enn.as_param_dict().items()},
                "aux": {
                    "input_dim": src.aux.input_dim,
                    "n_classes": src.aux.n_classes,
                    "params": {k: v.tolist() for k, v in src.aux.params.items()},
                },
            }
            for src in model.sources
        ],
    }
    if extra:
        doc["extra"] = extra
    return doc


def model_from_json_dict(doc: dict) -> FusionModel:
    if doc.get("format_version") != CHECKPOINT_VERSION:
        raise DataError(f"unsupported checkpoint version {doc.get('format_version')!r}")
    frame = Frame(tuple(doc["frame"]["labels"]))
    sources = []
    for sd in doc["sources"]:
        spec = SourceSpec.from_json_dict(sd["spec"])
        encoder = _encoder_from_json(sd["encoder"])
        enn = EnnParams.from_param_dict(
            {k: np.asarray(v, dtype=np.float64) for k, v in sd["enn"].items()}
        )
        aux = AuxHead(
            params={k: np.asarray(v, dtype=np.float64) for k, v in sd["aux"]["params"].items()},
            input_dim=sd["aux"]["input_dim"],
            n_classes=sd["aux"]["n_classes"],
        )
        sources.append(FusionSource(spec, encoder, enn, aux))
    return FusionModel(frame, sources, np.asarray(doc["class_weights"], dtype=np.float64))


def save_checkpoint(model: FusionModel, path: str, config_hash: str = "", extra=None):
    doc = model_to_json_dict(model, config_hash=config_hash, extra=extra)
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
    os.replace(tmp, path)


def load_checkpoint(path: str):
    """Returns (model, full checkpoint document)."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return model_from_json_dict(doc), doc
