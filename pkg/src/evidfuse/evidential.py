"""Prototype-based evidential layer: feature vector in, mass function out.

Each of H learned prototypes is one piece of evidence.  Its activation
decays with squared Euclidean distance from the input, scaled by a
per-prototype precision and a support ceiling; the activation is split
across classes by a per-prototype membership simplex, with the rest
assigned to ignorance.  The H prototype masses are then fused by
Dempster's rule.

Constrained quantities live in raw (unconstrained) form so plain
gradient steps preserve the constraints:

* precision  gamma = scale_raw**2            (> 0)
* support    beta  = sigmoid(support_raw)    (in (0, 1))
* membership u     = row softmax(membership_raw)

beta < 1 keeps every prototype's ignorance mass positive, which rules
out total conflict during fusion.  (Float saturation at
|support_raw| > ~37 collapses sigmoid to exactly 0 or 1; training from
moderate initial values never reaches that regime.)
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import DataError
from .masses import Frame, SimpleMass, combine_many

# beta initialization used by init_enn: sigmoid(log 9) = 0.9
INIT_SUPPORT_RAW = float(np.log(9.0))
KMEANS_ITERS = 25


@dataclass(frozen=True, eq=False)
class EnnParams:
    """Trainable parameters of one evidential mapping layer."""

    prototypes: np.ndarray      # (H, D)
    scale_raw: np.ndarray       # (H,)
    support_raw: np.ndarray     # (H,)
    membership_raw: np.ndarray  # (H, M)

    def __post_init__(self):
        p = np.asarray(self.prototypes, dtype=np.float64)
        if p.ndim != 2 or p.shape[0] < 1 or p.shape[1] < 1:
            raise DataError(f"prototypes must be a (H>=1, D>=1) matrix, got {p.shape}")
        h = p.shape[0]
        sc = np.asarray(self.scale_raw, dtype=np.float64)
        su = np.asarray(self.support_raw, dtype=np.float64)
        mr = np.asarray(self.membership_raw, dtype=np.float64)
        if sc.shape != (h,) or su.shape != (h,):
            raise DataError("scale_raw and support_raw must have one entry per prototype")
        if mr.ndim != 2 or mr.shape[0] != h or mr.shape[1] < 2:
            raise DataError(f"membership_raw must be (H, M>=2), got {mr.shape}")
        for name, arr in (("prototypes", p), ("scale_raw", sc),
                          ("support_raw", su), ("membership_raw", mr)):
            if not np.all(np.isfinite(arr)):
                raise DataError(f"non-finite values in {name}")
        object.__setattr__(self, "prototypes", p)
        object.__setattr__(self, "scale_raw", sc)
        object.__setattr__(self, "support_raw", su)
        object.__setattr__(self, "membership_raw", mr)

    @property
    def h(self) -> int:
        return self.prototypes.shape[0]

    @property
    def d(self) -> int:
        return self.prototypes.shape[1]

    @property
    def m(self) -> int:
        return self.membership_raw.shape[1]

    def gamma(self) -> np.ndarray:
        return self.scale_raw ** 2

    def beta(self) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.support_raw))

    def membership(self) -> np.ndarray:
        shifted = self.membership_raw - self.membership_raw.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=1, keepdims=True)

    def as_param_dict(self) -> dict:
        return {
            "prototypes": self.prototypes,
            "scale_raw": self.scale_raw,
            "support_raw": self.support_raw,
            "membership_raw": self.membership_raw,
        }

    @staticmethod
    def from_param_dict(d: dict) -> "EnnParams":
        return EnnParams(d["prototypes"], d["scale_raw"], d["support_raw"], d["membership_raw"])


def prototype_activations(x: np.ndarray, params: EnnParams) -> np.ndarray:
    """Distance-discounted activation of every prototype for one input."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (params.d,):
        raise DataError(f"input has shape {x.shape}, prototypes expect ({params.d},)")
    if not np.all(np.isfinite(x)):
        raise DataError("non-finite input vector")
    d2 = np.sum((x - params.prototypes) ** 2, axis=1)
    return params.beta() * np.exp(-params.gamma() * d2)


def prototype_mass(activation: float, membership: np.ndarray,
                   frame: Frame | None = None) -> SimpleMass:
    """One prototype's evidence: activation split by class membership."""
    membership = np.asarray(membership, dtype=np.float64)
    if frame is None:
        frame = Frame.of_size(len(membership))
    if not 0.0 <= activation <= 1.0:
        raise DataError(f"activation {activation!r} outside [0, 1]")
    return SimpleMass(frame, membership * activation, 1.0 - activation)


def enn_forward(x: np.ndarray, params: EnnParams, frame: Frame | None = None) -> SimpleMass:
    """Fuse all prototype evidence for one input by Dempster's rule."""
    if frame is None:
        frame = Frame.of_size(params.m)
    s = prototype_activations(x, params)
    u = params.membership()
    return combine_many([prototype_mass(s[h], u[h], frame) for h in range(params.h)])


def evidence_batch(x, prototypes, scale_raw, support_raw, membership_raw):
    """Batched, differentiable layer forward.

    Accepts tape tensors or plain arrays.  Fuses the H prototype masses
    via the commonality product, which is algebraically identical to
    the pairwise Dempster fold for this mass family but costs a fixed
    number of array ops.  Returns (singletons (N, M), ignorance (N, 1)).
    """
    n = np.shape(ad.value_of(x))[0]
    h = np.shape(ad.value_of(prototypes))[0]

    gamma = scale_raw * scale_raw
    beta = ad.sigmoid(support_raw)
    mraw = membership_raw - np.max(ad.value_of(membership_raw), axis=1, keepdims=True)
    mexp = ad.exp(mraw)
    u = mexp / ad.sum_along(mexp, axis=1, keepdims=True)            # (H, M)

    x2 = ad.sum_along(x * x, axis=1, keepdims=True)                  # (N, 1)
    p2 = ad.sum_along(prototypes * prototypes, axis=1)               # (H,)
    d2 = x2 - 2.0 * (x @ ad.transpose(prototypes)) + p2              # (N, H)
    s = beta * ad.exp(-(gamma * d2))                                 # (N, H)

    s3 = ad.reshape(s, (n, h, 1))
    ignorance = 1.0 - s3                                             # (N, H, 1)
    commonality = u * s3 + ignorance                                 # (N, H, M)
    q_prod = ad.prod_along(commonality, axis=1)                      # (N, M)
    ign_prod = ad.prod_along(ignorance, axis=1)                      # (N, 1)
    singletons = q_prod - ign_prod
    denom = ad.sum_along(singletons, axis=1, keepdims=True) + ign_prod
    return singletons / denom, ign_prod / denom


def lloyd_kmeans(points: np.ndarray, k: int, rng: np.random.Generator,
                 iters: int = KMEANS_ITERS):
    """Plain Lloyd iteration with seeded sampling of initial centers.

    Emptied clusters are re-seeded with the point farthest from its
    assigned center, so every cluster ends non-empty.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if k > n:
        raise DataError(f"cannot place {k} prototypes on {n} samples")
    centers = points[rng.choice(n, size=k, replace=False)].copy()
    assign = None
    for _ in range(iters):
        d2 = (
            np.sum(points ** 2, axis=1, keepdims=True)
            - 2.0 * points @ centers.T
            + np.sum(centers ** 2, axis=1)
        )
        new_assign = np.argmin(d2, axis=1)
        own_d2 = d2[np.arange(n), new_assign]
        for c in range(k):
            if not np.any(new_assign == c):
                far = int(np.argmax(own_d2))
                centers[c] = points[far]
                new_assign[far] = c
                own_d2[far] = 0.0
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for c in range(k):
            centers[c] = points[assign == c].mean(axis=0)
    return centers, assign


def init_enn(features: np.ndarray, labels: np.ndarray, h: int, seed: int,
             m: int | None = None) -> EnnParams:
    """Data-driven initialization: k-means prototypes, per-cluster label
    frequencies for memberships, per-cluster spread for precisions."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if features.ndim != 2:
        raise DataError(f"features must be (N, D), got {features.shape}")
    n = features.shape[0]
    if h > n:
        raise DataError(f"requested {h} prototypes on only {n} samples")
    if m is None:
        m = int(labels.max()) + 1
    rng = np.random.default_rng(seed)
    centers, assign = lloyd_kmeans(features, h, rng)

    membership_raw = np.zeros((h, m))
    msd = np.zeros(h)
    for c in range(h):
        members = assign == c
        counts = np.bincount(labels[members], minlength=m).astype(np.float64)
        membership_raw[c] = np.log(counts + 1.0)
        if np.any(members):
            msd[c] = np.mean(np.sum((features[members] - centers[c]) ** 2, axis=1))
    # singleton or zero-spread clusters borrow the average spread
    positive = msd[msd > 0.0]
    fallback = float(positive.mean()) if positive.size else 1.0
    msd = np.where(msd > 0.0, msd, fallback)
    gamma = 1.0 / (2.0 * msd)

    return EnnParams(
        prototypes=centers,
        scale_raw=np.sqrt(gamma),
        support_raw=np.full(h, INIT_SUPPORT_RAW),
        membership_raw=membership_raw,
    )
