"""Imitation branch: similarity kernels, harmonic label propagation on a
Gaussian random field (Zhu et al. 2003), and greedy expected-error-reduction
selection of summary states.

The multiclass case is handled one-vs-rest: one harmonic system per action,
hard predictions by argmax (ties to the lowest action index).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from sklearn.base import BaseEstimator, ClassifierMixin

from .core import (
    ConfigError,
    DemonstrationSet,
    ExtractionError,
    FitError,
    PredictionError,
    Summary,
    Trajectory,
)

KERNEL_KINDS = ("rbf", "polynomial")


@dataclass(frozen=True)
class KernelSpec:
    kind: str
    length_scale: float
    degree: int = 2

    def __post_init__(self):
        kind = {"poly": "polynomial"}.get(self.kind, self.kind)
        if kind not in KERNEL_KINDS:
            raise ConfigError(f"unknown kernel kind {self.kind!r}")
        if self.length_scale <= 0:
            raise ConfigError("length_scale must be positive")
        if self.degree < 1:
            raise ConfigError("degree must be >= 1")
        object.__setattr__(self, "kind", kind)

    def as_string(self) -> str:
        if self.kind == "polynomial":
            return f"poly:{self.length_scale:g}:{self.degree}"
        return f"rbf:{self.length_scale:g}"

    @classmethod
    def parse(cls, text: str) -> "KernelSpec":
        parts = text.split(":")
        try:
            if parts[0] in ("rbf",) and len(parts) == 2:
                return cls(kind="rbf", length_scale=float(parts[1]))
            if parts[0] in ("poly", "polynomial") and len(parts) == 3:
                return cls(kind="polynomial", length_scale=float(parts[1]),
                           degree=int(parts[2]))
        except ValueError:
            pass
        raise ConfigError(f"cannot parse kernel spec {text!r} "
                          "(expected rbf:<scale> or poly:<scale>:<degree>)")


def kernel_matrix(spec: KernelSpec, X, Y=None) -> np.ndarray:
    """Pairwise similarities; polynomial values are clamped at 0 so graph
    weights stay non-negative."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = X if Y is None else np.atleast_2d(np.asarray(Y, dtype=float))
    if spec.kind == "rbf":
        sq = (
            np.sum(X**2, axis=1)[:, None]
            + np.sum(Y**2, axis=1)[None, :]
            - 2.0 * (X @ Y.T)
        )
        np.maximum(sq, 0.0, out=sq)
        return np.exp(-sq / (2.0 * spec.length_scale**2))
    raw = (X @ Y.T) / spec.length_scale**2 + 1.0
    return np.maximum(raw, 0.0) ** spec.degree


def kernel_eval(spec: KernelSpec, x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ConfigError("kernel arguments must share a dimension")
    return float(kernel_matrix(spec, x[None, :], y[None, :])[0, 0])


def grf_energy(X, labeling, spec: KernelSpec, beta: float = 1.0) -> float:
    """Quadratic label-disagreement energy ``0.5 * sum_ij v_ij (a_i - a_j)^2``
    over ordered pairs.  ``beta`` is carried for interface parity with the
    field model but does not scale the unnormalized energy."""
    labels = np.asarray(labeling, dtype=float)
    W = kernel_matrix(spec, X)
    diff = labels[:, None] - labels[None, :]
    return float(0.5 * np.sum(W * diff**2))


@dataclass
class GrfModel:
    """Fitted harmonic field over a similarity graph.

    ``soft`` holds one column per action class for the unlabeled nodes;
    ``inv_luu`` is the inverse of the unlabeled Laplacian block, kept so
    labels can be folded in without re-factorizing.
    """

    X: np.ndarray  # (n, d) node features
    node_states: np.ndarray  # graph node -> external state id
    labeled: np.ndarray  # node indices, ascending
    unlabeled: np.ndarray  # node indices, ascending
    y_labeled: np.ndarray
    n_classes: int
    spec: KernelSpec
    weights: np.ndarray  # (n, n) kernel matrix
    inv_luu: np.ndarray
    soft: np.ndarray  # (n_unlabeled, n_classes)
    beta: float = 1.0

    @property
    def laplacian_uu(self) -> np.ndarray:
        L = _laplacian(self.weights)
        return L[np.ix_(self.unlabeled, self.unlabeled)]

    @property
    def laplacian_ut(self) -> np.ndarray:
        L = _laplacian(self.weights)
        return L[np.ix_(self.unlabeled, self.labeled)]


def _laplacian(W: np.ndarray) -> np.ndarray:
    return np.diag(W.sum(axis=1)) - W


def _check_reachable(W: np.ndarray, labeled: np.ndarray, unlabeled: np.ndarray,
                     node_states: np.ndarray) -> None:
    """Every unlabeled node must connect (through positive weights) to a
    labeled node, otherwise the harmonic system is singular."""
    n = W.shape[0]
    adj = csr_matrix((W > 0).astype(np.int8))
    _, comp = connected_components(adj, directed=False)
    labeled_comps = set(comp[labeled].tolist())
    orphans = [int(node_states[u]) for u in unlabeled if comp[u] not in labeled_comps]
    if orphans:
        raise FitError(
            f"unlabeled component with no similarity to any labeled state: {orphans}"
        )


def _one_hot(y: np.ndarray, n_classes: int) -> np.ndarray:
    out = np.zeros((len(y), n_classes))
    out[np.arange(len(y)), y] = 1.0
    return out


def fit_grf(X, y, n_classes: int, spec: KernelSpec, node_states=None,
            beta: float = 1.0) -> GrfModel:
    """Fit the harmonic field on points ``X`` where ``y[i] == -1`` marks an
    unlabeled node.  Node order is preserved; labeled/unlabeled index lists
    are ascending."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=np.int64)
    node_states = np.arange(len(y)) if node_states is None else np.asarray(node_states)
    labeled = np.nonzero(y >= 0)[0]
    unlabeled = np.nonzero(y < 0)[0]
    if len(labeled) == 0:
        raise FitError("harmonic field needs at least one labeled node")
    if len(unlabeled) == 0:
        raise FitError("harmonic field needs at least one unlabeled node")

    W = kernel_matrix(spec, X)
    _check_reachable(W, labeled, unlabeled, node_states)
    L = _laplacian(W)
    luu = L[np.ix_(unlabeled, unlabeled)]
    w_ut = W[np.ix_(unlabeled, labeled)]
    try:
        inv_luu = np.linalg.inv(luu)
    except np.linalg.LinAlgError as exc:
        raise FitError(f"singular unlabeled Laplacian block: {exc}") from exc
    soft = inv_luu @ (w_ut @ _one_hot(y[labeled], n_classes))
    if not np.all(np.isfinite(soft)):
        raise FitError("harmonic solve produced non-finite predictions")
    return GrfModel(
        X=X,
        node_states=node_states,
        labeled=labeled,
        unlabeled=unlabeled,
        y_labeled=y[labeled],
        n_classes=n_classes,
        spec=spec,
        weights=W,
        inv_luu=inv_luu,
        soft=soft,
        beta=beta,
    )


def grf_fit(demo: DemonstrationSet, summary: Summary, X, n_classes: int,
            spec: KernelSpec, beta: float = 1.0) -> GrfModel:
    """Fit over the demonstration states with the summary's states labeled
    by their demonstrated actions; ``X`` rows align with ``demo.states``."""
    covered = set(summary.states())
    y = np.full(len(demo), -1, dtype=np.int64)
    for i, s in enumerate(demo.states.tolist()):
        if s in covered:
            y[i] = demo.actions[i]
    return fit_grf(X, y, n_classes, spec, node_states=demo.states, beta=beta)


def grf_predict(model: GrfModel):
    """(soft, hard) for the unlabeled nodes; hard = per-row argmax with ties
    resolved to the lowest action index."""
    soft = model.soft
    if not np.all(np.isfinite(soft)):
        raise PredictionError("non-finite harmonic predictions")
    return soft, soft.argmax(axis=1)


def grf_retrain_incremental(model: GrfModel, node: int, label: int) -> GrfModel:
    """Fold one (node, label) pair into a fitted model via the rank-one
    harmonic update and the matching Schur downdate of the cached inverse;
    equivalent to refitting from scratch with that node labeled."""
    pos_arr = np.nonzero(model.unlabeled == node)[0]
    if len(pos_arr) == 0:
        raise FitError(f"node {node} is not unlabeled in this model")
    p = int(pos_arr[0])
    keep = np.arange(len(model.unlabeled)) != p

    g_col = model.inv_luu[:, p]
    target = _one_hot(np.array([label]), model.n_classes)[0]
    soft_new = model.soft + np.outer(g_col / g_col[p], target - model.soft[p])
    inv_new = model.inv_luu - np.outer(g_col, model.inv_luu[p]) / g_col[p]

    labeled = np.sort(np.append(model.labeled, node))
    insert_at = np.searchsorted(model.labeled, node)
    y_labeled = np.insert(model.y_labeled, insert_at, label)
    return replace(
        model,
        labeled=labeled,
        unlabeled=model.unlabeled[keep],
        y_labeled=y_labeled,
        inv_luu=inv_new[np.ix_(keep, keep)],
        soft=soft_new[keep],
    )


def harmonic_extension(model: GrfModel, X_new) -> np.ndarray:
    """Actions for points outside the graph: kernel-weighted vote over the
    graph's committed labels (given labels on labeled nodes, hard
    predictions on unlabeled ones)."""
    _, hard = grf_predict(model)
    committed = np.empty(len(model.X), dtype=np.int64)
    committed[model.labeled] = model.y_labeled
    committed[model.unlabeled] = hard
    weights = kernel_matrix(model.spec, np.atleast_2d(X_new), model.X)
    votes = weights @ _one_hot(committed, model.n_classes)
    return votes.argmax(axis=1)


class GrfClassifier(BaseEstimator, ClassifierMixin):
    """Transductive semi-supervised classifier backed by the harmonic field.

    Mark unlabeled rows of ``y`` with -1, as in scikit-learn's label
    propagation.  After ``fit``, ``transduction_`` holds the completed
    labeling and ``soft_`` the per-class scores of the unlabeled rows;
    ``predict`` extends to new points by kernel-weighted voting.
    """

    def __init__(self, kernel="rbf", length_scale=1.0, degree=2, beta=1.0,
                 n_classes=None):
        self.kernel = kernel
        self.length_scale = length_scale
        self.degree = degree
        self.beta = beta
        self.n_classes = n_classes

    def _spec(self) -> KernelSpec:
        return KernelSpec(kind=self.kernel, length_scale=self.length_scale,
                          degree=self.degree)

    def fit(self, X, y):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=np.int64)
        if X.shape[0] != y.shape[0]:
            raise ConfigError("X and y must align")
        n_classes = self.n_classes or int(y.max()) + 1
        self.model_ = fit_grf(X, y, n_classes, self._spec(), beta=self.beta)
        soft, hard = grf_predict(self.model_)
        self.soft_ = soft
        self.transduction_ = y.copy()
        self.transduction_[self.model_.unlabeled] = hard
        self.classes_ = np.arange(n_classes)
        return self

    def predict(self, X) -> np.ndarray:
        return harmonic_extension(self.model_, X)


def _misclassification_counts(soft_plus: np.ndarray, y_true: np.ndarray,
                              skip: int) -> int:
    hard = soft_plus.argmax(axis=1)
    wrong = hard != y_true
    wrong[skip] = False
    return int(wrong.sum())


def al_extract(demo: DemonstrationSet, X, k: int, spec: KernelSpec,
               seed: int | None = None, n_classes: int | None = None) -> Summary:
    """Greedy expected-error-reduction selection of ``k`` summary states.

    At every step each remaining state is scored by folding its true action
    into the field and counting misclassified remaining states; the state
    with the fewest misclassifications wins, ties to the lowest state id.
    The returned summary holds ``k`` singleton trajectories in pick order.
    The procedure is deterministic; ``seed`` is accepted for interface
    uniformity with the other extractors.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y_true = demo.actions.copy()
    n = len(demo)
    if not 1 <= k <= n:
        raise ExtractionError(f"budget k={k} must be in [1, {n}]")
    n_classes = int(y_true.max()) + 1 if n_classes is None else n_classes

    W = kernel_matrix(spec, X)
    n_comp, comp = connected_components(csr_matrix((W > 0).astype(np.int8)),
                                        directed=False)
    if n_comp > 1:
        raise ExtractionError(
            "similarity graph is disconnected; every selection leaves an "
            "unreachable component and all candidate fits fail"
        )

    picks: list[int] = []
    # First pick: one label makes the harmonic field constant, so the score
    # is simply how many other states disagree with the candidate's action.
    counts = np.array([(np.delete(y_true, c) != y_true[c]).sum() for c in range(n)])
    picks.append(int(counts.argmin()))

    model = None
    if k > 1 and n > 2:
        y0 = np.full(n, -1, dtype=np.int64)
        y0[picks[0]] = y_true[picks[0]]
        model = fit_grf(X, y0, n_classes, spec, node_states=demo.states)

    for _ in range(1, k):
        if model is None or len(model.unlabeled) == 1:
            # one candidate left (or two states total): take the lowest id
            remaining = [i for i in range(n) if i not in picks]
            picks.append(remaining[0])
            model = None
            continue
        unlabeled = model.unlabeled
        yu = y_true[unlabeled]
        best_pos, best_count = None, None
        for pos in range(len(unlabeled)):
            g_col = model.inv_luu[:, pos]
            target = np.zeros(n_classes)
            target[yu[pos]] = 1.0
            soft_plus = model.soft + np.outer(g_col / g_col[pos],
                                              target - model.soft[pos])
            count = _misclassification_counts(soft_plus, yu, pos)
            if best_count is None or count < best_count:
                best_pos, best_count = pos, count
        node = int(unlabeled[best_pos])
        picks.append(node)
        model = grf_retrain_incremental(model, node, int(y_true[node]))

    trajs = tuple(
        Trajectory(((int(demo.states[i]), int(y_true[i])),)) for i in picks
    )
    return Summary(trajectories=trajs)
