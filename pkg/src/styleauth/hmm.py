"""Continuous-density HMMs with diagonal Gaussian-mixture states.

All probability arithmetic is carried out in the log domain. Trained models
carry a per-dimension affine standardisation (``offset``, ``scale``) learned
from their training frames; the likelihoods they report include the Jacobian
of that map, so scores are densities over the raw feature space and remain
comparable between models.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy.cluster.vq import kmeans2

from .errors import DecodingError, DimensionError, TrainingError

LOG_2PI = float(np.log(2.0 * np.pi))
DEFAULT_VAR_FLOOR = 1e-4
FORMAT_VERSION = 1


def _obs_array(obs) -> np.ndarray:
    x = np.asarray(getattr(obs, "vectors", obs), dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    return x


def logsumexp(a: np.ndarray, axis=-1) -> np.ndarray:
    """Log-sum-exp that returns -inf (not nan) for all -inf slices."""
    a = np.asarray(a, dtype=np.float64)
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    return np.squeeze(out, axis=axis)


def _safe_log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


# ---------------------------------------------------------------------------
# Mixture states


@dataclass(frozen=True, eq=False)
class GmmState:
    """Diagonal-covariance Gaussian mixture: ``weights (M,)``, ``means/variances (M, d)``."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).ravel()
        mu = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        var = np.atleast_2d(np.asarray(self.variances, dtype=np.float64))
        if mu.shape != var.shape or mu.shape[0] != w.size:
            raise DimensionError(f"inconsistent GMM shapes: weights {w.shape}, means {mu.shape}, "
                                 f"variances {var.shape}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "variances", var)

    @property
    def n_components(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def component_log_pdf(self, X) -> np.ndarray:
        """``log w_m + log N(x; mu_m, diag var_m)`` for each row of ``X``: shape ``(T, M)``."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[-1] != self.dim:
            raise DimensionError(f"expected {self.dim}-dim observations, got {X.shape[-1]}")
        return _component_log_pdf(X, self.weights[None], self.means[None], self.variances[None])[:, 0]

    def log_pdf(self, X) -> np.ndarray:
        return logsumexp(self.component_log_pdf(X), axis=-1)


def _component_log_pdf(X, weights, means, variances):
    """Component log-densities of ``N`` mixtures at once: returns ``(T, N, M)``."""
    diff = X[:, None, None, :] - means[None]
    maha = np.sum(diff * diff / variances[None], axis=-1)
    norm = -0.5 * (means.shape[-1] * LOG_2PI + np.sum(np.log(variances), axis=-1))
    return _safe_log(weights)[None] + norm[None] - 0.5 * maha


def gmm_log_pdf(state: GmmState, x) -> float | np.ndarray:
    """Mixture log-density of a single vector (float) or of each row of a matrix."""
    x = np.asarray(x, dtype=np.float64)
    out = state.log_pdf(x)
    return float(out[0]) if x.ndim == 1 else out


# ---------------------------------------------------------------------------
# Models


def left_to_right_mask(n_states: int) -> np.ndarray:
    """Self-loop plus next-state transitions only."""
    return np.eye(n_states, dtype=bool) | np.eye(n_states, k=1, dtype=bool)


@dataclass(frozen=True, eq=False)
class HmmModel:
    pi: np.ndarray
    trans: np.ndarray
    weights: np.ndarray      # (N, M)
    means: np.ndarray        # (N, M, d)
    variances: np.ndarray    # (N, M, d)
    mask: np.ndarray | None = None
    offset: np.ndarray | None = None
    scale: np.ndarray | None = None
    history: tuple = field(default=())

    def __post_init__(self):
        arr = lambda v: np.asarray(v, dtype=np.float64)  # noqa: E731
        pi, trans = arr(self.pi).ravel(), arr(self.trans)
        w, mu, var = arr(self.weights), arr(self.means), arr(self.variances)
        N = pi.size
        if trans.shape != (N, N) or w.shape[0] != N or mu.shape[:2] != w.shape or var.shape != mu.shape:
            raise DimensionError("inconsistent HMM parameter shapes")
        d = mu.shape[2]
        mask = trans > 0 if self.mask is None else np.asarray(self.mask, dtype=bool)
        offset = np.zeros(d) if self.offset is None else arr(self.offset)
        scale = np.ones(d) if self.scale is None else arr(self.scale)
        for name, v in (("pi", pi), ("trans", trans), ("weights", w), ("means", mu),
                        ("variances", var), ("mask", mask), ("offset", offset), ("scale", scale)):
            v.setflags(write=False)
            object.__setattr__(self, name, v)
        object.__setattr__(self, "history", tuple(float(h) for h in self.history))

    @property
    def n_states(self) -> int:
        return self.pi.size

    @property
    def n_mix(self) -> int:
        return self.weights.shape[1]

    @property
    def dim(self) -> int:
        return self.means.shape[2]

    @cached_property
    def log_pi(self) -> np.ndarray:
        return _safe_log(self.pi)

    @cached_property
    def log_trans(self) -> np.ndarray:
        return _safe_log(self.trans)

    @cached_property
    def _log_jacobian(self) -> float:
        return float(-np.sum(np.log(self.scale)))

    def state(self, i: int) -> GmmState:
        return GmmState(self.weights[i], self.means[i], self.variances[i])

    def standardize(self, X) -> np.ndarray:
        return (X - self.offset) / self.scale

    def component_log_likelihoods(self, obs) -> np.ndarray:
        """``(T, N, M)`` weighted component log-densities in the model's standardised space."""
        X = _obs_array(obs)
        if X.shape[1] != self.dim:
            raise DimensionError(f"model expects {self.dim}-dim observations, got {X.shape[1]}")
        return _component_log_pdf(self.standardize(X), self.weights, self.means, self.variances)

    def frame_log_likelihoods(self, obs) -> np.ndarray:
        """``(T, N)`` state emission log-densities over the raw feature space."""
        return logsumexp(self.component_log_likelihoods(obs), axis=-1) + self._log_jacobian

    def check(self, tol: float = 1e-9) -> None:
        """Raise ``ValueError`` if stochasticity or floor invariants are violated."""
        if abs(self.pi.sum() - 1.0) > tol:
            raise ValueError(f"pi sums to {self.pi.sum()}")
        rows = self.trans.sum(axis=1)
        if np.max(np.abs(rows - 1.0)) > tol:
            raise ValueError(f"transition rows sum to {rows}")
        if np.any(self.trans[~self.mask] != 0):
            raise ValueError("transition outside the topology mask")
        wsum = self.weights.sum(axis=1)
        if np.max(np.abs(wsum - 1.0)) > tol:
            raise ValueError(f"mixture weights sum to {wsum}")
        if np.any(self.weights <= 0):
            raise ValueError("non-positive mixture weight")
        if np.any(~np.isfinite(self.means)) or np.any(self.variances <= 0):
            raise ValueError("invalid Gaussian parameters")


@dataclass(frozen=True)
class StatePath:
    states: np.ndarray
    log_prob: float

    def __len__(self):
        return self.states.size


# ---------------------------------------------------------------------------
# Inference


def _forward(log_b: np.ndarray, log_pi: np.ndarray, trans: np.ndarray) -> np.ndarray:
    """Log forward variables for a batch: ``log_b (B, T, N)``, ``trans (B|1, N, N)``.

    Each step evaluates ``log sum_i exp(alpha_i + log a_ij)`` with the running
    row maximum factored out.
    """
    B, T, N = log_b.shape
    alpha = np.empty((B, T, N))
    alpha[:, 0] = log_pi + log_b[:, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        for t in range(1, T):
            prev = alpha[:, t - 1]
            m = prev.max(axis=1, keepdims=True)
            m[m == -np.inf] = 0.0
            s = (np.exp(prev - m)[:, :, None] * trans).sum(axis=1)
            alpha[:, t] = np.log(s) + m + log_b[:, t]
    return alpha


def _backward(log_b: np.ndarray, trans: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """Log backward variables; positions at or past ``lengths - 1`` stay at zero."""
    B, T, N = log_b.shape
    beta = np.zeros((B, T, N))
    with np.errstate(divide="ignore", invalid="ignore"):
        for t in range(T - 2, -1, -1):
            nxt = log_b[:, t + 1] + beta[:, t + 1]
            m = nxt.max(axis=1, keepdims=True)
            m[m == -np.inf] = 0.0
            s = (trans * np.exp(nxt - m)[:, None, :]).sum(axis=2)
            live = (t < lengths - 1)[:, None]
            beta[:, t] = np.where(live, np.log(s) + m, 0.0)
    return beta


def _viterbi(log_b: np.ndarray, log_pi: np.ndarray, log_trans: np.ndarray):
    """Batched Viterbi over equal-length sequences; returns ``(paths (B, T), best (B,))``."""
    B, T, N = log_b.shape
    delta = log_pi + log_b[:, 0]
    back = np.zeros((B, T, N), dtype=np.intp)
    cols = np.arange(N)
    rows = np.arange(B)[:, None]
    for t in range(1, T):
        cand = delta[:, :, None] + log_trans
        arg = np.argmax(cand, axis=1)  # first maximum: lowest predecessor index
        back[:, t] = arg
        delta = cand[rows, arg, cols[None, :]] + log_b[:, t]
    last = np.argmax(delta, axis=1)
    best = delta[np.arange(B), last]
    paths = np.empty((B, T), dtype=np.intp)
    paths[:, -1] = last
    for t in range(T - 1, 0, -1):
        paths[:, t - 1] = back[np.arange(B), t, paths[:, t]]
    return paths, best


def _emissions(model: HmmModel, obs) -> np.ndarray:
    log_b = model.frame_log_likelihoods(obs)
    if log_b.shape[0] == 0:
        raise ValueError("empty observation sequence")
    return log_b[None]


def log_forward(model: HmmModel, obs) -> float:
    """``log P(O | model)`` by the forward recursion; ``-inf`` if no path has mass."""
    alpha = _forward(_emissions(model, obs), model.log_pi, model.trans)
    return float(logsumexp(alpha[0, -1]))


def viterbi_decode(model: HmmModel, obs) -> StatePath:
    """Most probable state path; ties go to the lower state index."""
    paths, best = _viterbi(_emissions(model, obs), model.log_pi, model.log_trans)
    if best[0] == -np.inf:
        raise DecodingError("no admissible path")
    return StatePath(paths[0], float(best[0]))


def score_many(models: Sequence[HmmModel], obs) -> tuple[np.ndarray, list]:
    """Forward log-likelihood and Viterbi path of ``obs`` under each model.

    Models must share the state count. Paths are ``None`` where no state
    sequence is admissible. Results are identical to per-model calls.
    """
    log_b = np.stack([m.frame_log_likelihoods(obs) for m in models])
    if log_b.shape[1] == 0:
        raise ValueError("empty observation sequence")
    log_pi = np.stack([m.log_pi for m in models])
    trans = np.stack([m.trans for m in models])
    log_trans = np.stack([m.log_trans for m in models])
    alpha = _forward(log_b, log_pi, trans)
    ll = logsumexp(alpha[:, -1], axis=-1)
    paths, best = _viterbi(log_b, log_pi, log_trans)
    out = [StatePath(p, float(b)) if b > -np.inf else None for p, b in zip(paths, best)]
    return ll, out


def score_and_align(model: HmmModel, obs) -> tuple[float, StatePath]:
    """Forward log-likelihood and Viterbi path from one emission evaluation."""
    ll, paths = score_many([model], obs)
    if paths[0] is None:
        raise DecodingError("no admissible path")
    return float(ll[0]), paths[0]


# ---------------------------------------------------------------------------
# Initialisation and training


def _pooled(obs_set) -> list[np.ndarray]:
    seqs = [_obs_array(o) for o in obs_set]
    if not seqs:
        raise TrainingError("empty training set")
    d = seqs[0].shape[1]
    if any(s.shape[1] != d for s in seqs):
        raise DimensionError("training sequences differ in dimension")
    return seqs


def init_hmm(obs_set, n_states: int = 5, n_mix: int = 5, seed: int = 0, *,
             var_floor=DEFAULT_VAR_FLOOR, standardize: bool = True,
             topology: str = "left-to-right") -> HmmModel:
    """Initial left-to-right model from uniform time slicing and per-state k-means.

    Frames of each sequence are split into ``n_states`` equal time slices;
    the frames pooled in slice ``j`` seed state ``j`` through k-means with
    ``n_mix`` centroids (k-means++ seeding from ``seed``).
    """
    seqs = _pooled(obs_set)
    X = np.concatenate(seqs)
    if X.shape[0] < n_states * n_mix:
        raise TrainingError(f"insufficient data: {X.shape[0]} frames for {n_states} states "
                            f"x {n_mix} components")
    d = X.shape[1]
    if standardize:
        offset = X.mean(axis=0)
        scale = np.maximum(X.std(axis=0), 1e-8)
    else:
        offset, scale = np.zeros(d), np.ones(d)
    floor = np.broadcast_to(np.asarray(var_floor, dtype=np.float64), (d,))
    rng = np.random.default_rng(seed)

    slices = [[] for _ in range(n_states)]
    for s in seqs:
        Z = (s - offset) / scale
        T = Z.shape[0]
        bounds = (np.arange(n_states + 1) * T) // n_states
        for j in range(n_states):
            slices[j].append(Z[bounds[j]:bounds[j + 1]])

    weights = np.empty((n_states, n_mix))
    means = np.empty((n_states, n_mix, d))
    variances = np.empty((n_states, n_mix, d))
    for j in range(n_states):
        Zj = np.concatenate(slices[j])
        if Zj.shape[0] == 0:
            Zj = (X - offset) / scale
        state_var = np.maximum(Zj.var(axis=0), floor)
        if n_mix == 1 or Zj.shape[0] < n_mix:
            labels = np.arange(Zj.shape[0]) % n_mix
            cent = np.stack([Zj[labels == m].mean(axis=0) if np.any(labels == m) else Zj.mean(axis=0)
                             for m in range(n_mix)])
        else:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                cent, labels = kmeans2(Zj, n_mix, minit="++", rng=rng)
        for m in range(n_mix):
            members = Zj[labels == m]
            if members.shape[0] >= 2:
                means[j, m] = members.mean(axis=0)
                variances[j, m] = np.maximum(members.var(axis=0), floor)
            else:
                # empty or singleton cluster: keep its centroid, borrow the state spread
                means[j, m] = cent[m] if np.all(np.isfinite(cent[m])) else Zj[rng.integers(Zj.shape[0])]
                variances[j, m] = state_var
            weights[j, m] = members.shape[0] + 1.0
        weights[j] /= weights[j].sum()

    if topology == "left-to-right":
        mask = left_to_right_mask(n_states)
        pi = np.zeros(n_states)
        pi[0] = 1.0
    elif topology == "ergodic":
        mask = np.ones((n_states, n_states), dtype=bool)
        pi = np.full(n_states, 1.0 / n_states)
    else:
        raise ValueError(f"unknown topology {topology!r}")
    trans = mask / mask.sum(axis=1, keepdims=True)
    return HmmModel(pi, trans, weights, means, variances, mask, offset, scale)


def _pad(Zs: Sequence[np.ndarray]):
    lengths = np.array([z.shape[0] for z in Zs])
    Z = np.zeros((len(Zs), lengths.max(), Zs[0].shape[1]))
    for i, z in enumerate(Zs):
        Z[i, :z.shape[0]] = z
    valid = np.arange(Z.shape[1])[None, :] < lengths[:, None]
    return Z, lengths, valid


def _e_step(model: HmmModel, padded):
    Z, lengths, valid = padded
    B, T, d = Z.shape
    comp = _component_log_pdf(Z.reshape(B * T, d), model.weights, model.means, model.variances)
    comp = comp.reshape(B, T, model.n_states, model.n_mix)
    log_b = logsumexp(comp, axis=-1)
    log_b[~valid] = 0.0
    alpha = _forward(log_b, model.log_pi, model.trans)
    ll = logsumexp(alpha[np.arange(B), lengths - 1], axis=-1)
    total = float(ll.sum())
    if not np.isfinite(total):
        return None, total
    beta = _backward(log_b, model.trans, lengths)
    with np.errstate(invalid="ignore", under="ignore"):
        gamma = np.exp(alpha + beta - ll[:, None, None]) * valid[..., None]
        xi = np.exp(alpha[:, :-1, :, None] + model.log_trans +
                    (log_b[:, 1:] + beta[:, 1:])[:, :, None, :] - ll[:, None, None, None])
        xi = xi * valid[:, 1:, None, None]
        resp = np.exp(comp - log_b[..., None])
    resp = np.nan_to_num(resp, nan=0.0) * gamma[..., None]  # (B, T, N, M)
    acc_pi = gamma[:, 0].sum(axis=0)
    acc_trans = xi.sum(axis=(0, 1))
    acc_occ = resp.sum(axis=(0, 1))
    acc_x = np.einsum("btnm,btd->nmd", resp, Z)
    acc_x2 = np.einsum("btnm,btd->nmd", resp, Z * Z)
    return (acc_pi, acc_trans, acc_occ, acc_x, acc_x2, B), total


def _m_step(model: HmmModel, stats, floor: np.ndarray) -> HmmModel:
    acc_pi, acc_trans, acc_occ, acc_x, acc_x2, n_seq = stats
    pi = acc_pi / n_seq
    pi = pi / pi.sum()
    rows = acc_trans.sum(axis=1, keepdims=True)
    trans = np.where(rows > 0, acc_trans / np.where(rows > 0, rows, 1.0), model.trans)
    trans = np.where(model.mask, trans, 0.0)
    trans = trans / trans.sum(axis=1, keepdims=True)

    occ = acc_occ[..., None]
    live = occ > 1e-10
    safe = np.where(live, occ, 1.0)
    means = np.where(live, acc_x / safe, model.means)
    var = np.where(live, acc_x2 / safe - means * means, model.variances)
    var = np.maximum(var, floor)
    weights = np.maximum(acc_occ, 1e-12)
    weights = weights / weights.sum(axis=1, keepdims=True)
    return replace(model, pi=pi, trans=trans, weights=weights, means=means, variances=var,
                   history=())


def baum_welch_train(obs_set, init: HmmModel, max_iter: int = 30, tol: float = 1e-4, *,
                     var_floor=DEFAULT_VAR_FLOOR,
                     callback: Callable[[int, HmmModel, float], None] | None = None) -> HmmModel:
    """Re-estimate ``init`` by EM over all sequences.

    Stops after ``max_iter`` re-estimations or once the corpus
    log-likelihood gains less than ``tol``. The returned model's ``history``
    holds the corpus log-likelihood of every parameter set visited, the
    initial one included, so ``history[-1]`` belongs to the returned model.
    ``callback(i, model, loglik)`` is called for every visited parameter set.
    """
    seqs = _pooled(obs_set)
    for s in seqs:
        if s.shape[0] < init.n_states and np.all(init.mask == left_to_right_mask(init.n_states)):
            raise TrainingError(f"sequence of {s.shape[0]} frames is shorter than {init.n_states} states")
        if s.shape[1] != init.dim:
            raise DimensionError(f"model expects {init.dim}-dim observations, got {s.shape[1]}")
    floor = np.broadcast_to(np.asarray(var_floor, dtype=np.float64), (init.dim,))
    padded = _pad([init.standardize(s) for s in seqs])
    jac = sum(s.shape[0] for s in seqs) * init._log_jacobian
    model = init
    history = []
    for it in range(max_iter + 1):
        stats, ll = _e_step(model, padded)
        if stats is None or not np.isfinite(ll):
            raise TrainingError(f"corpus log-likelihood became {ll}", iteration=it)
        history.append(ll + jac)
        if callback is not None:
            callback(it, model, history[-1])
        if it > 0 and history[-1] - history[-2] < tol:
            break
        if it == max_iter:
            break
        model = _m_step(model, stats, floor)
    return replace(model, history=tuple(history))


# ---------------------------------------------------------------------------
# Serialisation


def _f(v) -> list:
    # repr() is the shortest round-tripping decimal (at most 17 significant digits)
    return np.asarray(v, dtype=np.float64).tolist()


def hmm_to_dict(model: HmmModel) -> dict:
    return {
        "format": "styleauth.hmm",
        "version": FORMAT_VERSION,
        "n_states": model.n_states,
        "n_mix": model.n_mix,
        "dim": model.dim,
        "mask": model.mask.astype(int).tolist(),
        "pi": _f(model.pi),
        "trans": _f(model.trans),
        "weights": _f(model.weights),
        "means": _f(model.means),
        "variances": _f(model.variances),
        "offset": _f(model.offset),
        "scale": _f(model.scale),
        "history": list(model.history),
    }


def hmm_from_dict(d: dict) -> HmmModel:
    if d.get("format") != "styleauth.hmm" or d.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported HMM record {d.get('format')!r} v{d.get('version')!r}")
    model = HmmModel(d["pi"], d["trans"], d["weights"], d["means"], d["variances"],
                     np.asarray(d["mask"], dtype=bool), d["offset"], d["scale"],
                     tuple(d.get("history", ())))
    if (model.n_states, model.n_mix, model.dim) != (d["n_states"], d["n_mix"], d["dim"]):
        raise ValueError("HMM record dimensions disagree with its arrays")
    return model
