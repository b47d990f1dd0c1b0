"""Independent reference computations used by the tests.

Nothing here calls into the package's numerical kernels: densities are
evaluated in linear space, paths are enumerated exhaustively and linear
systems are solved densely.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.linalg import toeplitz

from styleauth.hmm import HmmModel, left_to_right_mask


def gaussian_pdf(x, mean, var) -> float:
    x, mean, var = (np.asarray(v, dtype=float) for v in (x, mean, var))
    return float(np.prod(np.exp(-0.5 * (x - mean) ** 2 / var) / np.sqrt(2 * np.pi * var)))


def mixture_pdf(weights, means, variances, x) -> float:
    return sum(w * gaussian_pdf(x, m, v) for w, m, v in zip(weights, means, variances))


def emission_log(model: HmmModel, x, state: int) -> float:
    z = (np.asarray(x, dtype=float) - model.offset) / model.scale
    p = mixture_pdf(model.weights[state], model.means[state], model.variances[state], z)
    return (math.log(p) if p > 0 else -math.inf) - float(np.sum(np.log(model.scale)))


def path_log_joint(model: HmmModel, X, path) -> float:
    total = math.log(model.pi[path[0]]) if model.pi[path[0]] > 0 else -math.inf
    for t, s in enumerate(path):
        if t:
            a = model.trans[path[t - 1], s]
            total += math.log(a) if a > 0 else -math.inf
        total += emission_log(model, X[t], s)
    return total


def brute_force_forward(model: HmmModel, X) -> float:
    """``log sum_paths P(O, path)`` by enumerating every state sequence."""
    logs = [path_log_joint(model, X, p) for p in itertools.product(range(model.n_states), repeat=len(X))]
    m = max(logs)
    if m == -math.inf:
        return -math.inf
    return m + math.log(math.fsum(math.exp(v - m) for v in logs))


def exhaustive_viterbi(model: HmmModel, X):
    """Best path and its log joint; the lexicographically smallest path wins ties."""
    best, best_path = -math.inf, None
    for p in itertools.product(range(model.n_states), repeat=len(X)):
        v = path_log_joint(model, X, p)
        if v > best:
            best, best_path = v, p
    return best_path, best


def random_model(rng, n_states: int, n_mix: int, dim: int, *, left_to_right: bool = False,
                 affine: bool = False) -> HmmModel:
    if left_to_right:
        mask = left_to_right_mask(n_states)
        pi = np.zeros(n_states)
        pi[0] = 1.0
    else:
        mask = np.ones((n_states, n_states), dtype=bool)
        pi = rng.dirichlet(np.ones(n_states))
    trans = np.where(mask, rng.uniform(0.1, 1.0, (n_states, n_states)), 0.0)
    trans /= trans.sum(axis=1, keepdims=True)
    weights = rng.dirichlet(np.ones(n_mix), size=n_states)
    means = rng.normal(0.0, 1.5, (n_states, n_mix, dim))
    variances = rng.uniform(0.3, 2.0, (n_states, n_mix, dim))
    offset = rng.normal(0.0, 1.0, dim) if affine else None
    scale = rng.uniform(0.5, 2.0, dim) if affine else None
    return HmmModel(pi, trans, weights, means, variances, mask, offset, scale)


def sample_sequence(model: HmmModel, T: int, rng) -> np.ndarray:
    """Draw ``T`` observations in the raw feature space."""
    s = rng.choice(model.n_states, p=model.pi)
    out = []
    for t in range(T):
        if t:
            s = rng.choice(model.n_states, p=model.trans[s])
        m = rng.choice(model.n_mix, p=model.weights[s])
        z = rng.normal(model.means[s, m], np.sqrt(model.variances[s, m]))
        out.append(z * model.scale + model.offset)
    return np.array(out)


def dense_lpc(r, order: int) -> np.ndarray:
    """Normal equations ``R a = r[1:]`` solved with a dense Toeplitz matrix."""
    r = np.asarray(r, dtype=float)
    return np.linalg.solve(toeplitz(r[:order]), r[1:order + 1])


def fft_cepstrum(a, n_ceps: int, nfft: int = 4096) -> np.ndarray:
    """Cepstrum of ``1 / A(z)`` as the inverse FFT of ``-log A`` on the unit circle."""
    poly = np.concatenate([[1.0], -np.asarray(a, dtype=float)])
    spectrum = np.fft.fft(poly, nfft)
    c = np.fft.ifft(-np.log(spectrum)).real
    return c[1:n_ceps + 1]


def round_half_up_int(x: float) -> int:
    return int(math.floor(x + 0.5))


# Published cells: (male_h0, male_h1, female_h0, female_h1, avg_h0, avg_h1) per style.
STYLE_ORDER = ("neutral", "shouted", "slow", "loud", "soft", "fast", "angry", "happy", "fearful")
SPHMM_SINGLE = {
    "neutral": (99, 1, 99, 1, 99, 1), "shouted": (36, 22, 38, 20, 37, 21),
    "slow": (84, 12, 86, 12, 85, 12), "loud": (60, 17, 60, 15, 60, 16),
    "soft": (60, 18, 62, 18, 61, 18), "fast": (60, 18, 58, 18, 59, 18),
    "angry": (40, 21, 42, 23, 41, 22), "happy": (60, 18, 62, 18, 61, 18),
    "fearful": (56, 19, 58, 19, 57, 19),
}
HMM_SINGLE = {
    "neutral": (99, 1, 99, 1, 99, 1), "shouted": (30, 25, 34, 23, 32, 24),
    "slow": (78, 15, 82, 13, 80, 14), "loud": (54, 20, 56, 18, 55, 19),
    "soft": (56, 19, 58, 19, 57, 19), "fast": (50, 21, 56, 19, 53, 20),
    "angry": (38, 24, 36, 26, 37, 25), "happy": (55, 20, 55, 18, 55, 19),
    "fearful": (52, 22, 50, 20, 51, 21),
}
SPHMM_MULTI = {
    "neutral": (99, 1, 99, 1, 99, 1), "shouted": (38, 17, 40, 17, 39, 17),
    "slow": (85, 10, 85, 10, 85, 10), "loud": (63, 15, 61, 15, 62, 15),
    "soft": (59, 14, 61, 14, 60, 14), "fast": (59, 15, 61, 15, 60, 15),
    "angry": (44, 18, 40, 18, 42, 18), "happy": (61, 13, 63, 15, 62, 14),
    "fearful": (57, 15, 57, 15, 57, 15),
}
HMM_MULTI = {
    "neutral": (99, 1, 99, 1, 99, 1), "shouted": (34, 18, 36, 22, 35, 20),
    "slow": (83, 12, 83, 10, 83, 11), "loud": (60, 17, 58, 15, 59, 16),
    "soft": (59, 14, 59, 16, 59, 15), "fast": (54, 16, 58, 16, 56, 16),
    "angry": (40, 20, 38, 20, 39, 20), "happy": (59, 14, 59, 16, 59, 15),
    "fearful": (55, 16, 55, 16, 55, 16),
}
# Identification percentages: rows are models, columns are test styles (STYLE_ORDER).
SPHMM_CONFUSION = np.array([
    [99, 0, 7, 3, 6, 3, 2, 2, 4],
    [0, 36, 2, 16, 2, 9, 26, 3, 6],
    [1, 0, 83, 0, 7, 2, 1, 3, 13],
    [0, 28, 2, 54, 2, 10, 13, 10, 6],
    [0, 0, 2, 0, 65, 2, 0, 2, 8],
    [0, 6, 0, 7, 2, 58, 10, 13, 3],
    [0, 23, 0, 11, 1, 9, 44, 0, 8],
    [0, 0, 2, 9, 6, 7, 0, 64, 2],
    [0, 7, 2, 0, 9, 0, 4, 3, 50],
])
HMM_CONFUSION = np.array([
    [98, 0, 10, 3, 8, 3, 2, 2, 4],
    [0, 29, 2, 20, 2, 12, 31, 3, 8],
    [1, 0, 78, 0, 10, 2, 1, 3, 16],
    [0, 33, 2, 48, 2, 12, 15, 14, 6],
    [1, 0, 2, 0, 59, 2, 0, 2, 9],
    [0, 6, 0, 7, 2, 51, 10, 17, 3],
    [0, 25, 0, 12, 1, 11, 37, 0, 8],
    [0, 0, 2, 10, 6, 7, 0, 56, 2],
    [0, 7, 4, 0, 10, 0, 4, 3, 44],
])
