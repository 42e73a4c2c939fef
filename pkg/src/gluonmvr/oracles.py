"""Stochastic gradient oracles over layer-structured synthetic problems.

A problem owns its data and exposes a deterministic objective (``value``,
``full_grad``) plus a replayable stochastic gradient: ``stoch_grad`` derives
all of its randomness from ``Sample.seed``, so the same sample can be
evaluated at two different points. That is what lets the variance-reduced
momentum updates difference the same sample at the current and previous
iterate.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .norms import NormKind, dual_norm, norm, rho_bound

ParamVector = list  # list of 2-D float64 arrays, one block per layer


@dataclass(frozen=True)
class LayerSpec:
    rows: int
    cols: int
    norm: NormKind = NormKind.SPECTRAL
    t_i: float = 1.0

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("layer dimensions must be positive")
        if self.t_i <= 0:
            raise ValueError("radius multiplier t_i must be positive")


@dataclass(frozen=True)
class ModelShape:
    layers: tuple[LayerSpec, ...]

    def __post_init__(self):
        if len(self.layers) < 1:
            raise ValueError("a model needs at least one layer")
        object.__setattr__(self, "layers", tuple(self.layers))

    @property
    def p(self) -> int:
        return len(self.layers)

    def validate(self, blocks: ParamVector) -> None:
        if len(blocks) != self.p:
            raise ValueError(f"expected {self.p} blocks, got {len(blocks)}")
        for spec, b in zip(self.layers, blocks):
            if b.shape != (spec.rows, spec.cols):
                raise ValueError(
                    f"block shape {b.shape} does not match layer ({spec.rows}, {spec.cols})"
                )

    def zeros(self) -> ParamVector:
        return [np.zeros((s.rows, s.cols)) for s in self.layers]


@dataclass(frozen=True)
class Sample:
    """Replayable randomness handle; ``indices`` overrides the minibatch."""

    seed: int
    indices: tuple[int, ...] | None = None


def draw_sample(rng: np.random.Generator) -> Sample:
    """Draw a fresh independent sample; advancing ``rng`` is the only side effect."""
    return Sample(seed=int(rng.integers(0, 2**63)))


def copy_blocks(blocks: ParamVector) -> ParamVector:
    return [b.copy() for b in blocks]


class Problem(ABC):
    """Objective f(X) = E_xi[f_xi(X)] over a product of matrix layers."""

    shape: ModelShape

    @abstractmethod
    def value(self, X: ParamVector) -> float:
        """Deterministic objective value."""

    @abstractmethod
    def full_grad(self, X: ParamVector) -> ParamVector:
        """Exact analytic gradient of the deterministic objective."""

    @abstractmethod
    def stoch_grad(self, sample: Sample, X: ParamVector) -> ParamVector:
        """Unbiased stochastic gradient; bit-identical for equal (sample, X)."""

    @abstractmethod
    def initial_point(self, rng: np.random.Generator) -> ParamVector:
        """Default starting iterate."""

    def known_minimum(self) -> float | None:
        """Analytic minimum value if available, else None."""
        return None

    def minimum_point(self) -> ParamVector | None:
        return None

    def reference_minimum(self) -> float:
        """Best-effort minimum: analytic when known, else a cached L-BFGS run."""
        known = self.known_minimum()
        if known is not None:
            return known
        cached = getattr(self, "_ref_min", None)
        if cached is None:
            cached = _lbfgs_minimum(self)
            self._ref_min = cached
        return cached


def _flatten(blocks: ParamVector) -> np.ndarray:
    return np.concatenate([b.ravel() for b in blocks])


def _unflatten(shape: ModelShape, x: np.ndarray) -> ParamVector:
    out, off = [], 0
    for s in shape.layers:
        n = s.rows * s.cols
        out.append(x[off : off + n].reshape(s.rows, s.cols))
        off += n
    return out


def _lbfgs_minimum(problem: Problem) -> float:
    def fg(x):
        X = _unflatten(problem.shape, x)
        return problem.value(X), _flatten(problem.full_grad(X))

    x0 = _flatten(problem.initial_point(np.random.default_rng(0)))
    res = minimize(fg, x0, jac=True, method="L-BFGS-B", options={"maxiter": 2000})
    return float(res.fun)


# -- module-level operation surface -----------------------------------------


def value(problem: Problem, X: ParamVector) -> float:
    problem.shape.validate(X)
    return problem.value(X)


def full_grad(problem: Problem, X: ParamVector) -> ParamVector:
    problem.shape.validate(X)
    return problem.full_grad(X)


def stoch_grad(problem: Problem, sample: Sample, X: ParamVector) -> ParamVector:
    problem.shape.validate(X)
    return problem.stoch_grad(sample, X)


# -- problems ----------------------------------------------------------------


class NoisyQuadratic(Problem):
    """f(X) = 0.5 * sum_i <X_i - X*_i, A_i (X_i - X*_i)> with additive noise.

    A_i is symmetric positive definite per layer. The stochastic gradient adds
    i.i.d. Gaussian noise with entrywise std ``noise``, generated from the
    sample seed and independent of X: the same sample evaluated at two points
    differs by the exact deterministic gradient difference, so the Hessian
    variance of this oracle is zero. Convex, hence star-convex.
    """

    def __init__(
        self,
        shape: ModelShape,
        noise: float = 0.0,
        data_seed: int = 0,
        eig_range: tuple[float, float] = (0.2, 1.0),
        target_scale: float = 1.0,
    ):
        self.shape = shape
        self.noise = float(noise)
        rng = np.random.default_rng(data_seed)
        self.A: list[np.ndarray] = []
        self.X_star: ParamVector = []
        lo, hi = eig_range
        for s in shape.layers:
            Q, _ = np.linalg.qr(rng.standard_normal((s.rows, s.rows)))
            lam = rng.uniform(lo, hi, s.rows)
            lam[0] = hi  # pin the top eigenvalue so the operator norm is known
            self.A.append(Q @ np.diag(lam) @ Q.T)
            self.X_star.append(target_scale * rng.standard_normal((s.rows, s.cols)))

    def value(self, X):
        total = 0.0
        for A, x, xs in zip(self.A, X, self.X_star):
            d = x - xs
            total += 0.5 * float(np.sum(d * (A @ d)))
        return total

    def full_grad(self, X):
        return [A @ (x - xs) for A, x, xs in zip(self.A, X, self.X_star)]

    def stoch_grad(self, sample, X):
        g = self.full_grad(X)
        if self.noise == 0.0:
            return g
        rng = np.random.default_rng(sample.seed)
        return [gi + self.noise * rng.standard_normal(gi.shape) for gi in g]

    def initial_point(self, rng):
        return self.shape.zeros()

    def known_minimum(self):
        return 0.0

    def minimum_point(self):
        return copy_blocks(self.X_star)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class LogisticRegression(Problem):
    """Multinomial logistic regression on a synthetic Gaussian design.

    Single weight layer W of shape (dim, classes); f is the mean cross
    entropy over the dataset. Minibatches are drawn uniformly with
    replacement from the sample seed; ``minibatch`` of 0 (or >= n_points)
    means the deterministic full-batch oracle.
    """

    def __init__(
        self,
        n_points: int = 1024,
        dim: int = 16,
        classes: int = 4,
        minibatch: int = 8,
        norm: NormKind = NormKind.SPECTRAL,
        t_i: float = 1.0,
        data_seed: int = 0,
        label_noise: float = 1.0,
    ):
        if n_points < 1 or dim < 1 or classes < 2:
            raise ValueError("need n_points >= 1, dim >= 1, classes >= 2")
        self.n = n_points
        self.minibatch = int(minibatch)
        self.shape = ModelShape((LayerSpec(dim, classes, norm, t_i),))
        rng = np.random.default_rng(data_seed)
        self.Z = rng.standard_normal((n_points, dim))
        W_true = rng.standard_normal((dim, classes)) / np.sqrt(dim)
        scores = self.Z @ W_true + label_noise * rng.standard_normal((n_points, classes))
        self.y = np.argmax(scores, axis=1)
        self.Y = np.eye(classes)[self.y]

    def _loss_grad(self, Z, Y, W):
        P = _softmax(Z @ W)
        n = Z.shape[0]
        eps = np.finfo(float).tiny
        loss = -float(np.mean(np.log(np.maximum(P[np.arange(n), Y.argmax(axis=1)], eps))))
        grad = Z.T @ (P - Y) / n
        return loss, grad

    def value(self, X):
        return self._loss_grad(self.Z, self.Y, X[0])[0]

    def full_grad(self, X):
        return [self._loss_grad(self.Z, self.Y, X[0])[1]]

    def _batch(self, sample):
        if sample.indices is not None:
            return np.asarray(sample.indices)
        if self.minibatch == 0 or self.minibatch >= self.n:
            return None
        rng = np.random.default_rng(sample.seed)
        return rng.integers(0, self.n, size=self.minibatch)

    def stoch_grad(self, sample, X):
        idx = self._batch(sample)
        if idx is None:
            return self.full_grad(X)
        return [self._loss_grad(self.Z[idx], self.Y[idx], X[0])[1]]

    def initial_point(self, rng):
        return self.shape.zeros()


class MatrixFactorization(Problem):
    """f(W1, W2) = 0.5 * ||W2 W1 A - B||_F^2 with minibatch column sampling.

    Two layers: W1 (rank, m) and W2 (d, rank). Targets are built from planted
    factors so W2* W1* A = B exactly and the minimum value is 0. A stochastic
    gradient samples ``minibatch`` columns uniformly with replacement and
    rescales by n / batch, which keeps it unbiased; 0 means full batch.
    """

    def __init__(
        self,
        m: int = 12,
        n_cols: int = 64,
        d: int = 10,
        rank: int = 4,
        minibatch: int = 8,
        norm: NormKind = NormKind.SPECTRAL,
        t_i: float = 1.0,
        data_seed: int = 0,
    ):
        self.m, self.n, self.d, self.rank = m, n_cols, d, rank
        self.minibatch = int(minibatch)
        self.shape = ModelShape(
            (LayerSpec(rank, m, norm, t_i), LayerSpec(d, rank, norm, t_i))
        )
        rng = np.random.default_rng(data_seed)
        self.A = rng.standard_normal((m, n_cols)) / np.sqrt(m)
        W1_star = rng.standard_normal((rank, m)) / np.sqrt(m)
        W2_star = rng.standard_normal((d, rank)) / np.sqrt(rank)
        self.B = W2_star @ W1_star @ self.A

    def value(self, X):
        W1, W2 = X
        R = W2 @ W1 @ self.A - self.B
        return 0.5 * float(np.sum(R * R))

    def full_grad(self, X):
        W1, W2 = X
        WA = W1 @ self.A
        R = W2 @ WA - self.B
        return [W2.T @ R @ self.A.T, R @ WA.T]

    def stoch_grad(self, sample, X):
        if sample.indices is not None:
            idx = np.asarray(sample.indices)
        elif self.minibatch == 0 or self.minibatch >= self.n:
            return self.full_grad(X)
        else:
            rng = np.random.default_rng(sample.seed)
            idx = rng.integers(0, self.n, size=self.minibatch)
        W1, W2 = X
        A_s = self.A[:, idx]
        WA = W1 @ A_s
        R = W2 @ WA - self.B[:, idx]
        scale = self.n / len(idx)
        return [scale * (W2.T @ R @ A_s.T), scale * (R @ WA.T)]

    def initial_point(self, rng):
        return [
            rng.standard_normal((s.rows, s.cols)) / np.sqrt(s.cols)
            for s in self.shape.layers
        ]

    def known_minimum(self):
        return 0.0


class TwoLayerMLP(Problem):
    """Two-layer tanh network on a synthetic classification set.

    Layers W1 (hidden, dim) and W2 (classes, hidden); f is the mean cross
    entropy of softmax(W2 tanh(W1 x)). Non-convex; minibatch rows are drawn
    with replacement from the sample seed (0 means full batch).
    """

    def __init__(
        self,
        n_points: int = 512,
        dim: int = 8,
        hidden: int = 12,
        classes: int = 3,
        minibatch: int = 16,
        norm: NormKind = NormKind.SPECTRAL,
        t_i: float = 1.0,
        data_seed: int = 0,
    ):
        self.n = n_points
        self.minibatch = int(minibatch)
        self.shape = ModelShape(
            (LayerSpec(hidden, dim, norm, t_i), LayerSpec(classes, hidden, norm, t_i))
        )
        rng = np.random.default_rng(data_seed)
        self.Z = rng.standard_normal((n_points, dim))
        centers = rng.standard_normal((classes, dim))
        scores = self.Z @ centers.T + 0.5 * rng.standard_normal((n_points, classes))
        self.y = np.argmax(scores, axis=1)
        self.Y = np.eye(classes)[self.y]

    def _loss_grad(self, Z, Y, X):
        W1, W2 = X
        H = np.tanh(Z @ W1.T)
        P = _softmax(H @ W2.T)
        n = Z.shape[0]
        eps = np.finfo(float).tiny
        loss = -float(np.mean(np.log(np.maximum(P[np.arange(n), Y.argmax(axis=1)], eps))))
        dlogits = (P - Y) / n
        g2 = dlogits.T @ H
        dH = dlogits @ W2
        g1 = (dH * (1.0 - H * H)).T @ Z
        return loss, [g1, g2]

    def value(self, X):
        return self._loss_grad(self.Z, self.Y, X)[0]

    def full_grad(self, X):
        return self._loss_grad(self.Z, self.Y, X)[1]

    def stoch_grad(self, sample, X):
        if sample.indices is not None:
            idx = np.asarray(sample.indices)
        elif self.minibatch == 0 or self.minibatch >= self.n:
            return self.full_grad(X)
        else:
            rng = np.random.default_rng(sample.seed)
            idx = rng.integers(0, self.n, size=self.minibatch)
        return self._loss_grad(self.Z[idx], self.Y[idx], X)[1]

    def initial_point(self, rng):
        return [
            rng.standard_normal((s.rows, s.cols)) / np.sqrt(s.cols)
            for s in self.shape.layers
        ]


# -- measurable constants -----------------------------------------------------


@dataclass(frozen=True)
class ProblemConstants:
    """Monte-Carlo estimates of the smoothness and noise constants.

    All estimates are maxima over finitely many probes, hence lower bounds
    of the true suprema; use them for sanity bands, not as ground truth.
    """

    sigma_hat: float
    delta_hat: tuple[float, ...]
    rho: tuple[float, ...]
    L0_hat: tuple[float, ...]
    L1_hat: tuple[float, ...]
    D: float
    L_hat: float
    notes: tuple[str, ...] = field(default=())

    def __post_init__(self):
        values = [self.sigma_hat, self.D, self.L_hat]
        values += list(self.delta_hat) + list(self.rho)
        values += list(self.L0_hat) + list(self.L1_hat)
        if any(v < 0 for v in values if np.isfinite(v)):
            raise ValueError("problem constants must be nonnegative")


def _steepest_direction(problem, X, i, rng, h=1e-4, iters=12):
    """Locally worst perturbation of layer i via finite-difference power iteration."""
    g0 = problem.full_grad(X)[i]
    d = rng.standard_normal(g0.shape)
    d /= np.linalg.norm(d)
    for _ in range(iters):
        Y = copy_blocks(X)
        Y[i] = Y[i] + h * d
        diff = problem.full_grad(Y)[i] - g0
        nd = np.linalg.norm(diff)
        if nd == 0:
            break
        d = diff / nd
    return d


def estimate_constants(
    problem: Problem,
    n_samples: int = 64,
    n_pairs: int = 16,
    rng: np.random.Generator | None = None,
    probe_scale: float = 1.0,
) -> ProblemConstants:
    """Estimate sigma, delta_i, L0_i/L1_i, rho_i, D, and L from Monte-Carlo probes.

    sigma_hat is the max over probe points and layers of the RMS Euclidean
    stochastic-gradient error. delta_hat_i maximizes, over probe pairs, the
    RMS of the centered stochastic gradient difference divided by the layer
    distance. L0/L1 come from a least-squares fit of the ratio
    ||grad_i f(X) - grad_i f(Y)||_* / ||X_i - Y_i|| against ||grad_i f(X)||_*
    along locally steepest directions.
    """
    if n_samples < 1 or n_pairs < 1:
        raise ValueError("n_samples and n_pairs must be >= 1")
    rng = rng if rng is not None else np.random.default_rng(0)
    shape = problem.shape
    p = shape.p
    notes: list[str] = []

    probes = []
    for _ in range(n_pairs):
        X = problem.initial_point(rng)
        X = [x + probe_scale * rng.standard_normal(x.shape) for x in X]
        probes.append(X)

    # sigma: RMS stochastic error per layer, maxed over a few probes
    sigma_layer = np.zeros(p)
    for X in probes[: min(4, n_pairs)]:
        g = problem.full_grad(X)
        sq = np.zeros(p)
        for _ in range(n_samples):
            gs = problem.stoch_grad(draw_sample(rng), X)
            for i in range(p):
                sq[i] += np.sum((gs[i] - g[i]) ** 2)
        sigma_layer = np.maximum(sigma_layer, np.sqrt(sq / n_samples))
    sigma_hat = float(np.max(sigma_layer))

    # delta_i: Hessian-variance ratio over probe pairs
    delta = np.zeros(p)
    for X in probes:
        Y = [x + probe_scale * rng.standard_normal(x.shape) for x in X]
        gX, gY = problem.full_grad(X), problem.full_grad(Y)
        sq = np.zeros(p)
        for _ in range(n_samples):
            s = draw_sample(rng)
            sX = problem.stoch_grad(s, X)
            sY = problem.stoch_grad(s, Y)
            for i in range(p):
                sq[i] += np.sum(((sX[i] - sY[i]) - (gX[i] - gY[i])) ** 2)
        for i in range(p):
            dist = norm(shape.layers[i].norm, X[i] - Y[i])
            if dist > 0:
                delta[i] = max(delta[i], np.sqrt(sq[i] / n_samples) / dist)

    # L0/L1: least squares of smoothness ratios against gradient dual norms
    L0 = np.zeros(p)
    L1 = np.zeros(p)
    degenerate = True
    h = 1e-4 * probe_scale
    for i in range(p):
        kind = shape.layers[i].norm
        gs, ratios = [], []
        for X in probes:
            d = _steepest_direction(problem, X, i, rng, h=h)
            Y = copy_blocks(X)
            Y[i] = Y[i] + h * d
            num = dual_norm(kind, problem.full_grad(X)[i] - problem.full_grad(Y)[i])
            den = norm(kind, X[i] - Y[i])
            if den == 0:
                continue
            gs.append(dual_norm(kind, problem.full_grad(X)[i]))
            ratios.append(num / den)
        if not ratios or max(ratios) == 0.0:
            continue
        degenerate = False
        gs_a, r_a = np.asarray(gs), np.asarray(ratios)
        A = np.stack([np.ones_like(gs_a), gs_a], axis=1)
        coef, *_ = np.linalg.lstsq(A, r_a, rcond=None)
        if coef[1] < 0 or len(ratios) < 2:
            L0[i], L1[i] = float(np.mean(r_a)), 0.0
        else:
            L0[i], L1[i] = float(max(coef[0], 0.0)), float(coef[1])
    if degenerate:
        notes.append("degenerate problem: all probed gradients are constant")

    rho = tuple(rho_bound(s.norm, s.rows, s.cols) for s in shape.layers)

    # L (whole-space view): RMS stochastic-gradient Lipschitz ratio in the
    # global Euclidean norm, maxed over probe pairs
    L_hat = 0.0
    for X in probes[: min(4, n_pairs)]:
        Y = [x + probe_scale * rng.standard_normal(x.shape) for x in X]
        dist = np.sqrt(sum(np.sum((x - y) ** 2) for x, y in zip(X, Y)))
        if dist == 0:
            continue
        sq = 0.0
        for _ in range(n_samples):
            s = draw_sample(rng)
            sX, sY = problem.stoch_grad(s, X), problem.stoch_grad(s, Y)
            sq += sum(np.sum((a - b) ** 2) for a, b in zip(sX, sY))
        L_hat = max(L_hat, np.sqrt(sq / n_samples) / dist)

    x_star = problem.minimum_point()
    if x_star is not None:
        D = max(norm(s.norm, b) for s, b in zip(shape.layers, x_star))
    else:
        D = float("nan")
        notes.append("minimizer unknown: D not estimated")

    return ProblemConstants(
        sigma_hat=sigma_hat,
        delta_hat=tuple(float(d) for d in delta),
        rho=rho,
        L0_hat=tuple(float(v) for v in L0),
        L1_hat=tuple(float(v) for v in L1),
        D=float(D),
        L_hat=float(L_hat),
        notes=tuple(notes),
    )
