"""Kernels, GP prior sampling on discrete grids, and exact GP posteriors.

Joint actions are the concatenation of every agent's own action vector,
in agent order. Posteriors use a constant prior mean, zero unless given.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import InputError, NumericalError

#: Largest joint grid sampled through a dense Gram factor. Above this the
#: separable squared-exponential kernel is sampled through per-agent factors.
DENSE_SAMPLE_CAP = 5000

JITTER_START = 1e-8
JITTER_MAX = 1e-4

REFACTOR_EVERY = 64


@dataclass(frozen=True, eq=False)
class ActionSpace:
    """An ordered, finite set of actions with coordinates in [0, 1]^dim."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise InputError("an action space needs at least one point")
        if np.any(pts < 0.0) or np.any(pts > 1.0):
            raise InputError("action coordinates must lie in [0, 1]")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def __len__(self):
        return self.size

    @classmethod
    def grid(cls, points_per_axis: int, dim: int = 1) -> "ActionSpace":
        """Equally spaced grid over [0, 1]^dim in row-major order."""
        if points_per_axis < 1 or dim < 1:
            raise InputError("grid needs points_per_axis >= 1 and dim >= 1")
        axis = np.linspace(0.0, 1.0, points_per_axis) if points_per_axis > 1 else np.zeros(1)
        mesh = np.meshgrid(*([axis] * dim), indexing="ij")
        return cls(np.stack([m.ravel() for m in mesh], axis=1))

    @classmethod
    def random(cls, size: int, dim: int, seed) -> "ActionSpace":
        rng = np.random.default_rng(seed)
        return cls(rng.uniform(size=(size, dim)))


def joint_points(spaces, indices) -> np.ndarray:
    """Coordinates of joint actions given per-agent index arrays.

    ``indices`` is a sequence (one entry per agent) of broadcastable integer
    arrays; the result has shape ``broadcast_shape + (total_dim,)``.
    """
    idx = np.broadcast_arrays(*[np.asarray(i) for i in indices])
    return np.concatenate([s.points[i] for s, i in zip(spaces, idx)], axis=-1)


def joint_grid(spaces) -> np.ndarray:
    """All joint actions in C order over the agents' index axes."""
    sizes = [s.size for s in spaces]
    grids = np.meshgrid(*[np.arange(n) for n in sizes], indexing="ij")
    return joint_points(spaces, [g.ravel() for g in grids])


@dataclass(frozen=True)
class KernelSpec:
    """Stationary kernel: ``"se"`` or ``"matern"`` with nu in {1.5, 2.5}."""

    family: str = "se"
    length_scale: float = 0.1
    signal_variance: float = 1.0
    nu: float | None = None

    def __post_init__(self):
        if self.family not in ("se", "matern"):
            raise InputError(f"unknown kernel family {self.family!r}")
        if self.family == "matern" and self.nu not in (1.5, 2.5):
            raise InputError("matern kernel supports nu in {1.5, 2.5}")
        if self.length_scale <= 0 or self.signal_variance <= 0:
            raise InputError("length_scale and signal_variance must be positive")

    def __call__(self, A, B) -> np.ndarray:
        """Cross-covariance matrix between the rows of ``A`` and ``B``."""
        A = np.atleast_2d(np.asarray(A, dtype=float))
        B = np.atleast_2d(np.asarray(B, dtype=float))
        if A.shape[-1] != B.shape[-1]:
            raise InputError(f"dimension mismatch: {A.shape[-1]} vs {B.shape[-1]}")
        sq = (
            np.sum(A**2, axis=1)[:, None]
            + np.sum(B**2, axis=1)[None, :]
            - 2.0 * A @ B.T
        )
        np.maximum(sq, 0.0, out=sq)
        return self._from_sqdist(sq)

    def diag(self, A) -> np.ndarray:
        return np.full(np.atleast_2d(A).shape[0], float(self.signal_variance))

    def _from_sqdist(self, sq):
        ell, sv = self.length_scale, self.signal_variance
        if self.family == "se":
            return sv * np.exp(-0.5 * sq / ell**2)
        r = np.sqrt(sq) / ell
        if self.nu == 1.5:
            s = np.sqrt(3.0) * r
            return sv * (1.0 + s) * np.exp(-s)
        s = np.sqrt(5.0) * r
        return sv * (1.0 + s + s**2 / 3.0) * np.exp(-s)


def kernel_eval(spec: KernelSpec, z, z2) -> float:
    z = np.asarray(z, dtype=float).ravel()
    z2 = np.asarray(z2, dtype=float).ravel()
    if z.shape != z2.shape:
        raise InputError(f"dimension mismatch: {z.size} vs {z2.size}")
    return float(spec(z[None, :], z2[None, :])[0, 0])


def jittered_cholesky(K: np.ndarray, scale: float) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``K + jitter*I`` with escalating jitter."""
    jitter = JITTER_START
    n = K.shape[0]
    while jitter <= JITTER_MAX * (1 + 1e-12):
        try:
            L = linalg.cholesky(K + jitter * scale * np.eye(n), lower=True)
            return L, jitter * scale
        except linalg.LinAlgError:
            jitter *= 10.0
    raise NumericalError(
        f"Gram matrix not positive definite after jitter up to {JITTER_MAX * scale:g}"
    )


def sample_prior(spec: KernelSpec, spaces, seed, size: int | None = None) -> np.ndarray:
    """Draw from the zero-mean GP prior over the joint grid of ``spaces``.

    Returns an array of shape ``(n_1, ..., n_M)`` (or ``(size, n_1, ..., n_M)``
    when ``size`` is given). The same ``(spec, spaces, seed)`` always gives
    the same bits.
    """
    spaces = list(spaces)
    shape = tuple(s.size for s in spaces)
    n = int(np.prod(shape))
    rng = np.random.default_rng(seed)
    m = 1 if size is None else size
    if n <= DENSE_SAMPLE_CAP:
        Z = joint_grid(spaces)
        L, _ = jittered_cholesky(spec(Z, Z), spec.signal_variance)
        draws = (L @ rng.standard_normal((n, m))).T.reshape((m,) + shape)
    elif spec.family == "se":
        # SE over concatenated coordinates factorizes across agents.
        factors = []
        for i, s in enumerate(spaces):
            sub = KernelSpec("se", spec.length_scale, spec.signal_variance if i == 0 else 1.0)
            factors.append(jittered_cholesky(sub(s.points, s.points), sub.signal_variance)[0])
        draws = rng.standard_normal((m,) + shape)
        for axis, L in enumerate(factors):
            draws = np.moveaxis(np.tensordot(L, draws, axes=([1], [axis + 1])), 0, axis + 1)
    else:
        raise InputError(
            f"joint grid of {n} points exceeds the dense sampling cap {DENSE_SAMPLE_CAP}"
        )
    return draws[0] if size is None else draws


@dataclass(frozen=True, eq=False)
class GPPosterior:
    """Immutable GP posterior with a constant prior mean (zero by default).

    Holds the conditioning history, the lower Cholesky factor of
    ``K + (noise_variance + jitter) I`` and the solved weight vector.
    Use :meth:`prior` to start and :meth:`condition` to add observations.
    """

    kernel: KernelSpec
    noise_variance: float
    X: np.ndarray
    y: np.ndarray
    L: np.ndarray
    alpha: np.ndarray
    jitter: float = 0.0
    updates_since_refactor: int = field(default=0, compare=False)
    prior_mean: float = 0.0

    @classmethod
    def prior(cls, kernel: KernelSpec, dim: int, noise_variance: float = 0.01,
              prior_mean: float = 0.0) -> "GPPosterior":
        if noise_variance < 0:
            raise InputError("noise_variance must be nonnegative")
        return cls(
            kernel, float(noise_variance), np.empty((0, dim)), np.empty(0),
            np.empty((0, 0)), np.empty(0), prior_mean=float(prior_mean),
        )

    @classmethod
    def fit(cls, kernel: KernelSpec, X, y, noise_variance: float = 0.01,
            prior_mean: float = 0.0) -> "GPPosterior":
        """Posterior from a batch history via one full factorization."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float).ravel()
        if X.shape[0] != y.size:
            raise InputError("inputs and outputs differ in length")
        return cls._factorize(kernel, float(noise_variance), X, y, 0.0, float(prior_mean))

    @classmethod
    def _factorize(cls, kernel, noise, X, y, jitter, prior_mean=0.0):
        K = kernel(X, X) + noise * np.eye(len(y))
        if jitter == 0.0:
            try:
                L = linalg.cholesky(K, lower=True)
            except linalg.LinAlgError:
                L, jitter = jittered_cholesky(K, kernel.signal_variance)
        else:
            try:
                L = linalg.cholesky(K + jitter * np.eye(len(y)), lower=True)
            except linalg.LinAlgError:
                L, jitter = jittered_cholesky(K, kernel.signal_variance)
        return cls(kernel, noise, X, y, L, _solve_alpha(L, y - prior_mean), jitter, 0, prior_mean)

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def __len__(self):
        return self.y.size

    def condition(self, z, y: float) -> "GPPosterior":
        """Return the posterior with ``(z, y)`` appended to the history."""
        z = np.asarray(z, dtype=float).ravel()
        if z.size != self.dim:
            raise InputError(f"dimension mismatch: {z.size} vs {self.dim}")
        X = np.vstack([self.X, z[None, :]])
        Y = np.append(self.y, float(y))
        if self.updates_since_refactor + 1 >= REFACTOR_EVERY:
            return self._factorize(self.kernel, self.noise_variance, X, Y, self.jitter,
                                   self.prior_mean)
        kvec = self.kernel(self.X, z[None, :])[:, 0]
        kzz = self.kernel.signal_variance + self.noise_variance + self.jitter
        if len(self):
            row = linalg.solve_triangular(self.L, kvec, lower=True)
        else:
            row = np.empty(0)
        d2 = kzz - row @ row
        if d2 <= 1e-12 * self.kernel.signal_variance:
            # breakdown of the appended pivot: refactor with escalating jitter
            jitter = max(self.jitter * 10.0, JITTER_START * self.kernel.signal_variance)
            return self._factorize(self.kernel, self.noise_variance, X, Y, jitter, self.prior_mean)
        n = len(self)
        L = np.zeros((n + 1, n + 1))
        L[:n, :n] = self.L
        L[n, :n] = row
        L[n, n] = np.sqrt(d2)
        return GPPosterior(
            self.kernel, self.noise_variance, X, Y, L, _solve_alpha(L, Y - self.prior_mean),
            self.jitter, self.updates_since_refactor + 1, self.prior_mean,
        )

    def predict(self, Z) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and variance at the rows of ``Z``."""
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        if Z.shape[1] != self.dim:
            raise InputError(f"dimension mismatch: {Z.shape[1]} vs {self.dim}")
        prior_var = self.kernel.diag(Z)
        if len(self) == 0:
            return np.full(Z.shape[0], self.prior_mean), prior_var
        if self.L.shape[0] != len(self):
            raise RuntimeError("factorization is out of date with the history")
        Ks = self.kernel(self.X, Z)
        V = linalg.solve_triangular(self.L, Ks, lower=True)
        mean = self.prior_mean + Ks.T @ self.alpha
        var = prior_var - np.einsum("ij,ij->j", V, V)
        return mean, np.maximum(var, 0.0)


def _solve_alpha(L, y):
    if y.size == 0:
        return np.empty(0)
    return linalg.cho_solve((L, True), y)


def posterior_predict(gp: GPPosterior, z) -> tuple[float, float]:
    mean, var = gp.predict(np.asarray(z, dtype=float).reshape(1, -1))
    return float(mean[0]), float(var[0])


def condition(gp: GPPosterior, z, y: float) -> GPPosterior:
    return gp.condition(z, y)


def iter_joint_indices(spaces):
    return itertools.product(*[range(s.size) for s in spaces])
