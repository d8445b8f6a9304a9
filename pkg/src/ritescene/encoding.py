"""Lasso sparse coding of descriptors, dictionary learning and max pooling.

Objective per sample: ||x - Phi a||^2 + lam * ||a||_1, with the atoms of
``Phi`` as rows of ``Dictionary.atoms`` (shape (M, dim)).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bgfg import decode_array, encode_array

logger = logging.getLogger(__name__)

CD_TOL = 1e-6
CD_MAX_SWEEPS = 500
# sweep cap for the coding step inside dictionary learning
LEARN_SWEEPS = 10


@dataclass(frozen=True)
class Dictionary:
    atoms: np.ndarray  # (M, dim), unit-norm rows
    lam: float = 0.15
    seed: int = 0
    iterations: int = 0
    objective_trace: tuple[float, ...] = ()

    @property
    def n_atoms(self) -> int:
        return self.atoms.shape[0]

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    def to_dict(self) -> dict:
        return {
            "n_atoms": self.n_atoms,
            "dim": self.dim,
            "lam": self.lam,
            "seed": self.seed,
            "iterations": self.iterations,
            "objective_trace": list(self.objective_trace),
            "atoms": encode_array(self.atoms),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Dictionary":
        atoms = decode_array(d["atoms"], (int(d["n_atoms"]), int(d["dim"])))
        return cls(atoms, float(d["lam"]), int(d["seed"]), int(d["iterations"]),
                   tuple(float(v) for v in d["objective_trace"]))


@dataclass(frozen=True)
class SparseCode:
    coefficients: np.ndarray

    @property
    def sparsity(self) -> float:
        return float(np.mean(self.coefficients == 0.0))


@dataclass(frozen=True)
class ImageFeature:
    values: np.ndarray
    n_descriptors: int = 0


def soft_threshold(z: np.ndarray, t: float) -> np.ndarray:
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


def objective(X: np.ndarray, atoms: np.ndarray, A: np.ndarray, lam: float) -> float:
    """Summed objective for samples X (N, dim) with codes A (N, M)."""
    R = X - A @ atoms
    return float(np.sum(R * R) + lam * np.sum(np.abs(A)))


def encode_batch(X: np.ndarray, atoms: np.ndarray, lam: float, A0: np.ndarray | None = None,
                 tol: float = CD_TOL, max_sweeps: int = CD_MAX_SWEEPS) -> np.ndarray:
    """Cyclic coordinate descent for every row of X, vectorised across rows.

    Each sample stops on its own once its largest coefficient change in a
    sweep drops below ``tol``, so a row's code does not depend on which
    other rows share the batch beyond BLAS rounding in the initial product.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite descriptor")
    n, m = X.shape[0], atoms.shape[0]
    A = np.zeros((n, m)) if A0 is None else np.array(A0, dtype=np.float64)
    if n == 0:
        return A
    G = atoms @ atoms.T
    diag = np.diag(G).copy()
    # Z[:, j] = phi_j . (x - Phi a), maintained incrementally
    Z = X @ atoms.T - A @ G
    active = np.arange(n)
    half = lam / 2.0
    for _ in range(max_sweeps):
        if active.size == 0:
            break
        Za, Aa = Z[active], A[active]
        biggest = np.zeros(active.size)
        for j in range(m):
            if diag[j] == 0.0:
                continue
            old = Aa[:, j]
            new = soft_threshold(Za[:, j] + diag[j] * old, half) / diag[j]
            delta = new - old
            changed = np.flatnonzero(delta)
            if changed.size:
                d = delta[changed]
                Aa[changed, j] = new[changed]
                Za[changed] -= d[:, None] * G[j]
                biggest[changed] = np.maximum(biggest[changed], np.abs(d))
        Z[active], A[active] = Za, Aa
        active = active[biggest >= tol]
    return A


def sparse_encode(x: np.ndarray, dictionary: Dictionary) -> SparseCode:
    return SparseCode(encode_batch(np.asarray(x)[None], dictionary.atoms, dictionary.lam)[0])


def _normalize_rows(M: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(M, axis=1, keepdims=True)
    return M / np.where(norms > 0, norms, 1.0)


def _update_atoms(X: np.ndarray, atoms: np.ndarray, A: np.ndarray) -> np.ndarray:
    """Refit each atom by least squares on the unit sphere, others held fixed.

    For atom j the optimum is E_j^T a_j / ||E_j^T a_j|| with E_j the residual
    excluding j; this never raises the objective.  Unused atoms are left
    for the caller.
    """
    atoms = atoms.copy()
    B = A.T @ X  # (M, dim)
    C = A.T @ A  # (M, M)
    for j in range(atoms.shape[0]):
        if C[j, j] == 0.0:
            continue
        u = B[j] - C[j] @ atoms + C[j, j] * atoms[j]
        nu = np.linalg.norm(u)
        if nu > 0:
            atoms[j] = u / nu
    return atoms


def _reseed_unused(X: np.ndarray, atoms: np.ndarray, A: np.ndarray) -> np.ndarray:
    """Point atoms with no nonzero code at the worst-reconstructed samples.

    Their coefficients are all zero, so the objective is unchanged.
    """
    unused = np.nonzero(~np.any(A != 0.0, axis=0))[0]
    if unused.size == 0:
        return atoms
    resid = np.sum((X - A @ atoms) ** 2, axis=1)
    order = np.argsort(-resid, kind="stable")
    atoms = atoms.copy()
    for j, i in zip(unused, order):
        if resid[i] <= 0 or np.linalg.norm(X[i]) == 0:
            break
        atoms[j] = X[i] / np.linalg.norm(X[i])
    return atoms


def initial_atoms(X: np.ndarray, n_atoms: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    idx = rng.choice(X.shape[0], size=n_atoms, replace=False)
    atoms = X[np.sort(idx)].copy()
    zero = np.linalg.norm(atoms, axis=1) == 0
    if np.any(zero):
        atoms[zero] = rng.standard_normal((int(zero.sum()), X.shape[1]))
    return _normalize_rows(atoms)


def learn_dictionary(descriptors: np.ndarray, n_atoms: int = 256, lam: float = 0.15,
                     iterations: int = 30, seed: int = 0, sweeps: int = LEARN_SWEEPS) -> Dictionary:
    """Alternate sparse coding and atom refits; the trace holds the objective
    after each alternation and is non-increasing.

    The coding step is warm-started from the previous codes and capped at
    ``sweeps`` coordinate-descent sweeps; descent from a warm start cannot
    raise the objective, so the cap only trades speed for progress per step.
    """
    X = np.asarray(descriptors, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < n_atoms or n_atoms < 1:
        raise ValueError(f"need at least {n_atoms} descriptors, got {X.shape[0] if X.ndim == 2 else 0}")
    atoms = initial_atoms(X, n_atoms, seed)
    A = None
    trace = []
    for it in range(iterations):
        A = encode_batch(X, atoms, lam, A0=A, max_sweeps=sweeps)
        atoms = _reseed_unused(X, _update_atoms(X, atoms, A), A)
        trace.append(objective(X, atoms, A, lam))
        logger.debug("dictionary iteration %d objective %.6f", it, trace[-1])
    return Dictionary(atoms, lam, seed, iterations, tuple(trace))


def pool_codes(codes: Sequence[SparseCode] | np.ndarray, n_atoms: int | None = None) -> ImageFeature:
    """Componentwise max of |coefficients|; an empty set gives zeros."""
    if isinstance(codes, np.ndarray):
        mat = codes
    else:
        dims = {c.coefficients.shape for c in codes}
        if len(dims) > 1:
            raise ValueError(f"codes have mixed dimensions {sorted(dims)}")
        mat = np.stack([c.coefficients for c in codes]) if codes else np.zeros((0, n_atoms or 0))
    if mat.shape[0] == 0:
        if n_atoms is None and mat.shape[1] == 0:
            raise ValueError("empty code set needs n_atoms")
        return ImageFeature(np.zeros(n_atoms if n_atoms is not None else mat.shape[1]), 0)
    return ImageFeature(np.max(np.abs(mat), axis=0), mat.shape[0])


def encode_image(descriptors: np.ndarray, dictionary: Dictionary) -> ImageFeature:
    if len(descriptors) == 0:
        return ImageFeature(np.zeros(dictionary.n_atoms), 0)
    return pool_codes(encode_batch(descriptors, dictionary.atoms, dictionary.lam), dictionary.n_atoms)


def encode_images(descriptor_sets: Sequence[np.ndarray], dictionary: Dictionary) -> list[ImageFeature]:
    """encode_image for many images in one solver batch (codes are per-row,
    so the result equals encoding each image separately)."""
    sizes = [len(d) for d in descriptor_sets]
    blocks = [np.asarray(d, dtype=np.float64).reshape(-1, dictionary.dim) for d in descriptor_sets]
    X = np.concatenate(blocks) if blocks else np.zeros((0, dictionary.dim))
    A = encode_batch(X, dictionary.atoms, dictionary.lam)
    out, start = [], 0
    for n in sizes:
        out.append(pool_codes(A[start:start + n], dictionary.n_atoms))
        start += n
    return out
