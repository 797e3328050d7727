"""Scalar surrogates from latent vectors to one manufacturability indicator.

Two models: multiquadric RBF interpolation on raw inputs, and constant-mean
Kriging with a Gaussian correlation on standardised inputs.  Fit one model
per indicator.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import linalg, optimize
from scipy.spatial.distance import cdist, pdist

LOG10_THETA_BOUNDS = (-6.0, 3.0)


class SurrogateError(ValueError):
    pass


# --------------------------------------------------------------------------
# RBF
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RbfModel:
    centres: np.ndarray  # (N, d)
    weights: np.ndarray  # (N,)
    scale: float  # kernel length l

    def __call__(self, x) -> np.ndarray:
        return rbf_predict(self, x)


def multiquadric(d, scale: float):
    return np.sqrt(1.0 + (np.asarray(d, float) / scale) ** 2)


def _check_distinct(X: np.ndarray) -> None:
    if len(X) > 1 and np.min(pdist(X)) == 0.0:
        raise SurrogateError("training inputs must be pairwise distinct")


def rbf_fit(X, y) -> RbfModel:
    """Interpolating multiquadric RBF.

    The kernel length is the mean distance over all training pairs (1 for a
    single sample, where it has no effect).  The dense system is solved by LU
    with partial pivoting plus one step of iterative refinement.
    """
    X = np.atleast_2d(np.asarray(X, float))
    y = np.asarray(y, float).reshape(-1)
    if len(X) != len(y) or len(X) < 1:
        raise SurrogateError("X and y must hold the same, non-zero number of samples")
    _check_distinct(X)
    scale = float(np.mean(pdist(X))) if len(X) > 1 else 1.0
    Phi = multiquadric(cdist(X, X), scale)
    lu = linalg.lu_factor(Phi)
    w = linalg.lu_solve(lu, y)
    w += linalg.lu_solve(lu, y - Phi @ w)
    return RbfModel(X, w, scale)


def rbf_predict(model: RbfModel, x) -> np.ndarray | float:
    x = np.asarray(x, float)
    single = x.ndim == 1
    out = multiquadric(cdist(np.atleast_2d(x), model.centres), model.scale) @ model.weights
    return float(out[0]) if single else out


# --------------------------------------------------------------------------
# Kriging
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class KrigingModel:
    x_mean: np.ndarray
    x_std: np.ndarray
    X: np.ndarray  # standardised training inputs
    y: np.ndarray
    theta: np.ndarray
    beta0: float
    sigma2: float
    nugget: float
    chol: np.ndarray  # lower Cholesky factor of R + nugget*I
    alpha: np.ndarray  # (R + nugget*I)^-1 (y - beta0)

    def __call__(self, x) -> np.ndarray:
        return kriging_predict(self, x)


def _sqdiff(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Per-dimension squared differences, shape (d, len(A), len(B))."""
    return (A.T[:, :, None] - B.T[:, None, :]) ** 2


def _profile(theta: np.ndarray, D: np.ndarray, y: np.ndarray, nugget: float, grad: bool = False):
    """Concentrated log-likelihood (and its gradient in log10 theta)."""
    n = len(y)
    C = np.exp(-np.tensordot(theta, D, axes=1))
    R = C + nugget * np.eye(n)
    try:
        L = linalg.cholesky(R, lower=True)
    except linalg.LinAlgError:
        return (-np.inf, None) if grad else -np.inf
    one = np.ones(n)
    Ri1 = linalg.cho_solve((L, True), one)
    Riy = linalg.cho_solve((L, True), y)
    beta0 = (one @ Riy) / (one @ Ri1)
    alpha = Riy - beta0 * Ri1
    resid = y - beta0
    sigma2 = max(float(resid @ alpha) / n, 1e-300)
    ll = -0.5 * n * np.log(sigma2) - np.sum(np.log(np.diag(L)))
    if not grad:
        return ll
    Rinv = linalg.cho_solve((L, True), np.eye(n))
    M = np.outer(alpha, alpha) / sigma2 - Rinv
    # dR/dtheta_l = -D_l * C ; d/dlog10(theta_l) adds theta_l * ln10
    g = -0.5 * np.einsum("ij,lij->l", M * C, D) * theta * np.log(10.0)
    return ll, g


def kriging_fit(X, y, nugget: float = 1e-10, n_starts: int = 4, seed: int = 0) -> KrigingModel:
    """Constant-mean Kriging with theta by multi-start profiled likelihood."""
    X = np.atleast_2d(np.asarray(X, float))
    y = np.asarray(y, float).reshape(-1)
    if len(X) < 2 or len(X) != len(y):
        raise SurrogateError("Kriging needs at least two samples and matching X, y")
    x_mean = X.mean(axis=0)
    x_std = X.std(axis=0)
    if np.any(x_std == 0):
        bad = int(np.flatnonzero(x_std == 0)[0])
        raise SurrogateError(f"input component {bad} is constant")
    Xn = (X - x_mean) / x_std
    _check_distinct(Xn)
    D = _sqdiff(Xn, Xn)
    d = X.shape[1]
    lo, hi = LOG10_THETA_BOUNDS

    def neg(logt):
        ll, g = _profile(10.0 ** logt, D, y, nugget, grad=True)
        if not np.isfinite(ll):
            return 1e300, np.zeros(d)
        return -ll, -g

    rng = np.random.default_rng(seed)
    # first start at a theta that gives unit-scale correlation over the data
    starts = [np.full(d, np.log10(1.0 / d))]
    starts += [rng.uniform(lo, min(hi, 1.0), size=d) for _ in range(max(0, n_starts - 1))]
    best = None
    for x0 in starts:
        res = optimize.minimize(neg, x0, jac=True, method="L-BFGS-B", bounds=[(lo, hi)] * d)
        if np.isfinite(res.fun) and res.fun < 1e299 and (best is None or res.fun < best.fun):
            best = res
    if best is None:
        raise SurrogateError("correlation matrix is not positive definite for any theta tried")
    theta = 10.0 ** best.x
    R = np.exp(-np.tensordot(theta, D, axes=1)) + nugget * np.eye(len(y))
    try:
        L = linalg.cholesky(R, lower=True)
    except linalg.LinAlgError:
        raise SurrogateError("correlation matrix is not positive definite even with the nugget") from None
    one = np.ones(len(y))
    Ri1 = linalg.cho_solve((L, True), one)
    Riy = linalg.cho_solve((L, True), y)
    beta0 = float((one @ Riy) / (one @ Ri1))
    alpha = Riy - beta0 * Ri1
    sigma2 = float((y - beta0) @ alpha) / len(y)
    return KrigingModel(x_mean, x_std, Xn, y, theta, beta0, sigma2, nugget, L, alpha)


def kriging_predict(model: KrigingModel, x) -> np.ndarray | float:
    """Mean predictor ``beta0 + r(x)^T alpha``.

    The nugget counts as part of the correlation at zero distance, so the
    predictor passes exactly through the training targets.
    """
    x = np.asarray(x, float)
    single = x.ndim == 1
    xn = (np.atleast_2d(x) - model.x_mean) / model.x_std
    r = np.exp(-np.tensordot(model.theta, _sqdiff(xn, model.X), axes=1))
    r = r + model.nugget * np.all(xn[:, None, :] == model.X[None, :, :], axis=2)
    out = model.beta0 + r @ model.alpha
    return float(out[0]) if single else out


# --------------------------------------------------------------------------
# SSMF files
# --------------------------------------------------------------------------

SSMF_MAGIC = b"SSMF"
SSMF_VERSION = 1


def _pack_arrays(kind: str, arrays: dict[str, np.ndarray], meta: dict | None = None) -> bytes:
    meta_raw = json.dumps(meta or {}, sort_keys=True).encode()
    out = [struct.pack("<4sHHI", SSMF_MAGIC, SSMF_VERSION, len(kind), len(meta_raw)), kind.encode(),
           meta_raw, struct.pack("<I", len(arrays))]
    for tag, arr in arrays.items():
        arr = np.asarray(arr, dtype="<f8")
        out.append(struct.pack("<HB", len(tag), arr.ndim))
        out.append(tag.encode())
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(arr.tobytes())
    return b"".join(out)


def _unpack_arrays(data: bytes) -> tuple[str, dict, dict[str, np.ndarray]]:
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise SurrogateError("short read")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    magic, version, n_kind, n_meta = struct.unpack("<4sHHI", take(12))
    if magic != SSMF_MAGIC:
        raise SurrogateError("bad magic")
    if version != SSMF_VERSION:
        raise SurrogateError("bad version")
    kind = take(n_kind).decode()
    meta = json.loads(take(n_meta))
    (count,) = struct.unpack("<I", take(4))
    arrays = {}
    for _ in range(count):
        n_tag, ndim = struct.unpack("<HB", take(3))
        tag = take(n_tag).decode()
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        n = int(np.prod(shape)) if ndim else 1
        arrays[tag] = np.frombuffer(take(8 * n), "<f8").reshape(shape).copy()
    return kind, meta, arrays


def save_model(path, model: RbfModel | KrigingModel, meta: dict | None = None) -> None:
    """Write an ``SSMF`` file: header, kind, JSON metadata, tagged f64 arrays."""
    if isinstance(model, RbfModel):
        blob = _pack_arrays("rbf", {"centres": model.centres, "weights": model.weights,
                                    "scale": np.array(model.scale)}, meta)
    else:
        blob = _pack_arrays("kriging", {
            "x_mean": model.x_mean, "x_std": model.x_std, "X": model.X, "y": model.y,
            "theta": model.theta, "beta0": np.array(model.beta0), "sigma2": np.array(model.sigma2),
            "nugget": np.array(model.nugget), "chol": model.chol, "alpha": model.alpha,
        }, meta)
    Path(path).write_bytes(blob)


def load_model(path, with_meta: bool = False):
    kind, meta, a = _unpack_arrays(Path(path).read_bytes())
    model = _model_from_arrays(kind, a)
    return (model, meta) if with_meta else model


def _model_from_arrays(kind: str, a: dict) -> RbfModel | KrigingModel:
    if kind == "rbf":
        return RbfModel(a["centres"], a["weights"], float(a["scale"]))
    if kind == "kriging":
        return KrigingModel(a["x_mean"], a["x_std"], a["X"], a["y"], a["theta"], float(a["beta0"]),
                            float(a["sigma2"]), float(a["nugget"]), a["chol"], a["alpha"])
    raise SurrogateError(f"unknown model kind {kind!r}")
