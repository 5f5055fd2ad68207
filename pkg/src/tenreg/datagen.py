"""Synthetic instance generators: sparsity and low-rank truth classes,
Gaussian designs, pairwise interaction truths, and stationary vector
autoregressive simulation with spectral extrema computation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadCovarianceFactor, InfeasibleClass, ShapeMismatch, UnstableModel
from .solver import RegressionProblem, expand_pairwise
from .tensor import matricize

__all__ = [
    "ModelClassSpec",
    "gen_truth",
    "gen_pairwise_components",
    "class_certificate",
    "gen_problem",
    "VarModel",
    "gen_var_model",
    "var_truth",
    "coefficient_tensor",
    "gen_var_series",
    "var_spectral_extrema",
]

_CLASS_KINDS = (
    "theta1",
    "theta2",
    "theta3",
    "theta4",
    "theta5",
    "t1",
    "t2",
    "t3",
    "t4",
)

_RANK_TOL = 1e-9


@dataclass(frozen=True)
class ModelClassSpec:
    """Which structured truth class to draw from, and with what parameters.

    `s` is a support budget (entries, fibers, or slices), `r` a rank budget.
    `mode` picks the fiber axis for theta2; `axes` the slice-spanning pair
    for the slice classes.  Magnitudes default to +-1 entries for the
    sparsity classes and unit-Frobenius components for the rank classes so
    error norms are comparable across classes.
    """

    kind: str
    shape: tuple[int, ...]
    s: int | None = None
    r: int | None = None
    magnitude: float = 1.0
    mode: int = 0
    axes: tuple[int, int] = (0, 1)

    def __post_init__(self):
        if self.kind not in _CLASS_KINDS:
            raise ValueError(f"unknown class kind {self.kind!r}")
        if len(self.shape) != 3:
            raise ValueError("classes are defined for order-3 tensors")

    def to_json(self):
        return {
            "kind": self.kind,
            "shape": list(self.shape),
            "s": self.s,
            "r": self.r,
            "magnitude": self.magnitude,
            "mode": self.mode,
            "axes": list(self.axes),
        }

    @classmethod
    def from_json(cls, obj):
        return cls(
            kind=obj["kind"],
            shape=tuple(obj["shape"]),
            s=obj.get("s"),
            r=obj.get("r"),
            magnitude=obj.get("magnitude", 1.0),
            mode=obj.get("mode", 0),
            axes=tuple(obj.get("axes", (0, 1))),
        )


def _group_axis(axes):
    return ({0, 1, 2} - set(axes)).pop()


def _signs(rng, size):
    return rng.choice([-1.0, 1.0], size=size)


def _centered_low_rank(rng, d1, d2, r):
    """Rank-r matrix with zero row and column sums, unit Frobenius norm."""
    u = rng.standard_normal((d1, r))
    v = rng.standard_normal((d2, r))
    u -= u.mean(axis=0, keepdims=True)
    v -= v.mean(axis=0, keepdims=True)
    m = u @ v.T
    return m / np.linalg.norm(m)


def gen_pairwise_components(spec, seed):
    """The three centered rank-r component matrices of a pairwise truth."""
    d1, d2, d3 = spec.shape
    r = spec.r
    if r is None or r < 1 or r > min(spec.shape) - 1:
        raise InfeasibleClass("pairwise rank must satisfy 1 <= r <= min(d)-1")
    rng = np.random.default_rng(seed)
    comps = (
        spec.magnitude * _centered_low_rank(rng, d1, d2, r),
        spec.magnitude * _centered_low_rank(rng, d1, d3, r),
        spec.magnitude * _centered_low_rank(rng, d2, d3, r),
    )
    return comps


def gen_truth(spec, seed):
    """Draw a truth certified to belong to the class.

    Raises ``InfeasibleClass`` when the parameters cannot be met at the
    given shape.  Every generated tensor passes :func:`class_certificate`.
    """
    rng = np.random.default_rng(seed)
    shape = spec.shape
    d = np.array(shape)
    total = int(d.prod())

    if spec.kind == "theta1":
        s = spec.s
        if s is None or s < 0 or s > total:
            raise InfeasibleClass(f"need 0 <= s <= {total}")
        out = np.zeros(shape)
        flat = rng.choice(total, size=s, replace=False)
        out.ravel()[flat] = spec.magnitude * _signs(rng, s)
        return out

    if spec.kind == "theta2":
        others = [k for k in range(3) if k != spec.mode]
        ngroups = shape[others[0]] * shape[others[1]]
        s = spec.s
        if s is None or s < 0 or s > ngroups:
            raise InfeasibleClass(f"need 0 <= s <= {ngroups} fibers")
        out = np.zeros(shape)
        chosen = rng.choice(ngroups, size=s, replace=False)
        for c in chosen:
            i, j = divmod(int(c), shape[others[1]])
            idx = [slice(None)] * 3
            idx[others[0]], idx[others[1]] = i, j
            out[tuple(idx)] = spec.magnitude * _signs(rng, shape[spec.mode])
        return out

    if spec.kind in ("theta3", "t1"):
        axes = (1, 2) if spec.kind == "t1" else spec.axes
        g = _group_axis(axes)
        s = spec.s
        if s is None or s < 0 or s > shape[g]:
            raise InfeasibleClass(f"need 0 <= s <= {shape[g]} slices")
        out = np.zeros(shape)
        chosen = rng.choice(shape[g], size=s, replace=False)
        for j in chosen:
            idx = [slice(None)] * 3
            idx[g] = int(j)
            out[tuple(idx)] = spec.magnitude * _signs(
                rng, (shape[axes[0]], shape[axes[1]])
            )
        return out

    if spec.kind in ("theta4", "t2"):
        axes = (1, 2) if spec.kind == "t2" else spec.axes
        g = _group_axis(axes)
        da, db = shape[axes[0]], shape[axes[1]]
        r = spec.r
        max_rank = min(da, db) * shape[g]
        if r is None or r < 1 or r > max_rank:
            raise InfeasibleClass(f"need 1 <= r <= {max_rank}")
        # split the rank budget over as few slices as possible
        parts = []
        left = r
        while left > 0:
            take = min(left, min(da, db))
            parts.append(take)
            left -= take
        if len(parts) > shape[g]:
            raise InfeasibleClass("rank budget does not fit in the slices")
        out = np.zeros(shape)
        chosen = rng.choice(shape[g], size=len(parts), replace=False)
        for j, rj in zip(chosen, parts):
            u = np.linalg.qr(rng.standard_normal((da, rj)))[0]
            v = np.linalg.qr(rng.standard_normal((db, rj)))[0]
            sv = 1.0 + rng.random(rj)
            m = (u * sv) @ v.T
            m *= spec.magnitude / np.linalg.norm(m)
            idx = [slice(None)] * 3
            idx[g] = int(j)
            out[tuple(idx)] = m
        return out

    if spec.kind == "theta5":
        r = spec.r
        if r is None or r < 1 or r > min(shape):
            raise InfeasibleClass(f"need 1 <= r <= {min(shape)}")
        factors = [np.linalg.qr(rng.standard_normal((dk, r)))[0] for dk in shape]
        core = rng.standard_normal((r, r, r))
        out = np.einsum("abc,ia,jb,kc->ijk", core, *factors)
        return spec.magnitude * out / np.linalg.norm(out)

    if spec.kind == "t3":
        m, p, m2 = shape
        if m != m2:
            raise InfeasibleClass("VAR truth shape must be (m, p, m)")
        model = gen_var_model(
            m, p, spec.s, magnitude=spec.magnitude, seed=seed
        )
        return var_truth(model)

    if spec.kind == "t4":
        comps = gen_pairwise_components(spec, seed)
        return expand_pairwise(comps, shape)

    raise InfeasibleClass(spec.kind)


def _num_rank(mat):
    sv = np.linalg.svd(mat, compute_uv=False)
    if sv.size == 0 or sv[0] == 0:
        return 0
    return int((sv > _RANK_TOL * sv[0]).sum())


def class_certificate(spec, truth):
    """Exact membership check for a generated truth; returns a report dict
    with an overall ``ok`` flag."""
    t = np.asarray(truth, dtype=np.float64)
    shape = spec.shape
    if t.shape != tuple(shape):
        return {"ok": False, "reason": "shape mismatch"}

    if spec.kind == "theta1":
        nnz = int(np.count_nonzero(t))
        return {"ok": nnz <= spec.s, "nonzero_entries": nnz}
    if spec.kind == "theta2":
        norms = np.sqrt((t * t).sum(axis=spec.mode))
        nnz = int(np.count_nonzero(norms))
        return {"ok": nnz <= spec.s, "nonzero_fibers": nnz}
    if spec.kind in ("theta3", "t1"):
        axes = (1, 2) if spec.kind == "t1" else spec.axes
        norms = np.sqrt((t * t).sum(axis=axes))
        nnz = int(np.count_nonzero(norms))
        return {"ok": nnz <= spec.s, "nonzero_slices": nnz}
    if spec.kind in ("theta4", "t2"):
        axes = (1, 2) if spec.kind == "t2" else spec.axes
        g = _group_axis(axes)
        order = (g,) + tuple(axes)
        stack = np.transpose(t, order)
        ranks = [_num_rank(stack[j]) for j in range(stack.shape[0])]
        return {"ok": sum(ranks) <= spec.r, "slice_ranks": ranks}
    if spec.kind == "theta5":
        ranks = [_num_rank(matricize(t, [k])) for k in range(3)]
        return {"ok": max(ranks) <= spec.r, "tucker_ranks": ranks}
    if spec.kind == "t3":
        norms = np.sqrt((t * t).sum(axis=1))  # lag axis
        nnz = int(np.count_nonzero(norms))
        return {"ok": nnz <= spec.s, "nonzero_interactions": nnz}
    if spec.kind == "t4":
        d1, d2, d3 = shape
        # project back onto the centered interaction subspaces
        a12 = t.mean(axis=2)
        a13 = t.mean(axis=1)
        a23 = t.mean(axis=0)
        grand = t.mean()
        a12 = a12 - a12.mean(0, keepdims=True) - a12.mean(1, keepdims=True) + grand
        a13 = a13 - a13.mean(0, keepdims=True) - a13.mean(1, keepdims=True) + grand
        a23 = a23 - a23.mean(0, keepdims=True) - a23.mean(1, keepdims=True) + grand
        recon = expand_pairwise((a12, a13, a23), shape)
        resid = float(np.abs(recon - t).max())
        ranks = [_num_rank(m) for m in (a12, a13, a23)]
        centering = max(
            float(np.abs(m.sum(axis=ax)).max())
            for m in (a12, a13, a23)
            for ax in (0, 1)
        )
        ok = resid < 1e-10 and centering < 1e-10 and max(ranks) <= spec.r
        return {
            "ok": ok,
            "component_ranks": ranks,
            "centering_residual": centering,
            "reconstruction_residual": resid,
        }
    return {"ok": False, "reason": f"unknown kind {spec.kind}"}


def gen_problem(truth, n, split, noise_sigma, design="iid", seed=0, meta=None):
    """Sample a regression problem from a truth tensor.

    Covariates are i.i.d. standard Gaussian, or ``Z @ factor.T`` when a
    square covariance factor is supplied.  Responses follow the linear
    model with i.i.d. centered Gaussian noise of scale `noise_sigma`.
    """
    truth = np.asarray(truth, dtype=np.float64)
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be nonnegative")
    if not (0 < split <= truth.ndim):
        raise ShapeMismatch("split must select a covariate prefix")
    cov_shape = truth.shape[:split]
    resp_shape = truth.shape[split:]
    dim_cov = int(np.prod(cov_shape))
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, dim_cov))
    if isinstance(design, str):
        if design != "iid":
            raise BadCovarianceFactor(f"unknown design {design!r}")
        x2 = z
    else:
        factor = np.asarray(design, dtype=np.float64)
        if factor.shape != (dim_cov, dim_cov) or not np.all(np.isfinite(factor)):
            raise BadCovarianceFactor(
                f"factor must be a finite {dim_cov}x{dim_cov} matrix"
            )
        x2 = z @ factor.T
    preds = x2 @ truth.reshape(dim_cov, -1)
    noise = rng.standard_normal(preds.shape) * noise_sigma
    responses = (preds + noise).reshape((n,) + resp_shape)
    return RegressionProblem(
        covariates=x2.reshape((n,) + cov_shape),
        responses=responses,
        split=split,
        noise_sigma=noise_sigma,
        truth=truth,
        meta=meta or {},
    )


# ---------------------------------------------------------------------------
# Vector autoregressive models
# ---------------------------------------------------------------------------


def _companion(coeffs):
    p, m, _ = coeffs.shape
    top = np.concatenate(list(coeffs), axis=1)
    if p == 1:
        return top
    eye = np.eye(m * (p - 1))
    zero = np.zeros((m * (p - 1), m))
    return np.vstack([top, np.hstack([eye, zero])])


@dataclass
class VarModel:
    """Stable VAR(p) with identity innovation covariance.

    `coeffs` stacks the lag matrices as shape (p, m, m).  Construction
    rejects unstable coefficient sets unless `auto_stabilize` is set, in
    which case the lag matrices are rescaled onto spectral radius 0.95.
    """

    coeffs: np.ndarray
    burn_in: int | None = None
    auto_stabilize: bool = False

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=np.float64)
        if self.coeffs.ndim != 3 or self.coeffs.shape[1] != self.coeffs.shape[2]:
            raise ShapeMismatch("coeffs must have shape (p, m, m)")
        rho = self.spectral_radius()
        if rho >= 1.0:
            if not self.auto_stabilize:
                raise UnstableModel(f"companion spectral radius {rho:.4f} >= 1")
            scale = 0.95 / rho
            p = self.coeffs.shape[0]
            for j in range(p):
                self.coeffs[j] *= scale ** (j + 1)
        if self.burn_in is None:
            self.burn_in = 500 + 10 * self.coeffs.shape[0]

    @property
    def p(self):
        return self.coeffs.shape[0]

    @property
    def m(self):
        return self.coeffs.shape[1]

    def spectral_radius(self):
        return float(np.abs(np.linalg.eigvals(_companion(self.coeffs))).max())

    def to_json(self):
        return {
            "coeffs": [a.tolist() for a in self.coeffs],
            "burn_in": self.burn_in,
        }

    @classmethod
    def from_json(cls, obj):
        return cls(
            coeffs=np.asarray(obj["coeffs"], dtype=np.float64),
            burn_in=obj.get("burn_in"),
        )


def gen_var_model(m, p, s, magnitude=1.0, seed=0, target_rho=0.75):
    """Random stable VAR(p) with at most `s` nonzero interaction fibers.

    Each chosen (output, input) cell is filled across all lags with
    +-magnitude entries, then the lag matrices are rescaled so the companion
    spectral radius equals `target_rho`.
    """
    if s < 1 or s > m * m:
        raise InfeasibleClass(f"need 1 <= s <= {m * m}")
    rng = np.random.default_rng(seed)
    coeffs = np.zeros((p, m, m))
    cells = rng.choice(m * m, size=s, replace=False)
    for c in cells:
        k, l = divmod(int(c), m)
        coeffs[:, k, l] = magnitude * _signs(rng, p)
    rho = float(np.abs(np.linalg.eigvals(_companion(coeffs))).max())
    if rho > 0:
        scale = target_rho / rho
        for j in range(p):
            coeffs[j] *= scale ** (j + 1)
    return VarModel(coeffs=coeffs)


def var_truth(model):
    """Problem-layout coefficient tensor of shape (m, p, m).

    Entry (l, j, k) is the effect of variable l at lag j+1 on variable k,
    so the covariate lag window contracts against the first two modes.
    """
    return np.transpose(model.coeffs, (2, 0, 1))


def coefficient_tensor(model):
    """Display-layout (m, m, p) tensor whose (k, l, j) entry is the lag-j+1
    coefficient of variable l on variable k."""
    return np.transpose(model.coeffs, (1, 2, 0))


def gen_var_series(model, n, seed=0):
    """Simulate the process and package consecutive lag windows.

    After dropping the burn-in, sample t has covariate X_t of shape (m, p)
    with X_t[l, j] the value of variable l at lag j+1, and response x_t, so
    the regression truth is :func:`var_truth`.  Samples are consecutive and
    therefore dependent by construction.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    p, m = model.p, model.m
    total = model.burn_in + p + n
    xs = np.zeros((total, m))
    eps = rng.standard_normal((total, m))
    for t in range(total):
        acc = eps[t].copy()
        for j in range(1, p + 1):
            if t - j >= 0:
                acc += model.coeffs[j - 1] @ xs[t - j]
        xs[t] = acc
    start = model.burn_in + p
    cov = np.zeros((n, m, p))
    for j in range(1, p + 1):
        cov[:, :, j - 1] = xs[start - j : start - j + n]
    responses = xs[start : start + n]
    return RegressionProblem(
        covariates=cov,
        responses=responses,
        split=2,
        noise_sigma=1.0,
        truth=var_truth(model),
        meta={"model": model.to_json(), "seed": seed},
    )


def var_spectral_extrema(model, grid=64, tol=1e-6, max_refine=12):
    """Extrema over the unit circle of the eigenvalues of A(z)* A(z) where
    A(z) = I - sum_j A_j z^j.

    The grid doubles until both extrema move by less than `tol`.
    """
    if grid < 64:
        raise ValueError("grid must be >= 64")
    coeffs = model.coeffs
    p, m = model.p, model.m

    def extrema(g):
        theta = np.linspace(0.0, 2.0 * np.pi, g, endpoint=False)
        z = np.exp(-1j * theta)
        powers = z[:, None] ** np.arange(1, p + 1)[None, :]
        mats = np.eye(m)[None, :, :] - np.einsum("gj,jkl->gkl", powers, coeffs)
        herm = np.conj(np.transpose(mats, (0, 2, 1))) @ mats
        ev = np.linalg.eigvalsh(herm)
        return float(ev[:, 0].min()), float(ev[:, -1].max())

    mu_min, mu_max = extrema(grid)
    for _ in range(max_refine):
        grid *= 2
        new_min, new_max = extrema(grid)
        done = abs(new_min - mu_min) < tol and abs(new_max - mu_max) < tol
        mu_min, mu_max = min(mu_min, new_min), max(mu_max, new_max)
        if done:
            break
    return {"mu_min": mu_min, "mu_max": mu_max, "grid": grid}
