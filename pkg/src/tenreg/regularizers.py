"""Penalty catalogue for order-3 tensors: evaluation, dual norms, proximal
maps, structured subspaces, decomposability margins, and compatibility
constants.

Six penalty kinds are supported:

``entry_l1``
    Sum of absolute entries.
``fiber_group``
    Sum of vector l2 norms over the fibers along one mode.
``slice_frob``
    Sum of Frobenius norms over the slices spanned by an axis pair.
``slice_nuclear``
    Sum of matrix nuclear norms over the same slices.
``matricized_nuclear_sum``
    Average of the nuclear norms of the three mode unfoldings.
``tensor_spectral_dual_only``
    Placeholder for the tensor nuclear norm: the primal is NP-hard and is
    never evaluated here; only its dual (the tensor spectral norm) is
    approximated from below by the higher-order power method.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NoClosedFormProx, ShapeMismatch, UnmatchedPair, UnsupportedKind
from .tensor import ProjectorTriple, dematricize, matricize, tucker_project

__all__ = [
    "RegularizerSpec",
    "entry_l1",
    "fiber_group",
    "slice_frob",
    "slice_nuclear",
    "matricized_nuclear_sum",
    "tensor_spectral",
    "reg_eval",
    "reg_dual",
    "prox",
    "SubspaceSpec",
    "support_entries",
    "support_fibers",
    "support_slices",
    "slicewise_projectors",
    "tucker_projectors",
    "subspace_project",
    "decomposability_margin",
    "CompatibilityResult",
    "compatibility",
]

# Singular values below this fraction of the largest are treated as zero in
# nuclear-norm evaluation and soft-thresholding.
SV_RTOL = 1e-12

_KINDS = (
    "entry_l1",
    "fiber_group",
    "slice_frob",
    "slice_nuclear",
    "matricized_nuclear_sum",
    "tensor_spectral_dual_only",
)

_PROX_KINDS = ("entry_l1", "fiber_group", "slice_frob", "slice_nuclear")


@dataclass(frozen=True)
class RegularizerSpec:
    """Tagged description of which penalty is in force.

    `mode` is the fiber axis for ``fiber_group``; `axes` is the ordered pair
    of axes spanning each slice for the slice kinds.  The weak
    decomposability constant is 1 for every kind except the tensor nuclear
    pair, which carries 1/2 (recorded even though that primal is never
    evaluated).
    """

    kind: str
    mode: int | None = None
    axes: tuple[int, int] | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown penalty kind {self.kind!r}")
        if self.kind == "fiber_group" and self.mode not in (0, 1, 2):
            raise ValueError("fiber_group needs mode in {0,1,2}")
        if self.kind in ("slice_frob", "slice_nuclear"):
            if self.axes is None or len(set(self.axes)) != 2:
                raise ValueError("slice kinds need a distinct axis pair")

    @property
    def c_reg(self):
        return 0.5 if self.kind == "tensor_spectral_dual_only" else 1.0

    @property
    def group_axis(self):
        """Axis indexing the groups for the slice kinds."""
        return ({0, 1, 2} - set(self.axes)).pop()

    def has_prox(self):
        return self.kind in _PROX_KINDS

    def to_json(self):
        out = {"kind": self.kind}
        if self.mode is not None:
            out["mode"] = self.mode
        if self.axes is not None:
            out["axes"] = list(self.axes)
        return out

    @classmethod
    def from_json(cls, obj):
        axes = obj.get("axes")
        return cls(
            kind=obj["kind"],
            mode=obj.get("mode"),
            axes=tuple(axes) if axes is not None else None,
        )


def entry_l1():
    return RegularizerSpec("entry_l1")


def fiber_group(mode=0):
    return RegularizerSpec("fiber_group", mode=mode)


def slice_frob(axes=(0, 1)):
    return RegularizerSpec("slice_frob", axes=tuple(axes))


def slice_nuclear(axes=(0, 1)):
    return RegularizerSpec("slice_nuclear", axes=tuple(axes))


def matricized_nuclear_sum():
    return RegularizerSpec("matricized_nuclear_sum")


def tensor_spectral():
    return RegularizerSpec("tensor_spectral_dual_only")


def _check_order3(a):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 3:
        raise ShapeMismatch(f"expected an order-3 tensor, got order {a.ndim}")
    return a


def _slices_first(a, spec):
    """View `a` as a stack (groups, rows, cols) for the slice kinds."""
    g = spec.group_axis
    order = (g,) + tuple(spec.axes)
    return np.transpose(a, order)


def _nuclear(sv_stack):
    """Sum singular values, truncating tiny ones for rank stability."""
    sv = np.asarray(sv_stack)
    cut = SV_RTOL * sv.max(axis=-1, keepdims=True)
    return np.where(sv > cut, sv, 0.0).sum(axis=-1)


def reg_eval(spec, a):
    """Evaluate the penalty R(a) >= 0."""
    a = _check_order3(a)
    if spec.kind == "entry_l1":
        return float(np.abs(a).sum())
    if spec.kind == "fiber_group":
        return float(np.sqrt((a * a).sum(axis=spec.mode)).sum())
    if spec.kind == "slice_frob":
        return float(np.sqrt((a * a).sum(axis=spec.axes)).sum())
    if spec.kind == "slice_nuclear":
        stack = _slices_first(a, spec)
        sv = np.linalg.svd(stack, compute_uv=False)
        return float(_nuclear(sv).sum())
    if spec.kind == "matricized_nuclear_sum":
        total = 0.0
        for k in range(3):
            sv = np.linalg.svd(matricize(a, [k]), compute_uv=False)
            total += float(_nuclear(sv))
        return total / 3.0
    raise UnsupportedKind(
        "the tensor nuclear norm primal is not evaluated (NP-hard); "
        "only its dual is approximated"
    )


def reg_dual(spec, a, *, hopm_restarts=20, hopm_iters=200, rng=None):
    """Evaluate the dual norm R*(a).

    Exact for the max-reduction kinds, exact to SVD tolerance for the
    nuclear kinds.  For ``matricized_nuclear_sum`` the returned value is the
    spectral-max form (three times the largest unfolding spectral norm),
    an upper bound on the exact dual that is the standard tuning quantity
    for this penalty.  For ``tensor_spectral_dual_only`` the value is a
    certified lower bound from multi-restart alternating maximization,
    which requires `rng`.
    """
    a = _check_order3(a)
    if spec.kind == "entry_l1":
        return float(np.abs(a).max())
    if spec.kind == "fiber_group":
        return float(np.sqrt((a * a).sum(axis=spec.mode)).max())
    if spec.kind == "slice_frob":
        return float(np.sqrt((a * a).sum(axis=spec.axes)).max())
    if spec.kind == "slice_nuclear":
        stack = _slices_first(a, spec)
        sv = np.linalg.svd(stack, compute_uv=False)
        return float(sv[..., 0].max())
    if spec.kind == "matricized_nuclear_sum":
        tops = [
            np.linalg.svd(matricize(a, [k]), compute_uv=False)[0] for k in range(3)
        ]
        return 3.0 * float(max(tops))
    if spec.kind == "tensor_spectral_dual_only":
        from .spectral import hopm_spectral

        if rng is None:
            raise ValueError("the spectral dual is stochastic; pass rng")
        res = hopm_spectral(a, restarts=hopm_restarts, iters=hopm_iters, rng=rng)
        return res["value"]
    raise UnsupportedKind(spec.kind)


def prox(spec, z, t):
    """Proximal map argmin_x 0.5*||x - z||_F^2 + t*R(x).

    Closed forms: entrywise soft-threshold, blockwise shrinkage on fibers
    or slices, and per-slice singular value soft-thresholding.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    z = _check_order3(z)
    if spec.kind == "entry_l1":
        return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)
    if spec.kind in ("fiber_group", "slice_frob"):
        axis = spec.mode if spec.kind == "fiber_group" else spec.axes
        norms = np.sqrt((z * z).sum(axis=axis, keepdims=True))
        scale = np.where(norms > t, 1.0 - t / np.where(norms > 0, norms, 1.0), 0.0)
        return z * scale
    if spec.kind == "slice_nuclear":
        from .spectral import matrix_svt

        g = spec.group_axis
        order = (g,) + tuple(spec.axes)
        stack = np.transpose(z, order).copy()
        for j in range(stack.shape[0]):
            stack[j] = matrix_svt(stack[j], t)
        return np.transpose(stack, np.argsort(order))
    raise NoClosedFormProx(
        f"{spec.kind} has no closed-form prox; use the consensus solver"
    )


def _reg_subgrad(spec, a):
    """A subgradient of R at `a` (used by the compatibility ascent)."""
    a = _check_order3(a)
    if spec.kind == "entry_l1":
        return np.sign(a)
    if spec.kind in ("fiber_group", "slice_frob"):
        axis = spec.mode if spec.kind == "fiber_group" else spec.axes
        norms = np.sqrt((a * a).sum(axis=axis, keepdims=True))
        return a / np.where(norms > 0, norms, 1.0)
    if spec.kind == "slice_nuclear":
        g = spec.group_axis
        order = (g,) + tuple(spec.axes)
        stack = np.transpose(a, order)
        u, _, vt = np.linalg.svd(stack, full_matrices=False)
        return np.transpose(u @ vt, np.argsort(order))
    if spec.kind == "matricized_nuclear_sum":
        out = np.zeros_like(a)
        for k in range(3):
            u, _, vt = np.linalg.svd(matricize(a, [k]), full_matrices=False)
            out += dematricize(u @ vt, a.shape, [k]) / 3.0
        return out
    raise UnsupportedKind(spec.kind)


# ---------------------------------------------------------------------------
# Structured subspaces
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SubspaceSpec:
    """A low-dimensional subspace against which decomposability margins and
    compatibility constants are evaluated.

    Variants: explicit index supports at entry, fiber, or slice granularity;
    per-slice projector pairs; and mode-wise projector triples with a role
    selecting which of the two complementary Tucker projections defines the
    space.
    """

    variant: str
    shape: tuple[int, ...]
    indices: tuple = ()
    mode: int | None = None
    axes: tuple[int, int] | None = None
    slice_factors: tuple = field(default=(), repr=False)
    triple: ProjectorTriple | None = field(default=None, repr=False)
    role: str | None = None

    def to_json(self):
        out = {"variant": self.variant, "shape": list(self.shape)}
        if self.variant in ("support_entries", "support_fibers", "support_slices"):
            out["indices"] = [
                list(i) if isinstance(i, tuple) else i for i in self.indices
            ]
        if self.mode is not None:
            out["mode"] = self.mode
        if self.axes is not None:
            out["axes"] = list(self.axes)
        if self.variant == "slicewise_projectors":
            out["factors"] = [[u1.tolist(), u2.tolist()] for u1, u2 in self.slice_factors]
            out["role"] = self.role
        if self.variant == "tucker_projectors":
            out["factors"] = [u.tolist() for u in self.triple.factors]
            out["role"] = self.role
        return out

    @classmethod
    def from_json(cls, obj):
        variant = obj["variant"]
        shape = tuple(obj["shape"])
        if variant == "support_entries":
            return support_entries(shape, [tuple(i) for i in obj["indices"]])
        if variant == "support_fibers":
            return support_fibers(
                shape, [tuple(i) for i in obj["indices"]], mode=obj.get("mode", 0)
            )
        if variant == "support_slices":
            axes = tuple(obj.get("axes", (0, 1)))
            return support_slices(shape, list(obj["indices"]), axes=axes)
        if variant == "slicewise_projectors":
            factors = [
                (np.asarray(u1, dtype=float), np.asarray(u2, dtype=float))
                for u1, u2 in obj["factors"]
            ]
            return slicewise_projectors(
                shape,
                factors,
                axes=tuple(obj.get("axes", (0, 1))),
                role=obj.get("role", "a_space"),
            )
        if variant == "tucker_projectors":
            triple = ProjectorTriple([np.asarray(u, dtype=float) for u in obj["factors"]])
            return tucker_projectors(shape, triple, role=obj["role"])
        raise ValueError(f"unknown subspace variant {variant!r}")


def support_entries(shape, indices):
    return SubspaceSpec("support_entries", tuple(shape), indices=tuple(indices))


def support_fibers(shape, indices, mode=0):
    return SubspaceSpec(
        "support_fibers", tuple(shape), indices=tuple(indices), mode=mode
    )


def support_slices(shape, indices, axes=(0, 1)):
    return SubspaceSpec(
        "support_slices", tuple(shape), indices=tuple(indices), axes=tuple(axes)
    )


def slicewise_projectors(shape, factors, axes=(0, 1), role="a_space"):
    """Per-slice projector pairs (U1_j, U2_j) along the group axis.

    The a_space role spans the slices whose doubly-complemented corner
    vanishes; the b_space role spans the slices fixed by projecting on both
    sides, the smaller space where structured truths live.
    """
    if role not in ("a_space", "b_space"):
        raise ValueError("role must be 'a_space' or 'b_space'")
    g = ({0, 1, 2} - set(axes)).pop()
    if len(factors) != shape[g]:
        raise ShapeMismatch("need one factor pair per slice")
    return SubspaceSpec(
        "slicewise_projectors",
        tuple(shape),
        axes=tuple(axes),
        slice_factors=tuple((np.asarray(u1), np.asarray(u2)) for u1, u2 in factors),
        role=role,
    )


def tucker_projectors(shape, triple, role="b_space"):
    if role not in ("a_space", "b_space"):
        raise ValueError("role must be 'a_space' or 'b_space'")
    if triple.dims != tuple(shape):
        raise ShapeMismatch("projector dims do not match shape")
    return SubspaceSpec("tucker_projectors", tuple(shape), triple=triple, role=role)


def _support_mask(sub):
    mask = np.zeros(sub.shape, dtype=bool)
    if sub.variant == "support_entries":
        for idx in sub.indices:
            mask[tuple(idx)] = True
    elif sub.variant == "support_fibers":
        others = [k for k in range(3) if k != sub.mode]
        for idx in sub.indices:
            full = [slice(None)] * 3
            full[others[0]] = idx[0]
            full[others[1]] = idx[1]
            mask[tuple(full)] = True
    elif sub.variant == "support_slices":
        g = ({0, 1, 2} - set(sub.axes)).pop()
        for j in sub.indices:
            full = [slice(None)] * 3
            full[g] = j
            mask[tuple(full)] = True
    return mask


def subspace_project(sub, a, which="space"):
    """Orthogonal projection of `a` onto the subspace or its complement.

    The two projections sum to `a`.  Support variants zero out the
    complementary index set.  For projector triples, the a_space role
    applies the low-perp four-term pattern and the b_space role applies the
    plain mode-wise projection.
    """
    a = _check_order3(a)
    if a.shape != sub.shape:
        raise ShapeMismatch(f"tensor shape {a.shape} != subspace shape {sub.shape}")
    if which not in ("space", "complement"):
        raise ValueError("which must be 'space' or 'complement'")
    if sub.variant in ("support_entries", "support_fibers", "support_slices"):
        mask = _support_mask(sub)
        return np.where(mask, a, 0.0) if which == "space" else np.where(mask, 0.0, a)
    if sub.variant == "slicewise_projectors":
        g = ({0, 1, 2} - set(sub.axes)).pop()
        order = (g,) + tuple(sub.axes)
        stack = np.transpose(a, order).copy()
        for j, (u1, u2) in enumerate(sub.slice_factors):
            s = stack[j]
            if sub.role == "b_space":
                proj = u1 @ (u1.T @ s @ u2) @ u2.T
            else:
                perp = s - u1 @ (u1.T @ s)
                proj = s - (perp - perp @ u2 @ u2.T)
            stack[j] = proj if which == "space" else s - proj
        return np.transpose(stack, np.argsort(order))
    if sub.variant == "tucker_projectors":
        pattern = "q" if sub.role == "a_space" else "full"
        proj = tucker_project(a, sub.triple, pattern)
        return proj if which == "space" else a - proj
    raise ValueError(f"unknown subspace variant {sub.variant!r}")


def decomposability_margin(spec, sub_a, sub_b, a, b):
    """Margin R(a+b) - R(a) - c_R * R(b) after projecting `a` onto the
    complement of `sub_a` and `b` onto `sub_b`.

    Nonnegativity over matched pairs is a property asserted by callers,
    not enforced here.
    """
    a = subspace_project(sub_a, a, "complement")
    b = subspace_project(sub_b, b, "space")
    return reg_eval(spec, a + b) - reg_eval(spec, a) - spec.c_reg * reg_eval(spec, b)


# ---------------------------------------------------------------------------
# Compatibility constants
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CompatibilityResult:
    analytic_bound: float
    mc_estimate: float


def _matched_bound(spec, sub):
    """Closed-form compatibility bound for the matched pairs."""
    if spec.kind == "entry_l1" and sub.variant == "support_entries":
        return float(len(sub.indices))
    if (
        spec.kind == "fiber_group"
        and sub.variant == "support_fibers"
        and spec.mode == sub.mode
    ):
        return float(len(sub.indices))
    if (
        spec.kind == "slice_frob"
        and sub.variant == "support_slices"
        and set(spec.axes) == set(sub.axes)
    ):
        return float(len(sub.indices))
    if (
        spec.kind == "slice_nuclear"
        and sub.variant == "slicewise_projectors"
        and set(spec.axes) == set(sub.axes)
    ):
        return float(sum(u1.shape[1] + u2.shape[1] for u1, u2 in sub.slice_factors))
    if sub.variant == "tucker_projectors" and sub.role == "b_space":
        r = max(sub.triple.ranks)
        if spec.kind == "matricized_nuclear_sum":
            return float(r)
        if spec.kind == "tensor_spectral_dual_only":
            return float(r * r)
    raise UnmatchedPair(f"no closed-form bound for ({spec.kind}, {sub.variant})")


def _surrogate_ratio(spec, a):
    """R^2 / ||a||_F^2 with a computable stand-in for the NP-hard primal."""
    fro2 = float((a * a).sum())
    if fro2 == 0:
        return 0.0
    if spec.kind == "tensor_spectral_dual_only":
        # The tensor nuclear norm dominates each unfolding nuclear norm, so
        # the max over unfoldings gives a certified lower bound when the
        # primal itself cannot be evaluated.
        val = max(
            float(_nuclear(np.linalg.svd(matricize(a, [k]), compute_uv=False)))
            for k in range(3)
        )
    else:
        val = reg_eval(spec, a)
    return val * val / fro2


def compatibility(spec, sub, *, draws=10000, ascent_steps=100, rng=None):
    """Analytic bound and Monte-Carlo estimate of sup R^2(A)/||A||_F^2 over
    the subspace.

    The sampler projects standard Gaussian tensors onto the subspace and
    normalizes; the best sample is refined by normalized gradient ascent on
    the ratio.  For the tensor-nuclear pair the primal is replaced by its
    largest-unfolding lower bound, making the estimate a lower estimate.
    """
    analytic = _matched_bound(spec, sub)
    if rng is None:
        rng = np.random.default_rng(0)
    best = 0.0
    best_a = None
    batch = 256
    done = 0
    while done < draws:
        m = min(batch, draws - done)
        for _ in range(m):
            a = subspace_project(sub, rng.standard_normal(sub.shape), "space")
            nrm = np.linalg.norm(a)
            if nrm == 0:
                continue
            a = a / nrm
            ratio = _surrogate_ratio(spec, a)
            if ratio > best:
                best, best_a = ratio, a
        done += m
    if best_a is not None and spec.kind != "tensor_spectral_dual_only":
        a = best_a
        step = 0.1
        for _ in range(ascent_steps):
            r_val = reg_eval(spec, a)
            grad = 2.0 * r_val * _reg_subgrad(spec, a) - 2.0 * (r_val**2) * a
            grad = subspace_project(sub, grad, "space")
            gn = np.linalg.norm(grad)
            if gn < 1e-14:
                break
            cand = a + step * grad / gn
            cand = subspace_project(sub, cand, "space")
            cand /= np.linalg.norm(cand)
            ratio = _surrogate_ratio(spec, cand)
            if ratio > best:
                best, a = ratio, cand
            else:
                step *= 0.5
    return CompatibilityResult(analytic_bound=analytic, mc_estimate=best)
