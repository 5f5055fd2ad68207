"""Experiment orchestration: width scaling studies, rate-verification
sweeps, constructive hypercube packings with an independent verifier, and
deterministic report emission.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from .datagen import (
    ModelClassSpec,
    gen_problem,
    gen_truth,
    gen_var_model,
    gen_var_series,
)
from .errors import BudgetExhausted, ValidationError
from .regularizers import RegularizerSpec
from .solver import (
    AdmmConfig,
    FistaConfig,
    admm_matricized,
    empirical_norm,
    fista_pairwise,
    fista_solve,
    lambda_rule,
)
from .spectral import WidthEstimate, gaussian_width_mc, width_rate_expression

__all__ = [
    "RateExperimentConfig",
    "predicted_rate",
    "rate_experiment",
    "width_experiment",
    "pairwise_width_mc",
    "PackingSet",
    "hypercube_packing",
    "verify_packing",
    "fano_precondition_check",
    "emit_report",
    "parse_report",
    "report_to_csv",
]

RATE_TAGS = (
    "s_log_total_over_n",
    "s_max_fiberdim_loggroups_over_n",
    "s_max_area_loggroups_over_n",
    "s_max_msq_logp_over_n",
    "s_max_p_2logm_over_n",
    "r_max_m_logp_over_n",
    "r_max_dim_over_n",
    "r_max_pairprod_over_n",
    "rsq_sum_dims_over_n",
)


def predicted_rate(tag, model, n):
    """Evaluate a predicted-rate formula tag for a model class at sample
    size n (constants are not tracked; only the growth law matters)."""
    d1, d2, d3 = model.shape
    if tag == "s_log_total_over_n":
        return model.s * np.log(d1 * d2 * d3) / n
    if tag == "s_max_fiberdim_loggroups_over_n":
        others = [model.shape[k] for k in range(3) if k != model.mode]
        return model.s * max(model.shape[model.mode], np.log(others[0] * others[1])) / n
    if tag == "s_max_area_loggroups_over_n":
        a, b = (model.shape[k] for k in model.axes)
        g = model.shape[({0, 1, 2} - set(model.axes)).pop()]
        return model.s * max(a * b, np.log(g)) / n
    if tag == "s_max_msq_logp_over_n":
        # multi-response layout (p, m, m): slices are m x m, groups over p
        p, m = d1, d2
        return model.s * max(m * m, np.log(p)) / n
    if tag == "s_max_p_2logm_over_n":
        # VAR layout (m, p, m): fibers have length p, m^2 groups
        m, p = d1, d2
        return model.s * max(p, 2.0 * np.log(m)) / n
    if tag == "r_max_m_logp_over_n":
        p, m = d1, d2
        return model.r * max(m, np.log(p)) / n
    if tag == "r_max_dim_over_n":
        return model.r * max(d1, d2, d3) / n
    if tag == "r_max_pairprod_over_n":
        return model.r * max(d1 * d2, d2 * d3, d1 * d3) / n
    if tag == "rsq_sum_dims_over_n":
        return model.r**2 * (d1 + d2 + d3) / n
    raise ValidationError(f"unknown rate tag {tag!r}")


@dataclass(frozen=True)
class RateExperimentConfig:
    """One rate-verification sweep: a truth class, a penalty, an n grid, and
    the predicted rate the median errors are regressed against."""

    model: ModelClassSpec
    regularizer: RegularizerSpec | str  # a spec, or "pairwise"
    n_grid: tuple[int, ...]
    replications: int
    seed: int
    rate_tag: str
    lambda_multiplier: float = 1.0
    c_u: float = 1.0
    noise_sigma: float = 1.0
    width_draws: int = 2000
    split: int = 2
    max_iters: int = 2000

    def __post_init__(self):
        grid = tuple(self.n_grid)
        if len(grid) < 4 or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValidationError("n_grid must be strictly increasing with >= 4 points")
        if self.replications < 10:
            raise ValidationError("need at least 10 replications per cell")
        if self.rate_tag not in RATE_TAGS:
            raise ValidationError(f"unknown rate tag {self.rate_tag!r}")

    def to_json(self):
        reg = (
            self.regularizer
            if isinstance(self.regularizer, str)
            else self.regularizer.to_json()
        )
        return {
            "model": self.model.to_json(),
            "regularizer": reg,
            "n_grid": list(self.n_grid),
            "replications": self.replications,
            "seed": self.seed,
            "rate_tag": self.rate_tag,
            "lambda_multiplier": self.lambda_multiplier,
            "c_u": self.c_u,
            "noise_sigma": self.noise_sigma,
            "width_draws": self.width_draws,
            "split": self.split,
            "max_iters": self.max_iters,
        }

    @classmethod
    def from_json(cls, obj):
        reg = obj["regularizer"]
        if isinstance(reg, dict):
            reg = RegularizerSpec.from_json(reg)
        return cls(
            model=ModelClassSpec.from_json(obj["model"]),
            regularizer=reg,
            n_grid=tuple(obj["n_grid"]),
            replications=obj["replications"],
            seed=obj["seed"],
            rate_tag=obj["rate_tag"],
            lambda_multiplier=obj.get("lambda_multiplier", 1.0),
            c_u=obj.get("c_u", 1.0),
            noise_sigma=obj.get("noise_sigma", 1.0),
            width_draws=obj.get("width_draws", 2000),
            split=obj.get("split", 2),
            max_iters=obj.get("max_iters", 2000),
        )


def pairwise_width_mc(shape, draws=2000, seed=0):
    """Width of the pairwise-component penalty ball: expected maximum
    spectral norm over the marginal sums of a standard Gaussian tensor."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    shape = tuple(shape)
    vals = np.empty(draws)
    batch = 128
    done = 0
    while done < draws:
        m = min(batch, draws - done)
        g = rng.standard_normal((m,) + shape)
        tops = []
        for axis in (3, 2, 1):
            blocks = g.sum(axis=axis)
            tops.append(np.linalg.svd(blocks, compute_uv=False)[..., 0])
        vals[done : done + m] = np.maximum.reduce(tops)
        done += m
    return WidthEstimate(
        mean=float(vals.mean()),
        std_error=float(vals.std(ddof=1) / np.sqrt(draws)),
        draws=draws,
        lemma_bound_form="sqrt_max_dim",
        seed=seed,
        shape=shape,
        kind="pairwise_component_nuclear",
    )


def _log_fit(x, y):
    """Least-squares fit of y against x with R^2."""
    x = np.asarray(x)
    y = np.asarray(y)
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(((y - pred) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def _solve_for(config, problem, lam):
    reg = config.regularizer
    fista_cfg = FistaConfig(max_iters=config.max_iters)
    if reg == "pairwise":
        return fista_pairwise(problem, lam, fista_cfg)
    if reg.kind == "matricized_nuclear_sum":
        return admm_matricized(problem, lam, AdmmConfig(max_iters=config.max_iters))
    return fista_solve(problem, reg, lam, fista_cfg)


def rate_experiment(config):
    """Run the sweep and fit log median error against log predicted rate.

    Every cell derives its RNG stream from the config seed, so reports are
    replayable byte for byte.  Solver non-convergence is counted per cell
    rather than failing the sweep.
    """
    model = config.model
    shape = model.shape
    if config.regularizer == "pairwise":
        width = pairwise_width_mc(shape, config.width_draws, config.seed)
    else:
        width = gaussian_width_mc(
            config.regularizer, shape, config.width_draws, config.seed
        )
    c_reg = 1.0 if config.regularizer == "pairwise" else config.regularizer.c_reg

    root = np.random.SeedSequence(config.seed)
    per_n_seeds = root.spawn(len(config.n_grid))
    cells = []
    per_n = []
    for gi, n in enumerate(config.n_grid):
        # the tuning rule is normalized for unit-variance noise, so the
        # configured noise scale multiplies it
        lam = config.noise_sigma * lambda_rule(
            width, n, c_u=config.c_u, c_reg=c_reg, multiplier=config.lambda_multiplier
        )
        rep_seeds = per_n_seeds[gi].spawn(config.replications)
        fro2 = []
        emp2 = []
        nonconv = 0
        for ri in range(config.replications):
            child = rep_seeds[ri].spawn(3)
            tseed, pseed = child[0], child[1]
            if model.kind == "t3":
                var = gen_var_model(
                    shape[0],
                    shape[1],
                    model.s,
                    magnitude=model.magnitude,
                    seed=tseed,
                )
                problem = gen_var_series(var, n, seed=pseed)
            else:
                truth = gen_truth(model, tseed)
                problem = gen_problem(
                    truth, n, config.split, config.noise_sigma, seed=pseed
                )
            res = _solve_for(config, problem, lam)
            if res.status != "Converged":
                nonconv += 1
            delta = res.estimate - problem.truth
            e_fro2 = float((delta * delta).sum())
            e_emp2 = empirical_norm(problem, delta) ** 2
            fro2.append(e_fro2)
            emp2.append(e_emp2)
            cells.append(
                {
                    "n": int(n),
                    "replication": ri,
                    "fro_sq": e_fro2,
                    "emp_sq": e_emp2,
                    "status": res.status,
                    "iterations": res.iterations,
                }
            )
        per_n.append(
            {
                "n": int(n),
                "lambda": lam,
                "median_fro_sq": float(np.median(fro2)),
                "median_emp_sq": float(np.median(emp2)),
                "q25_fro_sq": float(np.percentile(fro2, 25)),
                "q75_fro_sq": float(np.percentile(fro2, 75)),
                "predicted_rate": float(predicted_rate(config.rate_tag, model, n)),
                "nonconverged": nonconv,
            }
        )
    slope, intercept, r2 = _log_fit(
        [np.log(row["predicted_rate"]) for row in per_n],
        [np.log(row["median_fro_sq"]) for row in per_n],
    )
    return {
        "kind": "rate",
        "config": config.to_json(),
        "width": width.to_json(),
        "fit": {"slope": slope, "intercept": intercept, "r_squared": r2},
        "per_n": per_n,
        "cells": cells,
    }


def width_experiment(kinds, shapes, draws=2000, seed=0, workers=1, band=(0.2, 5.0)):
    """Width estimates against their growth-law expressions, with ratio
    columns and out-of-band flags."""
    rows = []
    flagged = []
    for spec in kinds:
        for shape in shapes:
            est = gaussian_width_mc(spec, shape, draws, seed, workers=workers)
            rate = width_rate_expression(spec, shape)
            ratio = est.mean / rate
            row = {
                "kind": spec.kind,
                "shape": list(shape),
                "estimate": est.mean,
                "std_error": est.std_error,
                "rate_expression": rate,
                "ratio": ratio,
            }
            rows.append(row)
            if not (band[0] <= ratio <= band[1]):
                flagged.append(row)
    return {
        "kind": "width",
        "seed": seed,
        "draws": draws,
        "band": list(band),
        "rows": rows,
        "flagged": flagged,
    }


# ---------------------------------------------------------------------------
# Constructive packings
# ---------------------------------------------------------------------------


@dataclass
class PackingSet:
    """A finite family with pairwise squared distances in a fixed window."""

    elements: list
    delta: float
    min_dist_sq: float
    max_dist_sq: float
    construction: str
    meta: dict

    def __post_init__(self):
        if len(self.elements) < 2:
            raise ValidationError("a packing needs at least two elements")

    def to_json(self):
        return {
            "construction": self.construction,
            "delta": self.delta,
            "size": len(self.elements),
            "min_dist_sq": self.min_dist_sq,
            "max_dist_sq": self.max_dist_sq,
            "meta": self.meta,
            "elements": [np.asarray(e).tolist() for e in self.elements],
        }


def verify_packing(elements, lo, hi):
    """Exhaustive pairwise distance check, independent of the construction.

    Returns (ok, min_sq, max_sq, offenders) where offenders lists the pairs
    outside [lo, hi].
    """
    m = len(elements)
    flat = [np.asarray(e, dtype=float).ravel() for e in elements]
    min_sq, max_sq = np.inf, 0.0
    offenders = []
    for i in range(m):
        for j in range(i + 1, m):
            d2 = float(((flat[i] - flat[j]) ** 2).sum())
            min_sq = min(min_sq, d2)
            max_sq = max(max_sq, d2)
            if not (lo - 1e-12 <= d2 <= hi + 1e-12):
                offenders.append((i, j, d2))
    return (not offenders, min_sq, max_sq, offenders)


def _hamming(a, b):
    return int((a != b).sum())


def hypercube_packing(
    d,
    delta,
    kind="full",
    budget=100000,
    seed=0,
    *,
    s=None,
    d1=None,
    d2=None,
    r=None,
    min_size=2,
):
    """Greedy random packing constructions.

    ``full``: sign vectors in dimension `d` scaled so that the Hamming
    floor d/3 lands the squared distances inside [delta^2/4, delta^2];
    candidates are accepted when at Hamming distance at least d/3 from all
    accepted vectors.

    ``sparse``: `s`-sparse sign vectors scaled so disjoint supports attain
    delta^2 exactly; acceptance enforces the window [delta^2/8, delta^2].

    ``lowrank``: rank-`r` matrices of shape (`d1`, `d2`) built from sign
    factors on the first r columns, accepted on a Hamming floor of one
    third of the sign coordinates.

    Raises ``BudgetExhausted`` (carrying the partial set) if fewer than
    `min_size` elements were accepted within the candidate budget.
    """
    rng = np.random.default_rng(seed)
    accepted = []
    if kind == "full":
        if d < 6:
            raise ValidationError("full hypercube packing needs d >= 6")
        a = np.sqrt(3.0) * delta / (4.0 * np.sqrt(d))
        floor = d / 3.0
        signs_acc = []
        for _ in range(budget):
            cand = rng.choice([-1.0, 1.0], size=d)
            if all(_hamming(cand, prev) >= floor for prev in signs_acc):
                signs_acc.append(cand)
        accepted = [a * sgn for sgn in signs_acc]
        lo, hi = delta**2 / 4.0, delta**2
        meta = {"dimension": d, "hamming_floor": floor}
    elif kind == "sparse":
        if d < 6 or s is None or not (1 <= s <= d):
            raise ValidationError("sparse packing needs d >= 6 and 1 <= s <= d")
        a = delta / np.sqrt(2.0 * s)
        lo, hi = delta**2 / 8.0, delta**2
        for _ in range(budget):
            cand = np.zeros(d)
            support = rng.choice(d, size=s, replace=False)
            cand[support] = a * rng.choice([-1.0, 1.0], size=s)
            if all(
                lo <= float(((cand - prev) ** 2).sum()) <= hi for prev in accepted
            ):
                accepted.append(cand)
        meta = {"dimension": d, "sparsity": s}
    elif kind == "lowrank":
        if d1 is None or d2 is None or r is None:
            raise ValidationError("lowrank packing needs d1, d2, r")
        if min(d1, d2) < r:
            raise ValidationError("rank exceeds matrix dimensions")
        ncoord = d1 * r
        a = delta / (2.0 * np.sqrt(ncoord))
        floor = ncoord / 3.0
        signs_acc = []
        for _ in range(budget):
            cand = rng.choice([-1.0, 1.0], size=(d1, r))
            if np.linalg.matrix_rank(cand) < r:
                continue
            if all(_hamming(cand, prev) >= floor for prev in signs_acc):
                signs_acc.append(cand)
        accepted = [
            np.hstack([a * sgn, np.zeros((d1, d2 - r))]) for sgn in signs_acc
        ]
        lo, hi = delta**2 / 4.0, delta**2
        meta = {"d1": d1, "d2": d2, "rank": r, "hamming_floor": floor}
    else:
        raise ValidationError(f"unknown packing kind {kind!r}")

    ok, min_sq, max_sq, offenders = (
        verify_packing(accepted, lo, hi) if len(accepted) >= 2 else (False, 0, 0, [])
    )
    meta.update(
        {
            "budget": budget,
            "seed": seed,
            "verified": ok,
            "log_size_per_dim": (
                float(np.log(len(accepted)) / meta.get("dimension", d))
                if len(accepted) >= 2 and kind != "lowrank"
                else None
            ),
        }
    )
    pack = None
    if len(accepted) >= 2:
        pack = PackingSet(
            elements=accepted,
            delta=float(delta),
            min_dist_sq=min_sq,
            max_dist_sq=max_sq,
            construction=kind,
            meta=meta,
        )
    if len(accepted) < min_size:
        raise BudgetExhausted(
            f"accepted only {len(accepted)} elements within budget {budget}",
            partial=pack,
        )
    return pack


def fano_precondition_check(pack, n, c_u, delta):
    """Mechanically verify the two information-theoretic preconditions:
    log m >= 128 n delta^2, and every pairwise squared distance inside
    [n delta^2 / c_u^2, 8 n delta^2 / c_u^2].

    Only the preconditions are checked; the minimax claim itself is a
    statistical statement about all estimators and is not computable from
    one dataset.
    """
    m = len(pack.elements)
    log_m = float(np.log(m))
    required = 128.0 * n * delta**2
    lo = n * delta**2 / c_u**2
    hi = 8.0 * n * delta**2 / c_u**2
    ok_window, min_sq, max_sq, offenders = verify_packing(pack.elements, lo, hi)
    return {
        "log_m": log_m,
        "required_log_m": required,
        "log_m_ok": log_m >= required,
        "window": [lo, hi],
        "min_dist_sq": min_sq,
        "max_dist_sq": max_sq,
        "window_ok": ok_window,
        "offending_pairs": [[i, j, d2] for i, j, d2 in offenders],
        "ok": bool(log_m >= required and ok_window),
    }


# ---------------------------------------------------------------------------
# Report emission
# ---------------------------------------------------------------------------


def emit_report(report, fmt="json", path=None):
    """Serialize a report deterministically.

    JSON output sorts keys and round-trips exactly through
    :func:`parse_report`; CSV output is one row per cell plus a summary
    block.  Returns the serialized text; writes it to `path` when given.
    """
    if fmt == "json":
        text = json.dumps(report, sort_keys=True, indent=2)
    elif fmt == "csv":
        text = report_to_csv(report)
    else:
        raise ValidationError(f"unknown format {fmt!r}")
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def parse_report(text_or_path):
    """Inverse of the JSON emission."""
    if "\n" not in text_or_path and text_or_path.endswith(".json"):
        with open(text_or_path) as fh:
            return json.load(fh)
    return json.loads(text_or_path)


def report_to_csv(report):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if report.get("kind") == "rate":
        writer.writerow(["n", "replication", "fro_sq", "emp_sq", "status", "iterations"])
        for cell in report["cells"]:
            writer.writerow(
                [
                    cell["n"],
                    cell["replication"],
                    repr(cell["fro_sq"]),
                    repr(cell["emp_sq"]),
                    cell["status"],
                    cell["iterations"],
                ]
            )
        writer.writerow([])
        writer.writerow(["summary_key", "value"])
        writer.writerow(["slope", repr(report["fit"]["slope"])])
        writer.writerow(["intercept", repr(report["fit"]["intercept"])])
        writer.writerow(["r_squared", repr(report["fit"]["r_squared"])])
        for row in report["per_n"]:
            writer.writerow([f"median_fro_sq_n{row['n']}", repr(row["median_fro_sq"])])
    elif report.get("kind") == "width":
        writer.writerow(["kind", "shape", "estimate", "std_error", "rate_expression", "ratio"])
        for row in report["rows"]:
            writer.writerow(
                [
                    row["kind"],
                    "x".join(str(v) for v in row["shape"]),
                    repr(row["estimate"]),
                    repr(row["std_error"]),
                    repr(row["rate_expression"]),
                    repr(row["ratio"]),
                ]
            )
    else:
        raise ValidationError("csv emission supports rate and width reports")
    return buf.getvalue()
