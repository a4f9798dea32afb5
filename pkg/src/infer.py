"""
Parameterized evaluation of compiled circuits: boolean checks (scalar and batched),
weighted mass / WMC in log space, marginalization, conditioned sampling and MAP.

Inputs are per-variable distributions (Indicator, Bernoulli, Marginalized); sum
weights are per decision element of the (smoothed) circuit's evaluation plan.
The log-space kernels at the bottom are shared with the neuro-symbolic layers.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from src import config
from src.errors import SchemaError, ZeroProbabilityEvidence
from src.sdd import Circuit, EvalPlan, exists, smooth

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Indicator:
    value: int


@dataclass(frozen=True)
class Bernoulli:
    p: float


@dataclass(frozen=True)
class Marginalized:
    pass


InputDist = Union[Indicator, Bernoulli, Marginalized]
MARGINALIZED = Marginalized()


@dataclass(frozen=True, eq=False)
class Parameterization:
    input_dist: tuple[InputDist, ...]
    sum_weights: Optional[np.ndarray] = None  # per plan element; None means unit weights

    def __post_init__(self) -> None:
        for i, d in enumerate(self.input_dist):
            if isinstance(d, Indicator) and d.value not in (0, 1):
                raise ValueError(f"indicator for variable {i} must be 0 or 1, got {d.value}")
            if isinstance(d, Bernoulli) and not 0.0 <= d.p <= 1.0:
                raise ValueError(f"Bernoulli parameter for variable {i} outside [0, 1]: {d.p}")
        if self.sum_weights is not None:
            w = np.asarray(self.sum_weights, dtype=np.float64)
            if not np.all(np.isfinite(w)) or np.any(w < 0):
                raise ValueError("sum weights must be finite and nonnegative")
            object.__setattr__(self, "sum_weights", w)

    @classmethod
    def uniform(cls, n: int, sum_weights: Optional[np.ndarray] = None) -> Parameterization:
        return cls((MARGINALIZED,) * n, sum_weights)

    @classmethod
    def indicators(cls, x: Sequence[int]) -> Parameterization:
        return cls(tuple(Indicator(int(b)) for b in x))

    @classmethod
    def bernoulli(cls, probs: Sequence[float]) -> Parameterization:
        return cls(tuple(Bernoulli(float(p)) for p in probs))

    def with_evidence(self, evidence: Mapping[int, int]) -> Parameterization:
        dists = list(self.input_dist)
        for var, value in evidence.items():
            dists[var] = Indicator(int(value))
        return replace(self, input_dist=tuple(dists))

    def marginalized(self) -> list[int]:
        return [i for i, d in enumerate(self.input_dist) if isinstance(d, Marginalized)]

    def log_inputs(self) -> tuple[np.ndarray, np.ndarray]:
        """log θ_v(1) and log θ_v(0) per variable."""
        n = len(self.input_dist)
        pos = np.zeros(n)
        neg = np.zeros(n)
        with np.errstate(divide="ignore"):
            for i, d in enumerate(self.input_dist):
                if isinstance(d, Indicator):
                    pos[i] = 0.0 if d.value else -np.inf
                    neg[i] = -np.inf if d.value else 0.0
                elif isinstance(d, Bernoulli):
                    pos[i] = np.log(d.p)
                    neg[i] = np.log1p(-d.p)
        return pos, neg

    def log_weights(self, plan: EvalPlan) -> np.ndarray:
        if self.sum_weights is None:
            return np.zeros(plan.n_elements)
        if self.sum_weights.shape[-1] != plan.n_elements:
            raise ValueError(f"expected {plan.n_elements} sum weights, got {self.sum_weights.shape[-1]}")
        with np.errstate(divide="ignore"):
            return np.log(self.sum_weights)


@dataclass(frozen=True)
class QueryResult:
    value: float
    assignment: Optional[np.ndarray] = None
    log_space: bool = False


def normalize_weights(plan: EvalPlan, weights: np.ndarray) -> np.ndarray:
    """Rescale element weights so each decision's live elements sum to 1."""
    w = np.where(plan.live, np.asarray(weights, dtype=np.float64), 0.0)
    out = w.copy()
    for start, stop in plan.groups:
        total = w[start:stop].sum()
        if total > 0:
            out[start:stop] = w[start:stop] / total
    return out


def _check_width(c: Circuit, width: int) -> None:
    if width != c.plan.n_vars:
        raise ValueError(f"assignment has {width} entries, circuit has {c.plan.n_vars} variables")


def _require_smooth(c: Circuit, what: str) -> None:
    if not c.is_smooth:
        raise ValueError(f"{what} needs a smooth circuit; call smooth() first")


# ---- boolean evaluation ----


def _scalar_program(plan: EvalPlan) -> list[tuple]:
    prog = getattr(plan, "_scalar_prog", None)
    if prog is not None:
        return prog
    ops: dict[int, tuple] = {}
    for r in plan.true_rows.tolist():
        ops[r] = ("T",)
    for r in plan.false_rows.tolist():
        ops[r] = ("F",)
    for r, v, p in zip(plan.lit_rows.tolist(), plan.lit_vars.tolist(), plan.lit_pos.tolist()):
        ops[r] = ("L", v, p)
    for r in plan.gap_rows.tolist():
        ops[r] = ("T",)
    primes, subs = plan.elem_primes.tolist(), plan.elem_subs.tolist()
    for owner, (start, stop) in zip(plan.group_owners, plan.groups):
        ops[owner] = ("D", list(zip(primes[start:stop], subs[start:stop])))
    prog = [ops[r] for r in range(plan.n_nodes)]
    plan._scalar_prog = prog
    return prog


def evaluate(c: Circuit, x: Sequence[int]) -> int:
    """1 iff x is a model of c. Plain per-node loop; the batched path is evaluate_batch."""
    _check_width(c, len(x))
    vals: list[bool] = []
    for op in _scalar_program(c.plan):
        kind = op[0]
        if kind == "L":
            vals.append(bool(x[op[1]]) == op[2])
        elif kind == "D":
            vals.append(any(vals[p] and vals[s] for p, s in op[1]))
        else:
            vals.append(kind == "T")
    return int(vals[c.plan.root])


def _bool_chunk(plan: EvalPlan, xs: np.ndarray) -> np.ndarray:
    vals = np.zeros((plan.n_nodes, xs.shape[0]), dtype=bool)
    if len(plan.lit_rows):
        vals[plan.lit_rows] = (xs[:, plan.lit_vars].T != 0) == plan.lit_pos[:, None]
    vals[plan.true_rows] = True
    vals[plan.gap_rows] = True
    for layer in plan.layers:
        e = vals[layer.primes] & vals[layer.subs]
        vals[layer.owners] = np.logical_or.reduceat(e, layer.starts, axis=0)
    return vals[plan.root]


def evaluate_batch(
    c: Circuit, xs: np.ndarray, batch_size: Optional[int] = None, threads: int = 1
) -> np.ndarray:
    """Row-wise evaluate over a bit matrix; chunks may run on a thread pool, results are independent of it."""
    xs = np.asarray(xs)
    if xs.ndim != 2:
        raise ValueError(f"expected a 2-D bit matrix, got shape {xs.shape}")
    _check_width(c, xs.shape[1])
    plan = c.plan
    size = batch_size or config.DEFAULTS["batch_size"]
    chunks = [xs[i : i + size] for i in range(0, xs.shape[0], size)]
    if not chunks:
        return np.zeros(0, dtype=np.uint8)
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda ch: _bool_chunk(plan, ch), chunks))
    else:
        parts = [_bool_chunk(plan, ch) for ch in chunks]
    return np.concatenate(parts).astype(np.uint8)


# ---- log-space kernels ----


def _as_rows(a: np.ndarray, n: int) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    return a[None, :] if a.ndim == 1 else a


def log_values(plan: EvalPlan, pos_log: np.ndarray, neg_log: np.ndarray, log_w: np.ndarray) -> np.ndarray:
    """
    Upward pass. pos_log/neg_log are (B, n_vars) or (n_vars,); log_w is (B, E) or (E,).
    Returns node values, shape (n_nodes, B).
    """
    pos = _as_rows(pos_log, plan.n_vars)
    neg = _as_rows(neg_log, plan.n_vars)
    lw = _as_rows(log_w, plan.n_elements)
    b = max(pos.shape[0], neg.shape[0], lw.shape[0])
    vals = np.empty((plan.n_nodes, b))
    vals[plan.true_rows] = 0.0
    vals[plan.false_rows] = -np.inf
    if len(plan.lit_rows):
        lit = np.where(plan.lit_pos[None, :], pos[:, plan.lit_vars], neg[:, plan.lit_vars])
        vals[plan.lit_rows] = np.broadcast_to(lit.T, (len(plan.lit_rows), b))
    if len(plan.gap_rows):
        gap = np.logaddexp(pos[:, plan.gap_vars], neg[:, plan.gap_vars])
        vals[plan.gap_rows] = np.broadcast_to(gap.T, (len(plan.gap_rows), b))
    lwt = lw.T
    for layer in plan.layers:
        sl = slice(layer.elem_offset, layer.elem_offset + len(layer.primes))
        le = lwt[sl] + vals[layer.primes] + vals[layer.subs]
        vals[layer.owners] = np.logaddexp.reduceat(le, layer.starts, axis=0)
    return vals


def log_values_backward(
    plan: EvalPlan,
    vals: np.ndarray,
    pos_log: np.ndarray,
    neg_log: np.ndarray,
    log_w: np.ndarray,
    grad_root: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Reverse sweep of log_values: gradients of sum(grad_root * root) wrt pos_log, neg_log and log_w, each (B, ·)."""
    b = vals.shape[1]
    pos = np.broadcast_to(_as_rows(pos_log, plan.n_vars), (b, plan.n_vars))
    neg = np.broadcast_to(_as_rows(neg_log, plan.n_vars), (b, plan.n_vars))
    lwt = np.broadcast_to(_as_rows(log_w, plan.n_elements), (b, plan.n_elements)).T
    adj = np.zeros_like(vals)
    adj[plan.root] = grad_root
    g_w = np.zeros((plan.n_elements, b))
    for layer in reversed(plan.layers):
        sl = slice(layer.elem_offset, layer.elem_offset + len(layer.primes))
        counts = np.diff(np.append(layer.starts, len(layer.primes)))
        owners = np.repeat(layer.owners, counts)
        le = lwt[sl] + vals[layer.primes] + vals[layer.subs]
        top = vals[owners]
        with np.errstate(invalid="ignore", over="ignore"):
            ratio = np.where(np.isfinite(top) & np.isfinite(le), np.exp(le - top), 0.0)
        ge = adj[owners] * ratio
        g_w[sl] = ge
        np.add.at(adj, layer.primes, ge)
        np.add.at(adj, layer.subs, ge)
    g_pos = np.zeros((b, plan.n_vars))
    g_neg = np.zeros((b, plan.n_vars))
    for row, var, positive in zip(plan.lit_rows, plan.lit_vars, plan.lit_pos):
        (g_pos if positive else g_neg)[:, var] += adj[row]
    for row, var in zip(plan.gap_rows, plan.gap_vars):
        top = vals[row]
        with np.errstate(invalid="ignore"):
            g_pos[:, var] += adj[row] * np.where(np.isfinite(top), np.exp(pos[:, var] - top), 0.0)
            g_neg[:, var] += adj[row] * np.where(np.isfinite(top), np.exp(neg[:, var] - top), 0.0)
    return g_pos, g_neg, g_w.T


# ---- probabilistic queries ----


def log_mass(c: Circuit, theta: Parameterization) -> float:
    """log Σ_models W(x) Π θ_v(x_v) on a smooth circuit."""
    _require_smooth(c, "mass")
    _check_width(c, len(theta.input_dist))
    plan = c.plan
    pos, neg = theta.log_inputs()
    return float(log_values(plan, pos, neg, theta.log_weights(plan))[plan.root, 0])


def mass(c: Circuit, theta: Parameterization) -> float:
    return math.exp(log_mass(c, theta))


def marginalize(c: Circuit, variables: Sequence[int]) -> Circuit:
    """Boolean projection: quantify the variables out, then smooth."""
    return smooth(exists(c, variables)) if len(variables) else c.smoothed()


def wmc(c: Circuit, theta: Parameterization) -> float:
    """
    Belief in the evidence encoded by θ: Marginalized variables are projected out and the
    remaining Indicator/Bernoulli inputs are summed over the projection's models.
    All-Marginalized gives 1 on a satisfiable circuit.
    """
    _require_smooth(c, "wmc")
    _check_width(c, len(theta.input_dist))
    if theta.sum_weights is not None and not np.allclose(theta.sum_weights, 1.0):
        raise ValueError("wmc uses unit sum weights; use mass() for weighted circuits")
    gone = theta.marginalized()
    if not gone:
        return mass(c, replace(theta, sum_weights=None))
    projected = marginalize(c, gone)
    dists = list(theta.input_dist)
    for v in gone:
        dists[v] = Bernoulli(0.5)
    return mass(projected, Parameterization(tuple(dists)))


# ---- sampling ----


def _sample_rows(
    plan: EvalPlan, vals: np.ndarray, pos: np.ndarray, neg: np.ndarray, log_w: np.ndarray, src: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Top-down draws; row k of the output uses column src[k] of the upward values."""
    n = len(src)
    out = np.zeros((n, plan.n_vars), dtype=np.uint8)
    active = np.zeros((plan.n_nodes, n), dtype=bool)
    active[plan.root] = True
    lwt = np.broadcast_to(_as_rows(log_w, plan.n_elements), (vals.shape[1], plan.n_elements))
    order = sorted(range(len(plan.groups)), key=lambda g: -plan.group_owners[g])
    for g in order:
        owner = plan.group_owners[g]
        rows = np.flatnonzero(active[owner])
        if not len(rows):
            continue
        start, stop = plan.groups[g]
        cols = src[rows]
        le = lwt[cols, start:stop] + vals[plan.elem_primes[start:stop]][:, cols].T + vals[plan.elem_subs[start:stop]][:, cols].T
        with np.errstate(invalid="ignore"):
            probs = np.exp(le - vals[owner, cols][:, None])
        probs = np.nan_to_num(probs, nan=0.0)
        cum = np.cumsum(probs, axis=1)
        u = rng.random(len(rows)) * cum[:, -1]
        pick = np.minimum((cum <= u[:, None]).sum(axis=1), stop - start - 1)
        for k in range(stop - start):
            chosen = rows[pick == k]
            if len(chosen):
                active[plan.elem_primes[start + k], chosen] = True
                active[plan.elem_subs[start + k], chosen] = True
    for row, var, positive in zip(plan.lit_rows, plan.lit_vars, plan.lit_pos):
        hit = active[row]
        out[hit, var] = 1 if positive else 0
    pos_b = np.broadcast_to(pos, (vals.shape[1], plan.n_vars))
    neg_b = np.broadcast_to(neg, (vals.shape[1], plan.n_vars))
    for row, var in zip(plan.gap_rows, plan.gap_vars):
        rows = np.flatnonzero(active[row])
        if len(rows):
            cols = src[rows]
            with np.errstate(invalid="ignore"):
                p1 = np.exp(pos_b[cols, var] - np.logaddexp(pos_b[cols, var], neg_b[cols, var]))
            out[rows, var] = (rng.random(len(rows)) < np.nan_to_num(p1)).astype(np.uint8)
    return out


def sample(
    c: Circuit,
    theta: Parameterization,
    evidence: Optional[Mapping[int, int]] = None,
    rng: Optional[np.random.Generator] = None,
    n: int = 1,
) -> np.ndarray:
    """
    n models of c drawn from the θ-induced distribution conditioned on evidence.
    Returns shape (n, vars); a single draw is sample(...)[0].
    """
    _require_smooth(c, "sample")
    _check_width(c, len(theta.input_dist))
    rng = rng if rng is not None else np.random.default_rng()
    if evidence:
        theta = theta.with_evidence(evidence)
    plan = c.plan
    pos, neg = theta.log_inputs()
    lw = theta.log_weights(plan)
    vals = log_values(plan, pos, neg, lw)
    if not np.isfinite(vals[plan.root, 0]):
        raise ZeroProbabilityEvidence("evidence has zero probability under the circuit")
    size = config.DEFAULTS["batch_size"]
    chunks = [_sample_rows(plan, vals, pos[None, :], neg[None, :], lw, np.zeros(min(size, n - i), dtype=np.int64), rng) for i in range(0, n, size)]
    return np.concatenate(chunks) if chunks else np.zeros((0, plan.n_vars), dtype=np.uint8)


def sample_each(
    c: Circuit,
    theta: Parameterization,
    evidence_rows: np.ndarray,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """
    One draw per evidence row (-1 marks an unset variable). Rows whose evidence has zero
    mass are returned as all-zero and flagged False in the second output.
    """
    _require_smooth(c, "sample")
    ev = np.asarray(evidence_rows)
    _check_width(c, ev.shape[1])
    plan = c.plan
    pos0, neg0 = theta.log_inputs()
    pos = np.where(ev == 1, 0.0, np.where(ev == 0, -np.inf, pos0[None, :]))
    neg = np.where(ev == 0, 0.0, np.where(ev == 1, -np.inf, neg0[None, :]))
    lw = theta.log_weights(plan)
    vals = log_values(plan, pos, neg, lw)
    ok = np.isfinite(vals[plan.root])
    out = np.zeros(ev.shape, dtype=np.uint8)
    rows = np.flatnonzero(ok)
    if len(rows):
        out[rows] = _sample_rows(plan, vals, pos, neg, lw, rows, rng)
    return out, ok


# ---- MAP ----


def _map_row(plan: EvalPlan, pos: np.ndarray, neg: np.ndarray, lw: np.ndarray) -> tuple[float, int]:
    n = plan.n_vars
    vals: list[float] = [0.0] * plan.n_nodes
    masks: list[int] = [0] * plan.n_nodes
    for r in plan.false_rows.tolist():
        vals[r] = -math.inf
    for r, v, p in zip(plan.lit_rows.tolist(), plan.lit_vars.tolist(), plan.lit_pos.tolist()):
        vals[r] = float(pos[v] if p else neg[v])
        masks[r] = (1 << (n - 1 - v)) if p else 0
    for r, v in zip(plan.gap_rows.tolist(), plan.gap_vars.tolist()):
        a, b = float(pos[v]), float(neg[v])
        if a > b and not _tie(a, b):
            vals[r], masks[r] = a, 1 << (n - 1 - v)
        else:
            vals[r], masks[r] = b, 0
    primes, subs, weights = plan.elem_primes.tolist(), plan.elem_subs.tolist(), lw.tolist()
    groups = sorted(zip(plan.group_owners, plan.groups))
    for owner, (start, stop) in groups:
        best, best_mask = -math.inf, 0
        for e in range(start, stop):
            p, s = primes[e], subs[e]
            cand = weights[e] + vals[p] + vals[s]
            if cand == -math.inf:
                continue
            mask = masks[p] | masks[s]
            if best == -math.inf or (cand > best and not _tie(cand, best)):
                best, best_mask = cand, mask
            elif _tie(cand, best) and mask < best_mask:
                best, best_mask = max(cand, best), mask
        vals[owner], masks[owner] = best, best_mask
    return vals[plan.root], masks[plan.root]


def _tie(a: float, b: float) -> bool:
    return math.isclose(a, b, rel_tol=1e-12, abs_tol=1e-12)


def _decode(mask: int, n: int) -> np.ndarray:
    return np.array([(mask >> (n - 1 - v)) & 1 for v in range(n)], dtype=np.uint8)


def map_query(c: Circuit, theta: Parameterization, evidence: Optional[Mapping[int, int]] = None) -> QueryResult:
    """Most probable model under θ and evidence; ties go to the lexicographically smallest vector."""
    _require_smooth(c, "map_state")
    _check_width(c, len(theta.input_dist))
    if evidence:
        theta = theta.with_evidence(evidence)
    plan = c.plan
    pos, neg = theta.log_inputs()
    best, mask = _map_row(plan, pos, neg, theta.log_weights(plan))
    if best == -math.inf:
        raise ZeroProbabilityEvidence("no model is consistent with the evidence")
    return QueryResult(best, _decode(mask, plan.n_vars), log_space=True)


def map_state(c: Circuit, theta: Parameterization, evidence: Optional[Mapping[int, int]] = None) -> np.ndarray:
    return map_query(c, theta, evidence).assignment


def map_rows(plan: EvalPlan, pos: np.ndarray, neg: np.ndarray, log_w: np.ndarray) -> np.ndarray:
    """MAP per row of (B, n) log inputs and (B, E) or (E,) log weights; zero-mass rows raise."""
    b = pos.shape[0]
    lw = np.broadcast_to(_as_rows(log_w, plan.n_elements), (b, plan.n_elements))
    out = np.zeros((b, plan.n_vars), dtype=np.uint8)
    for i in range(b):
        best, mask = _map_row(plan, pos[i], neg[i], lw[i])
        if best == -math.inf:
            raise ZeroProbabilityEvidence(f"row {i}: no model is consistent with the evidence")
        out[i] = _decode(mask, plan.n_vars)
    return out


# ---- assignment files ----


def read_assignments(path: Path, names: Sequence[str]) -> np.ndarray:
    """TSV with a header of variable names, then 0/1 rows."""
    with open(path, encoding="utf-8") as f:
        lines = [l.rstrip("\n") for l in f if l.strip()]
    if not lines:
        return np.zeros((0, len(names)), dtype=np.uint8)
    header = lines[0].split("\t")
    if header != list(names):
        raise SchemaError(f"{path}: header does not match the bundle's variable map")
    try:
        rows = [[int(v) for v in l.split("\t")] for l in lines[1:]]
    except ValueError as e:
        raise SchemaError(f"{path}: non-integer entry ({e})") from None
    for i, row in enumerate(rows, start=2):
        if len(row) != len(names):
            raise SchemaError(f"{path}:{i}: expected {len(names)} columns, got {len(row)}")
        if any(v not in (0, 1) for v in row):
            raise SchemaError(f"{path}:{i}: entries must be 0 or 1")
    return np.array(rows, dtype=np.uint8).reshape(len(rows), len(names))


def write_assignments(path: Path, names: Sequence[str], xs: np.ndarray, results: Optional[np.ndarray] = None) -> None:
    with open(path, "w", encoding="utf-8") as f:
        cols = list(names) + (["consistent"] if results is not None else [])
        f.write("\t".join(cols) + "\n")
        for i, row in enumerate(np.asarray(xs)):
            vals = [str(int(v)) for v in row]
            if results is not None:
                vals.append(str(int(results[i])))
            f.write("\t".join(vals) + "\n")
