"""Entropic optimal transport between samples and class prototypes.

``sinkhorn`` solves  min_T <T, D> - gamma * H(T)  over plans with row sums a
and column sums b. ``exact_ot`` solves the unregularized transportation LP
on small instances and serves as a reference in tests and diagnostics.
"""
from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass

import numpy as np

from .datamodel import ClassWeights, TransportPlan
from .errors import (
    ConvergenceWarning,
    InfeasibleMarginals,
    InstanceTooLarge,
    NonFiniteCost,
    OTCleanError,
    ShapeMismatch,
)

MARGINAL_SUM_TOL = 1e-9
EXACT_MAX_CELLS = 1024
NEWTON_AFTER = 50
NEWTON_BELOW = 1e-2
ANNEAL_START = 1e-1
ANNEAL_FACTOR = 10.0
ANNEAL_STAGE_TOL = 1e-6


class KernelUnderflow(OTCleanError):
    """The naive Gibbs kernel exp(-D/gamma) underflowed; use the stabilized solver."""


@dataclass(frozen=True)
class SinkhornConfig:
    gamma: float = 1e-2
    max_iterations: int = 1000
    tolerance: float = 1e-9
    stabilized: bool = True
    newton_polish: bool = True
    anneal: bool = True

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not self.tolerance > 0:
            raise ValueError(f"tolerance must be positive, got {self.tolerance}")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")


def _check_marginal(m, length: int, name: str) -> np.ndarray:
    if isinstance(m, ClassWeights):
        m = m.weights
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (length,):
        raise ShapeMismatch(f"{name} has shape {m.shape}, expected ({length},)")
    if not np.all(np.isfinite(m)) or np.any(m <= 0):
        raise InfeasibleMarginals(f"{name} entries must be finite and positive")
    if abs(m.sum() - 1.0) > MARGINAL_SUM_TOL:
        raise InfeasibleMarginals(f"{name} sums to {m.sum():.12g}, expected 1")
    return m


def _check_cost(D) -> np.ndarray:
    D = np.asarray(D, dtype=np.float64)
    if D.ndim != 2 or D.shape[0] < 1 or D.shape[1] < 1:
        raise ShapeMismatch(f"cost matrix must be a non-empty 2-D array, got shape {D.shape}")
    if not np.all(np.isfinite(D)):
        raise NonFiniteCost("cost matrix contains NaN or Inf")
    return D


def _logsumexp(x: np.ndarray, axis: int) -> np.ndarray:
    m = x.max(axis=axis, keepdims=True)
    out = np.log(np.exp(x - m).sum(axis=axis, keepdims=True)) + m
    return np.squeeze(out, axis=axis)


def _row_update(neg_d, g, log_a):
    m = neg_d + g[None, :]
    top = m.max(axis=1, keepdims=True)
    e = np.exp(m - top)
    s = e.sum(axis=1)
    f = log_a - np.log(s) - top[:, 0]
    # reuse the shifted exponentials: exp(m + f) = e * a / s
    return f, e * (np.exp(log_a) / s)[:, None]


def _semi_dual(neg_d, g, log_a, a, b, gamma):
    # concave in g; its gradient is (b - column sums of the row-exact plan) / gamma
    return float(g @ b - a @ _logsumexp(neg_d + g[None, :], axis=1))


def _newton_step(neg_d, g, log_a, a, b, gamma, plan):
    """One damped Newton ascent step on the semi-dual in the column potential g.

    g is kept in units of 1/gamma (log-domain), so the plan is
    a_i * softmax_j(g_j - D_ij / gamma).
    """
    col = plan.sum(axis=0)
    grad = b - col
    hess = np.diag(col) - plan.T @ (plan / a[:, None])
    # the constant shift of g is a null direction; pin it with a rank-one term
    k = len(b)
    direction = np.linalg.lstsq(hess + np.ones((k, k)) / k, grad, rcond=None)[0]
    direction -= direction.mean()
    slope = float(grad @ direction)
    if not slope > 0:
        return None
    base = _semi_dual(neg_d, g, log_a, a, b, gamma)
    residual = np.abs(grad).max()
    step = 1.0
    while step > 1e-10:
        cand = g + step * direction
        f, cand_plan = _row_update(neg_d, cand, log_a)
        # near the optimum the objective gain drops below rounding, so a strict
        # decrease of the marginal residual is accepted as well
        gain = 1e-4 * step * slope
        if _semi_dual(neg_d, cand, log_a, a, b, gamma) >= base + gain:
            return cand
        if gain < 64 * np.finfo(float).eps * max(1.0, abs(base)):
            if np.abs(cand_plan.sum(axis=0) - b).max() < (1.0 - 1e-4 * step) * residual:
                return cand
        step *= 0.5
    return None


def _sinkhorn_log(D, a, b, gamma, max_iter, tol, polish=True, g0=None):
    """Log-domain Sinkhorn; returns (plan, iterations, column potential in cost units)."""
    log_a, log_b = np.log(a), np.log(b)
    neg_d = -D / gamma
    g = np.zeros(D.shape[1]) if g0 is None else g0 / gamma
    f, plan = _row_update(neg_d, g, log_a)
    newton = False
    plain_since = 0
    residual = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        if newton:
            g_next = _newton_step(neg_d, g, log_a, a, b, gamma, plan)
            if g_next is None:  # line search stalled; plain iterations still make progress
                newton = False
                plain_since = it
            else:
                g = g_next
        if not newton:
            g = log_b - _logsumexp(neg_d + f[:, None], axis=0)
        f, plan = _row_update(neg_d, g, log_a)
        # rows are exact after the row update, so the column residual decides
        prev, residual = residual, np.abs(plan.sum(axis=0) - b).max()
        if residual <= tol:
            break
        if newton and residual > 0.9 * prev:
            # not in the quadratic regime yet (e.g. a near-disconnected plan)
            newton = False
            plain_since = it
        elif polish and not newton:
            newton = it - plain_since >= NEWTON_AFTER or residual < NEWTON_BELOW * b.min()
    return plan, it, g * gamma


def _gamma_schedule(gamma: float) -> list:
    stages = []
    g = ANNEAL_START
    while g > gamma * ANNEAL_FACTOR * (1 + 1e-12):
        stages.append(g)
        g /= ANNEAL_FACTOR
    return stages


def _sinkhorn_naive(D, a, b, gamma, max_iter, tol):
    kernel = np.exp(-D / gamma)
    u = np.ones(D.shape[0])
    it = 0
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for it in range(1, max_iter + 1):
            v = b / (kernel.T @ u)
            u = a / (kernel @ v)
            if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
                raise KernelUnderflow(f"Gibbs kernel underflow at gamma={gamma}; use stabilized=True")
            plan = u[:, None] * kernel * v[None, :]
            if max(np.abs(plan.sum(axis=0) - b).max(), np.abs(plan.sum(axis=1) - a).max()) <= tol:
                break
    return plan, it


def sinkhorn(D, a, b, cfg: SinkhornConfig | None = None) -> TransportPlan:
    """Entropic OT plan between row marginal ``a`` and column marginal ``b``.

    The stabilized solver alternates log-domain column and row updates. With
    ``newton_polish`` the column half-step is replaced, once the iterates are
    close (or after a fixed warm-up), by damped Newton steps on the concave
    semi-dual in the K column potentials; the fixed point is the same plan but
    the tail converges quadratically instead of linearly. Every iteration ends
    with an exact row update, and convergence is judged on the column residual.
    With ``anneal`` the potentials are warm-started from coarser solves at
    gamma = 0.1, 0.01, ... down to ``cfg.gamma``; those iterations count
    against ``cfg.max_iterations``.

    If the tolerance is not met within ``cfg.max_iterations`` the last iterate
    is returned with ``converged=False`` and a :class:`ConvergenceWarning`.
    """
    cfg = cfg or SinkhornConfig()
    D = _check_cost(D)
    a = _check_marginal(a, D.shape[0], "row marginal")
    b = _check_marginal(b, D.shape[1], "column marginal")
    if cfg.stabilized:
        g0, iters = None, 0
        for stage_gamma in _gamma_schedule(cfg.gamma) if cfg.anneal else ():
            budget = min(cfg.max_iterations // 4, cfg.max_iterations - iters)
            if budget < 1:
                break
            _, used, g0 = _sinkhorn_log(D, a, b, stage_gamma, budget, ANNEAL_STAGE_TOL, cfg.newton_polish, g0)
            iters += used
        plan, used, _ = _sinkhorn_log(
            D, a, b, cfg.gamma, max(1, cfg.max_iterations - iters), cfg.tolerance, cfg.newton_polish, g0
        )
        iters += used
    else:
        plan, iters = _sinkhorn_naive(D, a, b, cfg.gamma, cfg.max_iterations, cfg.tolerance)
    violation = float(max(np.abs(plan.sum(axis=1) - a).max(), np.abs(plan.sum(axis=0) - b).max()))
    converged = violation <= cfg.tolerance
    if not converged:
        warnings.warn(
            f"Sinkhorn reached {iters} iterations with marginal residual {violation:.3e} "
            f"(tolerance {cfg.tolerance:.1e})",
            ConvergenceWarning,
            stacklevel=2,
        )
    _, _, objective = plan_objective(plan, D, cfg.gamma)
    return TransportPlan(
        plan=plan,
        row_marginal=a,
        col_marginal=b,
        regularization=cfg.gamma,
        iterations_used=iters,
        marginal_violation=violation,
        converged=converged,
        objective=objective,
    )


def plan_objective(t, D, gamma: float | None = None):
    """Return (transport cost <T, D>, entropy H(T), <T, D> - gamma * H(T)).

    ``gamma`` defaults to the plan's own regularization when ``t`` is a
    TransportPlan. Entropy uses the convention 0 log 0 = 0.
    """
    if isinstance(t, TransportPlan):
        if gamma is None:
            gamma = t.regularization
        t = t.plan
    t = np.asarray(t, dtype=np.float64)
    D = np.asarray(D, dtype=np.float64)
    if t.shape != D.shape:
        raise ShapeMismatch(f"plan shape {t.shape} != cost shape {D.shape}")
    cost = float((t * D).sum())
    pos = t[t > 0]
    entropy = float(-(pos * np.log(pos)).sum())
    gamma = 0.0 if gamma is None else gamma
    return cost, entropy, cost - gamma * entropy


# --- exact transportation simplex -------------------------------------------


def _northwest_corner(supply, demand):
    n, m = len(supply), len(demand)
    s, d = supply.copy(), demand.copy()
    flow = np.zeros((n, m))
    basis = []
    i = j = 0
    while True:
        x = min(s[i], d[j])
        flow[i, j] = x
        basis.append((i, j))
        s[i] -= x
        d[j] -= x
        if i == n - 1 and j == m - 1:
            break
        if j == m - 1 or (i < n - 1 and s[i] <= d[j]):
            i += 1
        else:
            j += 1
    return flow, basis


def _tree_adjacency(basis, n):
    adj = {}
    for i, j in basis:
        adj.setdefault(i, []).append(n + j)
        adj.setdefault(n + j, []).append(i)
    return adj


def _duals(D, basis, n, m):
    adj = _tree_adjacency(basis, n)
    pot = np.full(n + m, np.nan)
    pot[0] = 0.0
    queue = deque([0])
    while queue:
        node = queue.popleft()
        for other in adj.get(node, ()):
            if np.isnan(pot[other]):
                i, j = (node, other - n) if node < n else (other, node - n)
                pot[other] = D[i, j] - pot[node]
                queue.append(other)
    return pot[:n], pot[n:]


def _tree_path(basis, n, start, goal):
    adj = _tree_adjacency(basis, n)
    parent = {start: None}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        if node == goal:
            break
        for other in adj.get(node, ()):
            if other not in parent:
                parent[other] = node
                queue.append(other)
    path = [goal]
    while parent[path[-1]] is not None:
        path.append(parent[path[-1]])
    return path  # goal ... start


def _basis_flows(basis, supply, demand):
    """Solve the flows of a spanning-tree basis by repeatedly peeling leaves."""
    n, m = len(supply), len(demand)
    rem = np.concatenate([supply, demand]).astype(np.float64)
    adj = {k: set(v) for k, v in _tree_adjacency(basis, n).items()}
    flow = np.zeros((n, m))
    leaves = deque(sorted(k for k, v in adj.items() if len(v) == 1))
    while leaves:
        leaf = leaves.popleft()
        if not adj.get(leaf):
            continue
        (other,) = adj[leaf]
        i, j = (leaf, other - n) if leaf < n else (other, leaf - n)
        flow[i, j] = rem[leaf]
        rem[other] -= rem[leaf]
        rem[leaf] = 0.0
        adj[other].discard(leaf)
        adj[leaf].clear()
        if len(adj[other]) == 1:
            leaves.append(other)
    return flow


def exact_ot(D, a, b, max_cells: int = EXACT_MAX_CELLS):
    """Exact unregularized OT by the transportation simplex (MODI pricing).

    Entering cells follow Bland's rule (first negative reduced cost in
    row-major order); supplies are epsilon-perturbed so no pivot is
    degenerate, and the final basis is re-solved with the original marginals.
    Returns ``(plan, cost)``.
    """
    D = _check_cost(D)
    n, m = D.shape
    if n * m > max_cells:
        raise InstanceTooLarge(f"{n}x{m} instance exceeds the {max_cells}-cell cap")
    a = _check_marginal(a, n, "row marginal")
    b = _check_marginal(b, m, "column marginal")
    b = b * (a.sum() / b.sum())

    eps = 1e-9 * min(a.min(), b.min()) / (n + 1)
    supply = a + eps
    demand = b.copy()
    demand[-1] += n * eps
    flow, basis = _northwest_corner(supply, demand)

    scale = max(1.0, np.abs(D).max())
    for _ in range(50 * n * m + 100):
        u, v = _duals(D, basis, n, m)
        reduced = D - u[:, None] - v[None, :]
        in_basis = np.zeros((n, m), dtype=bool)
        for cell in basis:
            in_basis[cell] = True
        candidates = np.flatnonzero((reduced < -1e-12 * scale).ravel() & ~in_basis.ravel())
        if candidates.size == 0:
            break
        ei, ej = divmod(int(candidates[0]), m)
        path = _tree_path(basis, n, ei, n + ej)  # col ej ... row ei
        cycle = [(ei, ej)]
        for p, q in zip(path[:-1], path[1:]):
            cycle.append((q, p - n) if q < n else (p, q - n))
        minus = cycle[1::2]
        theta = min(flow[c] for c in minus)
        tied = [c for c in minus if flow[c] <= theta + 1e-15]
        leaving = min(tied, key=lambda c: c[0] * m + c[1])
        for k, c in enumerate(cycle):
            flow[c] += theta if k % 2 == 0 else -theta
        flow[leaving] = 0.0
        basis.remove(leaving)
        basis.append((ei, ej))
    else:  # pragma: no cover - Bland's rule terminates
        raise RuntimeError("transportation simplex did not terminate")

    plan = _basis_flows(basis, a, b)
    plan[(plan < 0) & (plan > -1e-12)] = 0.0
    return plan, float((plan * D).sum())
