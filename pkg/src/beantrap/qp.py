"""Dense convex QP solver for box constraints plus per-group sum equalities.

Solves
    minimize    0.5 * x^T G x + g^T x
    subject to  lower_i <= x_i <= upper_i
                sum_{i in group s} x_i = target_s        (one equality per group)

with a primal active-set method: starting from a feasible point, repeatedly
solve the equality-constrained subproblem on the currently free variables
(direct KKT solve), take the longest feasible step, and clamp/release box
constraints based on their Lagrange-multiplier signs.  G only needs to be
positive definite on the subspace of zero group sums, which is what the
screened-current energy matrix provides.

This is the inner engine of the critical-state stepper; variables are element
current changes (A), groups are wires, and targets are transport changes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SolverError


@dataclass
class QPReport:
    """Optimality diagnostics of an accepted solution.  Stationarity and sign
    entries are normalized by the gradient scale; equality and box entries are
    in solution units."""

    kkt_residual: float = np.inf
    stationarity: float = np.inf
    sign_violation: float = np.inf
    eq_residual: float = np.inf
    box_violation: float = np.inf
    objective: float = np.nan
    objective_start: float = np.nan
    n_iterations: int = 0
    regularized: bool = False


@dataclass
class QPResult:
    x: np.ndarray
    mu: np.ndarray                    # per-group equality multipliers
    clamp: np.ndarray                 # int8: -1 at lower, +1 at upper, 0 free
    report: QPReport = field(default_factory=QPReport)


def feasible_start(lower, upper, groups, targets):
    """A box-feasible point with exact group sums, built by clipping zero into
    the box and spreading each group's remaining deficit over the elements'
    headroom.  Raises ValueError when a target exceeds the group's reachable
    sum (the caller turns that into a transport feasibility error)."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    x = np.clip(0.0, lower, upper)
    for s, t in enumerate(np.asarray(targets, dtype=float)):
        idx = np.flatnonzero(groups == s)
        deficit = t - x[idx].sum()
        if deficit == 0.0:
            continue
        head = (upper[idx] - x[idx]) if deficit > 0 else (x[idx] - lower[idx])
        total = head.sum()
        if total < abs(deficit) * (1 - 1e-12):
            raise ValueError(
                f"group {s}: target {t!r} outside reachable sum range")
        frac = min(1.0, abs(deficit) / total) if total > 0 else 0.0
        x[idx] += np.sign(deficit) * frac * head
    return x


def solve_box_equality_qp(G, g, lower, upper, groups, targets,
                          max_iterations: int | None = None) -> QPResult:
    G = np.asarray(G, dtype=float)
    g = np.asarray(g, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    groups = np.asarray(groups, dtype=np.intp)
    targets = np.asarray(targets, dtype=float)
    n = g.size
    n_groups = targets.size
    if max_iterations is None:
        max_iterations = 100 * n + 200

    x = feasible_start(lower, upper, groups, targets)
    objective_start = _objective(G, g, x)

    grad0 = G @ x + g
    grad_scale = max(np.abs(grad0).max(initial=0.0),
                     np.abs(g).max(initial=0.0), 1e-300)
    release_tol = 1e-10 * grad_scale

    clamp = np.zeros(n, dtype=np.int8)
    clamp[x >= upper] = 1
    clamp[x <= lower] = -1
    clamp[upper == lower] = 1          # pinned variables stay clamped

    group_members = [np.flatnonzero(groups == s) for s in range(n_groups)]
    regularized = False
    mu = np.zeros(n_groups)

    converged = False
    iteration = 0
    while iteration < max_iterations:
        iteration += 1
        free = np.flatnonzero(clamp == 0)
        r = G @ x + g

        p_free, mu, reg = _kkt_direction(G, r, x, groups, targets, free,
                                         n_groups, group_members)
        regularized = regularized or reg

        p_scale = max(np.abs(x).max(initial=0.0), 1.0)
        if free.size == 0 or np.abs(p_free).max(initial=0.0) <= 1e-14 * p_scale:
            # Stationary on the working set: check clamp multiplier signs.
            worst, worst_idx = _worst_sign_violation(r, mu, clamp, groups)
            if worst <= release_tol:
                converged = True
                break
            clamp[worst_idx] = 0
            continue

        # Longest feasible step along p before a new bound blocks it.
        alpha = 1.0
        blocking = -1
        block_side = 0
        for k, i in enumerate(free):
            pi = p_free[k]
            if pi > 1e-300:
                a = (upper[i] - x[i]) / pi
                side = 1
            elif pi < -1e-300:
                a = (lower[i] - x[i]) / pi
                side = -1
            else:
                continue
            if a < alpha:
                alpha = max(a, 0.0)
                blocking = i
                block_side = side
        x[free] += alpha * p_free
        if blocking >= 0 and alpha < 1.0:
            clamp[blocking] = block_side
            x[blocking] = upper[blocking] if block_side > 0 else lower[blocking]

    # Snap clamped variables onto their bounds exactly.
    at_up = clamp == 1
    at_lo = clamp == -1
    x[at_up] = upper[at_up]
    x[at_lo] = lower[at_lo]

    report = _final_report(G, g, x, mu, clamp, groups, targets, lower, upper,
                           grad_scale, objective_start, iteration, regularized)
    if not converged:
        raise SolverError(
            f"QP did not converge in {max_iterations} iterations "
            f"(kkt_residual={report.kkt_residual:.3e})", report)
    return QPResult(x=x, mu=mu, clamp=clamp, report=report)


def _objective(G, g, x):
    return 0.5 * float(x @ G @ x) + float(g @ x)


def _kkt_direction(G, r, x, groups, targets, free, n_groups, group_members):
    """Solve the equality-constrained Newton step on the free variables.

    Layout: [G_FF  A^T] [p ]   [-r_F]
            [A     0  ] [mu] = [ e  ]
    with one row per group that still has free variables (e is the tiny
    group-sum drift, normally ~1e-16).  Groups with no free variables get
    their multiplier from the admissible-interval midpoint afterwards.
    """
    mu = np.zeros(n_groups)
    if free.size == 0:
        _fill_clamped_mu(mu, r, group_members, range(n_groups))
        return np.zeros(0), mu, False

    live = [s for s in range(n_groups) if np.any(groups[free] == s)]
    na = len(live)
    nf = free.size
    K = np.zeros((nf + na, nf + na))
    K[:nf, :nf] = G[np.ix_(free, free)]
    rhs = np.empty(nf + na)
    rhs[:nf] = -r[free]
    for row, s in enumerate(live):
        mask = groups[free] == s
        K[nf + row, :nf][mask] = 1.0
        K[:nf, nf + row][mask] = 1.0
        rhs[nf + row] = targets[s] - x[group_members[s]].sum()

    reg = False
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        # PD only on the constrained subspace can leave the raw block
        # singular for exotic inputs; a whisper of Tikhonov fixes it.
        reg = True
        eps = 1e-12 * max(np.trace(K[:nf, :nf]) / max(nf, 1), 1e-300)
        K[:nf, :nf] += eps * np.eye(nf)
        try:
            sol = np.linalg.solve(K, rhs)
        except np.linalg.LinAlgError:
            raise SolverError("KKT system singular even after regularization")

    p = sol[:nf]
    for row, s in enumerate(live):
        mu[s] = sol[nf + row]
    dead = [s for s in range(n_groups) if s not in live]
    if dead:
        _fill_clamped_mu(mu, r, group_members, dead)
    return p, mu, reg


def _fill_clamped_mu(mu, r, group_members, which):
    """Multiplier for fully clamped groups: any value in
    [max_i(-r_i) over lower clamps, min_i(-r_i) over upper clamps] satisfies
    the sign conditions; the midpoint of the candidate range is used."""
    for s in which:
        idx = group_members[s]
        if idx.size:
            mu[s] = 0.5 * (np.min(-r[idx]) + np.max(-r[idx]))


def _worst_sign_violation(r, mu, clamp, groups):
    stat = r + mu[groups]
    viol = np.zeros_like(stat)
    up = clamp == 1
    lo = clamp == -1
    viol[up] = np.maximum(stat[up], 0.0)     # at upper bound we need stat <= 0
    viol[lo] = np.maximum(-stat[lo], 0.0)    # at lower bound we need stat >= 0
    if not viol.any():
        return 0.0, -1
    idx = int(np.argmax(viol))
    return float(viol[idx]), idx


def _final_report(G, g, x, mu, clamp, groups, targets, lower, upper,
                  grad_scale, objective_start, n_iterations, regularized):
    r = G @ x + g
    stat = r + mu[groups]
    free = clamp == 0
    stationarity = float(np.abs(stat[free]).max(initial=0.0)) / grad_scale
    sign_violation, _ = _worst_sign_violation(r, mu, clamp, groups)
    sums = np.zeros(targets.size)
    np.add.at(sums, groups, x)
    overshoot = np.maximum(x - upper, 0.0) + np.maximum(lower - x, 0.0)
    return QPReport(
        stationarity=stationarity,
        sign_violation=sign_violation / grad_scale,
        kkt_residual=max(stationarity, sign_violation / grad_scale),
        eq_residual=float(np.abs(sums - targets).max(initial=0.0)),
        box_violation=float(overshoot.max(initial=0.0)),
        objective=_objective(G, g, x),
        objective_start=objective_start,
        n_iterations=int(n_iterations),
        regularized=regularized,
    )
