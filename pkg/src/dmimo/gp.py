"""A small geometric-programming layer.

Monomials are coeff * prod v_i^{e_i} with coeff > 0; a posynomial is a sum
of monomials. Problems maximize a monomial objective subject to posynomial
constraints g(v) <= 1. Solving log-transforms the variables (x = log v),
which turns the objective affine and each constraint into log-sum-exp <= 0,
and hands the smooth convex program to SLSQP.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize


class GpError(RuntimeError):
    pass


class GpInfeasibleError(GpError):
    pass


class GpUnboundedError(GpError):
    pass


@dataclass(frozen=True)
class Monomial:
    coeff: float
    exponents: dict

    def __post_init__(self):
        if self.coeff <= 0:
            raise ValueError("monomial coefficient must be positive")

    def value(self, assignment):
        v = self.coeff
        for name, e in self.exponents.items():
            v *= assignment[name] ** e
        return v


def posynomial_value(terms, assignment):
    return sum(t.value(assignment) for t in terms)


def condense(terms, anchor):
    """AM-GM condensation of a posynomial into a monomial, tight at anchor.

    g(v) = sum u_t(v) >= prod (u_t(v) / eps_t)^{eps_t}, eps_t = u_t(anchor)/g(anchor).
    """
    values = np.array([t.value(anchor) for t in terms])
    total = values.sum()
    if total <= 0:
        raise ValueError("posynomial must be positive at the anchor")
    eps = values / total
    coeff = 1.0
    exponents = {}
    for t, e in zip(terms, eps):
        if e <= 0:
            continue
        coeff *= (t.coeff / e) ** e
        for name, p in t.exponents.items():
            exponents[name] = exponents.get(name, 0.0) + e * p
    return Monomial(coeff=coeff, exponents=exponents)


def divide(terms, mono):
    """Posynomial divided by a monomial (still a posynomial)."""
    out = []
    for t in terms:
        exps = dict(t.exponents)
        for name, p in mono.exponents.items():
            exps[name] = exps.get(name, 0.0) - p
            if exps[name] == 0.0:
                del exps[name]
        out.append(Monomial(coeff=t.coeff / mono.coeff, exponents=exps))
    return out


@dataclass
class GpProblem:
    """Maximize `objective` subject to posynomial constraints <= 1."""

    objective: Monomial
    constraints: list = field(default_factory=list)

    def add(self, terms):
        self.constraints.append(list(terms))

    def variables(self):
        names = set(self.objective.exponents)
        for g in self.constraints:
            for t in g:
                names |= set(t.exponents)
        return sorted(names)


@dataclass
class GpSolution:
    values: dict
    objective: float
    kkt_residual: float
    max_violation: float
    iterations: int


def _build_matrices(problem, names):
    idx = {n: i for i, n in enumerate(names)}
    cons = []
    for g in problem.constraints:
        logs = np.array([np.log(t.coeff) for t in g])
        E = np.zeros((len(g), len(names)))
        for r, t in enumerate(g):
            for n, p in t.exponents.items():
                E[r, idx[n]] = p
        cons.append((logs, E))
    obj = np.zeros(len(names))
    for n, p in problem.objective.exponents.items():
        obj[idx[n]] = p
    return obj, cons


def solve_gp(problem, start=None, tol=1e-9, max_iter=300):
    """Solve in the log domain. Returns a GpSolution; raises
    GpInfeasibleError / GpUnboundedError on detection.
    """
    names = problem.variables()
    if not names:
        return GpSolution(values={}, objective=problem.objective.coeff,
                          kkt_residual=0.0, max_violation=0.0, iterations=0)
    obj_vec, cons = _build_matrices(problem, names)
    n = len(names)

    if start is not None:
        x0 = np.array([np.log(start.get(nm, 1.0)) for nm in names])
    else:
        x0 = np.zeros(n)

    def con_val(logs_E, x):
        logs, E = logs_E
        z = logs + E @ x
        zmax = z.max()
        return zmax + np.log(np.exp(z - zmax).sum())  # lse(z) <= 0

    def con_grad(logs_E, x):
        logs, E = logs_E
        z = logs + E @ x
        w = np.exp(z - z.max())
        w /= w.sum()
        return w @ E

    constraints = [
        {
            "type": "ineq",
            "fun": (lambda x, c=c: -con_val(c, x)),
            "jac": (lambda x, c=c: -con_grad(c, x)),
        }
        for c in cons
    ]
    res = minimize(
        lambda x: -obj_vec @ x, x0, jac=lambda x: -obj_vec,
        method="SLSQP", constraints=constraints,
        options={"maxiter": max_iter, "ftol": 1e-14},
    )
    x = res.x
    if not np.all(np.isfinite(x)) or np.abs(x).max() > 80.0:
        raise GpUnboundedError("iterates diverged; problem likely unbounded")
    viol = max((con_val(c, x) for c in cons), default=0.0)
    if viol > 1e-6:
        raise GpInfeasibleError(
            f"no feasible point found (max log violation {viol:.2e}, "
            f"status {res.status}: {res.message})"
        )

    # KKT residual: least-squares multipliers over near-active constraints
    grads, active = [], []
    for c in cons:
        v = con_val(c, x)
        if v > -1e-7:
            active.append(c)
            grads.append(con_grad(c, x))
    if grads:
        G = np.array(grads).T
        lam, *_ = np.linalg.lstsq(G, obj_vec, rcond=None)
        lam = np.clip(lam, 0.0, None)
        kkt = np.linalg.norm(obj_vec - G @ lam)
    else:
        kkt = np.linalg.norm(obj_vec)

    values = {nm: float(np.exp(xi)) for nm, xi in zip(names, x)}
    return GpSolution(
        values=values,
        objective=problem.objective.value(values),
        kkt_residual=float(kkt),
        max_violation=float(max(
            (posynomial_value(g, values) - 1.0 for g in problem.constraints),
            default=0.0,
        )),
        iterations=int(res.nit),
    )
