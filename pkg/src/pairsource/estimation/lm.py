"""Damped Gauss-Newton (Levenberg-Marquardt) least squares with bounds."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConvergenceWarning, DegenerateDesignError

MODEL_VERSION = "pairsource-models-1"


@dataclass
class FitResult:
    names: list
    values: np.ndarray
    errors: np.ndarray
    covariance: np.ndarray
    chi2: float
    dof: int
    converged: bool
    n_iter: int
    model_version: str = MODEL_VERSION
    derived: dict = field(default_factory=dict)

    @property
    def reduced_chi2(self):
        return self.chi2 / self.dof if self.dof > 0 else float("nan")

    def __getitem__(self, name):
        if name in self.derived:
            return self.derived[name][0]
        return float(self.values[self.names.index(name)])

    def error(self, name):
        if name in self.derived:
            return self.derived[name][1]
        return float(self.errors[self.names.index(name)])

    def to_dict(self):
        return {
            "model_version": self.model_version,
            "parameters": {n: {"value": float(v), "error": float(e)}
                           for n, v, e in zip(self.names, self.values, self.errors)},
            "derived": {k: {"value": float(v), "error": float(e)} for k, (v, e) in self.derived.items()},
            "covariance": np.asarray(self.covariance, dtype=float).tolist(),
            "chi2": float(self.chi2), "dof": int(self.dof),
            "converged": bool(self.converged), "n_iter": int(self.n_iter),
        }

    def to_json(self, path=None, **extra):
        doc = {**extra, **self.to_dict()}
        text = json.dumps(doc, indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        return text


def _jacobian(fun, x, r0, scale, lower, upper):
    J = np.empty((r0.size, x.size))
    for k in range(x.size):
        h = 1e-7 * max(abs(x[k]), scale[k])
        xp = x.copy()
        if x[k] + h > upper[k]:
            h = -h
        xp[k] += h
        J[:, k] = (fun(xp) - r0) / h
    return J


def _check_design(JtJ, names):
    d = np.sqrt(np.diag(JtJ))
    if np.any(d == 0) or not np.all(np.isfinite(JtJ)):
        bad = [n for n, v in zip(names, d) if v == 0]
        raise DegenerateDesignError(f"data carry no information on {bad or 'some parameters'}")
    C = JtJ / np.outer(d, d)
    if np.linalg.cond(C) > 1e13:
        raise DegenerateDesignError("normal equations are singular: parameters are not separately identifiable")
    return d


def levenberg_marquardt(fun, x0, names, lower=None, upper=None, scale=None,
                        xtol=1e-8, max_iter=200, warn=True) -> FitResult:
    """Minimize ``sum(fun(x)**2)`` where `fun` returns weighted residuals.

    Steps are accepted when chi2 decreases. The fit has converged when the
    largest step relative to ``|x| + scale`` falls below `xtol`, or when no
    step can lower chi2 any further. Parameters are clipped to the bounds.
    The covariance is the inverse of J^T J at the solution.
    """
    x = np.array(x0, dtype=float)
    n = x.size
    lower = np.full(n, -np.inf) if lower is None else np.asarray(lower, dtype=float)
    upper = np.full(n, np.inf) if upper is None else np.asarray(upper, dtype=float)
    scale = np.where(x != 0, np.abs(x), 1.0) if scale is None else np.asarray(scale, dtype=float)
    x = np.clip(x, lower, upper)

    r = fun(x)
    chi2 = float(r @ r)
    lam = 1e-3
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        J = _jacobian(fun, x, r, scale, lower, upper)
        JtJ = J.T @ J
        g = J.T @ r
        d = _check_design(JtJ, names)
        improved = False
        while lam < 1e16:
            A = JtJ + lam * np.diag(d * d)
            step = -np.linalg.solve(A, g)
            x_new = np.clip(x + step, lower, upper)
            r_new = fun(x_new)
            chi2_new = float(r_new @ r_new)
            if np.isfinite(chi2_new) and chi2_new <= chi2:
                improved = True
                break
            lam *= 10.0
        if not improved:
            converged = True
            break
        rel = np.max(np.abs(x_new - x) / (np.abs(x) + scale))
        x, r, chi2 = x_new, r_new, chi2_new
        lam = max(lam / 10.0, 1e-12)
        if rel < xtol:
            converged = True
            break

    J = _jacobian(fun, x, r, scale, lower, upper)
    JtJ = J.T @ J
    _check_design(JtJ, names)
    cov = np.linalg.inv(JtJ)
    cov = 0.5 * (cov + cov.T)
    if not converged and warn:
        warnings.warn(f"fit stopped after {max_iter} iterations without converging",
                      ConvergenceWarning, stacklevel=2)
    return FitResult(list(names), x, np.sqrt(np.clip(np.diag(cov), 0, None)), cov,
                     chi2, r.size - n, converged, it)
