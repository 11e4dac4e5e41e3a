"""Levenberg-Marquardt least squares with linearized confidence intervals."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..errors import InputError, NotConverged, SingularJacobian

LAMBDA_INIT = 1e-3
LAMBDA_UP = 10.0
LAMBDA_DOWN = 0.3
LAMBDA_MAX = 1e16
DIFF_STEP = 1e-7
FTOL = 1e-10
GTOL = 1e-12
# residual reduced to rounding level relative to the starting point
RTOL = 1e-10
XTOL = 1e-12
MAX_ITER = 200

_KEY_SUFFIX = {"rad/s": "_hz", "1": "", "": "", "F": "_f", "H": "_h", "ohm": "_ohm",
               "rad/s/V^2": "_hz_per_v2", "F/m^2": "_f_per_m2"}


@dataclass
class FitReport:
    """Outcome of a fit.

    ``params`` and ``sigmas`` are in the internal units listed in ``units``
    (angular frequencies in rad/s). :meth:`to_dict` converts to the file
    convention with unit-suffixed keys and ordinary frequencies.
    """

    params: dict[str, float]
    sigmas: dict[str, float]
    residual_norm: float
    converged: bool
    iterations: int
    units: dict[str, str] = field(default_factory=dict)
    reason: str = ""
    history: list[float] = field(default_factory=list)
    covariance: np.ndarray | None = None
    flags: list[str] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> float:
        return self.params[name]

    def sigma(self, name: str) -> float:
        return self.sigmas[name]

    def to_dict(self) -> dict:
        out: dict = {}
        for name, value in self.params.items():
            unit = self.units.get(name, "1")
            scale = 2 * math.pi if unit.startswith("rad/s") else 1.0
            key = name + _KEY_SUFFIX.get(unit, "_" + unit.replace("/", "_per_"))
            out[key] = value / scale
            out[key + "_sigma"] = self.sigmas.get(name, float("nan")) / scale
        out["residual_norm"] = self.residual_norm
        out["converged"] = self.converged
        out["iterations"] = self.iterations
        out["termination"] = self.reason
        if self.flags:
            out["flags"] = list(self.flags)
        for k, v in self.extra.items():
            out[k] = v
        return out


def finite_difference_jacobian(fun: Callable[[np.ndarray], np.ndarray], x: np.ndarray,
                               r0: np.ndarray | None = None, step: float = DIFF_STEP,
                               scale: np.ndarray | None = None) -> np.ndarray:
    """Forward-difference Jacobian.

    The step for parameter ``j`` is ``step * scale[j]``, or
    ``step * max(|x_j|, 1)`` without ``scale``.  Each column is divided by
    the step actually taken after rounding, which matters for parameters
    like an absolute frequency whose step is tiny relative to the value.
    """
    x = np.asarray(x, dtype=float)
    if r0 is None:
        r0 = np.asarray(fun(x), dtype=float).ravel()
    jac = np.empty((r0.size, x.size))
    for j in range(x.size):
        h = step * (scale[j] if scale is not None else max(abs(x[j]), 1.0))
        xp = x.copy()
        xp[j] += h
        h = xp[j] - x[j]
        jac[:, j] = (np.asarray(fun(xp), dtype=float).ravel() - r0) / h
    return jac


def least_squares(
    fun: Callable[[np.ndarray], np.ndarray],
    x0: Sequence[float],
    bounds: tuple[Sequence[float], Sequence[float]] | None = None,
    jac: Callable[[np.ndarray], np.ndarray] | None = None,
    *,
    names: Sequence[str] | None = None,
    units: dict[str, str] | None = None,
    x_scale: Sequence[float] | None = None,
    diff_step: float = DIFF_STEP,
    max_iter: int = MAX_ITER,
    ftol: float = FTOL,
    gtol: float = GTOL,
    scale_covariance: bool = True,
) -> FitReport:
    """Minimize ``sum(fun(x)**2)`` by damped Gauss-Newton iterations.

    The solver works on ``z = (x - x0) / x_scale``; ``x_scale`` defaults to
    ``|x0|`` (1 where ``x0`` is zero), so the forward-difference step is
    ``diff_step`` relative to each parameter's scale.  Damping follows
    Marquardt: ``(J^T J + lam * diag(J^T J)) dz = -J^T r`` with ``lam``
    starting at 1e-3, multiplied by 10 after a rejected step and by 0.3
    after an accepted one.  Trial points are clipped to ``bounds``.

    Terminates when an accepted step lowers the cost by less than ``ftol``
    (relative), the scaled gradient falls below ``gtol``, the residual has
    dropped to rounding level relative to the start, or no step can lower
    the cost any more.

    The covariance is ``(J^T J)^-1`` at the solution, multiplied by the
    residual variance ``|r|^2 / (N - P)`` when ``scale_covariance``.

    Raises
    ------
    InputError
        Non-finite residual at ``x0`` or inconsistent bounds.
    SingularJacobian
        A parameter has no influence on the residual.
    NotConverged
        ``max_iter`` accepted iterations without meeting a criterion.
    """
    x0 = np.array(x0, dtype=float)
    npar = x0.size
    names = list(names) if names is not None else [f"p{i}" for i in range(npar)]
    units = dict(units or {})
    if x_scale is None:
        scale = np.where(x0 != 0, np.abs(x0), 1.0)
    else:
        scale = np.array(x_scale, dtype=float)
        if np.any(scale <= 0):
            raise InputError("x_scale entries must be positive")
    if bounds is None:
        lo_x = np.full(npar, -np.inf)
        hi_x = np.full(npar, np.inf)
    else:
        lo_x = np.broadcast_to(np.asarray(bounds[0], dtype=float), (npar,)).copy()
        hi_x = np.broadcast_to(np.asarray(bounds[1], dtype=float), (npar,)).copy()
    if np.any(lo_x > hi_x) or np.any(x0 < lo_x) or np.any(x0 > hi_x):
        raise InputError("bounds are inconsistent or exclude the initial point")
    lo_z = (lo_x - x0) / scale
    hi_z = (hi_x - x0) / scale

    def to_x(z):
        return x0 + scale * z

    def res(z):
        return np.asarray(fun(to_x(z)), dtype=float).ravel()

    if jac is None:
        def jac_z(z, r):
            return finite_difference_jacobian(fun, to_x(z), r, diff_step, scale) * scale
    else:
        def jac_z(z, r):
            return np.asarray(jac(to_x(z)), dtype=float) * scale

    z = np.zeros(npar)
    r = res(z)
    if not np.all(np.isfinite(r)):
        raise InputError("residual is not finite at the initial point")
    nres = r.size
    cost = float(r @ r)
    cost0 = cost
    J = jac_z(z, r)
    if np.any(np.all(J == 0, axis=0)):
        dead = [names[j] for j in np.flatnonzero(np.all(J == 0, axis=0))]
        raise SingularJacobian(f"residual does not depend on parameter(s) {dead}")

    lam = LAMBDA_INIT
    history = [math.sqrt(cost / nres)]
    converged = False
    reason = ""
    it = 0
    while not converged:
        if cost <= RTOL**2 * cost0:
            converged, reason = True, "residual"
            break
        g = J.T @ r
        colnorm = np.linalg.norm(J, axis=0)
        rnorm = math.sqrt(cost)
        if rnorm == 0 or np.max(np.abs(g) / (colnorm * rnorm)) <= gtol:
            converged, reason = True, "gtol"
            break
        if it >= max_iter:
            break
        A = J.T @ J
        diag = np.diag(A).copy()
        accepted = False
        while lam <= LAMBDA_MAX:
            try:
                step = np.linalg.solve(A + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                lam *= LAMBDA_UP
                continue
            z_new = np.clip(z + step, lo_z, hi_z)
            r_new = res(z_new)
            cost_new = float(r_new @ r_new) if np.all(np.isfinite(r_new)) else math.inf
            if cost_new < cost:
                accepted = True
                break
            if np.max(np.abs(z_new - z) / np.maximum(np.abs(z), 1.0)) <= XTOL:
                break
            lam *= LAMBDA_UP
        if not accepted:
            converged, reason = True, "xtol"
            break
        it += 1
        lam = max(lam * LAMBDA_DOWN, 1e-12)
        drop = (cost - cost_new) / cost
        z, r, cost = z_new, r_new, cost_new
        history.append(math.sqrt(cost / nres))
        J = jac_z(z, r)
        if drop <= ftol:
            converged, reason = True, "ftol"

    x = to_x(z)
    cov = _covariance(J, cost, nres, scale, scale_covariance)
    sig = np.sqrt(np.clip(np.diag(cov), 0, None))
    report = FitReport(
        params={n: float(v) for n, v in zip(names, x)},
        sigmas={n: float(s) for n, s in zip(names, sig)},
        residual_norm=math.sqrt(cost / nres),
        converged=converged,
        iterations=it,
        units=units,
        reason=reason or "max_iter",
        history=history,
        covariance=cov,
        extra={"n_residuals": int(nres)},
    )
    if not converged:
        raise NotConverged(f"no convergence after {max_iter} iterations", report)
    return report


def _covariance(J: np.ndarray, cost: float, nres: int, scale: np.ndarray,
                scale_covariance: bool) -> np.ndarray:
    npar = J.shape[1]
    colnorm = np.linalg.norm(J, axis=0)
    if np.any(colnorm == 0):
        raise SingularJacobian("Jacobian has a zero column at the solution")
    Jn = J / colnorm
    try:
        inv = np.linalg.inv(Jn.T @ Jn)
    except np.linalg.LinAlgError:
        raise SingularJacobian("J^T J is singular at the solution") from None
    cov_z = inv / np.outer(colnorm, colnorm)
    if scale_covariance:
        dof = nres - npar
        var = cost / dof if dof > 0 else math.inf
        with np.errstate(invalid="ignore"):
            cov_z = cov_z * var
        cov_z = np.where(np.isnan(cov_z), math.inf, cov_z)
    return cov_z * np.outer(scale, scale)
