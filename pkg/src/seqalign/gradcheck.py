"""Finite-difference validation of backpropagated gradients.

Compares analytic gradients against central differences computed from the
same scalar-valued forward function. The relative error metric
``|analytic - numeric| / max(1, |numeric|)`` keeps tiny gradients from
blowing up the ratio.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .store import ParameterStore
from .tensor import backward, no_grad


@dataclass
class ElementCheck:
    param: str
    index: tuple
    analytic: float
    numeric: float
    rel_error: float


@dataclass
class GradCheckReport:
    tolerance: float
    step: float
    checked: int = 0
    failures: list[ElementCheck] = field(default_factory=list)
    worst: list[ElementCheck] = field(default_factory=list)

    @property
    def max_rel_error(self) -> float:
        return max((e.rel_error for e in self.worst), default=0.0)

    @property
    def passed(self) -> bool:
        return not self.failures

    def summary(self) -> str:
        status = "pass" if self.passed else "FAIL"
        lines = [
            f"grad check {status}: {self.checked} elements, "
            f"max rel error {self.max_rel_error:.3e} (tol {self.tolerance:.1e})"
        ]
        for e in self.worst[:5]:
            lines.append(
                f"  {e.param}{list(e.index)}: analytic={e.analytic:+.6e} "
                f"numeric={e.numeric:+.6e} rel={e.rel_error:.3e}"
            )
        return "\n".join(lines)


def grad_check(
    f,
    store: ParameterStore,
    tolerance: float = 1e-3,
    step: float = 1e-3,
    max_elements_per_param: int | None = None,
    rng: np.random.Generator | None = None,
    keep_worst: int = 10,
    oracle_store: ParameterStore | None = None,
) -> GradCheckReport:
    """Check d f(store) / d theta for every (or a sampled subset of) element.

    ``f`` must be a deterministic function of the store it is handed that
    builds a fresh graph and returns a scalar Tensor. The perturbation
    actually applied is measured after rounding to the parameter dtype, so
    float32 parameters are checked against the exactly-representable step.

    ``oracle_store`` (same parameter names and values, typically
    ``store.copy(np.float64)``) moves the difference quotient to a higher
    precision: deep float32 graphs carry enough rounding noise that
    dividing by 2*step would otherwise drown the signal being checked.
    """
    if rng is None:
        rng = np.random.default_rng(0)

    store.zero_grad()
    loss = f(store)
    backward(loss)
    analytic = {
        name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        for name, p in store.params.items()
    }
    store.zero_grad()
    fd_store = oracle_store if oracle_store is not None else store

    report = GradCheckReport(tolerance=tolerance, step=step)
    checks: list[ElementCheck] = []
    for name, p in store.params.items():
        flat_indices = np.arange(p.data.size)
        if max_elements_per_param is not None and p.data.size > max_elements_per_param:
            flat_indices = rng.choice(p.data.size, size=max_elements_per_param, replace=False)
            flat_indices.sort()
        flat = fd_store.params[name].data.reshape(-1)
        for fi in flat_indices:
            fi = int(fi)
            x0 = flat[fi]
            flat[fi] = x0 + step
            hi = float(flat[fi])
            with no_grad():
                f_plus = float(f(fd_store).item())
            flat[fi] = x0 - step
            lo = float(flat[fi])
            with no_grad():
                f_minus = float(f(fd_store).item())
            flat[fi] = x0
            numeric = (f_plus - f_minus) / (hi - lo)
            a = float(analytic[name].reshape(-1)[fi])
            rel = abs(a - numeric) / max(1.0, abs(numeric))
            check = ElementCheck(
                param=name,
                index=tuple(int(v) for v in np.unravel_index(fi, p.data.shape)),
                analytic=a,
                numeric=numeric,
                rel_error=rel,
            )
            checks.append(check)
            report.checked += 1
            if rel > tolerance:
                report.failures.append(check)

    checks.sort(key=lambda e: e.rel_error, reverse=True)
    report.worst = checks[:keep_worst]
    report.failures.sort(key=lambda e: e.rel_error, reverse=True)
    return report
