"""Bundled run configurations."""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Scenario:
    name: str
    description: str
    topics: str
    config: str


_INACTIVE = """
[run]
command = verify
seed = 7
checks = residual, subdiff, weak, apriori, martingale
[grid]
T = 1
N = 200
[backend]
kind = lattice
[problem]
name = inactive_interval
[convex.phi]
kind = indicator
lo = -1
hi = 1
[convex.psi]
kind = indicator
lo = -1
hi = 1
[terminal]
kind = clip
lo = -1
hi = 1
[solver]
scheme = penalized_implicit
eps = 1e-2
[checks]
apriori_C = 1.0
martingale_C = 4.0
"""

_BARRIER = """
[run]
command = verify
seed = 11
checks = residual, subdiff, weak, apriori
[grid]
T = 1
N = 200
[problem]
name = drift_against_barrier
[driver.F]
kind = constant
c = -1
[convex.phi]
kind = indicator
lo = 0
hi = inf
[convex.psi]
kind = indicator
lo = 0
hi = inf
[terminal]
kind = constant
c = 0
[solver]
scheme = projected
[checks]
apriori_C = 1.0
"""

_LINEAR = """
[run]
command = oracle
seed = 3
oracle_tol = 1e-2
[grid]
T = 1
N = 200
[problem]
name = linear_bsde
[driver.F]
kind = linear
lam = 0.5
[terminal]
kind = clip
lo = -2
hi = 2
[solver]
scheme = unconstrained
"""

_NEUMANN = """
[run]
command = verify
seed = 5
checks = residual, subdiff, weak, apriori
[grid]
T = 1
N = 200
a_kind = local_time
a_rate = 2.5
a_lo = -0.2
a_hi = 0.2
[problem]
name = mixed_clock_neumann_toy
[driver.F]
kind = linear
lam = -1
[driver.G]
kind = constant
c = 0.3
[convex.phi]
kind = zero
[convex.psi]
kind = indicator
lo = -0.5
hi = 0.5
[terminal]
kind = clip
lo = -0.5
hi = 0.5
[solver]
scheme = penalized_implicit
eps = 1e-3
[checks]
apriori_C = 4.0
n_paths = 5000
"""

_MOLLIFIER = """
[run]
command = verify
seed = 1
checks = mollifier
[grid]
T = 1
N = 4096
a_kind = linear
a_rate = 1
[problem]
name = mollifier_lemma
"""

_YOSIDA = """
[run]
command = props
seed = 0
[problem]
name = yosida_props
[convex.phi]
kind = indicator
lo = -1
hi = 1
[convex.psi]
kind = abs
lam = 1
[props]
eps = 1, 0.1, 0.01
n_probes = 201
"""

SCENARIOS = {s.name: s for s in [
    Scenario("inactive_interval", "interval constraint never binds; solution equals the conditional expectation",
             "interval indicators, martingale representation, a-priori isometry", _INACTIVE),
    Scenario("drift_against_barrier", "constant drift pushes Y into a one-sided barrier; U balances it",
             "reflected BSDE as a BSVI, subdifferential inclusion", _BARRIER),
    Scenario("linear_bsde", "unconstrained linear driver checked against the discounted conditional expectation",
             "monotone driver, closed-form linear BSDE", _LINEAR),
    Scenario("mixed_clock_neumann_toy", "band local-time clock with a boundary-type constraint on dA",
             "mixed clock Q = t + A, alpha-weighted driver and penalty", _NEUMANN),
    Scenario("mollifier_lemma", "exponential mollifier along LinearRate(1) for continuous and jump inputs",
             "Stieltjes convolution limit, admissible test semimartingales", _MOLLIFIER),
    Scenario("yosida_props", "the five Moreau-Yosida properties on the configured convex pair",
             "envelope identity, subgradient inclusion, Lipschitz and monotone gradients", _YOSIDA),
]}


def list_scenarios(verbose: bool = False):
    lines = []
    for s in SCENARIOS.values():
        lines.append(f"{s.name:26s} {s.description}")
        if verbose:
            lines.append(f"{'':26s} topics: {s.topics}")
    return "\n".join(lines)
