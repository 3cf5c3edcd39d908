"""Trajectory functionals: mass, moments, tails, duality, budgets, energy.

Every time integral is a trapezoidal quadrature on the stored sample
cadence, so each reported quantity is a discretization of the
corresponding exact-time functional; tolerances on the checks absorb the
quadrature error.  All species reductions use compensated summation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import grid as gridmod
from . import reaction
from .errors import DomainError

MASS_REL_TOL = 1e-10
MOMENT0_REL_TOL = 1e-10
ENERGY_SLACK_REL_TOL = 1e-3
TAIL_ENVELOPE_FACTOR = 2.0


def _species_integrals(grid, F):
    return np.array([gridmod.integrate(grid, F[i]) for i in range(F.shape[0])])


def total_mass(grid, F):
    """Weighted mass  sum_i i * integral(f_i)."""
    ints = _species_integrals(grid, F)
    return math.fsum(float((i + 1) * ints[i]) for i in range(F.shape[0]))


def moment0(grid, F):
    """Total particle number  sum_i integral(f_i)."""
    return math.fsum(float(v) for v in _species_integrals(grid, F))


def tail_mass(grid, F, M):
    """Mass carried by sizes above ``M``: sum_{i>M} i * integral(f_i)."""
    n = F.shape[0]
    if M < 0:
        raise DomainError("tail level must be nonnegative")
    if M >= n:
        return 0.0
    ints = _species_integrals(grid, F)
    return math.fsum(float((i + 1) * ints[i]) for i in range(M, n))


def tail_envelope_exponential(M):
    """Analytic tail of the unit exponential spectrum: sum_{i>M} i e^{-i}.

    Bounded by (M+1) e^{-M} / (1 - e^{-1})**2, which is what this returns.
    """
    return (M + 1.0) * math.exp(-float(M)) / (1.0 - math.exp(-1.0)) ** 2


def _trapezoid_cumulative(times, values):
    """Cumulative trapezoid of the sampled integrand; robust to a short
    final interval."""
    out = [0.0]
    for k in range(1, len(times)):
        dt = times[k] - times[k - 1]
        out.append(out[-1] + 0.5 * dt * (values[k] + values[k - 1]))
    return out


@dataclass
class DualityReport:
    D: float
    R: float
    ratio: float
    series: list[float]


def duality_functional(traj, ks):
    """Quadrature of  integral (sum i d_i f_i)(sum i f_i) dx  against the
    reference bound  R = (sup_i d_i) * ||sum i f_i(0)||_L2**2."""
    grid = traj.grid
    n = traj.fields[0].shape[0]
    i1 = np.arange(1, n + 1, dtype=float)
    wid = (i1 * ks.d).reshape((n,) + (1,) * grid.dim)
    wi = i1.reshape((n,) + (1,) * grid.dim)

    vals = []
    for F in traj.fields:
        u = np.sum(wid * F, axis=0)
        v = np.sum(wi * F, axis=0)
        vals.append(gridmod.integrate(grid, u * v))
    series = _trapezoid_cumulative(traj.times, vals)

    rho0 = np.sum(wi * traj.fields[0], axis=0)
    R = float(np.max(ks.d)) * gridmod.integrate(grid, rho0 * rho0)
    D = series[-1]
    ratio = 0.0 if D == 0.0 else (math.inf if R == 0.0 else D / R)
    return DualityReport(D=D, R=R, ratio=ratio, series=series)


@dataclass
class BudgetReport:
    total: float
    series: list[float]
    per_species: np.ndarray


def reaction_budget(traj, ks, eps, q_samples=None):
    """Accumulated weighted reaction throughput sum_i ||Q_i / d_i||_L1."""
    grid = traj.grid
    n = traj.fields[0].shape[0]
    inv_d = 1.0 / ks.d
    if q_samples is None:
        q_samples = [reaction.q_field(F, ks, eps) for F in traj.fields]
    per_t = []
    for Q in q_samples:
        per_t.append(np.array([
            inv_d[i] * gridmod.integrate(grid, np.abs(Q[i])) for i in range(n)
        ]))
    series = _trapezoid_cumulative(traj.times, [math.fsum(map(float, v)) for v in per_t])
    per_species = np.zeros(n)
    for k in range(1, len(traj.times)):
        dt = traj.times[k] - traj.times[k - 1]
        per_species += 0.5 * dt * (per_t[k] + per_t[k - 1])
    return BudgetReport(total=series[-1], series=series, per_species=per_species)


@dataclass
class EnergyReport:
    species: int
    level: float
    lhs: float
    rhs: float
    slack: float
    slack_series: list[float]


def truncation_energy_check(traj, ks, species, level, eps, q_samples=None):
    """Level-truncated energy inequality for one species.

    LHS is ``d_i`` times the quadrature of the masked Dirichlet energy
    (a face counts only when both adjacent cells sit within the level, a
    conservative under-approximation); RHS is
    ``level * (||Q_i||_L1((0,t)xOmega) + ||f_i(0)||_L1)``.
    """
    grid = traj.grid
    i0 = species - 1
    if not 1 <= species <= traj.fields[0].shape[0]:
        raise DomainError(f"species {species} out of range")
    if level <= 0:
        raise DomainError("truncation level must be positive")
    d_i = float(ks.d[i0])
    if q_samples is None:
        q_samples = [reaction.q_field(F, ks, eps) for F in traj.fields]

    grads = []
    qnorm = []
    for F, Q in zip(traj.fields, q_samples):
        u = F[i0]
        mask = np.abs(u) <= level
        grads.append(d_i * gridmod.gradient_sq_integral(grid, u, mask=mask))
        qnorm.append(gridmod.integrate(grid, np.abs(Q[i0])))

    lhs_series = _trapezoid_cumulative(traj.times, grads)
    q_l1_series = _trapezoid_cumulative(traj.times, qnorm)
    f0_l1 = gridmod.integrate(grid, traj.fields[0][i0])
    slack_series = [
        level * (q_l1_series[k] + f0_l1) - lhs_series[k]
        for k in range(len(lhs_series))
    ]
    lhs = lhs_series[-1]
    rhs = level * (q_l1_series[-1] + f0_l1)
    return EnergyReport(species=species, level=float(level), lhs=lhs, rhs=rhs,
                        slack=rhs - lhs, slack_series=slack_series)


@dataclass
class LinfReport:
    sup: float
    eps: float
    ratio: float  # sup / (1/eps) = sup * eps; zero when eps == 0


def linf_bound_check(traj, eps):
    sup = max(float(np.max(F)) if F.size else 0.0 for F in traj.fields)
    return LinfReport(sup=sup, eps=eps, ratio=sup * eps)


@dataclass
class MonitorReport:
    times: list[float]
    mass: list[float]
    moment0: list[float]
    minval: list[float]
    maxval: list[float]
    tails: dict[int, list[float]]
    duality: DualityReport
    budget: BudgetReport
    energy: list[EnergyReport]
    linf: LinfReport
    invariants: dict[str, dict]

    @property
    def all_pass(self):
        return all(entry["pass"] for entry in self.invariants.values())


def compute_monitors(traj, ks, eps=0.0, tail_levels=(8, 16, 24),
                     energy_specs=(), envelope_family=None,
                     mass_rel_tol=MASS_REL_TOL):
    """Evaluate every monitor over a trajectory and audit the invariants.

    ``energy_specs`` is a sequence of ``(species, level)`` pairs;
    ``envelope_family="exponential"`` additionally compares final tails
    against the analytic exponential envelope.
    """
    grid = traj.grid
    n = traj.fields[0].shape[0]
    tail_levels = tuple(int(M) for M in tail_levels)

    mass = [total_mass(grid, F) for F in traj.fields]
    mom0 = [moment0(grid, F) for F in traj.fields]
    minv = [float(np.min(F)) for F in traj.fields]
    maxv = [float(np.max(F)) for F in traj.fields]
    tails = {M: [tail_mass(grid, F, M) for F in traj.fields] for M in tail_levels}

    q_samples = [reaction.q_field(F, ks, eps) for F in traj.fields]

    dual = duality_functional(traj, ks)
    budget = reaction_budget(traj, ks, eps, q_samples=q_samples)
    energy = [
        truncation_energy_check(traj, ks, sp, lvl, eps, q_samples=q_samples)
        for sp, lvl in energy_specs
    ]
    linf = linf_bound_check(traj, eps)

    invariants = {}

    drift = max(abs(m - mass[0]) for m in mass)
    tol = mass_rel_tol * max(1.0, abs(mass[0]))
    invariants["mass_conservation"] = {
        "pass": bool(drift <= tol), "value": drift, "tolerance": tol,
        "detail": "max |M(t) - M(0)| over the sampled trajectory",
    }

    worst_dec = min(
        (mom0[k + 1] - mom0[k] for k in range(len(mom0) - 1)), default=0.0
    )
    tol0 = MOMENT0_REL_TOL * max(1.0, abs(mom0[0]))
    invariants["moment0_nondecreasing"] = {
        "pass": bool(worst_dec >= -tol0), "value": worst_dec, "tolerance": tol0,
        "detail": "most negative increment of the particle count",
    }

    monotone = True
    for k in range(len(traj.times)):
        vals = [tails[M][k] for M in tail_levels]
        if any(vals[a] < vals[a + 1] - 1e-15 * max(1.0, abs(vals[a]))
               for a in range(len(vals) - 1)):
            monotone = False
    invariants["tail_monotone_in_level"] = {
        "pass": bool(monotone), "value": monotone, "tolerance": 0.0,
        "detail": "tail mass nonincreasing in the tail level at every sample",
    }

    if envelope_family == "exponential":
        worst = 0.0
        ok = True
        for M in tail_levels:
            env = TAIL_ENVELOPE_FACTOR * tail_envelope_exponential(M)
            final = tails[M][-1]
            worst = max(worst, final - env)
            if final > env:
                ok = False
        invariants["tail_envelope"] = {
            "pass": bool(ok), "value": worst, "tolerance": 0.0,
            "detail": f"final tails vs {TAIL_ENVELOPE_FACTOR} x analytic exponential envelope",
        }

    for rep in energy:
        tol_e = ENERGY_SLACK_REL_TOL * max(abs(rep.rhs), 1e-300)
        invariants[f"energy_slack@({rep.species},{rep.level:g})"] = {
            "pass": bool(rep.slack >= -tol_e), "value": rep.slack, "tolerance": tol_e,
            "detail": "RHS - LHS of the level-truncated energy inequality",
        }

    nonneg = min(minv)
    invariants["nonnegativity"] = {
        "pass": bool(nonneg >= -1e-12), "value": nonneg, "tolerance": 1e-12,
        "detail": "minimum field value over the sampled trajectory",
    }

    return MonitorReport(times=list(traj.times), mass=mass, moment0=mom0,
                         minval=minv, maxval=maxv, tails=tails, duality=dual,
                         budget=budget, energy=energy, linf=linf,
                         invariants=invariants)


# -- persistence -----------------------------------------------------------


def write_monitors_csv(path, report):
    """Column layout: t, M, moment0, min, max, tail@<M>..., D_cum, B_cum,
    energy_slack@(i,level)...  (quoted where a name contains a comma)."""
    import csv

    headers = ["t", "M", "moment0", "min", "max"]
    headers += [f"tail@{M}" for M in report.tails]
    headers += ["D_cum", "B_cum"]
    headers += [f"energy_slack@({rep.species},{rep.level:g})" for rep in report.energy]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(headers)
        for k, t in enumerate(report.times):
            row = [repr(t), repr(report.mass[k]), repr(report.moment0[k]),
                   repr(report.minval[k]), repr(report.maxval[k])]
            row += [repr(report.tails[M][k]) for M in report.tails]
            row += [repr(report.duality.series[k]), repr(report.budget.series[k])]
            row += [repr(rep.slack_series[k]) for rep in report.energy]
            w.writerow(row)


def summary_dict(report):
    return {
        "final": {
            "t": report.times[-1],
            "mass": report.mass[-1],
            "moment0": report.moment0[-1],
            "min": report.minval[-1],
            "max": report.maxval[-1],
            "tails": {str(M): s[-1] for M, s in report.tails.items()},
            "duality": {"D": report.duality.D, "R": report.duality.R,
                        "ratio": report.duality.ratio},
            "budget": report.budget.total,
            "linf": {"sup": report.linf.sup, "eps": report.linf.eps,
                     "ratio": report.linf.ratio},
            "energy": [
                {"species": r.species, "level": r.level, "lhs": r.lhs,
                 "rhs": r.rhs, "slack": r.slack} for r in report.energy
            ],
        },
        "invariants": report.invariants,
        "all_pass": report.all_pass,
    }


def write_summary_json(path, report, extra=None):
    """Deterministic (sorted, fixed-indent) JSON summary of a run."""
    doc = summary_dict(report)
    if extra:
        doc.update(extra)
    with open(path, "w", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
