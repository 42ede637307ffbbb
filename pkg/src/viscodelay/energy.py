"""Standard and augmented energies of modal states (Parseval form)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import DELAYED, validate_schedule


@dataclass(frozen=True)
class EnergySample:
    t: float
    E_S: float
    E: float
    kinetic: float
    potential: float
    memory_term: float
    delay_term: float


def standard_energy(state) -> float:
    """E_S = kinetic + (1 - mu~)/2 |u|_V^2 + 1/2 int mu |A^1/2 eta|^2 ds."""
    plan = state.plan
    kinetic = 0.5 * np.sum(state.v**2)
    potential = 0.5 * plan.elastic * np.sum(plan.lam * state.u**2)
    _, second = state.memory_integrals()
    return float(kinetic + potential + 0.5 * np.sum(plan.lam * second))


def delay_energy(state, schedule=None) -> float:
    """1/2 int_{t - tau}^t |b(s + tau)| |u_t(s)|^2 ds over the delay buffer.

    Each buffer cell takes the coefficient at its midpoint, so the integrand
    vanishes exactly on cells that map into off intervals.
    """
    plan = state.plan
    sched = plan.problem.schedule if schedule is None else validate_schedule(schedule)
    D = plan.delay_steps
    if sched.mode != DELAYED or D == 0:
        return 0.0
    buf = state.delay_buf
    n = state.n
    if schedule is None and n + D <= plan.b_mid.size:
        coef = plan.b_mid[n : n + D]
    else:
        coef = sched.coefficients((n + np.arange(D) + 0.5) * plan.dt)
    sq = np.sum(buf**2, axis=0)
    return float(0.25 * plan.dt * np.sum(np.abs(coef) * (sq[:-1] + sq[1:])))


def full_energy(state, schedule=None) -> float:
    """E = E_S + delay window term."""
    return standard_energy(state) + delay_energy(state, schedule)


def energy_sample(state) -> EnergySample:
    plan = state.plan
    kinetic = 0.5 * float(np.sum(state.v**2))
    potential = 0.5 * plan.elastic * float(np.sum(plan.lam * state.u**2))
    _, second = state.memory_integrals()
    memory = 0.5 * float(np.sum(plan.lam * second))
    es = kinetic + potential + memory
    d = delay_energy(state)
    return EnergySample(state.t, es, es + d, kinetic, potential, memory, d)


def energy_series(trajectory) -> list[EnergySample]:
    e = trajectory.energy
    cols = [e[c] for c in ("E_S", "E", "kinetic", "potential", "memory_term", "delay_term")]
    return [
        EnergySample(float(t), *(float(c[i]) for c in cols))
        for i, t in enumerate(trajectory.times)
    ]
