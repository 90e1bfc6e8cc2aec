"""Brownian stepping, stepsize control, collision/escape detection, trajectories.

The moving particle is tracked in coordinates relative to the fixed particle
at the origin.  A trajectory starts on the b-sphere and ends on the first
detected reaction (distance <= a) or escape (distance >= q).

Two detectors are provided:

``TimeStepped``
    looks only at the end point of every step, so a path that dips into the
    reaction sphere and leaves again within one step goes unnoticed.

``EventTriggered``
    intersects the straight step segment with both spheres and returns the
    exact fractional crossing time.  Endpoint and chord checks alone miss
    the sub-step excursions of the underlying Brownian path, so when a
    random stream is supplied the detector also samples whether the Brownian
    bridge between the two endpoints touched either sphere (flat-boundary
    crossing probability ``exp(-h0*h1/(D*dt))``).
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from . import _numpy_backend as NB
from ._jit import USE_NUMBA
from .errors import InvalidConfig, SingularPotential, StepLimitExceeded
from .model import (AdaptiveStep, DetectorKind, EndState, FixedStep, NamGeometry,
                    SimulatorConfig, TrajectoryResult, Vec3)
from .stochastics import RandomStream


@dataclass(frozen=True)
class ParticleState:
    position: Vec3
    model_time: float = 0.0

    @property
    def distance(self) -> float:
        return math.sqrt(self.position.norm2())


@dataclass(frozen=True)
class StepProposal:
    displacement: Vec3
    dt: float


@dataclass(frozen=True)
class Continue:
    state: ParticleState


@dataclass(frozen=True)
class Reaction:
    hit_time: float
    position: Vec3


@dataclass(frozen=True)
class Escape:
    exit_time: float
    position: Vec3


DetectionOutcome = Continue | Reaction | Escape


def brownian_step(state: ParticleState, dt: float, D: float, stream: RandomStream) -> StepProposal:
    """Free-diffusion displacement, variance ``2*D*dt`` per Cartesian component."""
    sigma = math.sqrt(2.0 * D * dt)
    dx = sigma * stream.next_standard_normal()
    dy = sigma * stream.next_standard_normal()
    dz = sigma * stream.next_standard_normal()
    return StepProposal(Vec3(dx, dy, dz), dt)


def brownian_displacements(stream: RandomStream, n: int, dt: float, D: float) -> np.ndarray:
    """``n`` consecutive :func:`brownian_step` displacements as an (n, 3) array,
    drawn in the same order (x, y, z per step)."""
    return math.sqrt(2.0 * D * dt) * stream.standard_normals(3 * n).reshape(n, 3)


def fixed_stepsize(policy: FixedStep, state: ParticleState | None = None) -> float:
    return policy.dt


def adaptive_stepsize(policy: AdaptiveStep, state: ParticleState, geometry: NamGeometry) -> float:
    """Largest dt whose RMS step sqrt(6*D*dt) stays within a fraction of the
    distance to the nearer boundary, clamped to [dt_min, dt_max]."""
    return K.adaptive_dt(state.distance, geometry.a, geometry.q, geometry.D,
                         policy.dt_max, policy.dt_min, policy.safety_fraction)


def stepsize(policy, state, geometry) -> float:
    if isinstance(policy, AdaptiveStep):
        return adaptive_stepsize(policy, state, geometry)
    return fixed_stepsize(policy, state)


def detect_time_stepped(state: ParticleState, proposal: StepProposal,
                        geometry: NamGeometry) -> DetectionOutcome:
    p = state.position + proposal.displacement
    d = math.sqrt(p.norm2())
    t = state.model_time + proposal.dt
    if d <= geometry.a:
        return Reaction(t, p)
    if d >= geometry.q:
        return Escape(t, p)
    return Continue(ParticleState(p, t))


def detect_event_triggered(state: ParticleState, proposal: StepProposal, geometry: NamGeometry,
                           stream: RandomStream | None = None) -> DetectionOutcome:
    """Exact segment/sphere crossing, plus the Brownian-bridge check when a
    stream is given.

    A zero displacement cannot cross anything; it simply advances the clock.
    """
    p = state.position
    u = proposal.displacement
    a, q = geometry.a, geometry.q
    t0, dt = state.model_time, proposal.dt
    end = p + u
    nd = math.sqrt(end.norm2())
    s_hit = K.entry_fraction(p.x, p.y, p.z, u.x, u.y, u.z, a)
    if nd <= a and s_hit > 1.0:
        s_hit = 1.0
    s_exit = K.exit_fraction(p.x, p.y, p.z, u.x, u.y, u.z, q)
    if nd >= q and s_exit > 1.0:
        s_exit = 1.0
    if s_hit <= 1.0 and s_hit <= s_exit:
        return Reaction(t0 + s_hit * dt, p + u.scale(s_hit))
    if s_exit <= 1.0:
        return Escape(t0 + s_exit * dt, p + u.scale(s_exit))
    if stream is not None:
        d = math.sqrt(p.norm2())
        var = 2.0 * geometry.D * dt
        for boundary, h0, h1 in ((a, d - a, nd - a), (q, q - d, q - nd)):
            lp = K.bridge_log_crossing(h0, h1, var)
            if lp > -K.BRIDGE_CUTOFF and stream.next_uniform() < math.exp(lp):
                frac = h0 / (h0 + h1)
                mid = p + u.scale(frac)
                on_sphere = mid.scale(boundary / math.sqrt(mid.norm2()))
                event = Reaction if boundary == a else Escape
                return event(t0 + dt * frac, on_sphere)
    return Continue(ParticleState(end, t0 + dt))


def apply_drift(proposal: StepProposal, state: ParticleState, pmf, dt: float, D: float) -> StepProposal:
    """Add the deterministic radial drift D*F*dt with F = -dE/dr (E in kT)."""
    if pmf is None or pmf.is_zero:
        return proposal
    r = state.distance
    e = pmf.energy(r)
    dedr = pmf.derivative(r)
    if not (math.isfinite(e) and math.isfinite(dedr)):
        raise SingularPotential(f"potential not finite at r={r}")
    shift = -dedr * D * dt
    p = state.position
    u = proposal.displacement
    moved = Vec3(u.x + shift * p.x / r, u.y + shift * p.y / r, u.z + shift * p.z / r)
    return StepProposal(moved, proposal.dt)


def _pot_args(pmf):
    if pmf is None or pmf.is_zero:
        return K.POT_NONE, 0.0, 0.0
    kernel = getattr(pmf, "kernel_args", None)
    if kernel is None:
        raise InvalidConfig(f"{type(pmf).__name__} has no compiled drift kernel; "
                            "use run_trajectory(..., trace=...) for arbitrary potentials")
    return kernel()


def _kernel_args(geometry: NamGeometry, config: SimulatorConfig, start_radius, pmf, bridge):
    policy = config.stepsize
    adaptive = config.adaptive
    dt_min = policy.dt_min if isinstance(policy, AdaptiveStep) else policy.base_dt
    frac = policy.safety_fraction if isinstance(policy, AdaptiveStep) else 0.0
    pot_kind, pot_q, pot_kappa = _pot_args(pmf)
    r0 = geometry.b if start_radius is None else float(start_radius)
    return (r0, geometry.a, geometry.q, geometry.D, config.detector_kind.code, adaptive,
            policy.base_dt, dt_min, frac, bridge, config.max_steps, pot_kind, pot_q, pot_kappa)


_END = {K.OUT_REACTED: EndState.REACTED, K.OUT_ESCAPED: EndState.ESCAPED}


def run_trajectory(geometry: NamGeometry, config: SimulatorConfig, stream: RandomStream, *,
                   start_radius: float | None = None, pmf=None, trace=None,
                   bridge: bool = True) -> TrajectoryResult:
    """Simulate one trajectory, advancing ``stream``.

    ``start_radius`` overrides the b-sphere start (the direction is still
    uniform).  ``trace`` is a callable receiving one dict per committed step;
    with a trace, or a potential without a compiled kernel, the step loop
    runs in Python on the same arithmetic as the compiled kernel.
    """
    compiled = trace is None and stream.backend == "numba"
    if compiled:
        try:
            args = _kernel_args(geometry, config, start_radius, pmf, bridge)
        except InvalidConfig:
            compiled = False
    if compiled:
        out = np.empty(4)
        K.trajectory_from_sphere(stream.state, stream.spare, stream.code, args[0], *args[1:], out)
        code, steps, t, d = int(out[0]), int(out[1]), float(out[2]), float(out[3])
    else:
        code, steps, t, d = _python_trajectory(geometry, config, stream, start_radius, pmf,
                                               trace, bridge)
    if code == K.OUT_STEP_LIMIT:
        raise StepLimitExceeded(f"trajectory exceeded {config.max_steps} steps")
    return TrajectoryResult(_END[code], steps, t, d)


def _python_trajectory(geometry, config, stream, start_radius, pmf, trace, bridge):
    r0 = geometry.b if start_radius is None else float(start_radius)
    x, y, z = stream.sphere_points(r0, 1)[0]
    state = ParticleState(Vec3(float(x), float(y), float(z)), 0.0)
    d = state.distance
    if trace is not None:
        trace({"step": 0, "time": 0.0, "position": [x, y, z], "distance": d})
    if d <= geometry.a or d >= geometry.q:
        return (K.OUT_REACTED if d <= geometry.a else K.OUT_ESCAPED), 1, 0.0, d
    adaptive = config.adaptive
    event = config.detector_kind is DetectorKind.EVENT_TRIGGERED
    dt = config.stepsize.base_dt
    steps = 0
    while steps < config.max_steps:
        steps += 1
        if adaptive:
            dt = adaptive_stepsize(config.stepsize, state, geometry)
        proposal = brownian_step(state, dt, geometry.D, stream)
        proposal = apply_drift(proposal, state, pmf, dt, geometry.D)
        if event:
            outcome = detect_event_triggered(state, proposal, geometry,
                                             stream if bridge else None)
        else:
            outcome = detect_time_stepped(state, proposal, geometry)
        if isinstance(outcome, Continue):
            state = outcome.state
            if trace is not None:
                p = state.position
                trace({"step": steps, "time": state.model_time,
                       "position": [p.x, p.y, p.z], "distance": state.distance})
            continue
        if isinstance(outcome, Reaction):
            code, t, pos = K.OUT_REACTED, outcome.hit_time, outcome.position
            d = geometry.a if event else math.sqrt(pos.norm2())
        else:
            code, t, pos = K.OUT_ESCAPED, outcome.exit_time, outcome.position
            d = geometry.q if event else math.sqrt(pos.norm2())
        if trace is not None:
            trace({"step": steps, "time": t, "position": [pos.x, pos.y, pos.z], "distance": d,
                   "end_state": _END[code].value})
        return code, steps, t, d
    return K.OUT_STEP_LIMIT, steps, state.model_time, state.distance


@dataclass
class BatchResult:
    """Per-replication outputs of :func:`simulate_batch`, in seed order."""

    outcome: np.ndarray
    steps: np.ndarray
    model_time: np.ndarray
    final_distance: np.ndarray

    def __len__(self):
        return self.outcome.shape[0]

    @property
    def reacted(self) -> np.ndarray:
        return self.outcome == K.OUT_REACTED

    @property
    def step_limit_hit(self) -> bool:
        return bool((self.outcome == K.OUT_STEP_LIMIT).any())

    def end_states(self):
        return [_END[int(c)] for c in self.outcome]

    @classmethod
    def concat(cls, parts):
        return cls(*(np.concatenate([getattr(p, f) for p in parts])
                     for f in ("outcome", "steps", "model_time", "final_distance")))


def default_threads() -> int:
    env = os.environ.get("NAMBD_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def simulate_batch(geometry: NamGeometry, config: SimulatorConfig, seeds, *,
                   start_radius: float | None = None, pmf=None, backend: str | None = None,
                   threads: int | None = None, bridge: bool = True) -> BatchResult:
    """Run one trajectory per seed (each on its own fresh stream).

    Results depend only on the seeds, never on ``threads``.  Trajectories
    that hit the step cap are reported with outcome code ``OUT_STEP_LIMIT``.
    """
    seeds = np.ascontiguousarray(seeds, dtype=np.uint64)
    backend = backend or ("numba" if USE_NUMBA else "numpy")
    threads = threads or default_threads()
    n = seeds.shape[0]
    args = _kernel_args(geometry, config, start_radius, pmf, bridge)
    res = BatchResult(np.empty(n, dtype=np.int8), np.empty(n, dtype=np.int64),
                      np.empty(n), np.empty(n))
    kind = config.rng_kind.code
    if backend == "numpy":
        NB.simulate_batch(seeds, kind, *args, res.outcome, res.steps, res.model_time,
                          res.final_distance)
        return res

    def run(lo, hi):
        K.simulate_batch(seeds[lo:hi], kind, *args, res.outcome[lo:hi], res.steps[lo:hi],
                         res.model_time[lo:hi], res.final_distance[lo:hi])

    if threads <= 1 or n < 2:
        run(0, n)
        return res
    # small chunks keep long trajectories from serialising onto one worker
    chunk = max(1, min(256, -(-n // (4 * threads))))
    with ThreadPoolExecutor(max_workers=threads) as pool:
        list(pool.map(lambda lo: run(lo, min(lo + chunk, n)), range(0, n, chunk)))
    return res
