"""Core domain types: vectors, NAM geometry, simulator configuration, outcomes.

Lengths are in an abstract unit L (read: Angstrom) and times in T (read:
milliseconds).  Every quantity that is compared against a reference is a
dimensionless probability, so no magnitudes are fixed here.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from .errors import InvalidConfig, NonPositiveDiffusion, OrderingViolation


@dataclass(frozen=True)
class Vec3:
    x: float
    y: float
    z: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)):
            raise ValueError(f"non-finite vector component in {self!r}")

    def __add__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def scale(self, s: float) -> "Vec3":
        return Vec3(s * self.x, s * self.y, s * self.z)

    __mul__ = scale
    __rmul__ = scale

    def dot(self, other: "Vec3") -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z

    def norm2(self) -> float:
        return self.x * self.x + self.y * self.y + self.z * self.z

    def norm(self) -> float:
        # hypot avoids overflow/underflow in the squared components
        return math.hypot(self.x, self.y, self.z)

    def as_tuple(self):
        return (self.x, self.y, self.z)

    @classmethod
    def of(cls, v) -> "Vec3":
        x, y, z = v
        return cls(float(x), float(y), float(z))


@dataclass(frozen=True)
class NamGeometry:
    """Reaction radius ``a``, start radius ``b``, escape radius ``q`` and D.

    ``particle_radius`` is carried along for reporting only; reaction and
    escape are decided on the centre-to-centre distance alone.
    """

    a: float
    b: float
    q: float
    D: float
    particle_radius: float = 0.0

    def __post_init__(self):
        for name in ("a", "b", "q", "D", "particle_radius"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if not (0.0 < self.a < self.b < self.q):
            raise OrderingViolation(
                f"need 0 < a < b < q, got a={self.a}, b={self.b}, q={self.q}")
        if self.D <= 0.0:
            raise NonPositiveDiffusion(f"diffusion coefficient must be > 0, got {self.D}")

    def with_D(self, D: float) -> "NamGeometry":
        return NamGeometry(self.a, self.b, self.q, D, self.particle_radius)

    def to_dict(self):
        return {"a": self.a, "b": self.b, "q": self.q, "D": self.D,
                "particle_radius": self.particle_radius}


def make_geometry(a, b, q, D, radius=0.0) -> NamGeometry:
    return NamGeometry(float(a), float(b), float(q), float(D), float(radius))


class EndState(str, Enum):
    REACTED = "Reacted"
    ESCAPED = "Escaped"


@dataclass(frozen=True)
class TrajectoryResult:
    end_state: EndState
    steps: int
    model_time: float
    final_distance: float


class RngKind(str, Enum):
    MERSENNE_TWISTER = "MersenneTwister"
    BASELINE_LCG = "BaselineLcg"

    @property
    def code(self) -> int:
        return 0 if self is RngKind.MERSENNE_TWISTER else 1


class DetectorKind(str, Enum):
    TIME_STEPPED = "TimeStepped"
    EVENT_TRIGGERED = "EventTriggered"

    @property
    def code(self) -> int:
        return 0 if self is DetectorKind.TIME_STEPPED else 1


@dataclass(frozen=True)
class FixedStep:
    dt: float

    def __post_init__(self):
        if not (self.dt > 0.0 and math.isfinite(self.dt)):
            raise InvalidConfig(f"stepsize must be > 0, got {self.dt}")

    @property
    def base_dt(self) -> float:
        return self.dt

    def to_dict(self):
        return {"kind": "Fixed", "dt": self.dt}


@dataclass(frozen=True)
class AdaptiveStep:
    dt_max: float = 0.1
    dt_min: float = 1e-4
    safety_fraction: float = 0.1

    def __post_init__(self):
        if not (0.0 < self.dt_min <= self.dt_max and math.isfinite(self.dt_max)):
            raise InvalidConfig(
                f"need 0 < dt_min <= dt_max, got {self.dt_min}, {self.dt_max}")
        if not (0.0 < self.safety_fraction < 1.0):
            raise InvalidConfig(f"safety_fraction must lie in (0, 1), got {self.safety_fraction}")

    @property
    def base_dt(self) -> float:
        return self.dt_max

    def to_dict(self):
        return {"kind": "Adaptive", "dt_max": self.dt_max, "dt_min": self.dt_min,
                "safety_fraction": self.safety_fraction}


def stepsize_from_dict(d) -> FixedStep | AdaptiveStep:
    kind = d.get("kind", "Fixed")
    if kind == "Fixed":
        return FixedStep(float(d["dt"]))
    if kind == "Adaptive":
        return AdaptiveStep(float(d.get("dt_max", 0.1)), float(d.get("dt_min", 1e-4)),
                            float(d.get("safety_fraction", 0.1)))
    raise InvalidConfig(f"unknown stepsize policy {kind!r}")


@dataclass(frozen=True)
class SimulatorConfig:
    rng_kind: RngKind = RngKind.MERSENNE_TWISTER
    detector_kind: DetectorKind = DetectorKind.EVENT_TRIGGERED
    stepsize: FixedStep | AdaptiveStep = field(default_factory=lambda: FixedStep(0.1))
    seed: int = 0
    max_steps: int = 10**8

    def __post_init__(self):
        object.__setattr__(self, "rng_kind", RngKind(self.rng_kind))
        object.__setattr__(self, "detector_kind", DetectorKind(self.detector_kind))
        if not (0 <= self.seed < 2**64):
            raise InvalidConfig(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if self.max_steps < 1:
            raise InvalidConfig("max_steps must be >= 1")

    @property
    def adaptive(self) -> bool:
        # event-triggered detection always runs at the base stepsize
        return (isinstance(self.stepsize, AdaptiveStep)
                and self.detector_kind is DetectorKind.TIME_STEPPED)

    def label(self) -> str:
        det = "event" if self.detector_kind is DetectorKind.EVENT_TRIGGERED else "stepped"
        if isinstance(self.stepsize, AdaptiveStep):
            step = f"adaptive({self.stepsize.dt_max:g}..{self.stepsize.dt_min:g})"
        else:
            step = f"fixed({self.stepsize.dt:g})"
        rng = "mt" if self.rng_kind is RngKind.MERSENNE_TWISTER else "lcg"
        return f"{det}/{step}/{rng}"

    def to_dict(self):
        return {"rng": self.rng_kind.value, "detector": self.detector_kind.value,
                "stepsize": self.stepsize.to_dict(), "seed": self.seed,
                "max_steps": self.max_steps}

    @classmethod
    def from_dict(cls, d) -> "SimulatorConfig":
        return cls(rng_kind=RngKind(d.get("rng", "MersenneTwister")),
                   detector_kind=DetectorKind(d.get("detector", "EventTriggered")),
                   stepsize=stepsize_from_dict(d.get("stepsize", {"kind": "Fixed", "dt": 0.1})),
                   seed=int(d.get("seed", 0)),
                   max_steps=int(d.get("max_steps", 10**8)))
