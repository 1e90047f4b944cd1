"""Plane-wave scattering scenario: geometry, materials and excitation."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .exceptions import ConfigurationError
from .mesh import ScattererGeometry


@dataclass(frozen=True)
class Scenario:
    """Plane wave ``(-k2, k1) a(k . x - t)`` hitting a lossy disk.

    The envelope is ``a(s) = amplitude * exp(-decay (s + offset)^2)``.
    """

    geometry: ScattererGeometry = field(default_factory=ScattererGeometry)
    direction: tuple = (2 ** -0.5, 2 ** -0.5)
    amplitude: float = 2.0
    decay: float = 10.0
    offset: float = 3.0
    final_time: float = 2.5
    snapshot_times: tuple = (1.5, 2.0, 2.5)

    def __post_init__(self):
        k = np.asarray(self.direction, dtype=float)
        if k.shape != (2,) or abs(np.hypot(*k) - 1) > 1e-12:
            raise ConfigurationError("direction must be a unit 2-vector")
        if self.final_time <= 0:
            raise ConfigurationError("final_time must be positive")

    def envelope(self, s):
        return self.amplitude * np.exp(-self.decay * (s + self.offset) ** 2)

    def envelope_derivative(self, s):
        return -2 * self.decay * (s + self.offset) * self.envelope(s)

    def phase(self, x, t):
        x = np.asarray(x, dtype=float)
        return x[..., 0] * self.direction[0] + x[..., 1] * self.direction[1] - t

    def plane_wave(self, x, t):
        a = self.envelope(self.phase(x, t))
        k1, k2 = self.direction
        return np.stack([-k2 * a, k1 * a], axis=-1)

    def plane_wave_curl(self, x, t):
        """Scalar curl ``d_x E_y - d_y E_x = a'(k . x - t)`` for a unit ``k``."""
        return self.envelope_derivative(self.phase(x, t))

    def boundary_trace(self, x, t):
        """Scalar boundary datum ``nu * curl E`` of the incident wave."""
        return self.geometry.nu_out * self.plane_wave_curl(x, t)

    def materials(self, mesh):
        return self.geometry.materials(mesh)

    def with_(self, **changes):
        return replace(self, **changes)

    # -- config files ------------------------------------------------------

    def to_dict(self):
        d = asdict(self)
        d["direction"] = list(self.direction)
        d["snapshot_times"] = list(self.snapshot_times)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown scenario keys {sorted(unknown)}")
        if "geometry" in d:
            g = dict(d["geometry"])
            gknown = {f.name for f in fields(ScattererGeometry)}
            if set(g) - gknown:
                raise ConfigurationError(
                    f"unknown geometry keys {sorted(set(g) - gknown)}")
            d["geometry"] = ScattererGeometry(**g)
        if "direction" in d:
            d["direction"] = tuple(float(v) for v in d["direction"])
        if "snapshot_times" in d:
            d["snapshot_times"] = tuple(float(v) for v in d["snapshot_times"])
        return cls(**d)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


_DEFAULT = Scenario()


def plane_wave(x, t, scenario=_DEFAULT):
    return scenario.plane_wave(x, t)


def boundary_trace_g(x, t, scenario=_DEFAULT):
    return scenario.boundary_trace(x, t)
