"""
Coefficient fields - per-edge velocities c(s) or diffusivities a(s)
"""

from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from core.errors import NonPositiveCoefficientError, SchemaError, ShapeMismatchError

SAMPLE_FLOOR = 1e-12

EdgeCoefficient = Union[float, np.ndarray]


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """
    Positive coefficient per edge: a constant, or samples on a uniform grid of [0, 1]
    interpolated linearly. kind is "c" (velocity) or "a" (diffusivity).
    """
    edges: Tuple[EdgeCoefficient, ...]
    kind: str = "c"

    def __post_init__(self):
        for j, value in enumerate(self.edges):
            if isinstance(value, np.ndarray):
                if value.ndim != 1 or value.size < 2:
                    raise ShapeMismatchError(f"Edge {j}: tabulated {self.kind} needs at least 2 samples")
                if not np.all(np.isfinite(value)) or value.min() < SAMPLE_FLOOR:
                    raise NonPositiveCoefficientError(
                        f"Edge {j}: tabulated {self.kind} must be finite and >= {SAMPLE_FLOOR}"
                    )
            elif not (np.isfinite(value) and value > 0):
                raise NonPositiveCoefficientError(f"Edge {j}: {self.kind} = {value!r} is not positive")

    @classmethod
    def constant(cls, m, value=1.0, kind="c"):
        return cls(edges=tuple(float(value) for _ in range(m)), kind=kind)

    @classmethod
    def from_values(cls, values, kind="c"):
        edges = []
        for value in values:
            if np.ndim(value) == 0:
                edges.append(float(value))
            else:
                edges.append(np.asarray(value, dtype=float))
        return cls(edges=tuple(edges), kind=kind)

    @classmethod
    def from_spec(cls, spec, m, kind="c"):
        """Parse a number (same constant everywhere) or {"edges": [number | {"samples": [...]}]}"""
        if spec is None:
            return cls.constant(m, 1.0, kind)
        if isinstance(spec, (int, float)):
            return cls.constant(m, spec, kind)
        if not isinstance(spec, dict) or "edges" not in spec:
            raise SchemaError("coefficients must be a number or an object with 'edges'")
        entries = spec["edges"]
        if len(entries) != m:
            raise SchemaError(f"coefficients list {len(entries)} edges, graph has {m}")
        values = []
        for entry in entries:
            if isinstance(entry, dict):
                values.append(entry.get("samples", []))
            else:
                values.append(entry)
        return cls.from_values(values, spec.get("kind", kind))

    @property
    def m(self):
        return len(self.edges)

    def is_constant(self, j):
        return not isinstance(self.edges[j], np.ndarray)

    @property
    def edgewise_constant(self):
        return all(self.is_constant(j) for j in range(self.m))

    def evaluate(self, j, s):
        """Value of the coefficient on edge j at positions s"""
        value = self.edges[j]
        s = np.asarray(s, dtype=float)
        if not isinstance(value, np.ndarray):
            return np.full_like(s, value)
        grid = np.linspace(0.0, 1.0, value.size)
        return np.interp(s, grid, value)

    def at_zero(self):
        """Vector (c_j(0))_j"""
        return np.array([float(self.evaluate(j, 0.0)) for j in range(self.m)])

    def at_one(self):
        """Vector (c_j(1))_j"""
        return np.array([float(self.evaluate(j, 1.0)) for j in range(self.m)])

    def scaled(self, factor):
        return CoefficientField(
            edges=tuple(v * factor if isinstance(v, np.ndarray) else float(v) * factor for v in self.edges),
            kind=self.kind,
        )

    def to_spec(self):
        entries = []
        for value in self.edges:
            if isinstance(value, np.ndarray):
                entries.append({"samples": value.tolist()})
            else:
                entries.append(value)
        return {"kind": self.kind, "edges": entries}
