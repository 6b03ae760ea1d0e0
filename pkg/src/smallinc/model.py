"""Scene description: background medium, aperture geometry and inclusions.

The domain is always the unit disk.  Each inclusion occupies ``z + scale * B``
where ``B`` is a reference shape containing the origin; for disk inclusions
``B`` is the unit disk so ``scale`` is the physical radius.

Scenes round-trip through JSON::

    {
      "medium": {"mu0": 1.0, "eps0": 1.0, "omega": 6.0},
      "aperture": [[-1.5707963, 1.5707963]],      # or "full"
      "separation": 0.5,
      "control_radius": 0.75,                      # optional, 1 - separation/2
      "inclusions": [
        {"center": [0.3, 0.1], "scale": 0.03, "mu": 2.0, "eps": 3.0,
         "shape": {"type": "disk"}}
      ]
    }

Angles are in radians; all lengths are relative to the unit disk.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .greens import DEFAULT_EIGENVALUE_GUARD, DEFAULT_MODE_CAP, resonance_margin
from .polarizability import Disk, shape_from_dict

__all__ = [
    "Medium",
    "Inclusion",
    "DomainGeometry",
    "Scene",
    "Issue",
    "ValidationReport",
    "validate_scene",
    "count_bound",
    "load_scene",
    "save_scene",
    "scene_from_dict",
    "scene_to_dict",
]

TWO_PI = 2 * np.pi


@dataclass(frozen=True)
class Medium:
    mu0: float = 1.0
    eps0: float = 1.0
    omega: float = 1.0

    def __post_init__(self):
        for name in ("mu0", "eps0", "omega"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")

    @property
    def k(self) -> float:
        return self.omega * np.sqrt(self.mu0 * self.eps0)

    @classmethod
    def from_wavenumber(cls, k: float, mu0: float = 1.0, eps0: float = 1.0) -> "Medium":
        return cls(mu0, eps0, k / np.sqrt(mu0 * eps0))


@dataclass(frozen=True)
class Inclusion:
    center: tuple[float, float]
    scale: float
    mu: float = 1.0
    eps: float = 1.0
    shape: object = field(default_factory=Disk)

    def __post_init__(self):
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        if not (self.scale > 0 and self.mu > 0 and self.eps > 0):
            raise ValidationError("inclusion scale, mu and eps must be positive")

    @property
    def is_disk(self) -> bool:
        return isinstance(self.shape, Disk) and self.shape.radius == 1.0

    def wavenumber(self, omega: float) -> float:
        return omega * np.sqrt(self.mu * self.eps)


@dataclass(frozen=True)
class DomainGeometry:
    """Unit disk with measurement aperture given as angular intervals.

    ``aperture`` holds ``(start, end)`` pairs with ``start < end`` (radians,
    any branch).  ``None`` means the whole circle.
    """

    aperture: tuple[tuple[float, float], ...] | None = ((-np.pi / 2, np.pi / 2),)
    radius: float = 1.0

    def __post_init__(self):
        if self.radius != 1.0:
            raise ValidationError("only the unit disk is supported")
        if self.aperture is None:
            return
        arcs = tuple((float(a), float(b)) for a, b in self.aperture)
        object.__setattr__(self, "aperture", arcs)
        if not arcs:
            raise ValidationError("aperture must contain at least one arc")
        total = 0.0
        for a, b in arcs:
            if not b > a:
                raise ValidationError("aperture arcs need start < end")
            total += b - a
        if total >= TWO_PI:
            raise ValidationError("aperture arcs cover the full circle; use full aperture mode")

    @classmethod
    def full(cls) -> "DomainGeometry":
        return cls(aperture=None)

    @classmethod
    def half(cls, center: float = 0.0) -> "DomainGeometry":
        return cls(aperture=((center - np.pi / 2, center + np.pi / 2),))

    @property
    def is_full(self) -> bool:
        return self.aperture is None

    @property
    def aperture_length(self) -> float:
        if self.aperture is None:
            return TWO_PI
        return sum(b - a for a, b in self.aperture)

    @property
    def aperture_direction(self) -> np.ndarray | None:
        """Unit vector towards the length-weighted centre of the aperture,
        ``None`` for the full circle or a perfectly balanced aperture."""
        if self.aperture is None:
            return None
        v = np.zeros(2)
        for a, b in self.aperture:
            mid = 0.5 * (a + b)
            v += (b - a) * np.array([np.cos(mid), np.sin(mid)])
        n = np.hypot(*v)
        return None if n < 1e-12 else v / n

    def arc_coordinate(self, theta) -> tuple[np.ndarray, np.ndarray]:
        """For each angle: index of the containing arc (-1 if none) and the
        normalised position ``s`` in ``(0, 1)`` along it."""
        theta = np.asarray(theta, dtype=float)
        idx = np.full(theta.shape, -1)
        s = np.zeros(theta.shape)
        if self.aperture is None:
            return np.zeros(theta.shape, dtype=int), np.mod(theta, TWO_PI) / TWO_PI
        for i, (a, b) in enumerate(self.aperture):
            rel = np.mod(theta - a, TWO_PI)
            inside = (rel > 0) & (rel < b - a)
            idx = np.where(inside, i, idx)
            s = np.where(inside, rel / (b - a), s)
        return idx, s

    def in_aperture(self, theta) -> np.ndarray:
        """Open-arc membership in Gamma_1."""
        if self.aperture is None:
            return np.ones(np.shape(theta), dtype=bool)
        return self.arc_coordinate(theta)[0] >= 0

    def in_complement(self, theta) -> np.ndarray:
        """Membership in Gamma_2 (the circle minus the closed aperture)."""
        if self.aperture is None:
            return np.zeros(np.shape(theta), dtype=bool)
        theta = np.asarray(theta, dtype=float)
        closed = np.zeros(theta.shape, dtype=bool)
        for a, b in self.aperture:
            rel = np.mod(theta - a, TWO_PI)
            closed |= (rel <= b - a) | np.isclose(rel, TWO_PI)
        return ~closed


@dataclass(frozen=True)
class Scene:
    medium: Medium
    geometry: DomainGeometry
    inclusions: tuple[Inclusion, ...] = ()
    separation: float = 0.5
    control_radius: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "inclusions", tuple(self.inclusions))
        if self.control_radius is None:
            object.__setattr__(self, "control_radius", 1.0 - self.separation / 2)

    @property
    def k(self) -> float:
        return self.medium.k

    @property
    def centers(self) -> np.ndarray:
        return np.array([inc.center for inc in self.inclusions], dtype=float).reshape(-1, 2)

    def with_inclusions(self, inclusions) -> "Scene":
        return Scene(self.medium, self.geometry, tuple(inclusions), self.separation, self.control_radius)

    def with_geometry(self, geometry: DomainGeometry) -> "Scene":
        return Scene(self.medium, geometry, self.inclusions, self.separation, self.control_radius)


# -- validation ----------------------------------------------------------------


@dataclass(frozen=True)
class Issue:
    constraint: str
    index: int | None
    message: str


@dataclass(frozen=True)
class ValidationReport:
    issues: tuple[Issue, ...]
    count_bound: float
    inclusion_count: int
    resonance_margin: float

    @property
    def ok(self) -> bool:
        return not self.issues

    def failed(self, constraint: str) -> list[Issue]:
        return [i for i in self.issues if i.constraint == constraint]

    def raise_if_failed(self):
        if self.issues:
            lines = "; ".join(f"{i.constraint}[{i.index}]: {i.message}" for i in self.issues)
            raise ValidationError(lines)


def count_bound(separation: float, d: int = 2, volume: float = np.pi) -> float:
    """Upper bound ``2 d |Omega| / (pi c0^d)`` on the number of inclusions."""
    return 2 * d * volume / (np.pi * separation**d)


def validate_scene(
    scene: Scene,
    eigenvalue_guard: float = DEFAULT_EIGENVALUE_GUARD,
    mode_cap: int = DEFAULT_MODE_CAP,
) -> ValidationReport:
    issues: list[Issue] = []
    c0 = scene.separation
    r_ctrl = scene.control_radius

    if not c0 > 0:
        issues.append(Issue("positivity", None, "separation must be positive"))
    if not 0 < r_ctrl < 1:
        issues.append(Issue("control_region", None, f"control radius {r_ctrl} must lie in (0, 1)"))
    elif 1 - r_ctrl < c0 / 2 - 1e-12:
        issues.append(Issue("control_region", None, "control region closer than c0/2 to the boundary"))

    z = scene.centers
    for j, inc in enumerate(scene.inclusions):
        for name in ("scale", "mu", "eps"):
            if not getattr(inc, name) > 0:
                issues.append(Issue("positivity", j, f"{name} must be positive"))
        rj = float(np.hypot(*z[j]))
        if 1 - rj < c0:
            issues.append(Issue("boundary_distance", j, f"dist to boundary {1 - rj:.4g} < c0={c0}"))
        if rj >= r_ctrl:
            issues.append(Issue("control_region", j, f"center outside control disk of radius {r_ctrl}"))
        for l in range(j + 1, len(scene.inclusions)):
            djl = float(np.hypot(*(z[j] - z[l])))
            if djl < c0:
                issues.append(Issue("separation", j, f"|z_{j} - z_{l}| = {djl:.4g} < c0={c0}"))

    margin, order = resonance_margin(scene.k, mode_cap)
    if margin < eigenvalue_guard:
        issues.append(Issue("eigenvalue_guard", order, f"k^2 near a Dirichlet eigenvalue (margin {margin:.2e})"))

    return ValidationReport(tuple(issues), count_bound(c0) if c0 > 0 else np.inf, len(scene.inclusions), margin)


# -- serialisation -------------------------------------------------------------


def scene_to_dict(scene: Scene) -> dict:
    g = scene.geometry
    return {
        "medium": {"mu0": scene.medium.mu0, "eps0": scene.medium.eps0, "omega": scene.medium.omega},
        "aperture": "full" if g.is_full else [list(a) for a in g.aperture],
        "separation": scene.separation,
        "control_radius": scene.control_radius,
        "inclusions": [
            {
                "center": list(inc.center),
                "scale": inc.scale,
                "mu": inc.mu,
                "eps": inc.eps,
                "shape": inc.shape.to_dict(),
            }
            for inc in scene.inclusions
        ],
    }


def scene_from_dict(data: dict) -> Scene:
    try:
        medium = Medium(**data.get("medium", {}))
        ap = data.get("aperture", "half")
        if ap == "full":
            geometry = DomainGeometry.full()
        elif ap == "half":
            geometry = DomainGeometry.half()
        else:
            geometry = DomainGeometry(tuple(tuple(a) for a in ap))
        inclusions = tuple(
            Inclusion(
                tuple(d["center"]),
                float(d["scale"]),
                float(d.get("mu", medium.mu0)),
                float(d.get("eps", medium.eps0)),
                shape_from_dict(d.get("shape", {"type": "disk"})),
            )
            for d in data.get("inclusions", [])
        )
        return Scene(medium, geometry, inclusions, float(data.get("separation", 0.5)), data.get("control_radius"))
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed scene description: {exc}") from exc


def load_scene(path: str | Path) -> Scene:
    with open(path) as fh:
        return scene_from_dict(json.load(fh))


def save_scene(scene: Scene, path: str | Path):
    with open(path, "w") as fh:
        json.dump(scene_to_dict(scene), fh, indent=2)
        fh.write("\n")
