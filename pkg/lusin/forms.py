"""Analytic branch forms: one-parameter curves t -> R^k on t in [0, inf) with exact inverses.

Every form maps ray parameters to codomain coordinates and inverts a codomain point
to the best parameter plus the residual |y - form(t)|, so image membership is a
residual test.
"""
import math

import numpy as np

from lusin.errors import DescriptorError


TWO_PI = 2.0 * math.pi
ORIGIN_SNAP = 1e-12


def _coefficients(name: str, values, count: int | None = None) -> np.ndarray:
    arr = np.asarray(values, dtype=float).ravel()
    if count is not None and arr.size != count:
        raise DescriptorError(f"{name} takes {count} coefficients, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise DescriptorError(f"{name} coefficients must be finite")
    return arr


def _params(t) -> np.ndarray:
    return np.asarray(t, dtype=float).ravel()


class Form:
    name = "form"
    dimension = 2

    def __init__(self, coefficients):
        self.coefficients = tuple(float(c) for c in np.asarray(coefficients, dtype=float).ravel())

    def __repr__(self) -> str:
        return f"{self.name}{self.coefficients}"

    @property
    def speed(self) -> float:
        """Upper bound on |d form / dt|."""
        raise NotImplementedError

    def forward(self, t) -> np.ndarray:
        raise NotImplementedError

    def _candidate(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def inverse(self, y) -> tuple[np.ndarray, np.ndarray]:
        coords = np.atleast_2d(np.asarray(y, dtype=float))
        candidate = self._candidate(coords)
        # a non-finite candidate is a point the curve only approaches
        finite = np.isfinite(candidate)
        t = np.where(finite, np.clip(np.nan_to_num(candidate, nan=0.0, posinf=0.0), 0.0, None), 0.0)
        residual = np.linalg.norm(self.forward(t) - coords, axis=1)
        return t, np.where(finite & np.isfinite(residual), residual, np.inf)


class Affine(Form):
    """t -> a + t*b with coefficients [a..., b...]."""

    name = "affine"

    def __init__(self, coefficients):
        arr = _coefficients(self.name, coefficients)
        if arr.size == 0 or arr.size % 2:
            raise DescriptorError("affine takes an even number of coefficients [a..., b...]")
        super().__init__(arr)
        self.dimension = arr.size // 2
        self.offset, self.slope = arr[: self.dimension], arr[self.dimension :]
        if not np.any(self.slope):
            raise DescriptorError("affine slope must be nonzero")

    @property
    def speed(self) -> float:
        return float(np.linalg.norm(self.slope))

    def forward(self, t) -> np.ndarray:
        return self.offset + _params(t)[:, None] * self.slope

    def _candidate(self, y: np.ndarray) -> np.ndarray:
        return (y - self.offset) @ self.slope / float(self.slope @ self.slope)


class RationalCircle(Form):
    """Circle of radius R around (cx, cy) traversed by angle 2*pi*(w*t/(1+t) + phase).

    Coefficients [cx, cy, R, w, phase]; injective on [0, inf) for 0 < |w| <= 1.
    """

    name = "rational_circle"

    def __init__(self, coefficients):
        arr = _coefficients(self.name, coefficients, 5)
        super().__init__(arr)
        self.center = arr[:2]
        self.radius, self.winding, self.phase = arr[2], arr[3], arr[4]
        if self.radius <= 0 or not 0 < abs(self.winding) <= 1:
            raise DescriptorError("rational_circle needs R > 0 and 0 < |w| <= 1")

    @property
    def speed(self) -> float:
        return TWO_PI * self.radius * abs(self.winding)

    def forward(self, t) -> np.ndarray:
        t = _params(t)
        angle = TWO_PI * (self.winding * t / (1.0 + t) + self.phase)
        return self.center + self.radius * np.column_stack([np.cos(angle), np.sin(angle)])

    def _candidate(self, y: np.ndarray) -> np.ndarray:
        offset = y - self.center
        turn = np.mod(np.arctan2(offset[:, 1], offset[:, 0]) / TWO_PI - self.phase, 1.0)
        if self.winding < 0:
            turn = np.where(turn > 0, turn - 1.0, turn)
        ratio = turn / self.winding
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(ratio < 1.0, ratio / (1.0 - ratio), np.inf)
        # angles off the arc go to its nearer end
        wrapped = np.mod(turn, 1.0)
        start_gap = np.minimum(wrapped, 1.0 - wrapped)
        end_gap = np.abs(np.mod(turn - self.winding + 0.5, 1.0) - 0.5)
        return np.where((ratio >= 1.0) & (start_gap <= end_gap), 0.0, t)


class _Spiral(Form):
    """Spiral around (cx, cy) with a strictly decreasing radius and angle 2*pi*(w*t + phase)."""

    def forward(self, t) -> np.ndarray:
        t = _params(t)
        # w*t is reduced mod 1 first so the angle stays accurate for huge t
        angle = TWO_PI * np.mod(self.winding * t + self.phase, 1.0)
        rho = self._radius(t)
        return self.center + rho[:, None] * np.column_stack([np.cos(angle), np.sin(angle)])

    def _candidate(self, y: np.ndarray) -> np.ndarray:
        offset = y - self.center
        rough = self._radius_inverse(np.linalg.norm(offset, axis=1))
        turn = np.mod(np.arctan2(offset[:, 1], offset[:, 0]) / TWO_PI - self.phase, 1.0)
        laps = np.round(self.winding * np.nan_to_num(rough, nan=0.0, posinf=0.0) - turn)
        refined = (turn + laps) / self.winding
        return np.where(np.isfinite(rough), refined, rough)


class RationalSpiral(_Spiral):
    """Coefficients [cx, cy, R, A, w, phase]: radius R + A/(1+t)."""

    name = "rational_spiral"

    def __init__(self, coefficients):
        arr = _coefficients(self.name, coefficients, 6)
        super().__init__(arr)
        self.center = arr[:2]
        self.base, self.amplitude, self.winding, self.phase = arr[2], arr[3], arr[4], arr[5]
        if self.base <= 0 or self.amplitude <= 0 or self.winding == 0:
            raise DescriptorError("rational_spiral needs R > 0, A > 0 and w != 0")

    @property
    def speed(self) -> float:
        return TWO_PI * abs(self.winding) * (self.base + self.amplitude) + self.amplitude

    def _radius(self, t: np.ndarray) -> np.ndarray:
        return self.base + self.amplitude / (1.0 + t)

    def _radius_inverse(self, rho: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return self.amplitude / np.clip(rho - self.base, 0.0, None) - 1.0


class LogSpiral(_Spiral):
    """Coefficients [cx, cy, R, A, lam, w, phase]: radius R + A*exp(-lam*t)."""

    name = "log_spiral"

    def __init__(self, coefficients):
        arr = _coefficients(self.name, coefficients, 7)
        super().__init__(arr)
        self.center = arr[:2]
        self.base, self.amplitude, self.rate, self.winding, self.phase = arr[2:7]
        if self.base <= 0 or self.amplitude <= 0 or self.rate <= 0 or self.winding == 0:
            raise DescriptorError("log_spiral needs R > 0, A > 0, lam > 0 and w != 0")

    @property
    def speed(self) -> float:
        return TWO_PI * abs(self.winding) * (self.base + self.amplitude) + self.amplitude * self.rate

    def _radius(self, t: np.ndarray) -> np.ndarray:
        return self.base + self.amplitude * np.exp(-self.rate * t)

    def _radius_inverse(self, rho: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return -np.log(np.clip(rho - self.base, 0.0, None) / self.amplitude) / self.rate


class FigureEight(Form):
    """One lobe of the lemniscate (sin u, sin u cos u), u = sign*pi*t/(1+t). Coefficients [sign]."""

    name = "figure_eight"

    def __init__(self, coefficients):
        arr = _coefficients(self.name, coefficients, 1)
        if arr[0] not in (1.0, -1.0):
            raise DescriptorError("figure_eight sign must be +1 or -1")
        super().__init__(arr)
        self.sign = arr[0]

    @property
    def speed(self) -> float:
        return math.pi * math.sqrt(2.0)

    def forward(self, t) -> np.ndarray:
        t = _params(t)
        u = self.sign * math.pi * t / (1.0 + t)
        return np.column_stack([np.sin(u), np.sin(u) * np.cos(u)])

    def _candidate(self, y: np.ndarray) -> np.ndarray:
        # |u| = atan2(sin^2 u, |sin u| cos u) holds on both lobes
        magnitude = np.arctan2(y[:, 0] ** 2, y[:, 1] * np.sign(y[:, 0]))
        # a signed zero at the origin reads as |u| = pi
        magnitude = np.where(math.pi - magnitude < ORIGIN_SNAP, 0.0, magnitude)
        return magnitude / (math.pi - magnitude)


FORMS: dict[str, type[Form]] = {
    cls.name: cls for cls in (Affine, RationalCircle, RationalSpiral, LogSpiral, FigureEight)
}


def make_form(name: str, coefficients) -> Form:
    try:
        cls = FORMS[name]
    except KeyError:
        raise DescriptorError(f"unknown branch form {name!r}; expected one of {sorted(FORMS)}") from None
    return cls(coefficients)
