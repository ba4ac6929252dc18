from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np


class SingularPointError(ValueError):
    """Evaluation at a point of a field's singular set."""


@dataclass(frozen=True, eq=False)
class WirtingerValue:
    """Value and Wirtinger derivatives; scalars or arrays of equal shape."""

    value: np.ndarray
    d_z: np.ndarray
    d_zbar: np.ndarray

    @property
    def grad_norm_sq(self) -> np.ndarray:
        return np.abs(self.d_z) ** 2 + np.abs(self.d_zbar) ** 2

    @property
    def jacobian(self) -> np.ndarray:
        return np.abs(self.d_z) ** 2 - np.abs(self.d_zbar) ** 2


class AnalyticField(ABC):
    """Closed-form field with exact Wirtinger derivatives."""

    name: str = ""
    is_real: bool = True

    @property
    @abstractmethod
    def singularities(self) -> tuple[complex, ...]:
        raise NotImplementedError

    @abstractmethod
    def _eval(self, z: np.ndarray) -> WirtingerValue:
        raise NotImplementedError

    def eval(self, z: complex | np.ndarray) -> WirtingerValue:
        z = np.asarray(z, dtype=complex)
        for point in self.singularities:
            if np.any(z == point):
                raise SingularPointError(
                    f"{self.name} is singular at z = {point:g}"
                )
        return self._eval(z)

    def __call__(self, z: complex | np.ndarray) -> np.ndarray:
        return self.eval(z).value

    def describe(self) -> str:
        return self.name


def _real_value(value: np.ndarray, d_z: np.ndarray) -> WirtingerValue:
    return WirtingerValue(value.astype(complex), d_z, np.conj(d_z))


class LogAnnulus(AnalyticField):
    """log(|z|/R) / log(r/R): 1 on |z| = r and 0 on |z| = R."""

    name = "log-annulus"

    def __init__(self, r: float = 1.0, R: float = 2.0):
        if not 0.0 < r < R:
            raise ValueError(f"LogAnnulus needs 0 < r < R, got r={r}, R={R}")
        self._r = r
        self._R = R

    @property
    def r(self) -> float:
        return self._r

    @property
    def R(self) -> float:
        return self._R

    @property
    def singularities(self) -> tuple[complex, ...]:
        return (0j,)

    def _eval(self, z: np.ndarray) -> WirtingerValue:
        scale = np.log(self._r / self._R)
        value = np.log(np.abs(z) / self._R) / scale
        return _real_value(value, 1.0 / (2.0 * z * scale))

    def describe(self) -> str:
        return f"{self.name}:r={self._r:g},R={self._R:g}"


class CapacitorExample(AnalyticField):
    """
    H = -lambda log|z|^2 + z - 1/conj(z), lambda = (a + 1/a)/2. H vanishes on
    the unit circle, its Jacobian vanishes on |z - lambda| = rho but the
    differential never does.
    """

    name = "capacitor-example"
    is_real = False

    def __init__(self, a: float = 2.0):
        if not a > 1.0:
            raise ValueError(f"CapacitorExample needs a > 1, got a={a}")
        self._a = a

    @property
    def a(self) -> float:
        return self._a

    @property
    def lam(self) -> float:
        return (self._a + 1.0 / self._a) / 2.0

    @property
    def rho(self) -> float:
        return (self._a - 1.0 / self._a) / 2.0

    @property
    def singularities(self) -> tuple[complex, ...]:
        return (0j,)

    def _eval(self, z: np.ndarray) -> WirtingerValue:
        lam = self.lam
        zbar = np.conj(z)
        value = -lam * np.log(np.abs(z) ** 2) + z - 1.0 / zbar
        d_z = 1.0 - lam / z
        d_zbar = 1.0 / zbar**2 - lam / zbar
        return WirtingerValue(value, d_z, d_zbar)

    def jacobian_factored(self, z: complex | np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        if np.any(z == 0):
            raise SingularPointError(f"{self.name} is singular at z = 0")
        modulus_sq = np.abs(z) ** 2
        return (
            (modulus_sq - 1.0)
            * (np.abs(z - self.lam) ** 2 - (self.lam**2 - 1.0))
            / modulus_sq**2
        )

    def grad_identity_check(
        self, z: complex | np.ndarray
    ) -> tuple[np.ndarray, np.ndarray]:
        """
        (|z|^2 |H_z|^2 + |z|^4 |H_zbar|^2, (1 - lambda)^2 (1 + |z|^2)
        + 2 lambda |1 - z|^2). The right side is positive for lambda > 1.
        """
        w = self.eval(z)
        z = np.asarray(z, dtype=complex)
        modulus_sq = np.abs(z) ** 2
        lhs = modulus_sq * np.abs(w.d_z) ** 2 + modulus_sq**2 * np.abs(w.d_zbar) ** 2
        rhs = (1.0 - self.lam) ** 2 * (1.0 + modulus_sq) + 2.0 * self.lam * np.abs(
            1.0 - z
        ) ** 2
        return lhs, rhs

    def image_circle(self, r: float) -> tuple[complex, float]:
        """H maps the circle |z| = r onto this circle."""
        if not r > 0.0:
            raise ValueError(f"image_circle needs r > 0, got r={r}")
        return complex(-2.0 * self.lam * np.log(r)), abs(r - 1.0 / r)

    def describe(self) -> str:
        return f"{self.name}:a={self._a:g}"


class Cassini(AnalyticField):
    """log|z^2 - 1|; its level sets are Cassini ovals, level 0 the lemniscate."""

    name = "cassini"

    @property
    def singularities(self) -> tuple[complex, ...]:
        return (1 + 0j, -1 + 0j)

    def _eval(self, z: np.ndarray) -> WirtingerValue:
        w = z**2 - 1.0
        return _real_value(np.log(np.abs(w)), z / w)


class Saddle(AnalyticField):
    """Re(z^m), a critical point of order m - 1 at the origin for m >= 2."""

    name = "saddle"

    def __init__(self, m: int = 2):
        if m < 1:
            raise ValueError(f"Saddle needs m >= 1, got m={m}")
        self._m = int(m)

    @property
    def m(self) -> int:
        return self._m

    @property
    def singularities(self) -> tuple[complex, ...]:
        return ()

    def _eval(self, z: np.ndarray) -> WirtingerValue:
        m = self._m
        return _real_value((z**m).real, m * z ** (m - 1) / 2.0)

    def describe(self) -> str:
        return f"{self.name}:m={self._m}"


class RadialPHarmonic(AnalyticField):
    """
    Radial solution of the p-Laplace equation on the annulus r < |z| < R,
    equal to 1 on |z| = r and 0 on |z| = R.
    """

    name = "radial-p-harmonic"

    def __init__(self, r: float = 1.0, R: float = 2.0, p: float = 3.0):
        if not 0.0 < r < R:
            raise ValueError(f"RadialPHarmonic needs 0 < r < R, got r={r}, R={R}")
        if not 1.0 < p < np.inf:
            raise ValueError(f"RadialPHarmonic needs 1 < p < inf, got p={p}")
        self._r = r
        self._R = R
        self._p = p

    @property
    def r(self) -> float:
        return self._r

    @property
    def R(self) -> float:
        return self._R

    @property
    def p(self) -> float:
        return self._p

    @property
    def alpha(self) -> float:
        return (self._p - 2.0) / (self._p - 1.0)

    @property
    def singularities(self) -> tuple[complex, ...]:
        return (0j,)

    def _profile(self, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        r, R = self._r, self._R
        if self._p == 2.0:
            scale = np.log(r / R)
            return np.log(s / R) / scale, 1.0 / (s * scale)
        alpha = self.alpha
        scale = r**alpha - R**alpha
        return (s**alpha - R**alpha) / scale, alpha * s ** (alpha - 1.0) / scale

    def radial_p_value(self, s: float | np.ndarray) -> np.ndarray:
        s_array = np.asarray(s, dtype=float)
        if np.any(s_array < self._r) or np.any(s_array > self._R):
            raise ValueError(
                f"radial_p_value needs {self._r:g} <= s <= {self._R:g}, got {s}"
            )
        value, _ = self._profile(s_array)
        return value

    def _eval(self, z: np.ndarray) -> WirtingerValue:
        s = np.abs(z)
        value, slope = self._profile(s)
        # d/dz of g(|z|) is g'(s) conj(z) / (2 s)
        return _real_value(value, slope * np.conj(z) / (2.0 * s))

    def describe(self) -> str:
        return f"{self.name}:r={self._r:g},R={self._R:g},p={self._p:g}"


def distortion_bound(p: float) -> float:
    """K = max(p - 1, 1/(p - 1)) for the complex gradient of a p-harmonic map."""
    if not p > 1.0:
        raise ValueError(f"Distortion needs p > 1, got p={p}")
    return max(p - 1.0, 1.0 / (p - 1.0))
