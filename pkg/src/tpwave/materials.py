"""Material parameter records and derived coefficient matrices.

All quantities are SI. The velocity-block weight R, the storage/coupling
weight Q, the isotropic Hooke operator and its inverse (compliance), and
the damping diagonal (0, eta/kappa, 1/chi) are derived once per parameter
set and validated for positivity on construction.

Symmetric 2x2 tensors use the 3-component storage (xx, yy, sqrt(2)*xy), so
all derived tensor operators are plain 3x3 matrices acting on stored
components.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

SQRT2 = math.sqrt(2.0)


class MaterialError(ValueError):
    pass


@dataclass(frozen=True)
class MaterialParameters:
    """Thermo-poroelastic parameter record.

    Either (eta, kappa) or the ratio eta_over_kappa may be given. Lame
    coefficients may be converted from (E, poisson) via from_young_poisson.
    """

    rho_s: float
    rho_f: float
    phi: float
    tortuosity: float
    mu: float
    lam: float
    alpha: float
    c0: float
    a0: float
    b0: float
    beta: float
    chi: float
    tau: float
    eta_over_kappa: float
    name: str = ""

    def __post_init__(self):
        checks = [
            (0.0 < self.phi < 1.0, f"porosity must lie in (0,1), got {self.phi}"),
            (self.tortuosity > 1.0, f"tortuosity must exceed 1, got {self.tortuosity}"),
            (self.mu > 0.0, f"mu must be positive, got {self.mu}"),
            (self.lam > 0.0, f"lambda must be positive, got {self.lam}"),
            (0.0 < self.alpha <= 1.0, f"alpha must lie in (0,1], got {self.alpha}"),
            (self.a0 > 0.0, f"a0 must be positive, got {self.a0}"),
            (self.c0 > 0.0, f"c0 must be positive, got {self.c0}"),
            (
                self.a0 * self.c0 - self.b0**2 > 0.0,
                f"need a0*c0 > b0^2 for positive definiteness, got "
                f"a0*c0={self.a0 * self.c0:.6g}, b0^2={self.b0**2:.6g}",
            ),
            (self.tau > 0.0, f"tau must be positive, got {self.tau}"),
            (self.chi > 0.0, f"chi must be positive, got {self.chi}"),
            (self.eta_over_kappa >= 0.0, f"eta/kappa must be >= 0, got {self.eta_over_kappa}"),
            (self.rho > 0.0, f"composite density must be positive, got {self.rho}"),
            (
                self.rho * self.rho_w - self.rho_f**2 > 0.0,
                "need rho*rho_w > rho_f^2 (tortuosity > 1 with positive densities)",
            ),
        ]
        for ok, msg in checks:
            if not ok:
                raise MaterialError(msg)

    @property
    def rho(self) -> float:
        return self.phi * self.rho_f + (1.0 - self.phi) * self.rho_s

    @property
    def rho_w(self) -> float:
        return self.tortuosity / self.phi * self.rho_f

    @staticmethod
    def lame_from_young_poisson(E: float, nu: float) -> tuple[float, float]:
        lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
        mu = E / (2.0 * (1.0 + nu))
        return mu, lam

    def poroelastic_variant(self) -> "MaterialParameters":
        """Decouple the thermal fields from the mechanics (beta = b0 = 0).

        Mechanical outputs then match a purely poroelastic model while the
        code path stays unchanged.
        """
        return replace(self, beta=0.0, b0=0.0, name=self.name + "-poroelastic")


@dataclass(frozen=True)
class CoefficientMatrices:
    """Derived coefficient matrices for one parameter set.

    R: 3x3 weight of the velocity block, field order (solid, fluid, heat).
    Q: 2x2 storage/coupling weight, order (pressure, temperature).
    C3 / A3: Hooke and compliance on stored symmetric components.
    damping: diagonal (0, eta/kappa, 1/chi) in field order.
    """

    R: np.ndarray
    Q: np.ndarray
    C3: np.ndarray
    A3: np.ndarray
    damping: np.ndarray
    alpha: float
    beta: float
    mu: float
    lam: float

    def spectral_bounds(self) -> dict[str, float]:
        """Eigenvalue extremes of R, Q and the Hooke operator.

        Diagnostics use these to convert weighted norms to plain L2 norms.
        """
        r = np.linalg.eigvalsh(self.R)
        q = np.linalg.eigvalsh(self.Q)
        c = np.linalg.eigvalsh(self.C3)
        return {
            "rho_minus": float(r[0]),
            "rho_plus": float(r[-1]),
            "c_minus": float(q[0]),
            "c_plus": float(q[-1]),
            "a_minus": float(min(c[0], q[0])),
            "a_plus": float(max(c[-1], q[-1])),
            "hooke_minus": float(c[0]),
            "hooke_plus": float(c[-1]),
        }


def hooke_matrix(mu: float, lam: float) -> np.ndarray:
    """Isotropic Hooke operator 2*mu*z + lam*tr(z)*I on stored components."""
    return np.array(
        [
            [2.0 * mu + lam, lam, 0.0],
            [lam, 2.0 * mu + lam, 0.0],
            [0.0, 0.0, 2.0 * mu],
        ]
    )


def compliance_matrix(mu: float, lam: float) -> np.ndarray:
    """Inverse Hooke operator, (z - lam/(2mu+2lam) tr(z) I) / (2mu) in 2D."""
    c = lam / (2.0 * mu + 2.0 * lam)
    return (
        np.array(
            [
                [1.0 - c, -c, 0.0],
                [-c, 1.0 - c, 0.0],
                [0.0, 0.0, 1.0],
            ]
        )
        / (2.0 * mu)
    )


def tensor_to_stored(t: np.ndarray) -> np.ndarray:
    """Map symmetric 2x2 tensors (..., 2, 2) to stored components (..., 3)."""
    t = np.asarray(t, dtype=float)
    return np.stack([t[..., 0, 0], t[..., 1, 1], SQRT2 * t[..., 0, 1]], axis=-1)


def stored_to_tensor(s: np.ndarray) -> np.ndarray:
    """Inverse of tensor_to_stored."""
    s = np.asarray(s, dtype=float)
    out = np.empty((*s.shape[:-1], 2, 2))
    out[..., 0, 0] = s[..., 0]
    out[..., 1, 1] = s[..., 1]
    out[..., 0, 1] = out[..., 1, 0] = s[..., 2] / SQRT2
    return out


def hooke_apply(zeta: np.ndarray, mu: float, lam: float) -> np.ndarray:
    """2*mu*zeta + lam*tr(zeta)*I for symmetric 2x2 tensors (..., 2, 2)."""
    zeta = np.asarray(zeta, dtype=float)
    tr = zeta[..., 0, 0] + zeta[..., 1, 1]
    return 2.0 * mu * zeta + lam * tr[..., None, None] * np.eye(2)


def compliance_apply(tau: np.ndarray, mu: float, lam: float) -> np.ndarray:
    """Inverse of hooke_apply for symmetric 2x2 tensors."""
    tau = np.asarray(tau, dtype=float)
    tr = tau[..., 0, 0] + tau[..., 1, 1]
    c = lam / (2.0 * mu + 2.0 * lam)
    return (tau - c * tr[..., None, None] * np.eye(2)) / (2.0 * mu)


def derive_matrices(p: MaterialParameters, zero_damping: bool = False) -> CoefficientMatrices:
    """Coefficient matrices for one parameter set.

    zero_damping clears the dissipative diagonal while keeping R intact;
    this is a diagnostic mode for energy-conservation checks only.
    """
    R = np.array(
        [
            [p.rho, p.rho_f, 0.0],
            [p.rho_f, p.rho_w, 0.0],
            [0.0, 0.0, p.tau / p.chi],
        ]
    )
    Q = np.array([[p.c0, -p.b0], [-p.b0, p.a0]])
    damping = np.array([0.0, p.eta_over_kappa, 1.0 / p.chi])
    if zero_damping:
        damping = np.zeros(3)
    return CoefficientMatrices(
        R=R,
        Q=Q,
        C3=hooke_matrix(p.mu, p.lam),
        A3=compliance_matrix(p.mu, p.lam),
        damping=damping,
        alpha=p.alpha,
        beta=p.beta,
        mu=p.mu,
        lam=p.lam,
    )


@dataclass(frozen=True)
class MaterialField:
    """Region tag -> parameter set, with derived matrices resolved once."""

    params: dict[int, MaterialParameters]
    zero_damping: bool = False

    def __post_init__(self):
        object.__setattr__(
            self,
            "matrices",
            {r: derive_matrices(p, self.zero_damping) for r, p in self.params.items()},
        )

    def check_regions(self, region_ids) -> None:
        missing = set(int(r) for r in np.unique(region_ids)) - set(self.params)
        if missing:
            raise MaterialError(f"mesh regions {sorted(missing)} have no material entry")

    def __getitem__(self, region: int) -> CoefficientMatrices:
        return self.matrices[region]


def _l1() -> MaterialParameters:
    return MaterialParameters(
        rho_s=1.0, rho_f=1.0, phi=0.5, tortuosity=2.0,
        mu=50.0, lam=100.0, alpha=1.0,
        c0=1.0, a0=1.0, b0=0.5, beta=1.0,
        chi=1.0, tau=1.0, eta_over_kappa=1.0, name="L1",
    )


def _l2_repaired() -> MaterialParameters:
    # near-incompressible robustness set: E = 100, poisson = 0.49, small
    # storage c0 = 1e-6; the remaining parameters follow L1 with b0 = 0 to
    # keep Q positive definite
    mu, lam = MaterialParameters.lame_from_young_poisson(100.0, 0.49)
    return MaterialParameters(
        rho_s=1.0, rho_f=1.0, phi=0.5, tortuosity=2.0,
        mu=mu, lam=lam, alpha=1.0,
        c0=1e-6, a0=1.0, b0=0.0, beta=1.0,
        chi=1.0, tau=1.0, eta_over_kappa=1.0, name="L2-repaired",
    )


def _l3() -> MaterialParameters:
    return MaterialParameters(
        rho_s=2650.0, rho_f=1000.0, phi=0.3, tortuosity=2.0,
        mu=1.885e9, lam=4.433e8, alpha=0.7143,
        c0=4.1695, a0=1.3684e-10, b0=1.3684e-5, beta=4.8571e4,
        chi=1.5e4, tau=1.5e-2, eta_over_kappa=1e9, name="L3",
    )


def _l4() -> MaterialParameters:
    # stiffer right-half medium; unlisted parameters inherit L3
    return replace(
        _l3(),
        mu=9e9, lam=4e9, alpha=0.9514,
        c0=4.1017, a0=1.3684e-10, b0=1.3684e-5, beta=2.4857e4,
        name="L4",
    )


_LIBRARY = {
    "L1": _l1,
    "L2-repaired": _l2_repaired,
    "L3": _l3,
    "L4": _l4,
}


def material_library(name: str) -> MaterialParameters:
    """Built-in named parameter sets: L1, L2-repaired, L3, L4."""
    key = name.strip()
    aliases = {"l1": "L1", "l2": "L2-repaired", "l2-repaired": "L2-repaired",
               "l3": "L3", "l4": "L4"}
    key = aliases.get(key.lower(), key)
    if key not in _LIBRARY:
        raise MaterialError(
            f"unknown material {name!r}; available: {sorted(_LIBRARY)}"
        )
    return _LIBRARY[key]()
