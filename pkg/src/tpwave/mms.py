"""Manufactured solutions and residual source generation.

A manufactured solution fixes closed-form fields (u, q, r, sigma, p, theta)
and inserts them into the six governing equations; whatever does not cancel
becomes a source term:

    F_s   = rho u' + rho_f q' - div(sigma - (alpha p + beta theta) I)
    F_f   = rho_f u' + rho_w q' + (eta/kappa) q + grad p
    F_r   = (tau/chi) r' + (1/chi) r + grad theta
    g_p   = c0 p' - b0 theta' + alpha div u + div q
    g     = a0 theta' - b0 p' + beta div u + div r
    G_sig = sigma' - C eps(u)

The solver's right-hand side carries all six. Residuals are derived
symbolically (sympy) and lambdified once per (solution, material) pair; an
independent finite-difference route over the plain field evaluations backs
them in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import sympy as sp

from tpwave.materials import MaterialParameters, SQRT2

X, Y, T = sp.symbols("x y t", real=True)


def _lamb(expr):
    f = sp.lambdify((T, X, Y), expr, modules="numpy")

    def wrapped(t, x, y):
        out = f(t, x, y)
        return np.broadcast_to(np.asarray(out, dtype=float), np.shape(x)).copy()

    return wrapped


def _vec(fx, fy):
    def wrapped(t, xy):
        x, y = xy[..., 0], xy[..., 1]
        return np.stack([fx(t, x, y), fy(t, x, y)], axis=-1)

    return wrapped


def _scal(f):
    def wrapped(t, xy):
        return f(t, xy[..., 0], xy[..., 1])

    return wrapped


def _stored(f11, f22, f12):
    def wrapped(t, xy):
        x, y = xy[..., 0], xy[..., 1]
        return np.stack(
            [f11(t, x, y), f22(t, x, y), SQRT2 * f12(t, x, y)], axis=-1
        )

    return wrapped


@dataclass
class ManufacturedSolution:
    """Closed-form solution fields plus matching sources for one material.

    Symbolic inputs: u, q, r are 2-component lists, sigma a 2x2 symmetric
    sympy Matrix, p and theta scalars, all in (x, y, t).
    """

    material: MaterialParameters
    u_sym: list
    q_sym: list
    r_sym: list
    sigma_sym: sp.Matrix
    p_sym: sp.Expr
    theta_sym: sp.Expr
    name: str = "mms"
    zero_damping: bool = False
    _fn: dict = field(init=False, repr=False, default_factory=dict)

    def __post_init__(self):
        m = self.material
        u, q, r = self.u_sym, self.q_sym, self.r_sym
        sig, p, th = self.sigma_sym, self.p_sym, self.theta_sym
        eta_over_kappa = 0.0 if self.zero_damping else m.eta_over_kappa
        inv_chi = 0.0 if self.zero_damping else 1.0 / m.chi

        def div_vec(v):
            return sp.diff(v[0], X) + sp.diff(v[1], Y)

        def grad(s):
            return [sp.diff(s, X), sp.diff(s, Y)]

        eff = sig - (m.alpha * p + m.beta * th) * sp.eye(2)
        div_eff = [
            sp.diff(eff[0, 0], X) + sp.diff(eff[0, 1], Y),
            sp.diff(eff[1, 0], X) + sp.diff(eff[1, 1], Y),
        ]
        eps_u = sp.Matrix(
            [
                [sp.diff(u[0], X), (sp.diff(u[0], Y) + sp.diff(u[1], X)) / 2],
                [(sp.diff(u[0], Y) + sp.diff(u[1], X)) / 2, sp.diff(u[1], Y)],
            ]
        )
        hooke_eps = 2 * m.mu * eps_u + m.lam * eps_u.trace() * sp.eye(2)

        F_s = [m.rho * sp.diff(u[i], T) + m.rho_f * sp.diff(q[i], T) - div_eff[i] for i in range(2)]
        gp = grad(p)
        F_f = [
            m.rho_f * sp.diff(u[i], T)
            + m.rho_w * sp.diff(q[i], T)
            + eta_over_kappa * q[i]
            + gp[i]
            for i in range(2)
        ]
        gth = grad(th)
        F_r = [
            m.tau / m.chi * sp.diff(r[i], T) + inv_chi * r[i] + gth[i]
            for i in range(2)
        ]
        g_p = m.c0 * sp.diff(p, T) - m.b0 * sp.diff(th, T) + m.alpha * div_vec(u) + div_vec(q)
        g_e = m.a0 * sp.diff(th, T) - m.b0 * sp.diff(p, T) + m.beta * div_vec(u) + div_vec(r)
        G_sig = sp.diff(sig, T) - hooke_eps

        fn = self._fn
        fn["u"] = _vec(_lamb(u[0]), _lamb(u[1]))
        fn["q"] = _vec(_lamb(q[0]), _lamb(q[1]))
        fn["r"] = _vec(_lamb(r[0]), _lamb(r[1]))
        fn["sigma"] = _stored(_lamb(sig[0, 0]), _lamb(sig[1, 1]), _lamb(sig[0, 1]))
        fn["p"] = _scal(_lamb(p))
        fn["theta"] = _scal(_lamb(th))
        fn["F_s"] = _vec(_lamb(F_s[0]), _lamb(F_s[1]))
        fn["F_f"] = _vec(_lamb(F_f[0]), _lamb(F_f[1]))
        fn["F_r"] = _vec(_lamb(F_r[0]), _lamb(F_r[1]))
        fn["g_p"] = _scal(_lamb(g_p))
        fn["g"] = _scal(_lamb(g_e))
        fn["G_sigma"] = _stored(
            _lamb(G_sig[0, 0]), _lamb(G_sig[1, 1]), _lamb(G_sig[0, 1])
        )

    # -- field evaluation ---------------------------------------------------

    def field(self, name: str, t: float, xy: np.ndarray) -> np.ndarray:
        """Evaluate a solution field or source by name at points (..., 2)."""
        return self._fn[name](t, np.asarray(xy, dtype=float))

    def velocity_block(self, t: float, xy: np.ndarray) -> np.ndarray:
        """[u | q | r] stacked on the last axis, shape (..., 2, 3)."""
        return np.stack(
            [self.field("u", t, xy), self.field("q", t, xy), self.field("r", t, xy)],
            axis=-1,
        )

    def sources_velocity(self, t: float, xy: np.ndarray) -> np.ndarray:
        """[F_s | F_f | F_r] stacked on the last axis, shape (..., 2, 3)."""
        return np.stack(
            [self.field("F_s", t, xy), self.field("F_f", t, xy), self.field("F_r", t, xy)],
            axis=-1,
        )

    def sources_theta(self, t: float, xy: np.ndarray) -> tuple[np.ndarray, ...]:
        """(G_sigma stored, g_p, g)."""
        return (
            self.field("G_sigma", t, xy),
            self.field("g_p", t, xy),
            self.field("g", t, xy),
        )


def trig_solution(material: MaterialParameters) -> ManufacturedSolution:
    """Smooth trigonometric solution on the unit square.

    p, theta and the solid velocity follow the standard separable ansatz;
    the Darcy velocity reuses the solid velocity's spatial shape at unit
    amplitude, the heat flux is chosen so the Cattaneo law is satisfied
    exactly (F_r = 0), and sigma integrates the elastic law exactly from
    sigma(0) = 0 (G_sigma = 0).
    """
    m = material
    pi = sp.pi
    ct = sp.cos(2 * pi * T)
    shape = [sp.sin(pi * X) * sp.cos(pi * Y), sp.cos(pi * X) * sp.sin(pi * Y)]

    u = [2 * pi * ct * shape[0], 2 * pi * ct * shape[1]]
    q = [ct * shape[0], ct * shape[1]]

    A = -m.chi / (1 + 4 * sp.pi**2 * m.tau**2)
    B = 2 * sp.pi * m.tau * A
    r = [sp.Integer(0), pi * sp.cos(pi * Y) * (A * ct + B * sp.sin(2 * pi * T))]

    p = sp.sin(pi * X) * sp.sin(pi * Y) * ct
    th = sp.sin(pi * Y) * ct

    eps0 = sp.Matrix(
        [
            [sp.diff(shape[0], X), (sp.diff(shape[0], Y) + sp.diff(shape[1], X)) / 2],
            [(sp.diff(shape[0], Y) + sp.diff(shape[1], X)) / 2, sp.diff(shape[1], Y)],
        ]
    )
    sig = sp.sin(2 * pi * T) * (2 * m.mu * eps0 + m.lam * eps0.trace() * sp.eye(2))

    return ManufacturedSolution(
        material=material, u_sym=u, q_sym=q, r_sym=r,
        sigma_sym=sig, p_sym=p, theta_sym=th, name="trig",
    )


def polynomial_solution(
    material: MaterialParameters, k: int, extra_degree: int = 0
) -> ManufacturedSolution:
    """Patch-test solution: velocity block in P_{k+1}, stress block in P_k,
    every field linear in time.

    All fields then lie in the discrete spaces, so the scheme must
    reproduce them to round-off at every Crank-Nicolson step.
    extra_degree > 0 pushes the solid velocity outside the space (negative
    control).
    """
    du = k + 1 + extra_degree
    ds = k

    def poly(cs, deg):
        # deterministic low-round-number polynomial of total degree deg
        terms = []
        i = 0
        for d in range(deg + 1):
            for px in range(d + 1):
                terms.append(cs[i % len(cs)] * X**px * Y ** (d - px))
                i += 1
        return sp.Add(*terms)

    lin_t = lambda a, b: a + T * b  # noqa: E731

    u = [
        lin_t(poly([sp.Rational(3, 10), sp.Rational(-1, 5)], du),
              poly([sp.Rational(1, 2), sp.Rational(1, 10)], du)),
        lin_t(poly([sp.Rational(1, 5), sp.Rational(2, 5)], du),
              poly([sp.Rational(-3, 10), sp.Rational(1, 4)], du)),
    ]
    q = [
        lin_t(poly([sp.Rational(1, 10), sp.Rational(1, 5)], k + 1),
              poly([sp.Rational(-1, 5), sp.Rational(3, 10)], k + 1)),
        lin_t(poly([sp.Rational(2, 5), sp.Rational(-1, 10)], k + 1),
              poly([sp.Rational(1, 4), sp.Rational(1, 10)], k + 1)),
    ]
    r = [
        lin_t(poly([sp.Rational(-1, 4), sp.Rational(1, 10)], k + 1),
              poly([sp.Rational(1, 5), sp.Rational(-1, 10)], k + 1)),
        lin_t(poly([sp.Rational(3, 10), sp.Rational(1, 5)], k + 1),
              poly([sp.Rational(-1, 10), sp.Rational(2, 5)], k + 1)),
    ]
    s11 = lin_t(poly([sp.Rational(1, 2), sp.Rational(-1, 5)], ds),
                poly([sp.Rational(1, 5), sp.Rational(1, 10)], ds))
    s22 = lin_t(poly([sp.Rational(-3, 10), sp.Rational(1, 4)], ds),
                poly([sp.Rational(2, 5), sp.Rational(-1, 10)], ds))
    s12 = lin_t(poly([sp.Rational(1, 10), sp.Rational(3, 10)], ds),
                poly([sp.Rational(-1, 5), sp.Rational(1, 5)], ds))
    p = lin_t(poly([sp.Rational(2, 5), sp.Rational(1, 10)], ds),
              poly([sp.Rational(-1, 4), sp.Rational(1, 5)], ds))
    th = lin_t(poly([sp.Rational(-1, 10), sp.Rational(1, 2)], ds),
               poly([sp.Rational(3, 10), sp.Rational(-1, 5)], ds))

    return ManufacturedSolution(
        material=material, u_sym=u, q_sym=q, r_sym=r,
        sigma_sym=sp.Matrix([[s11, s12], [s12, s22]]),
        p_sym=p, theta_sym=th, name=f"poly-k{k}",
    )


def steady_solution(material: MaterialParameters) -> ManufacturedSolution:
    """Time-independent zero-source solution of the undamped system.

    Rigid-rotation solid velocity, constant Darcy velocity, heat flux,
    stress, pressure and temperature: every residual source vanishes when
    the damping diagonal is zero, so the discrete energy must stay
    constant. Used by the zero-damping conservation check.
    """
    u = [sp.Rational(1, 5) - sp.Rational(1, 2) * Y, sp.Rational(3, 10) + sp.Rational(1, 2) * X]
    q = [sp.Rational(1, 4), sp.Rational(-1, 10)]
    r = [sp.Rational(1, 10), sp.Rational(1, 5)]
    sig = sp.Matrix(
        [[sp.Rational(2, 5), sp.Rational(1, 10)], [sp.Rational(1, 10), sp.Rational(-3, 10)]]
    )
    p = sp.Rational(1, 2)
    th = sp.Rational(-1, 5)
    return ManufacturedSolution(
        material=material, u_sym=u, q_sym=q, r_sym=r,
        sigma_sym=sig, p_sym=p, theta_sym=th, name="steady", zero_damping=True,
    )
