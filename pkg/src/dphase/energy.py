"""The nonlocal double phase energy, its truncations, and residual assembly.

The energy of an admissible field u is

    phi(u) = Psi(Phi_H(grad u)) - integral F(x, u),
    Phi_H(g) = (1/p) integral |g|^p + (1/q) integral mu |g|^q,
    Psi(s)   = a0 s + (b0/theta) s^theta,

discretized with per-triangle constant gradients and the configured nodal
quadrature. The residual is the exact gradient of the discrete energy (up
to the p < 2 flux regularization), so finite differences of phi reproduce
it; this is the central consistency check of the whole artifact.

The nonlocal prefactor psi(Phi_H) is always evaluated on the full field,
never per sign part: splitting it would erase exactly the coupling that
distinguishes this energy from its local counterpart.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument, NumericDomainError
from .mesh import CellField, MeshFunction, cell_average_weight, gradient, split_parts
from .problem import KirchhoffCoeffs, ProblemSpec


def psi(s, kirchhoff: KirchhoffCoeffs):
    """Prefactor ``a0 + b0 s^(theta-1)`` for s >= 0.

    For theta == 1 the prefactor is the constant a0 + b0 (also at s = 0);
    for theta > 1 it takes the value a0 at s = 0.
    """
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0):
        raise InvalidArgument("psi is defined on s >= 0")
    if kirchhoff.theta == 1.0:
        out = np.full_like(s_arr, kirchhoff.a0 + kirchhoff.b0)
    else:
        out = kirchhoff.a0 + kirchhoff.b0 * s_arr ** (kirchhoff.theta - 1.0)
    return float(out) if np.isscalar(s) or s_arr.ndim == 0 else out


def big_psi(s: float, kirchhoff: KirchhoffCoeffs) -> float:
    """Primitive ``a0 s + (b0/theta) s^theta`` of the prefactor."""
    if s < 0:
        raise InvalidArgument("Psi is defined on s >= 0")
    k = kirchhoff
    return k.a0 * s + (k.b0 / k.theta) * s ** k.theta


@dataclass
class EnergyReport:
    """Energy value with its split contributions."""

    phi: float
    a0_term: float
    b0_term: float
    potential_term: float
    phi_H: float

    def row(self) -> str:
        return ",".join(repr(v) for v in
                        (self.phi, self.a0_term, self.b0_term, self.potential_term, self.phi_H))


@dataclass
class Residual:
    """Discrete dual vector of the energy over interior test functions."""

    mesh: object
    values: np.ndarray  # one entry per interior vertex

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.values) / np.sqrt(len(self.values)))

    def pair(self, v: MeshFunction) -> float:
        return float(self.values @ v.values[self.mesh.interior_idx])


def _check_admissible(u: MeshFunction):
    if np.any(u.values[~u.mesh.interior_mask] != 0.0):
        raise InvalidArgument("field is not Dirichlet admissible")


def _mubar(spec: ProblemSpec) -> np.ndarray:
    return cell_average_weight(spec.mesh, spec.mu, spec.quad_rule)


def _phi_H_of_g2(g2: np.ndarray, spec: ProblemSpec) -> float:
    p, q = spec.exps.p, spec.exps.q
    a = spec.mesh.areas
    return float(a @ (g2 ** (p / 2.0) / p) + a @ (_mubar(spec) * g2 ** (q / 2.0) / q))


def phi_H(u: MeshFunction, spec: ProblemSpec) -> float:
    """``(1/p)||grad u||_p^p + (1/q)||grad u||_{q,mu}^q``; zero iff grad u == 0."""
    _check_admissible(u)
    g = gradient(u).values
    return _phi_H_of_g2(g[:, 0] ** 2 + g[:, 1] ** 2, spec)


def _potential(u_vals: np.ndarray, spec: ProblemSpec) -> float:
    quad = spec.mesh.quadrature(spec.quad_rule)
    s = quad.interp @ u_vals
    Fv = spec.f.F(s)
    if not np.all(np.isfinite(Fv)):
        t = int(quad.tri_of_point[int(np.argmax(~np.isfinite(Fv)))])
        raise NumericDomainError(f"non-finite potential integrand in triangle {t}")
    return float(quad.weights @ Fv)


def phi(u: MeshFunction, spec: ProblemSpec) -> EnergyReport:
    """Energy report of u; phi(0) = 0 by construction."""
    _check_admissible(u)
    ph = phi_H(u, spec)
    k = spec.kirchhoff
    a0_term = k.a0 * ph
    b0_term = (k.b0 / k.theta) * ph ** k.theta
    pot = _potential(u.values, spec)
    return EnergyReport(phi=a0_term + b0_term - pot, a0_term=a0_term,
                        b0_term=b0_term, potential_term=pot, phi_H=ph)


def phi_truncated(u: MeshFunction, spec: ProblemSpec, sign: str) -> float:
    """Energy with the reaction fed only the matching sign part of u."""
    _check_admissible(u)
    ph = phi_H(u, spec)
    up, um = split_parts(u)
    part = up.values if sign == "+" else -um.values
    return big_psi(ph, spec.kirchhoff) - _potential(part, spec)


def _flux_coeffs(g2: np.ndarray, spec: ProblemSpec) -> np.ndarray:
    """Per-triangle scalar multiplying grad u in the operator, regularized."""
    p, q = spec.exps.p, spec.exps.q
    eps2 = spec.grad_eps ** 2
    mp = (g2 + eps2) ** ((p - 2.0) / 2.0) if p < 2.0 else g2 ** ((p - 2.0) / 2.0)
    mq = (g2 + eps2) ** ((q - 2.0) / 2.0) if q < 2.0 else g2 ** ((q - 2.0) / 2.0)
    return mp + _mubar(spec) * mq


def _operator_vector(u_vals: np.ndarray, spec: ProblemSpec) -> tuple[np.ndarray, float]:
    """Nodal vector of <A(u), e_i> over all vertices, plus Phi_H(grad u)."""
    m = spec.mesh
    gx = m._gx @ u_vals
    gy = m._gy @ u_vals
    g2 = gx * gx + gy * gy
    coeff = _flux_coeffs(g2, spec) * m.areas
    vec = m._gx.T @ (coeff * gx) + m._gy.T @ (coeff * gy)
    return vec, _phi_H_of_g2(g2, spec)


def _reaction_vector(s_vals: np.ndarray, spec: ProblemSpec) -> np.ndarray:
    """Nodal vector of the quadrature of f(x, s) e_i, from point values of s."""
    quad = spec.mesh.quadrature(spec.quad_rule)
    fv = spec.f.f(s_vals)
    if not np.all(np.isfinite(fv)):
        t = int(quad.tri_of_point[int(np.argmax(~np.isfinite(fv)))])
        raise NumericDomainError(f"non-finite reaction value in triangle {t}")
    return quad.interp.T @ (quad.weights * fv)


def residual(u: MeshFunction, spec: ProblemSpec) -> Residual:
    """Interior gradient of the discrete energy: psi(Phi_H) A(u) - f-term."""
    _check_admissible(u)
    avec, ph = _operator_vector(u.values, spec)
    quad = spec.mesh.quadrature(spec.quad_rule)
    fvec = _reaction_vector(quad.interp @ u.values, spec)
    full = psi(ph, spec.kirchhoff) * avec - fvec
    if not np.all(np.isfinite(full)):
        i = int(np.argmax(~np.isfinite(full)))
        raise NumericDomainError(f"non-finite residual entry at vertex {i}")
    return Residual(spec.mesh, full[spec.mesh.interior_idx])


def truncated_residual(u: MeshFunction, spec: ProblemSpec, sign: str) -> Residual:
    """Interior gradient of the sign-truncated energy.

    The reaction block is evaluated on the matching sign part and chained
    through the nodal clip, so this is the exact gradient of
    ``phi_truncated(., sign)``.
    """
    _check_admissible(u)
    avec, ph = _operator_vector(u.values, spec)
    quad = spec.mesh.quadrature(spec.quad_rule)
    up, um = split_parts(u)
    part = up.values if sign == "+" else -um.values
    fvec = _reaction_vector(quad.interp @ part, spec)
    active = u.values > 0.0 if sign == "+" else u.values < 0.0
    full = psi(ph, spec.kirchhoff) * avec - np.where(active, fvec, 0.0)
    return Residual(spec.mesh, full[spec.mesh.interior_idx])


def operator_pairing(u: MeshFunction, v: MeshFunction, spec: ProblemSpec) -> float:
    """``<A(u), v>`` without the nonlocal prefactor."""
    m = spec.mesh
    gu = gradient(u).values
    gv = gradient(v).values
    g2 = gu[:, 0] ** 2 + gu[:, 1] ** 2
    coeff = _flux_coeffs(g2, spec) * m.areas
    return float(coeff @ (gu[:, 0] * gv[:, 0] + gu[:, 1] * gv[:, 1]))


def pairings(u: MeshFunction, spec: ProblemSpec) -> tuple[float, float]:
    """``(<phi'(u), u_plus>, <phi'(u), -u_minus>)`` assembled directly.

    Both components carry the one nonlocal prefactor psi(Phi_H(grad u)) of
    the whole field.
    """
    _check_admissible(u)
    m = spec.mesh
    up, um = split_parts(u)
    avec, ph = _operator_vector(u.values, spec)
    pref = psi(ph, spec.kirchhoff)
    quad = m.quadrature(spec.quad_rule)
    u_q = quad.interp @ u.values
    fv = spec.f.f(u_q)
    wf = quad.weights * fv
    g_plus = pref * float(avec @ up.values) - float(wf @ (quad.interp @ up.values))
    g_minus = pref * float(avec @ (-um.values)) - float(wf @ (quad.interp @ (-um.values)))
    return g_plus, g_minus
