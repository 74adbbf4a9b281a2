"""Problem definition and a sampling-based verifier of its standing assumptions.

A problem couples the growth exponents, the weight mu, the nonlocal
coefficient function ``psi(s) = a0 + b0 s^(theta-1)``, and a superlinear
reaction term f. The verifier samples each assumption on a signed log
grid; its verdicts are "consistent on the grid", never proofs.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidArgument, NumericDomainError
from .mesh import Mesh, build_mesh
from .orlicz import Exponents, Weight


@dataclass(frozen=True)
class KirchhoffCoeffs:
    """Coefficients of the nonlocal prefactor ``a0 + b0 s^(theta-1)``."""

    a0: float
    b0: float
    theta: float

    def __post_init__(self):
        if self.a0 < 0:
            raise InvalidArgument(f"a0 must be >= 0, got {self.a0}")
        if self.b0 <= 0:
            raise InvalidArgument(f"b0 must be > 0, got {self.b0}")
        if self.theta < 1:
            raise InvalidArgument(f"theta must be >= 1, got {self.theta}")

    @property
    def degenerate(self) -> bool:
        return self.a0 == 0.0


@dataclass(frozen=True)
class Nonlinearity:
    """Power-sum reaction ``f(s) = sum_i c_i |s|^(r_i - 2) s`` with c_i > 0.

    The primitive ``F(s) = sum_i (c_i / r_i) |s|^r_i`` is exact, F(0) = 0.
    """

    terms: tuple  # of (c_i, r_i)

    def __post_init__(self):
        if not self.terms:
            raise InvalidArgument("nonlinearity needs at least one power term")
        for c, r in self.terms:
            if c <= 0:
                raise InvalidArgument(f"term coefficient must be > 0, got {c}")
            if r <= 1:
                raise InvalidArgument(f"term exponent must be > 1, got {r}")

    @classmethod
    def power(cls, r: float, c: float = 1.0) -> "Nonlinearity":
        return cls(((float(c), float(r)),))

    @property
    def r(self) -> float:
        """Growth exponent: the largest power among the terms."""
        return max(r for _, r in self.terms)

    def f(self, s):
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        with np.errstate(over="ignore"):
            for c, r in self.terms:
                out += c * np.abs(s) ** (r - 2.0) * s
        return out

    def F(self, s):
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        with np.errstate(over="ignore"):
            for c, r in self.terms:
                out += (c / r) * np.abs(s) ** r
        return out


@dataclass
class ProblemSpec:
    """Full problem instance on a concrete mesh.

    ``quad_rule`` selects the nodal quadrature ("midpoint" is exact on
    quadratics and is the default since the integrands are non-polynomial);
    ``grad_eps`` regularizes the singular p < 2 flux inside residual
    assembly only.
    """

    exps: Exponents
    mu: Weight
    kirchhoff: KirchhoffCoeffs
    f: Nonlinearity
    mesh: Mesh
    quad_rule: str = "midpoint"
    grad_eps: float = 1e-10

    def __post_init__(self):
        if self.kirchhoff.theta * self.exps.q >= self.exps.p_star:
            raise InvalidArgument(
                f"need q*theta < p*: q*theta={self.exps.q * self.kirchhoff.theta:.6g}, "
                f"p*={self.exps.p_star:.6g}")

    @property
    def q_theta(self) -> float:
        return self.exps.q * self.kirchhoff.theta

    def growth_violations(self) -> list[str]:
        """Composite constraints q*theta < r_i < p* for every power term."""
        out = []
        for _, r in self.f.terms:
            if not r > self.q_theta:
                out.append(f"term exponent r={r} must exceed q*theta={self.q_theta:.6g}")
            if not r < self.exps.p_star:
                out.append(f"term exponent r={r} must stay below p*={self.exps.p_star:.6g}")
        return out

    def with_kirchhoff(self, **kw) -> "ProblemSpec":
        return replace(self, kirchhoff=replace(self.kirchhoff, **kw))


def default_spec(nx: int = 32, ny: int = 32, a0: float = 1.0,
                 rect=(0.0, 1.0, 0.0, 1.0), quad_rule: str = "midpoint") -> ProblemSpec:
    """Desk-scale default: p=1.5, q=2, theta=1.5, r=4, mu = x1, unit square."""
    return ProblemSpec(
        exps=Exponents(p=1.5, q=2.0),
        mu=Weight.linear(),
        kirchhoff=KirchhoffCoeffs(a0=a0, b0=1.0, theta=1.5),
        f=Nonlinearity.power(4.0),
        mesh=build_mesh(rect, nx, ny),
        quad_rule=quad_rule,
    )


def eval_f(spec: ProblemSpec, x, s):
    """Reaction value f(x, s); x is accepted for interface symmetry."""
    out = spec.f.f(s)
    if not np.all(np.isfinite(out)):
        raise NumericDomainError(f"f overflowed at |s| ~ {np.max(np.abs(s)):.3g}")
    return out


def eval_F(spec: ProblemSpec, x, s):
    """Exact primitive F(x, s) with F(x, 0) = 0."""
    out = spec.f.F(s)
    if not np.all(np.isfinite(out)):
        raise NumericDomainError(f"F overflowed at |s| ~ {np.max(np.abs(s)):.3g}")
    return out


def default_s_grid(S: float = 1e4, per_decade: int = 12) -> np.ndarray:
    """Signed log grid over +-[1e-8, S] used by the hypothesis checker."""
    mags = np.geomspace(1e-8, S, int(per_decade * (np.log10(S) + 8)) + 1)
    return np.concatenate([-mags[::-1], mags])


@dataclass
class HypothesisReport:
    """One verdict per assumption; sampling-based, not a proof."""

    entries: list = field(default_factory=list)  # (key, passed, detail)

    def add(self, key: str, passed: bool, detail: str):
        self.entries.append((key, bool(passed), detail))

    @property
    def all_passed(self) -> bool:
        return all(ok for _, ok, _ in self.entries)

    def failed_keys(self) -> list[str]:
        return [k for k, ok, _ in self.entries if not ok]

    def to_text(self) -> str:
        lines = ["hypothesis check"]
        for key, ok, detail in self.entries:
            lines.append(f"{'PASS' if ok else 'FAIL'} {key:<24} {detail}")
        lines.append(f"overall: {'PASS' if self.all_passed else 'FAIL'}")
        return "\n".join(lines) + "\n"


def _tail_mask(s: np.ndarray, lo: float) -> np.ndarray:
    return np.abs(s) >= lo


def check_hypotheses(spec: ProblemSpec, s_grid: np.ndarray | None = None) -> HypothesisReport:
    """Verify the standing assumptions on a sample grid.

    Exact arithmetic for the exponent/coefficient constraints; growth,
    limit and monotonicity conditions on f are sampled on ``s_grid``,
    which must span at least [-1e3, 1e3] with log spacing near 0.
    """
    if s_grid is None:
        s_grid = default_s_grid()
    s_grid = np.asarray(s_grid, dtype=float)
    if s_grid.size == 0:
        raise InvalidArgument("empty sample grid")

    rep = HypothesisReport()
    e, k, f = spec.exps, spec.kirchhoff, spec.f
    qt = spec.q_theta

    ok = (1.0 < e.p < e.N) and (e.p < e.q < e.p_star)
    mu_bound = spec.mu.linf_bound(spec.mesh.rect)
    ok = ok and mu_bound >= 0
    rep.add("exponents", ok,
            f"1<p={e.p}<N={e.N}, p<q={e.q}<p*={e.p_star:.6g}, |mu|_inf={mu_bound:.6g}")

    ok = k.a0 >= 0 and k.b0 > 0 and k.theta >= 1 and qt < e.p_star
    rep.add("prefactor", ok,
            f"a0={k.a0}, b0={k.b0}, theta={k.theta}, q*theta={qt:.6g} < p*={e.p_star:.6g}")

    # growth bound: empirical slope of log|f| on the far tail, plus r < p*
    r = f.r
    tail = s_grid[s_grid >= np.max(s_grid) / 100.0]
    fv = f.f(tail)
    slope = np.polyfit(np.log(tail), np.log(np.maximum(np.abs(fv), 1e-300)), 1)[0]
    ok = (r < e.p_star) and (slope <= r - 1.0 + 1e-2)
    rep.add("growth", ok,
            f"fitted tail exponent {slope:.4f} <= r-1={r - 1.0}, r={r} < p*={e.p_star:.6g}")

    # superlinearity relative to the q*theta power: the quotient must climb
    def quotient(s, power):
        return f.f(s) / (np.abs(s) ** (power - 2.0) * s)

    detail, ok = [], True
    for sign in (1.0, -1.0):
        t = np.sort(np.abs(s_grid[np.sign(s_grid) == sign]))
        t = t[t >= t[-1] / 1e3]
        qv = quotient(sign * t, qt)
        diffs = np.diff(qv)
        if np.any(diffs < -1e-12 * np.max(np.abs(qv))):
            i = int(np.argmax(diffs < -1e-12 * np.max(np.abs(qv))))
            ok = False
            detail.append(f"violated at s={sign * t[i + 1]:.4g}")
        elif not qv[-1] >= 2.0 * qv[0]:
            ok = False
            detail.append(f"no divergence: quotient {qv[0]:.4g} -> {qv[-1]:.4g}")
        else:
            detail.append(f"quotient {qv[0]:.4g} -> {qv[-1]:.4g}")
    rep.add("superlinear at infinity", ok, "; ".join(detail))

    # vanishing near zero relative to p (or p*theta in the degenerate case)
    power0 = e.p if k.a0 > 0 else e.p * k.theta
    small = np.sort(np.abs(s_grid[np.abs(s_grid) > 0]))
    small = small[small <= small[0] * 1e2]
    d = np.abs(quotient(small, power0))
    ok = bool(np.all(np.diff(d) >= -1e-12 * max(d.max(), 1e-300)) and d[0] <= 0.5 * d[-1] + 1e-300)
    branch = "a0>0" if k.a0 > 0 else "a0=0"
    rep.add("vanishing at zero", ok,
            f"{branch} branch, |f|/|s|^{power0 - 1:.3g} = {d[0]:.3g} at s={small[0]:.3g}")

    # s -> f(s)s - q*theta*F(s): nondecreasing on [0, inf), nonincreasing on (-inf, 0]
    m = f.f(s_grid) * s_grid - qt * f.F(s_grid)
    pos, neg = s_grid > 0, s_grid < 0
    scale = max(np.max(np.abs(m)), 1.0)
    ok_pos = np.all(np.diff(m[pos]) >= -1e-12 * scale)
    ok_neg = np.all(np.diff(m[neg]) <= 1e-12 * scale)
    rep.add("quotient monotone (iv)", bool(ok_pos and ok_neg),
            f"f(s)s - q*theta*F monotone on both half-lines: +{ok_pos} -{ok_neg}")

    # s -> f(s)/|s|^(q*theta - 1): strictly increasing on each half-line
    v = f.f(s_grid) / np.abs(s_grid) ** (qt - 1.0)
    ok_pos = np.all(np.diff(v[pos]) > 0)
    ok_neg = np.all(np.diff(v[neg]) > 0)
    rep.add("quotient increasing (v)", bool(ok_pos and ok_neg),
            f"f/|s|^(q*theta-1) strictly increasing: +{ok_pos} -{ok_neg}")

    for msg in spec.growth_violations():
        rep.add("composite growth window", False, msg)
    if not spec.growth_violations():
        rep.add("composite growth window", True,
                f"q*theta={qt:.6g} < r={f.r} < p*={e.p_star:.6g}")
    return rep


# --- config mapping -------------------------------------------------------

def spec_to_config(spec: ProblemSpec) -> dict:
    x0, x1, y0, y1 = spec.mesh.rect
    return {
        "p": spec.exps.p,
        "q": spec.exps.q,
        "theta": spec.kirchhoff.theta,
        "a0": spec.kirchhoff.a0,
        "b0": spec.kirchhoff.b0,
        "mu": {"family": spec.mu.family, "params": list(spec.mu.params)},
        "f": {"terms": [[c, r] for c, r in spec.f.terms]},
        "mesh": {"nx": spec.mesh.nx, "ny": spec.mesh.ny},
        "domain": [x0, x1, y0, y1],
        "quad_rule": spec.quad_rule,
    }


def spec_from_config(cfg: dict) -> ProblemSpec:
    try:
        exps = Exponents(p=float(cfg["p"]), q=float(cfg["q"]))
        kirch = KirchhoffCoeffs(a0=float(cfg["a0"]), b0=float(cfg["b0"]),
                                theta=float(cfg["theta"]))
        mu_cfg = cfg.get("mu", {"family": "constant", "params": [1.0]})
        mu = Weight(mu_cfg["family"], tuple(float(v) for v in mu_cfg.get("params", [])))
        terms = tuple((float(c), float(r)) for c, r in cfg["f"]["terms"])
        nonlin = Nonlinearity(terms)
        mesh_cfg = cfg.get("mesh", {"nx": 32, "ny": 32})
        rect = tuple(float(v) for v in cfg.get("domain", (0.0, 1.0, 0.0, 1.0)))
        mesh = build_mesh(rect, int(mesh_cfg["nx"]), int(mesh_cfg["ny"]))
    except KeyError as exc:
        raise InvalidArgument(f"missing problem key: {exc}") from exc
    return ProblemSpec(exps=exps, mu=mu, kirchhoff=kirch, f=nonlin, mesh=mesh,
                       quad_rule=str(cfg.get("quad_rule", "midpoint")))
