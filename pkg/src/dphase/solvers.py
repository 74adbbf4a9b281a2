"""Critical-point solvers: constant-sign states by path deformation over the
sign-truncated energies, and the least-energy nodal state by descent with
reprojection onto the vanishing-pairing constraint set.

Descent directions are the negative residual passed through the inverse
Dirichlet Laplacian (raw nodal gradients are badly scaled for p < 2), with
backtracking line search. Convergence is only ever claimed through the
residual norm plus the sign/part invariants of the returned state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BracketFailure, InvalidArgument, ProjectionFailure, SolverSetupError
from .mesh import Mesh, MeshFunction, gradient, split_parts
from .orlicz import luxemburg_norm, modular
from .problem import ProblemSpec
from .energy import phi, phi_truncated, residual, truncated_residual
from .nehari import NehariPair, project_to_M, project_to_ray

ARMIJO_C = 1e-4
MONOTONE_SLACK = 1e-12


@dataclass
class SolveOutcome:
    """Converged (or best-effort) state with its classification and trace."""

    solution: MeshFunction
    kind: str                      # positive | negative | nodal | indefinite
    energy: float
    residual_norm: float
    iterations: int
    trace: list                    # (energy, residual_norm) per iteration
    converged: bool
    seed: int | None = None
    pair: NehariPair | None = None
    start_summaries: list = field(default_factory=list)


@dataclass
class MountainPassPath:
    """Ordered path of fields from 0 to a far endpoint of negative energy."""

    nodes: list                    # of MeshFunction
    energies: list

    def __post_init__(self):
        if np.any(self.nodes[0].values != 0.0):
            raise InvalidArgument("path must start at the zero field")
        if not self.energies[-1] < 0.0:
            raise InvalidArgument("path endpoint must have negative energy")


def part_norms(u: MeshFunction, spec: ProblemSpec) -> tuple[float, float]:
    """Gradient Luxemburg norms of the two sign parts."""
    up, um = split_parts(u)
    np_ = luxemburg_norm(gradient(up), spec.exps, spec.mu, spec.quad_rule)
    nm = luxemburg_norm(gradient(um), spec.exps, spec.mu, spec.quad_rule)
    return np_, nm


def classify(u: MeshFunction, spec: ProblemSpec, tol_sign: float = 1e-10) -> str:
    mn, mx = float(np.min(u.values)), float(np.max(u.values))
    if mn >= -tol_sign and mx > tol_sign:
        return "positive"
    if mx <= tol_sign and mn < -tol_sign:
        return "negative"
    pn, nm = part_norms(u, spec)
    if pn >= 1e-8 and nm >= 1e-8:
        return "nodal"
    return "indefinite"


def bump_direction(mesh: Mesh) -> MeshFunction:
    """Product-sine bump, the usual first-mode ascent direction."""
    x0, x1, y0, y1 = mesh.rect
    return MeshFunction.interpolate(
        mesh, lambda x, y: np.sin(np.pi * (x - x0) / (x1 - x0))
        * np.sin(np.pi * (y - y0) / (y1 - y0)))


def random_sign_changing(mesh: Mesh, rng: np.random.Generator,
                         separated: bool = False) -> MeshFunction:
    """Smooth random field with both parts nonzero.

    With ``separated=True`` the two parts are compactly supported bumps in
    disjoint element patches, so part-splitting identities that hold for
    disjoint supports hold exactly on the mesh as well.
    """
    x0, x1, y0, y1 = mesh.rect
    sx, sy = x1 - x0, y1 - y0
    xs = (mesh.vertices[:, 0] - x0) / sx
    ys = (mesh.vertices[:, 1] - y0) / sy
    if separated:
        def patch_bump(cx, cy, wx, wy):
            tx = np.clip((xs - cx) / wx, -1.0, 1.0)
            ty = np.clip((ys - cy) / wy, -1.0, 1.0)
            return (1.0 - tx**2) ** 2 * (1.0 - ty**2) ** 2
        cx1 = rng.uniform(0.22, 0.30)
        cx2 = rng.uniform(0.70, 0.78)
        cy1, cy2 = rng.uniform(0.35, 0.65, size=2)
        w1, w2 = rng.uniform(0.10, 0.16, size=2)
        a1, a2 = rng.uniform(0.5, 1.5, size=2)
        vals = a1 * patch_bump(cx1, cy1, w1, 0.28) - a2 * patch_bump(cx2, cy2, w2, 0.28)
    else:
        vals = np.zeros(mesh.n_vertices)
        for _ in range(6):
            i, j = rng.integers(1, 5, size=2)
            vals += rng.normal() / (i + j) * np.sin(i * np.pi * xs) * np.sin(j * np.pi * ys)
        vals /= max(np.max(np.abs(vals)), 1e-12)
    vals = np.where(mesh.interior_mask, vals, 0.0)
    u = MeshFunction(mesh, vals)
    up, um = split_parts(u)
    if not (np.any(up.values > 0) and np.any(um.values > 0)):
        # extremely rare for the random family; force a tiny opposite dimple
        k = mesh.interior_idx[0]
        vals = vals.copy()
        vals[k] = -np.sign(vals.sum() or 1.0) * 0.1
        u = MeshFunction(mesh, vals)
    return u


def scaled_to_ray(u: MeshFunction, spec: ProblemSpec) -> MeshFunction:
    """Rescale so |u| sits on the single-constraint ray; keeps the pair O(1)."""
    t = project_to_ray(MeshFunction(u.mesh, np.abs(u.values)), spec)
    return MeshFunction(u.mesh, t * u.values)


def find_far_endpoint(spec: ProblemSpec, direction: MeshFunction,
                      max_doublings: int = 60) -> MeshFunction:
    """First dyadic multiple t*direction with truncated energy below -1.

    Exists whenever the reaction outgrows the q*theta power; failure after
    the doubling budget signals a configuration without that geometry.
    """
    if np.any(direction.values < 0) or not np.any(direction.values > 0):
        raise InvalidArgument("direction must be nonnegative and nonzero")
    t = 1.0
    for _ in range(max_doublings):
        cand = MeshFunction(direction.mesh, t * direction.values)
        if phi_truncated(cand, spec, "+") < -1.0:
            return cand
        t *= 2.0
    raise SolverSetupError(
        "energy never drops below -1 along the ray; the reaction term "
        "does not dominate the nonlocal growth numerically")


def _clip_to_cone(vals: np.ndarray, sgn: float) -> np.ndarray:
    return np.maximum(vals, 0.0) if sgn > 0 else np.minimum(vals, 0.0)


def _armijo_descent(spec: ProblemSpec, sign: str, vals: np.ndarray, lam0: float,
                    k_solve, clip: bool, tangent: np.ndarray | None = None,
                    metric: np.ndarray | None = None, amp_cap: float = np.inf):
    """One backtracking descent step on the truncated energy.

    With a ``tangent``, the preconditioned direction is projected onto its
    orthogonal complement (lumped-L2 metric): path-interior nodes must not
    slide along the path, where the energy is unbounded below. The first
    trial is capped at a fraction of the field size, and candidates beyond
    ``amp_cap`` are rejected, so a node is deformed, never blown up.
    Returns (new_vals, new_energy, accepted_lam) or None.
    """
    mesh = spec.mesh
    sgn = 1.0 if sign == "+" else -1.0
    u = MeshFunction(mesh, vals)
    r = truncated_residual(u, spec, sign)
    d = k_solve(r.values)
    if tangent is not None:
        tau = tangent[mesh.interior_idx]
        w = metric[mesh.interior_idx]
        tt = float(w @ (tau * tau))
        if tt > 0:
            d = d - (float(w @ (d * tau)) / tt) * tau
    slope = float(r.values @ d)
    if not np.isfinite(slope) or slope <= 0:
        return None
    d_max = float(np.max(np.abs(d)))
    cap = 0.25 * float(np.max(np.abs(vals))) / d_max if d_max > 0 else lam0
    e0 = phi_truncated(u, spec, sign)
    lam = min(lam0, max(cap, 1e-14))
    while lam >= 1e-14:
        new_vals = vals.copy()
        new_vals[mesh.interior_idx] -= lam * d
        if clip:
            new_vals = _clip_to_cone(new_vals, sgn)
        if float(np.max(np.abs(new_vals))) <= amp_cap:
            e1 = phi_truncated(MeshFunction(mesh, new_vals), spec, sign)
            if e1 <= e0 - ARMIJO_C * lam * slope:
                return new_vals, e1, lam
        lam *= 0.5
    return None


def mountain_pass(spec: ProblemSpec, sign: str = "+", path_nodes: int = 17,
                  budget: int = 20000, tol: float = 1e-6,
                  direction: MeshFunction | None = None,
                  requidistribute_every: int = 10) -> SolveOutcome:
    """Constant-sign state via elastic-string deformation of a path.

    Keeps ``path_nodes`` fields from 0 to a far endpoint of negative
    truncated energy, repeatedly applies a preconditioned descent step to
    the maximum-energy node and its neighbors (clipped to the sign cone,
    which never raises the truncated energy on this right-angled mesh),
    and re-equidistributes the path by lumped-L2 arc length. The returned
    state is the max node once its residual passes ``tol``.
    """
    if sign not in ("+", "-"):
        raise InvalidArgument("sign must be '+' or '-'")
    mesh = spec.mesh
    sgn = 1.0 if sign == "+" else -1.0
    base = direction if direction is not None else bump_direction(mesh)
    endpoint = find_far_endpoint(spec, base)
    end_vals = sgn * endpoint.values

    n = max(path_nodes, 5)
    ts = np.linspace(0.0, 1.0, n)
    path = [t * end_vals for t in ts]
    energies = [phi_truncated(MeshFunction(mesh, v), spec, sign) for v in path]
    k_solve = mesh.dirichlet_laplacian_solver()
    lumped = np.zeros(mesh.n_vertices)
    np.add.at(lumped, mesh.triangles.ravel(), np.repeat(mesh.areas / 3.0, 3))

    lam_mem = np.ones(n)
    trace = []
    converged = False
    it = 0
    k_max = 1
    amp_cap = 4.0 * float(np.max(np.abs(end_vals)))
    want_kind = "positive" if sign == "+" else "negative"

    def ridge_refine(k: int) -> float:
        # relocate node k to the best interpolated point on its segments,
        # so the path maximum is actually held by a node before descending
        best_e, best_v = energies[k], None
        for a, b in ((k - 1, k), (k, k + 1)):
            for t in (0.25, 0.5, 0.75):
                v = (1.0 - t) * path[a] + t * path[b]
                e = phi_truncated(MeshFunction(mesh, v), spec, sign)
                if e > best_e:
                    best_e, best_v = e, v
        if best_v is not None:
            path[k], energies[k] = best_v, best_e
        return best_e

    for it in range(1, budget + 1):
        k_max = 1 + int(np.argmax(energies[1:-1]))
        ridge_refine(k_max)
        u_max = MeshFunction(mesh, path[k_max])
        rn_t = truncated_residual(u_max, spec, sign).norm
        trace.append((energies[k_max], rn_t))
        if rn_t <= tol and energies[k_max] > 0 and residual(u_max, spec).norm <= tol \
                and classify(u_max, spec) == want_kind:
            converged = True
            break
        step = _armijo_descent(spec, sign, path[k_max], lam_mem[k_max], k_solve,
                               clip=True, amp_cap=amp_cap)
        if step is not None:
            path[k_max], energies[k_max], lam = step
            lam_mem[k_max] = min(lam * 2.0, 1e6)
        if it % requidistribute_every == 0:
            path = _requidistribute(path, lumped)
            energies = [phi_truncated(MeshFunction(mesh, v), spec, sign) for v in path]

    u0 = MeshFunction(mesh, path[k_max])
    rn = residual(u0, spec).norm
    return SolveOutcome(solution=u0, kind=classify(u0, spec), energy=phi(u0, spec).phi,
                        residual_norm=rn, iterations=it, trace=trace,
                        converged=converged)


def _requidistribute(path: list, lumped: np.ndarray) -> list:
    """Resample the polyline at uniform lumped-L2 arc length, keeping ends."""
    arr = np.array(path)
    seg = np.sqrt(np.maximum(((arr[1:] - arr[:-1]) ** 2 * lumped).sum(axis=1), 0.0))
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if s[-1] == 0.0:
        return path
    targets = np.linspace(0.0, s[-1], len(path))
    out = [path[0]]
    for t in targets[1:-1]:
        k = int(np.searchsorted(s, t, side="right") - 1)
        k = min(k, len(path) - 2)
        w = 0.0 if seg[k] == 0.0 else (t - s[k]) / seg[k]
        out.append((1.0 - w) * arr[k] + w * arr[k + 1])
    out.append(path[-1])
    return out


@dataclass
class TruncationVerdict:
    """Does the off-sign part of a constant-sign state vanish in modular?"""

    kind: str
    off_sign_modular: float
    ok: bool


def truncation_consistency(outcome: SolveOutcome, spec: ProblemSpec,
                           tol: float = 1e-10) -> TruncationVerdict:
    up, um = split_parts(outcome.solution)
    if outcome.kind == "positive":
        off = um
    elif outcome.kind == "negative":
        off = up
    else:
        off = um if modular(gradient(um), spec.exps, spec.mu, spec.quad_rule) \
            < modular(gradient(up), spec.exps, spec.mu, spec.quad_rule) else up
    value = modular(gradient(off), spec.exps, spec.mu, spec.quad_rule)
    ok = outcome.kind in ("positive", "negative") and value <= tol
    return TruncationVerdict(outcome.kind, value, ok)


def _sign_changing(vals: np.ndarray) -> bool:
    return bool(np.any(vals > 0) and np.any(vals < 0))


def minimize_over_M(spec: ProblemSpec, starts: int = 8, budget: int = 2000,
                    tol: float = 1e-6, seed: int = 0, tol_proj: float = 1e-9,
                    start_fields: list | None = None) -> SolveOutcome:
    """Least-energy nodal state: project, descend, reproject.

    Each start is projected onto the constraint set and then follows the
    preconditioned negative residual of the full energy, reprojecting after
    every trial step; the post-projection energies are nonincreasing up to
    line-search slack. A start converges when the full residual passes
    ``tol`` (the constrained minimizer is a free critical point). The
    lowest-energy converged start wins, ties resolved by start order.
    """
    mesh = spec.mesh
    k_solve = mesh.dirichlet_laplacian_solver()
    outcomes, summaries = [], []

    if start_fields is None:
        start_fields = []
        for i in range(starts):
            rng = np.random.default_rng(seed + 7919 * i)
            start_fields.append(random_sign_changing(mesh, rng))

    for i, u_start in enumerate(start_fields):
        this_seed = seed + 7919 * i
        trace = []
        try:
            u_scaled = scaled_to_ray(u_start, spec)
            pair = project_to_M(u_scaled, spec, tol_rel=tol_proj)
        except (BracketFailure, ProjectionFailure) as exc:
            summaries.append({"seed": this_seed, "converged": False,
                              "energy": np.nan, "residual": np.nan,
                              "error": str(exc)})
            continue
        w = pair.projected.values
        e_now = phi(pair.projected, spec).phi
        lam_mem, converged, rn = 1.0, False, np.inf
        it = 0
        for it in range(1, budget + 1):
            u_mf = MeshFunction(mesh, w)
            r = residual(u_mf, spec)
            rn = r.norm
            trace.append((e_now, rn))
            if rn <= tol:
                converged = True
                break
            d = k_solve(r.values)
            slope = float(r.values @ d)
            if not np.isfinite(slope) or slope <= 0:
                break
            accepted = False
            lam, fallback = lam_mem, None
            while lam >= 1e-14:
                v = w.copy()
                v[mesh.interior_idx] -= lam * d
                if _sign_changing(v):
                    try:
                        cand = project_to_M(MeshFunction(mesh, v), spec,
                                            tol_rel=tol_proj, certified=False)
                    except (BracketFailure, ProjectionFailure):
                        cand = None
                    if cand is not None:
                        e_new = phi(cand.projected, spec).phi
                        if e_new <= e_now - ARMIJO_C * lam * slope:
                            w, e_now, pair = cand.projected.values, e_new, cand
                            accepted = True
                            break
                        if fallback is None and \
                                e_new <= e_now + MONOTONE_SLACK * max(1.0, abs(e_now)):
                            fallback = (cand, e_new, lam)
                lam *= 0.5
            if not accepted and fallback is not None:
                cand, e_new, lam = fallback
                w, e_now, pair = cand.projected.values, e_new, cand
                accepted = True
            if not accepted:
                break
            lam_mem = min(lam * 2.0, 1e6)
        u0 = MeshFunction(mesh, w)
        kind = classify(u0, spec)
        out = SolveOutcome(solution=u0, kind=kind, energy=e_now, residual_norm=rn,
                           iterations=it, trace=trace, converged=converged and kind == "nodal",
                           seed=this_seed, pair=pair)
        outcomes.append(out)
        summaries.append({"seed": this_seed, "converged": out.converged,
                          "energy": e_now, "residual": rn, "error": ""})

    if not outcomes:
        raise ProjectionFailure("all nodal starts failed before descent")
    winners = [o for o in outcomes if o.converged]
    pool = winners if winners else outcomes
    best = pool[0]
    for o in pool[1:]:
        if o.energy < best.energy:
            best = o
    best.start_summaries = summaries
    return best


@dataclass
class ProbeRow:
    scale: float
    norm: float
    energy: float
    min_part_norm: float
    converged: bool
    error: str = ""


@dataclass
class CoercivityTable:
    rows: list

    @property
    def trend_ok(self) -> bool:
        """Energy climbs along the table (trend, not per-row monotonicity)."""
        es = [r.energy for r in self.rows if r.converged]
        if len(es) < 2:
            return False
        slope = np.polyfit(np.arange(len(es)), es, 1)[0]
        return bool(es[-1] > es[0] and slope > 0)


def coercivity_probe(spec: ProblemSpec, scale_list, seed: int = 0) -> CoercivityTable:
    """Project progressively more oscillatory sign-changing fields.

    Members of the constraint set built from higher-frequency fields carry
    more gradient energy; the tabulated energies should climb without bound
    along the scale list.
    """
    mesh = spec.mesh
    x0, x1, y0, y1 = mesh.rect
    rows = []
    for s in scale_list:
        freq = int(round(s)) + 1
        u = MeshFunction.interpolate(
            mesh, lambda x, y: np.sin(freq * np.pi * (x - x0) / (x1 - x0))
            * np.sin(np.pi * (y - y0) / (y1 - y0)))
        try:
            pair = project_to_M(scaled_to_ray(u, spec), spec)
            w = pair.projected
            pn, nm = part_norms(w, spec)
            rows.append(ProbeRow(scale=float(s),
                                 norm=luxemburg_norm(gradient(w), spec.exps, spec.mu,
                                                     spec.quad_rule),
                                 energy=phi(w, spec).phi,
                                 min_part_norm=min(pn, nm), converged=True))
        except (BracketFailure, ProjectionFailure) as exc:
            rows.append(ProbeRow(scale=float(s), norm=np.nan, energy=np.nan,
                                 min_part_norm=np.nan, converged=False, error=str(exc)))
    return CoercivityTable(rows)
