"""Independent numerical verifier by direct transcription.

The problem is discretized on a uniform mesh with node states and one
constant control per interval; dynamics become trapezoidal defect equalities
and the cost a trapezoidal quadrature.  Velocity-quadratic problems with
affine dynamics yield a convex equality-constrained quadratic program solved
through one KKT factorization; everything else runs damped Newton steps on
the KKT conditions with exact symbolic derivatives.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sparse
from scipy.sparse.linalg import splu

from .errors import SolverError
from .expr import Expr, VarSpace
from .problem import ProblemSpec, Samples, Solution

__all__ = [
    "OracleResult",
    "DerivativeCheck",
    "ConvergenceStudy",
    "transcribe_and_solve",
    "check_derivatives",
    "convergence_study",
    "discrete_objective",
    "max_defect",
]


@dataclass(frozen=True)
class OracleResult:
    cost: float
    samples: Samples
    kkt_residual: float
    mesh: int
    flag: str  # "global-convex" | "local"
    converged: bool
    iterations: int

    def to_solution(self) -> Solution:
        return Solution(
            status="candidate",
            method="oracle",
            cost=self.cost,
            samples=self.samples,
            diagnostics={
                "kkt_residual": self.kkt_residual,
                "mesh": self.mesh,
                "flag": self.flag,
                "converged": self.converged,
                "iterations": self.iterations,
            },
        )

    def summary_json(self) -> str:
        return (
            json.dumps(
                {
                    "N": self.mesh,
                    "cost": self.cost,
                    "kkt_residual": self.kkt_residual,
                    "flag": self.flag,
                    "converged": self.converged,
                },
                indent=2,
                sort_keys=True,
            )
            + "\n"
        )


# ---------------------------------------------------------------------------
# transcription scaffolding
# ---------------------------------------------------------------------------


class _Transcription:
    """Index bookkeeping plus exact-derivative evaluators for the discrete
    problem.  Decision vector: states at nodes then interval controls."""

    def __init__(self, p: ProblemSpec, N: int):
        if N < 2:
            raise ValueError("mesh size must be at least 2")
        if not p.is_numeric:
            raise SolverError("oracle needs numeric horizon and boundary data")
        self.p = p
        self.sp: VarSpace = p.space
        self.N = N
        n, m = self.sp.n, self.sp.m
        a, b = p.horizon_floats()
        self.a, self.b = a, b
        self.h = (b - a) / N
        self.times = np.linspace(a, b, N + 1)
        self.nz = n * (N + 1) + m * N
        self.pins = [
            (0 if pin.endpoint == "t0" else N, pin.state, float(pin.value.as_fraction()))
            for pin in p.boundary
        ]
        self.nc = n * N + len(self.pins)
        self.point_vars = [*self.sp.states, *self.sp.controls]
        lag = p.lagrangian
        self.L = lag
        self.dL = [lag.diff(v) for v in self.point_vars]
        self.d2L = [[e.diff(v) for v in self.point_vars] for e in self.dL]
        self.phi = list(p.dynamics)
        self.dphi = [[e.diff(v) for v in self.point_vars] for e in self.phi]
        self.d2phi = [
            [[de.diff(v) for v in self.point_vars] for de in row] for row in self.dphi
        ]

    # -- indexing -----------------------------------------------------------

    def ix(self, k: int, i: int) -> int:
        return k * self.sp.n + i

    def iu(self, k: int, j: int) -> int:
        return self.sp.n * (self.N + 1) + k * self.sp.m + j

    def env(self, z: np.ndarray, node: int, interval: int) -> dict[str, float]:
        e = {self.sp.time: float(self.times[node])}
        for i, name in enumerate(self.sp.states):
            e[name] = float(z[self.ix(node, i)])
        for j, name in enumerate(self.sp.controls):
            e[name] = float(z[self.iu(interval, j)])
        return e

    def initial_guess(self) -> np.ndarray:
        n, m, N = self.sp.n, self.sp.m, self.N
        z = np.zeros(self.nz)
        lo = {i: v for k, i, v in self.pins if k == 0}
        hi = {i: v for k, i, v in self.pins if k == N}
        for i in range(n):
            va, vb = lo.get(i, 0.0), hi.get(i, 0.0)
            for k in range(N + 1):
                z[self.ix(k, i)] = va + (vb - va) * k / N
        # controls consistent with the interpolated first state block
        for k in range(N):
            for j in range(min(m, n)):
                z[self.iu(k, j)] = (z[self.ix(k + 1, j)] - z[self.ix(k, j)]) / self.h
        return z

    # -- values and derivatives --------------------------------------------

    def eval_points(self):
        """Quadrature/defect evaluation points: per interval k, the pair
        (node k, control k) and (node k+1, control k)."""
        for k in range(self.N):
            yield k, k, k
            yield k, k + 1, k

    def objective(self, z: np.ndarray) -> float:
        acc = 0.0
        for _, node, interval in self.eval_points():
            acc += 0.5 * self.h * self.L.eval(self.env(z, node, interval))
        return acc

    def gradient(self, z: np.ndarray) -> np.ndarray:
        g = np.zeros(self.nz)
        for _, node, interval in self.eval_points():
            e = self.env(z, node, interval)
            for slot, _ in enumerate(self.sp.states):
                g[self.ix(node, slot)] += 0.5 * self.h * self.dL[slot].eval(e)
            for j in range(self.sp.m):
                slot = self.sp.n + j
                g[self.iu(interval, j)] += 0.5 * self.h * self.dL[slot].eval(e)
        return g

    def constraints(self, z: np.ndarray) -> np.ndarray:
        n = self.sp.n
        c = np.zeros(self.nc)
        for k in range(self.N):
            lo = [f.eval(self.env(z, k, k)) for f in self.phi]
            hi = [f.eval(self.env(z, k + 1, k)) for f in self.phi]
            for i in range(n):
                c[k * n + i] = (
                    z[self.ix(k + 1, i)]
                    - z[self.ix(k, i)]
                    - 0.5 * self.h * (lo[i] + hi[i])
                )
        for row, (k, i, v) in enumerate(self.pins):
            c[n * self.N + row] = z[self.ix(k, i)] - v
        return c

    def jacobian(self, z: np.ndarray) -> sparse.csr_matrix:
        n, m = self.sp.n, self.sp.m
        ri: list[int] = []
        ci: list[int] = []
        vv: list[float] = []

        def add(r: int, c: int, v: float) -> None:
            if v != 0.0:
                ri.append(r)
                ci.append(c)
                vv.append(v)

        for k in range(self.N):
            e_lo = self.env(z, k, k)
            e_hi = self.env(z, k + 1, k)
            for i in range(n):
                r = k * n + i
                add(r, self.ix(k + 1, i), 1.0)
                add(r, self.ix(k, i), -1.0)
                for slot, _ in enumerate(self.sp.states):
                    add(r, self.ix(k, slot), -0.5 * self.h * self.dphi[i][slot].eval(e_lo))
                    add(
                        r,
                        self.ix(k + 1, slot),
                        -0.5 * self.h * self.dphi[i][slot].eval(e_hi),
                    )
                for j in range(m):
                    slot = n + j
                    add(
                        r,
                        self.iu(k, j),
                        -0.5 * self.h * (self.dphi[i][slot].eval(e_lo) + self.dphi[i][slot].eval(e_hi)),
                    )
        for row, (k, i, _) in enumerate(self.pins):
            add(n * self.N + row, self.ix(k, i), 1.0)
        mat = sparse.coo_matrix((vv, (ri, ci)), shape=(self.nc, self.nz))
        return mat.tocsr()

    def hessian_lagrangian(self, z: np.ndarray, lam: np.ndarray) -> sparse.csr_matrix:
        """Hessian of objective + lam . constraints (defect rows only carry
        curvature; pin rows are linear)."""
        n, m = self.sp.n, self.sp.m
        nv = n + m
        ri: list[int] = []
        ci: list[int] = []
        vv: list[float] = []

        def col_index(k_node: int, k_int: int, slot: int) -> int:
            if slot < n:
                return self.ix(k_node, slot)
            return self.iu(k_int, slot - n)

        for k, node, interval in self.eval_points():
            e = self.env(z, node, interval)
            for s1 in range(nv):
                for s2 in range(s1, nv):
                    val = 0.5 * self.h * self.d2L[s1][s2].eval(e)
                    for i in range(n):
                        li = lam[k * n + i]
                        if li != 0.0:
                            val -= 0.5 * self.h * li * self.d2phi[i][s1][s2].eval(e)
                    if val == 0.0:
                        continue
                    c1 = col_index(node, interval, s1)
                    c2 = col_index(node, interval, s2)
                    ri.append(c1)
                    ci.append(c2)
                    vv.append(val)
                    if c1 != c2:
                        ri.append(c2)
                        ci.append(c1)
                        vv.append(val)
        mat = sparse.coo_matrix((vv, (ri, ci)), shape=(self.nz, self.nz))
        return mat.tocsr()

    def is_quadratic(self) -> bool:
        mixed = [*self.sp.states, *self.sp.controls]
        try:
            if self.L.degree_total(mixed) > 2:
                return False
            return all(f.degree_total(mixed) <= 1 for f in self.phi)
        except Exception:
            return False

    def pointwise_convex(self) -> bool:
        """The discrete Hessian is PSD iff the (x,u)-Hessian of L is PSD at
        every node time (positive quadrature weights, pointwise blocks)."""
        nv = self.sp.n + self.sp.m
        for tk in self.times:
            e = {self.sp.time: float(tk)}
            e.update({name: 0.0 for name in self.point_vars})
            hess = np.array(
                [[self.d2L[i][j].eval(e) for j in range(nv)] for i in range(nv)]
            )
            if np.min(np.linalg.eigvalsh(0.5 * (hess + hess.T))) < -1e-12:
                return False
        return True

    def to_samples(self, z: np.ndarray) -> Samples:
        n, m, N = self.sp.n, self.sp.m, self.N
        states = np.array([[z[self.ix(k, i)] for i in range(n)] for k in range(N + 1)])
        controls = np.array([[z[self.iu(k, j)] for j in range(m)] for k in range(N)])
        return Samples(times=self.times.copy(), states=states, controls=controls)


# ---------------------------------------------------------------------------
# solvers
# ---------------------------------------------------------------------------


def _kkt_matrix(H: sparse.spmatrix, J: sparse.spmatrix) -> sparse.csc_matrix:
    nz, nc = H.shape[0], J.shape[0]
    return sparse.bmat(
        [[H, J.T], [J, sparse.coo_matrix((nc, nc))]], format="csc"
    )


def _solve_quadratic(tr: _Transcription) -> OracleResult:
    z0 = np.zeros(tr.nz)
    lam0 = np.zeros(tr.nc)
    g0 = tr.gradient(z0)
    H = tr.hessian_lagrangian(z0, lam0)
    J = tr.jacobian(z0)
    r = -tr.constraints(z0)
    kkt = _kkt_matrix(H, J)
    rhs = np.concatenate([-g0, r])
    try:
        lu = splu(kkt)
    except RuntimeError as exc:
        raise SolverError(f"KKT system is singular (rank defect): {exc}") from exc
    sol = lu.solve(rhs)
    if not np.all(np.isfinite(sol)):
        raise SolverError("KKT system is singular (non-finite solution)")
    z, lam = sol[: tr.nz], sol[tr.nz :]
    stat = g0 + H @ z + J.T @ lam
    res = max(float(np.max(np.abs(stat))), float(np.max(np.abs(tr.constraints(z)))))
    flag = "global-convex" if tr.pointwise_convex() else "local"
    return OracleResult(
        cost=float(tr.objective(z)),
        samples=tr.to_samples(z),
        kkt_residual=res,
        mesh=tr.N,
        flag=flag,
        converged=res <= 1e-9,
        iterations=1,
    )


def _solve_newton(tr: _Transcription, tol: float, max_iter: int) -> OracleResult:
    z = tr.initial_guess()
    lam = np.zeros(tr.nc)
    mu = 0.0

    def residual(zv: np.ndarray, lv: np.ndarray) -> float:
        stat = tr.gradient(zv) + tr.jacobian(zv).T @ lv
        return max(float(np.max(np.abs(stat))), float(np.max(np.abs(tr.constraints(zv)))))

    res = residual(z, lam)
    iterations = 0
    for iterations in range(1, max_iter + 1):
        if res <= tol:
            break
        J = tr.jacobian(z)
        H = tr.hessian_lagrangian(z, lam)
        stat = tr.gradient(z) + J.T @ lam
        rhs = np.concatenate([-stat, -tr.constraints(z)])
        stepped = False
        for _ in range(12):
            kkt = _kkt_matrix(H + mu * sparse.identity(tr.nz, format="csr"), J)
            try:
                delta = splu(kkt).solve(rhs)
            except RuntimeError:
                mu = max(10.0 * mu, 1e-8)
                continue
            if not np.all(np.isfinite(delta)):
                mu = max(10.0 * mu, 1e-8)
                continue
            z_new = z + delta[: tr.nz]
            lam_new = lam + delta[tr.nz :]
            res_new = residual(z_new, lam_new)
            if math.isfinite(res_new) and (res_new < res or res_new <= tol):
                z, lam, res = z_new, lam_new, res_new
                mu /= 10.0
                stepped = True
                break
            mu = max(10.0 * mu, 1e-8)
        if not stepped:
            break
    return OracleResult(
        cost=float(tr.objective(z)),
        samples=tr.to_samples(z),
        kkt_residual=res,
        mesh=tr.N,
        flag="local",
        converged=res <= tol,
        iterations=iterations,
    )


def transcribe_and_solve(
    p: ProblemSpec, N: int = 200, tol: float = 1e-9, max_iter: int = 200
) -> OracleResult:
    """Discretize and solve to KKT residual <= tol.

    Velocity-quadratic objectives with affine dynamics go through a single
    sparse KKT factorization (flag "global-convex" when the running cost's
    pointwise Hessian is PSD); otherwise damped Newton on the KKT conditions
    (flag "local", non-convergence reported in the result rather than
    raised).
    """
    tr = _Transcription(p, N)
    if tr.is_quadratic():
        return _solve_quadratic(tr)
    return _solve_newton(tr, tol, max_iter)


# ---------------------------------------------------------------------------
# independent checks
# ---------------------------------------------------------------------------


def discrete_objective(p: ProblemSpec, N: int, samples: Samples) -> float:
    """Trapezoidal objective of an externally supplied node trajectory."""
    tr = _Transcription(p, N)
    z = _pack(tr, samples)
    return tr.objective(z)


def max_defect(p: ProblemSpec, N: int, samples: Samples) -> float:
    """Largest transcription constraint violation of a node trajectory."""
    tr = _Transcription(p, N)
    z = _pack(tr, samples)
    return float(np.max(np.abs(tr.constraints(z))))


def _pack(tr: _Transcription, samples: Samples) -> np.ndarray:
    z = np.zeros(tr.nz)
    for k in range(tr.N + 1):
        for i in range(tr.sp.n):
            z[tr.ix(k, i)] = samples.states[k, i]
    for k in range(tr.N):
        for j in range(tr.sp.m):
            z[tr.iu(k, j)] = samples.controls[k, j]
    return z


@dataclass(frozen=True)
class DerivativeCheck:
    max_gradient_error: float
    max_jacobian_error: float
    points: int
    ok: bool


def check_derivatives(
    p: ProblemSpec,
    N: int = 40,
    points: int = 10,
    step: float = 1e-6,
    rtol: float = 1e-6,
    seed: int = 42,
) -> DerivativeCheck:
    """Central finite differences against the symbolic gradient and Jacobian
    at pseudo-random decision vectors."""
    tr = _Transcription(p, N)
    rng = np.random.default_rng(seed)
    worst_g = 0.0
    worst_j = 0.0
    for _ in range(points):
        z = rng.uniform(-1.0, 1.0, tr.nz)
        g = tr.gradient(z)
        g_fd = np.zeros_like(g)
        for idx in range(tr.nz):
            zp, zm = z.copy(), z.copy()
            zp[idx] += step
            zm[idx] -= step
            g_fd[idx] = (tr.objective(zp) - tr.objective(zm)) / (2 * step)
        scale = max(1.0, float(np.max(np.abs(g))))
        worst_g = max(worst_g, float(np.max(np.abs(g - g_fd))) / scale)

        J = tr.jacobian(z).toarray()
        J_fd = np.zeros_like(J)
        for idx in range(tr.nz):
            zp, zm = z.copy(), z.copy()
            zp[idx] += step
            zm[idx] -= step
            J_fd[:, idx] = (tr.constraints(zp) - tr.constraints(zm)) / (2 * step)
        scale = max(1.0, float(np.max(np.abs(J))))
        worst_j = max(worst_j, float(np.max(np.abs(J - J_fd))) / scale)
    return DerivativeCheck(
        max_gradient_error=worst_g,
        max_jacobian_error=worst_j,
        points=points,
        ok=worst_g <= rtol and worst_j <= rtol,
    )


# ---------------------------------------------------------------------------
# convergence studies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConvergenceRow:
    mesh: int
    cost: float
    cost_gap: float
    sup_error: float


@dataclass(frozen=True)
class ConvergenceStudy:
    rows: tuple[ConvergenceRow, ...]
    floor: float = 1e-13

    def ratios(self) -> list[float]:
        out = []
        for prev, cur in zip(self.rows, self.rows[1:]):
            if prev.sup_error > self.floor:
                out.append(cur.sup_error / prev.sup_error)
        return out

    def halving_ok(self, factor: float = 0.6) -> bool:
        return all(r <= factor for r in self.ratios())

    def strictly_decreasing(self) -> bool:
        pairs = [
            (prev.sup_error, cur.sup_error)
            for prev, cur in zip(self.rows, self.rows[1:])
            if prev.sup_error > self.floor or cur.sup_error > self.floor
        ]
        return all(cur < prev for prev, cur in pairs)

    def to_text(self) -> str:
        lines = ["    N        cost        cost gap   sup error"]
        for r in self.rows:
            lines.append(
                f"{r.mesh:5d}  {r.cost:12.8f}  {r.cost_gap:10.3e}  {r.sup_error:10.3e}"
            )
        return "\n".join(lines)


def convergence_study(
    p: ProblemSpec, meshes: list[int], reference: Solution
) -> ConvergenceStudy:
    """Oracle runs over meshes against a closed-form reference trajectory."""
    if not reference.has_closed_form:
        raise ValueError("the reference solution must have closed-form trajectories")
    sp = p.space
    ref_cost = reference.cost_float()
    rows = []
    for N in meshes:
        res = transcribe_and_solve(p, N)
        sup = 0.0
        for k, tk in enumerate(res.samples.times):
            for i, e in enumerate(reference.states):
                sup = max(sup, abs(res.samples.states[k, i] - e.eval({sp.time: float(tk)})))
        rows.append(
            ConvergenceRow(
                mesh=N,
                cost=res.cost,
                cost_gap=abs(res.cost - ref_cost),
                sup_error=sup,
            )
        )
    return ConvergenceStudy(rows=tuple(rows))
