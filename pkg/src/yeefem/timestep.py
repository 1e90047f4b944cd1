"""
Explicit leapfrog stepping, step-size estimation and the discrete energy.

The full scheme advances full-space coefficients with

    E^{n+1} = 2 E^n - E^{n-1}
              + tau^2 Minv (f^n + g^n - Mhat_sigma (E^n - E^{n-1}) / tau - K E^n),

where ``Minv`` inverts the lumped mass with weight ``eps + tau sigma / 2`` and
``Mhat_sigma = Q^T M_sigma Q``.  The reduced scheme does the same with the
reduced operators of :mod:`yeefem.reduction` and a precomputed right-hand
side.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import (
    BlockDiagMatrix,
    BoundaryLoad,
    assemble_lumped_mass,
    assemble_stiffness,
    assemble_volume_load,
    invert_block_mass,
)
from .exceptions import CFLEstimationError, ConfigurationError, ContractError, DivergenceError
from .femcore import build_dofmap
from .mesh import classify_reduced_edges, generate_scatterer_mesh
from .reduction import build_projection_matrices, reduce_system

#: reduction mode used by each method for the two right-hand-side variants
METHODS = {
    "NC1": {"lifted": "none", "direct": "none"},
    "N0plus": {"lifted": "A5", "direct": "A5star"},
    "N0": {"lifted": "all", "direct": "all"},
}
_METHOD_ALIASES = {k.lower(): k for k in METHODS}


def canonical_method(method):
    try:
        return _METHOD_ALIASES[str(method).lower()]
    except KeyError:
        raise ConfigurationError(
            f"unknown method {method!r}, expected one of {list(METHODS)}") from None


@dataclass
class TimeStepState:
    """Two consecutive coefficient vectors ``E^{n-1}, E^n``."""

    E_prev: np.ndarray
    E_curr: np.ndarray
    tau: float
    n: int = 1

    def __post_init__(self):
        if self.tau <= 0:
            raise ContractError("tau must be positive")
        if np.shape(self.E_prev) != np.shape(self.E_curr):
            raise ContractError("E_prev and E_curr live in different spaces")

    @property
    def t(self):
        return self.n * self.tau

    @classmethod
    def zeros(cls, n_dofs, tau):
        return cls(np.zeros(n_dofs), np.zeros(n_dofs), tau, 1)


def _advance(state, update):
    E_next = 2 * state.E_curr - state.E_prev + state.tau ** 2 * update
    if not np.all(np.isfinite(E_next)):
        raise DivergenceError(state.n + 1)
    return TimeStepState(state.E_curr, E_next, state.tau, state.n + 1)


def step_full(state, Minv, Mhat_sigma, K, load):
    """One step of the full scheme; ``load`` is ``f^n + g^n``."""
    tau = state.tau
    r = load - Mhat_sigma @ ((state.E_curr - state.E_prev) / tau) - K @ state.E_curr
    return _advance(state, Minv @ r)


def step_reduced(state, Mtilde_inv, Mtilde_sigma, Ktilde, rhs):
    """One step of the reduced scheme; ``rhs`` already carries the inverse mass."""
    tau = state.tau
    r = -(Mtilde_sigma @ ((state.E_curr - state.E_prev) / tau)) - Ktilde @ state.E_curr
    return _advance(state, Mtilde_inv @ r + rhs)


# --------------------------------------------------------------------------
# energy

@dataclass(frozen=True)
class EnergyEntry:
    kinetic: float
    curl: float
    corr1: float
    corr2: float

    @property
    def total(self):
        return self.kinetic + self.curl + self.corr1 + self.corr2


def discrete_energy(u_n, u_np1, tau, Meps, Msigma, K, Q=None):
    """Energy of the pair ``(u^n, u^{n+1})`` (full-space coefficients).

    Returns the kinetic term ``|w|_eps^2``, the curl term of the average
    ``|curl u_hat|_nu^2`` and the two corrections ``-tau^2/4 |curl w|^2`` and
    ``-tau/2 (|Q w|_sigma^2 - |w|_sigma^2)`` with ``w = (u^{n+1} - u^n)/tau``.
    """
    w = (np.asarray(u_np1) - np.asarray(u_n)) / tau
    avg = 0.5 * (np.asarray(u_n) + np.asarray(u_np1))
    Kw = K @ w
    kinetic = float(w @ (Meps @ w))
    curl = float(avg @ (K @ avg))
    corr1 = -tau ** 2 / 4 * float(w @ Kw)
    if Q is None:
        corr2 = 0.0
    else:
        Qw = Q @ w
        corr2 = -tau / 2 * float(Qw @ (Msigma @ Qw) - w @ (Msigma @ w))
    return EnergyEntry(kinetic, curl, corr1, corr2)


@dataclass
class EnergyTrace:
    """Per-step energy record; entry ``k`` belongs to the pair ``(E^n, E^{n+1})``."""

    steps: list = field(default_factory=list)
    times: list = field(default_factory=list)
    entries: list = field(default_factory=list)

    HEADER = ("step", "t", "kinetic", "curl", "corr1", "corr2", "total")

    def append(self, step, t, entry: EnergyEntry):
        self.steps.append(int(step))
        self.times.append(float(t))
        self.entries.append(entry)

    def __len__(self):
        return len(self.entries)

    @property
    def total(self):
        return np.array([e.total for e in self.entries])

    def column(self, name):
        return np.array([getattr(e, name) for e in self.entries])

    def rows(self):
        for s, t, e in zip(self.steps, self.times, self.entries):
            yield (s, t, e.kinetic, e.curl, e.corr1, e.corr2, e.total)

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.HEADER)
            for row in self.rows():
                w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])


# --------------------------------------------------------------------------
# step-size estimation

def _block_inv_sqrt(M: BlockDiagMatrix):
    groups = {}
    for s, (idx, blocks, owner) in M.groups.items():
        lam, V = np.linalg.eigh(blocks)
        if np.any(lam <= 0):
            raise ContractError("mass matrix is not positive definite")
        S = np.einsum("nij,nj,nkj->nik", V, lam ** -0.5, V)
        groups[s] = (idx, S, owner)
    return BlockDiagMatrix(M.n, groups).tocsr()


def _gershgorin_lower(A):
    if sp.issparse(A):
        d = A.diagonal()
        off = np.asarray(abs(A).sum(axis=1)).ravel() - np.abs(d)
    else:
        A = np.asarray(A)
        d = np.diag(A)
        off = np.abs(A).sum(axis=1) - np.abs(d)
    return float(np.min(d - off))


def power_iteration(A, n=None, maxiter=300, tol=1e-10, seed=0, shift=None, block=8):
    """Largest eigenvalue of a symmetric operator by shifted power iteration.

    The iteration runs on ``A + shift I`` with a block of ``block`` vectors
    and a Rayleigh-Ritz step each sweep (``block=1`` is the classical
    single-vector method).  The block makes convergence depend on the gap
    to the ``block + 1``-th eigenvalue, which matters because the stiffness
    spectrum of symmetric meshes has clustered top eigenvalues.

    The default shift is half the negative part of the Gershgorin lower
    bound ``L``; then ``lambda_max + shift > |lambda_min + shift|`` whenever
    ``lambda_max > 0``, so the iteration finds the algebraically largest
    eigenvalue.

    Returns
    -------
    lam : float
    v : ndarray
        Unit eigenvector estimate.

    Raises
    ------
    CFLEstimationError
        If the largest Ritz value has not settled to relative change ``tol``
        after ``maxiter`` sweeps.
    """
    if n is None:
        n = A.shape[0]
    if shift is None:
        shift = max(0.0, -0.5 * _gershgorin_lower(A))
    b = max(1, min(int(block), n))
    rng = np.random.default_rng(seed)
    V, _ = np.linalg.qr(rng.standard_normal((n, b)))
    lam = np.inf
    resid = np.inf
    for _ in range(maxiter):
        AV = np.asarray(A @ V).reshape(n, b)
        theta, Y = np.linalg.eigh(V.T @ AV)
        new = float(theta[-1])
        resid = abs(new - lam) / max(abs(new), 1e-300)
        lam = new
        if resid <= tol:
            v = V @ Y[:, -1]
            return lam, v / np.linalg.norm(v)
        W = AV + shift * V
        if not np.any(W):
            return 0.0, V[:, 0]
        V, _ = np.linalg.qr(W)
    raise CFLEstimationError(
        f"power iteration did not converge in {maxiter} iterations", resid)


def _lambda_max(A, solver, seed, **kw):
    if solver == "power":
        return power_iteration(A, seed=seed, **kw)
    if solver != "lanczos":
        raise ConfigurationError(f"unknown eigen-solver {solver!r}")
    n = A.shape[0]
    if n <= 64:
        lam, V = np.linalg.eigh(A.toarray())
        return float(lam[-1]), V[:, -1]
    v0 = np.random.default_rng(seed).standard_normal(n)
    try:
        lam, V = spla.eigsh(A, k=1, which="LA", v0=v0, tol=1e-13)
    except spla.ArpackNoConvergence as exc:
        raise CFLEstimationError("Lanczos did not converge", float("nan")) from exc
    return float(lam[0]), V[:, 0]


def _tau_for_sign(A, D, s, tau0, solver, search, rtol, seed, kw):
    """Largest tau with ``lambda_max(tau^2/4 A + s tau/2 D) <= 1/2``.

    ``phi(tau) = lambda_max(...)`` is convex with ``phi(0) = 0``, so the
    feasible set is an interval ``[0, tau*]``.
    """
    def phi(tau):
        return _lambda_max((tau ** 2 / 4) * A + (s * tau / 2) * D, solver, seed, **kw)

    if search == "bisection":
        hi = tau0
        while phi(hi)[0] <= 0.5:
            hi *= 2
        lo = 0.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if phi(mid)[0] <= 0.5:
                lo = mid
            else:
                hi = mid
            if hi - lo <= rtol * hi:
                break
        return lo

    # Each eigenvector v gives a quadratic q_v(tau) <= phi(tau); its root of
    # q_v = 1/2 is an upper bound for tau*, and the bounds decrease to tau*.
    tau = tau0
    for _ in range(100):
        _, v = phi(tau)
        a = float(v @ (A @ v)) / 4
        b = s * float(v @ (D @ v)) / 2
        # a = 0 happens for curl-free eigenvectors; the root is then 1 / (2 b)
        if a <= 0 and b <= 0:
            raise CFLEstimationError("eigenvector gives no step-size bound", float("nan"))
        new = 2 * 0.5 / (b + math.sqrt(b * b + 4 * a * 0.5))
        if abs(new - tau) <= rtol * new:
            return min(new, tau)
        tau = new
    raise CFLEstimationError("step-size root iteration did not converge",
                             abs(new - tau) / new)


def estimate_tau_max(Meps, Msigma, Mhat_sigma, K, gamma, solver="lanczos",
                     search="root", rtol=1e-10, seed=0, **solver_kw):
    """Largest tau with ``tau^2/4 v'Kv + gamma tau/2 |v'(Mhat_sigma - M_sigma)v| <= 1/2 v'M_eps v``.

    Parameters
    ----------
    Meps : BlockDiagMatrix
    Msigma, Mhat_sigma, K : sparse matrices on the full space
    gamma : {0, 1}
    solver : {"lanczos", "power"}
        Eigen-solver for the largest eigenvalue of the symmetrically scaled
        operators (ARPACK or :func:`power_iteration`).
    search : {"root", "bisection"}
        How the largest feasible tau is located for each sign of the
        absolute-value term.
    """
    if gamma not in (0, 1):
        raise ConfigurationError("gamma must be 0 or 1")
    S = _block_inv_sqrt(Meps)
    A = sp.csr_matrix(S @ K @ S)
    lam, _ = _lambda_max(A, solver, seed, **solver_kw)
    if lam <= 0:
        raise ContractError("stiffness matrix has no positive eigenvalue")
    tau0 = math.sqrt(2.0 / lam)
    if gamma == 0:
        return tau0
    D = sp.csr_matrix(S @ (sp.csr_matrix(Mhat_sigma) - sp.csr_matrix(Msigma)) @ S)
    D.eliminate_zeros()
    if D.nnz == 0 or abs(D).max() <= 1e-15 * abs(A).max():
        return tau0
    taus = [_tau_for_sign(A, D, s, tau0, solver, search, rtol, seed, solver_kw)
            for s in (1.0, -1.0)]
    return min(taus)


# --------------------------------------------------------------------------
# simulation driver

@dataclass(eq=False)
class SolutionRecord:
    """Outcome of one run: snapshots, optional history and the energy trace.

    ``snapshots`` maps a time to full-space coefficients ``E^n`` at the step
    ``n`` closest to that time; ``history`` (when stored) holds full-space
    coefficients of every ``history_stride``-th step starting at ``E^0``.
    """

    mesh: object
    dofmap: object
    materials: object
    method: str
    rhs_mode: str
    tau: float
    n_steps: int
    snapshots: dict
    energy: EnergyTrace
    history: np.ndarray = None
    history_stride: int = 1

    @property
    def final_time(self):
        return self.n_steps * self.tau

    def snapshot(self, t):
        for key, c in self.snapshots.items():
            if abs(key - t) <= 1e-9 * max(1.0, abs(t)):
                return c
        raise KeyError(f"no snapshot at t={t}; available: {sorted(self.snapshots)}")


class Simulation:
    """Assembled operators and running state of one scattering simulation.

    Parameters
    ----------
    scenario : Scenario
    mesh : Mesh
    method : {"NC1", "N0plus", "N0"}
    rhs_mode : {"lifted", "direct"}
    tau : float
    reduction : str, optional
        Override the edge classification implied by ``method``.
    scheme : {"reduced", "full"}
        ``"full"`` integrates Method 1 on the full space (the projection
        term still uses the classification), ``"reduced"`` the algebraically
        reduced system.
    load_until : float, optional
        Loads are switched off for ``t^n >= load_until``.
    """

    def __init__(self, scenario, mesh, method="NC1", rhs_mode="lifted", tau=None,
                 reduction=None, scheme="reduced", load_until=None, materials=None):
        self.method = canonical_method(method)
        if rhs_mode not in ("lifted", "direct"):
            raise ConfigurationError(f"unknown rhs mode {rhs_mode!r}")
        if scheme not in ("reduced", "full"):
            raise ConfigurationError(f"unknown scheme {scheme!r}")
        if tau is None or tau <= 0:
            raise ConfigurationError("a positive tau is required")
        self.scenario = scenario
        self.mesh = mesh
        self.rhs_mode = rhs_mode
        self.scheme = scheme
        self.tau = float(tau)
        self.load_until = load_until
        self.mat = scenario.materials(mesh) if materials is None else materials
        self.reduction = reduction or METHODS[self.method][rhs_mode]
        mask = classify_reduced_edges(mesh, self.mat, self.reduction)
        self.dm = build_dofmap(mesh, mask)
        self.ops = build_projection_matrices(self.dm)

        self.K = assemble_stiffness(mesh, self.dm, self.mat.nu)
        self.Meps = assemble_lumped_mass(mesh, self.dm, self.mat.eps)
        self.Msigma = assemble_lumped_mass(mesh, self.dm, self.mat.sigma).tocsr()
        weight = self.mat.eps + self.tau * self.mat.sigma / 2
        self.Minv = invert_block_mass(assemble_lumped_mass(mesh, self.dm, weight)).tocsr()
        Q = self.ops.Q
        self.Mhat_sigma = sp.csr_matrix(Q.T @ self.Msigma @ Q)
        self.boundary = BoundaryLoad(mesh, self.dm)

        self.reduced = scheme == "reduced" and bool(mask.any())
        if self.reduced:
            red = reduce_system(self.Minv, self.Msigma, self.K, self.ops, rhs_mode)
            self.red = red
            if rhs_mode == "lifted":
                self._rhs_op = sp.csr_matrix(self.ops.R @ self.Minv)
            else:
                self._rhs_op = sp.csr_matrix(red.Minv @ self.ops.P.T)
            n = self.dm.n_reduced
        else:
            n = self.dm.n_full
        self.state = TimeStepState.zeros(n, self.tau)

    # -- loads -------------------------------------------------------------

    def load(self, t):
        """Full-space load vector ``f(t) + g(t)``."""
        if self.load_until is not None and t >= self.load_until:
            return np.zeros(self.dm.n_full)
        out = self.boundary(self.scenario.boundary_trace, t)
        source = getattr(self.scenario, "source", None)
        if source is not None:
            out += assemble_volume_load(self.mesh, self.dm, source, t)
        return out

    # -- stepping ----------------------------------------------------------

    @property
    def n(self):
        return self.state.n

    @property
    def t(self):
        return self.state.t

    def set_state(self, E_prev, E_curr, n=1):
        self.state = TimeStepState(np.array(E_prev, dtype=float),
                                   np.array(E_curr, dtype=float), self.tau, n)

    def step(self):
        load = self.load(self.state.t)
        if self.reduced:
            R = self.red
            self.state = step_reduced(self.state, R.Minv, R.Msigma, R.K,
                                      self._rhs_op @ load)
        else:
            self.state = step_full(self.state, self.Minv, self.Mhat_sigma, self.K, load)
        return self.state

    def full(self, c):
        """Full-space coefficients of a state vector."""
        return self.ops.P @ c if self.reduced else c

    def full_state(self):
        return self.full(self.state.E_prev), self.full(self.state.E_curr)

    def energy(self):
        """Energy of the current pair ``(E^{n-1}, E^n)`` evaluated on the full space."""
        a, b = self.full_state()
        Q = self.ops.Q if self.dm.reduced.any() else None
        return discrete_energy(a, b, self.tau, self.Meps, self.Msigma, self.K, Q)

    def advance(self, n_steps, divergence_factor=None, window=10):
        """Take ``n_steps`` steps from the current state and record the energy.

        With ``divergence_factor`` set, a :class:`DivergenceError` is raised
        once ``|E_h|`` exceeds that multiple of the largest value seen in the
        first ``window`` steps (or of the initial energy, if larger).
        """
        trace = EnergyTrace()
        ref = abs(self.energy().total)
        for k in range(n_steps):
            self.step()
            e = self.energy()
            trace.append(self.n - 1, (self.n - 1) * self.tau, e)
            if divergence_factor is None:
                continue
            if k < window:
                ref = max(ref, abs(e.total))
            elif abs(e.total) > divergence_factor * max(ref, 1e-300):
                raise DivergenceError(self.n, trace.total, "energy growth")
        return trace

    def tau_max(self, **kw):
        gamma = 1 if self.dm.reduced.any() else 0
        return estimate_tau_max(self.Meps, self.Msigma, self.Mhat_sigma, self.K,
                                gamma, **kw)


def run(scenario, method="NC1", rhs_mode="lifted", level=0, cfl_safety=0.28,
        tau=None, mesh=None, n_steps=None, reduction=None, scheme="reduced",
        energy=True, store_history=False, history_stride=1, load_until=None,
        check_cfl=False, divergence_factor=None):
    """Simulate the scenario from ``E^0 = E^1 = 0`` up to its final time.

    The step is ``tau = cfl_safety * h`` unless given explicitly; the number
    of steps is the smallest ``N`` with ``N tau >= T``.

    Parameters
    ----------
    energy : bool
        Record the discrete energy of each step pair.  For ``scheme="full"``
        this is the functional of the stability estimate; reduced runs only
        know ``R E^n`` and evaluate it on the prolonged vectors ``P R E^n``,
        which is a diagnostic without the monotonicity guarantee.
    check_cfl : bool
        Estimate the stability bound and warn when ``tau`` exceeds it.
    divergence_factor : float, optional
        Abort with :class:`DivergenceError` once the energy exceeds this
        multiple of the largest energy seen during the first 10 steps.
    """
    if mesh is None:
        mesh = generate_scatterer_mesh(scenario.geometry, level)
    if tau is None:
        if not 0 < cfl_safety <= 1:
            raise ConfigurationError("cfl_safety must lie in (0, 1]")
        tau = cfl_safety * mesh.h()
    T = scenario.final_time
    if n_steps is None:
        n_steps = int(math.ceil(T / tau - 1e-9))
    sim = Simulation(scenario, mesh, method, rhs_mode, tau, reduction=reduction,
                     scheme=scheme, load_until=load_until)
    if check_cfl:
        tmax = sim.tau_max()
        if tau > tmax:
            warnings.warn(f"tau={tau:.4g} exceeds the stability bound {tmax:.4g}",
                          RuntimeWarning, stacklevel=2)

    snap_steps = {int(round(t / tau)): t for t in scenario.snapshot_times
                  if round(t / tau) <= n_steps}
    snapshots = {}
    trace = EnergyTrace()
    history = [] if store_history else None
    if store_history:
        history.append(np.zeros(sim.dm.n_full))
    for k in (0, 1):
        if k in snap_steps:
            snapshots[snap_steps[k]] = np.zeros(sim.dm.n_full)
    if store_history and history_stride == 1:
        history.append(np.zeros(sim.dm.n_full))
    ref = 0.0
    while sim.n < n_steps:
        prev = sim.full(sim.state.E_curr)
        sim.step()
        cur = sim.full(sim.state.E_curr)
        if energy:
            Q = sim.ops.Q if sim.dm.reduced.any() else None
            e = discrete_energy(prev, cur, tau, sim.Meps, sim.Msigma, sim.K, Q)
            trace.append(sim.n - 1, (sim.n - 1) * tau, e)
            if divergence_factor is not None:
                if sim.n <= 11:
                    ref = max(ref, abs(e.total))
                elif abs(e.total) > divergence_factor * max(ref, 1e-300):
                    raise DivergenceError(sim.n, trace.total, "energy growth")
        if sim.n in snap_steps:
            snapshots[snap_steps[sim.n]] = cur
        if store_history and sim.n % history_stride == 0:
            history.append(cur)
    return SolutionRecord(
        mesh=mesh, dofmap=sim.dm, materials=sim.mat, method=sim.method,
        rhs_mode=rhs_mode, tau=tau, n_steps=n_steps, snapshots=snapshots,
        energy=trace, history=None if history is None else np.array(history),
        history_stride=history_stride)
