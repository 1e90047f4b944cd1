"""
Scattering benchmark: error norm, nested-mesh convergence studies, CFL table
and field export.

Errors are measured in the relative norm

    |||A - R||| = max_n |d_tau (A - R)|_L2 / max_n |d_tau R|_L2
                + max_n |curl (A_hat - R_hat)|_L2 / max_n |curl R_hat|_L2,

with ``d_tau a = (a^{n+1} - a^n) / tau`` and ``a_hat = (a^n + a^{n+1}) / 2``.
The studies accumulate the four maxima while the simulations advance, so no
trajectory is ever stored.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .assembly import assemble_consistent_mass, assemble_stiffness
from .exceptions import ConfigurationError, ContractError, DivergenceError
from .femcore import build_dofmap, curl_elementwise, element_geometry, vertex_values
from .mesh import generate_scatterer_mesh, refine_uniform
from .timestep import Simulation, canonical_method, estimate_tau_max

CONVERGENCE_HEADER = ("h", "dofs", "error", "eoc")
CFL_HEADER = ("h", "C_nc1", "C_n0plus")


# --------------------------------------------------------------------------
# error norm

class ErrorAccumulator:
    """Running maxima for ``|||A - R|||`` on one mesh.

    Parameters
    ----------
    mesh : Mesh
        Mesh on which both trajectories are expressed (full-space coefficients).
    """

    def __init__(self, mesh):
        dm = build_dofmap(mesh)
        self.M = assemble_consistent_mass(mesh, dm)
        self.K = assemble_stiffness(mesh, dm, 1.0)
        self.d_err = self.d_ref = self.c_err = self.c_ref = 0.0

    def _norm(self, A, v):
        return math.sqrt(max(float(v @ (A @ v)), 0.0))

    def update(self, a_prev, a_curr, r_prev, r_curr, tau):
        """Add the interval ``[t^n, t^{n+1}]`` given both pairs of coefficients."""
        wa = (a_curr - a_prev) / tau
        wr = (r_curr - r_prev) / tau
        ha = 0.5 * (a_prev + a_curr)
        hr = 0.5 * (r_prev + r_curr)
        self.d_err = max(self.d_err, self._norm(self.M, wa - wr))
        self.d_ref = max(self.d_ref, self._norm(self.M, wr))
        self.c_err = max(self.c_err, self._norm(self.K, ha - hr))
        self.c_ref = max(self.c_ref, self._norm(self.K, hr))

    def value(self):
        if self.d_ref == 0 or self.c_ref == 0:
            raise ContractError("reference trajectory is identically zero")
        return self.d_err / self.d_ref + self.c_err / self.c_ref


def error_norm(A, Ref):
    """``|||A - Ref|||`` for two records with stored histories.

    Both histories must hold full-space coefficients on the same mesh and
    the same time grid; use :func:`to_common_grid` for nested-mesh pairs.
    """
    ha, hr = _history(A), _history(Ref)
    step_a = A.tau * A.history_stride
    step_r = Ref.tau * Ref.history_stride
    if ha.shape != hr.shape or not math.isclose(step_a, step_r, rel_tol=1e-12):
        raise ContractError(
            f"incompatible grids: {ha.shape} every {step_a:.6g} vs "
            f"{hr.shape} every {step_r:.6g}")
    if A.mesh.n_edges != Ref.mesh.n_edges:
        raise ContractError("records live on different meshes")
    acc = ErrorAccumulator(Ref.mesh)
    for n in range(len(hr) - 1):
        acc.update(ha[n], ha[n + 1], hr[n], hr[n + 1], step_r)
    return acc.value()


def _history(rec):
    if rec.history is None:
        raise ContractError("record has no stored history")
    return rec.history


# --------------------------------------------------------------------------
# coarse-to-fine transfer

def transfer_matrix(coarse, fine):
    """Sparse matrix mapping coarse full-space coefficients to the refined mesh.

    The coarse field is linear on every fine triangle and tangentially
    continuous, so it lies in the fine space.  Its fine coefficient on the
    edge ``(a, b)`` is ``|e| * E(x_a) . t_e`` for ``Phi_ab`` and
    ``|e| * E(x_b) . t_e`` for ``Phi_ba``, evaluated with the polynomial of
    the parent triangle.
    """
    if fine.parent is None or len(fine.parent) != fine.n_triangles \
            or fine.parent.max() >= coarse.n_triangles \
            or fine.n_triangles != 4 * coarse.n_triangles:
        raise ContractError("fine mesh is not a uniform refinement of the coarse mesh")
    dm = build_dofmap(coarse)
    geom = element_geometry(coarse.vertices, coarse.triangles)
    coarse_tri = fine.parent[fine.edge_tris[:, 0]]
    t = fine.edge_tangents() * fine.edge_lengths()[:, None]  # |e| t_e
    rows, cols, vals = [], [], []
    for end in (0, 1):
        x = fine.vertices[fine.edges[:, end]]
        lam = x - geom.points[coarse_tri, 0]
        l12 = np.einsum("nad,nd->na", geom.grads[coarse_tri, 1:], lam)
        lam = np.concatenate([1 - l12.sum(axis=1, keepdims=True), l12], axis=1)
        la = np.take_along_axis(lam, dm.attach[coarse_tri], axis=1)
        gg = np.take_along_axis(geom.grads[coarse_tri], dm.grad[coarse_tri][:, :, None], axis=1)
        coef = dm.sign[coarse_tri] * la * np.einsum("nkd,nd->nk", gg, t)
        rows.append(np.repeat(2 * np.arange(fine.n_edges) + end, 6))
        cols.append(dm.tri_dofs[coarse_tri].ravel())
        vals.append(coef.ravel())
    T = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(2 * fine.n_edges, dm.n_full))
    T.eliminate_zeros()
    T.sort_indices()
    return T


def transfer_coarse_to_fine(c, coarse, fine, T=None):
    """Fine-mesh coefficients of the coarse field ``c`` (full or reduced space)."""
    if T is None:
        T = transfer_matrix(coarse, fine)
    c = np.asarray(c, dtype=float)
    if c.shape[-1] != T.shape[1]:
        raise ContractError("coefficients must be given in the coarse full space")
    return T @ c


def to_common_grid(coarse_rec, fine_rec):
    """Copy of ``coarse_rec`` transferred to the fine mesh and a subsampled ``fine_rec``."""
    from dataclasses import replace

    T = transfer_matrix(coarse_rec.mesh, fine_rec.mesh)
    ratio = coarse_rec.tau * coarse_rec.history_stride / (fine_rec.tau * fine_rec.history_stride)
    k = int(round(ratio))
    if k < 1 or abs(ratio - k) > 1e-9:
        raise ContractError("time grids are not nested")
    hc = _history(coarse_rec) @ T.T
    hf = _history(fine_rec)[::k]
    n = min(len(hc), len(hf))
    return (replace(coarse_rec, mesh=fine_rec.mesh, dofmap=fine_rec.dofmap, history=hc[:n]),
            replace(fine_rec, history=hf[:n], history_stride=fine_rec.history_stride * k))


# --------------------------------------------------------------------------
# convergence studies

@dataclass(frozen=True)
class ConvergenceRow:
    level: int
    h: float
    dofs: int
    error: float
    eoc: float
    tau: float


def _with_eoc(raw):
    rows = []
    for k, (level, h, dofs, err, tau) in enumerate(raw):
        eoc = math.nan
        if k > 0 and err > 0 and raw[k - 1][3] > 0:
            eoc = math.log2(raw[k - 1][3] / err)
        rows.append(ConvergenceRow(level, h, dofs, err, eoc, tau))
    return rows


def _meshes(scenario, levels):
    levels = sorted(levels)
    if len(levels) < 2:
        raise ConfigurationError("need at least two levels")
    m = generate_scatterer_mesh(scenario.geometry, levels[0])
    out = {levels[0]: m}
    for L in range(levels[0] + 1, levels[-1] + 1):
        m = refine_uniform(m)
        if L in levels:
            out[L] = m
    return out


def self_convergence(scenario, method="NC1", rhs_mode="lifted", levels=(1, 2, 3),
                     cfl_factor=0.28, progress=None):
    """Errors ``|||E_h - E_2h|||`` of one method between consecutive nested levels.

    All levels advance in lockstep with ``tau_l = cfl_factor * h_0 / 2^(l - l_0)``;
    each pair is compared on the coarser time grid after transferring the
    coarser solution.  One row per level except the first.
    """
    levels = sorted(levels)
    if any(b != a + 1 for a, b in zip(levels, levels[1:])):
        raise ConfigurationError("levels must be consecutive")
    meshes = _meshes(scenario, levels)
    tau0 = cfl_factor * meshes[levels[0]].h()
    n0 = int(math.ceil(scenario.final_time / tau0 - 1e-9))
    top = levels[-1]
    sims, accs, transfers, stash = {}, {}, {}, {}
    for L in levels:
        tau = tau0 / 2 ** (L - levels[0])
        sims[L] = Simulation(scenario, meshes[L], method, rhs_mode, tau)
        stash[L] = np.zeros(sims[L].dm.n_full)
    for L in levels[1:]:
        accs[L] = ErrorAccumulator(meshes[L])
        transfers[L] = transfer_matrix(meshes[L - 1], meshes[L])
    n_fine = n0 * 2 ** (top - levels[0])
    for k in range(1, n_fine + 1):
        for L in levels:
            stride = 2 ** (top - L)
            if k % stride or k // stride < 2:
                continue
            try:
                sims[L].step()
            except DivergenceError as exc:
                exc.level = L
                raise
        # compare each pair on the coarse grid of the pair
        for L in levels[1:]:
            stride_c = 2 ** (top - L + 1)
            if k % stride_c:
                continue
            c_prev, c_curr = sims[L - 1].full_state()
            f_curr = sims[L].full(sims[L].state.E_curr)
            T = transfers[L]
            accs[L].update(stash[L], f_curr, T @ c_prev, T @ c_curr,
                           sims[L - 1].tau)
            stash[L] = f_curr
        if progress is not None:
            progress(k, n_fine)
    raw = []
    for L in levels[1:]:
        s = sims[L]
        dofs = s.dm.n_reduced if canonical_method(method) != "NC1" else s.dm.n_full
        raw.append((L, meshes[L].h(), dofs, accs[L].value(), s.tau))
    return _with_eoc(raw)


def compare_methods(scenario, methods=("N0plus", "N0"), levels=(1, 2, 3),
                    rhs_mode="lifted", cfl_factor=0.28, reference="NC1",
                    keep_final=False, progress=None):
    """Errors ``|||E^method_h - E^ref_h|||`` against a reference method on each mesh.

    ``methods`` entries are method names or ``(method, rhs_mode)`` pairs.
    Returns ``{key: [ConvergenceRow, ...]}`` keyed by ``(method, rhs_mode)``;
    with ``keep_final`` also the last two full-space states of every run on
    the finest level (key ``"final"``).
    """
    specs = []
    for m in methods:
        specs.append((canonical_method(m), rhs_mode) if isinstance(m, str)
                     else (canonical_method(m[0]), m[1]))
    meshes = _meshes(scenario, levels)
    raw = {s: [] for s in specs}
    final = {}
    for L in sorted(meshes):
        mesh = meshes[L]
        tau = cfl_factor * mesh.h()
        n_steps = int(math.ceil(scenario.final_time / tau - 1e-9))
        ref = Simulation(scenario, mesh, reference, "lifted", tau)
        runs = {s: Simulation(scenario, mesh, s[0], s[1], tau) for s in specs}
        acc = {s: ErrorAccumulator(mesh) for s in specs}
        r_prev = np.zeros(ref.dm.n_full)
        prev = {s: np.zeros(ref.dm.n_full) for s in specs}
        for s in specs:
            acc[s].update(prev[s], prev[s], r_prev, r_prev, tau)
        while ref.n < n_steps:
            try:
                ref.step()
                for s in specs:
                    runs[s].step()
            except DivergenceError as exc:
                exc.level = L
                raise
            r_curr = ref.full(ref.state.E_curr)
            for s in specs:
                cur = runs[s].full(runs[s].state.E_curr)
                acc[s].update(prev[s], cur, r_prev, r_curr, tau)
                prev[s] = cur
            r_prev = r_curr
            if progress is not None:
                progress(L, ref.n, n_steps)
        for s in specs:
            raw[s].append((L, mesh.h(), runs[s].dm.n_reduced, acc[s].value(), tau))
        if keep_final:
            final = {"mesh": mesh, "tau": tau,
                     "reference": ref.full_state(),
                     **{s: runs[s].full_state() for s in specs}}
    out = {s: _with_eoc(r) for s, r in raw.items()}
    if keep_final:
        out["final"] = final
    return out


def convergence_study(scenario, method="NC1", rhs_mode="lifted", levels=(1, 2, 3),
                      cfl_factor=0.28):
    """Convergence table for one method.

    ``NC1`` is compared with itself on consecutive nested meshes, the
    reduced methods with the ``NC1`` solution on the same mesh.
    """
    if len(levels) < 3:
        raise ConfigurationError("a convergence study needs at least three levels")
    method = canonical_method(method)
    if method == "NC1":
        return self_convergence(scenario, method, rhs_mode, levels, cfl_factor)
    return compare_methods(scenario, [(method, rhs_mode)], levels, cfl_factor=cfl_factor)[
        (method, rhs_mode)]


def write_convergence_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CONVERGENCE_HEADER)
        for r in rows:
            w.writerow([repr(r.h), r.dofs, repr(r.error), "" if math.isnan(r.eoc) else repr(r.eoc)])


# --------------------------------------------------------------------------
# error localization

def element_error_contributions(a_pair, r_pair, tau, mesh):
    """Per-triangle share of the final-step error between two trajectories.

    ``a_pair`` and ``r_pair`` are ``(E^{N-1}, E^N)`` in full-space
    coefficients.  Each triangle gets
    ``|d_tau(A - R)|_T^2 / |d_tau R|^2 + |curl(A_hat - R_hat)|_T^2 / |curl R_hat|^2``.
    """
    dm = build_dofmap(mesh)
    geom = element_geometry(mesh.vertices, mesh.triangles)

    def local_l2(c):
        v = vertex_values(c, dm, geom)
        return geom.area / 12 * ((v ** 2).sum(axis=(1, 2)) + (v.sum(axis=1) ** 2).sum(axis=1))

    def local_curl(c):
        return geom.area * curl_elementwise(c, dm, geom) ** 2

    wa = (a_pair[1] - a_pair[0]) / tau
    wr = (r_pair[1] - r_pair[0]) / tau
    ha = 0.5 * (a_pair[0] + a_pair[1])
    hr = 0.5 * (r_pair[0] + r_pair[1])
    d = local_l2(wa - wr) / max(local_l2(wr).sum(), 1e-300)
    c = local_curl(ha - hr) / max(local_curl(hr).sum(), 1e-300)
    return d + c


def touches_interface_or_boundary(mesh, tri):
    """True if triangle ``tri`` has a vertex on the material interface or the outer boundary."""
    special = np.zeros(mesh.n_vertices, dtype=bool)
    special[mesh.edges[mesh.boundary_edges].ravel()] = True
    special[mesh.edges[mesh.interface_edges()].ravel()] = True
    return bool(special[mesh.triangles[tri]].any())


# --------------------------------------------------------------------------
# CFL table

def cfl_table(scenario, levels, solver="lanczos"):
    """``(h, tau_max/h with gamma=0, tau_max/h with gamma=1)`` for each level.

    The second column uses the edge classification of the ``N0plus`` method.
    """
    meshes = _meshes(scenario, levels)
    rows = []
    for L in sorted(meshes):
        m = meshes[L]
        sim = Simulation(scenario, m, "N0plus", "lifted", 1.0)
        c0 = estimate_tau_max(sim.Meps, sim.Msigma, sim.Mhat_sigma, sim.K, 0,
                              solver=solver) / m.h()
        c1 = estimate_tau_max(sim.Meps, sim.Msigma, sim.Mhat_sigma, sim.K, 1,
                              solver=solver) / m.h()
        rows.append((m.h(), c0, c1))
    return rows


def write_cfl_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CFL_HEADER)
        for row in rows:
            w.writerow([repr(float(v)) for v in row])


# --------------------------------------------------------------------------
# field export

def snapshot_table(c, mesh, dm=None):
    """Centroid values ``cx, cy, Ex, Ey, |E|, curlE`` per triangle."""
    if dm is None:
        dm = build_dofmap(mesh)
    geom = element_geometry(mesh.vertices, mesh.triangles)
    c = dm.prolong(c)
    cen = mesh.centroids()
    E = vertex_values(c, dm, geom).mean(axis=1)  # linear field: centroid = vertex mean
    curl = curl_elementwise(c, dm, geom)
    return np.column_stack([cen, E, np.hypot(E[:, 0], E[:, 1]), curl])


def export_snapshot(record, t, path, format="csv"):
    """Write the field at snapshot time ``t`` as CSV or legacy VTK."""
    try:
        c = record.snapshot(t)
    except KeyError as exc:
        raise KeyError(exc.args[0]) from None
    table = snapshot_table(c, record.mesh, record.dofmap)
    if format == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["cx", "cy", "Ex", "Ey", "|E|", "curlE"])
            for row in table:
                w.writerow([repr(float(v)) for v in row])
    elif format in ("vtk", "vtk-legacy"):
        _write_vtk(record.mesh, table, t, path)
    else:
        raise ConfigurationError(f"unknown export format {format!r}")
    return path


def _write_vtk(mesh, table, t, path):
    V, T = mesh.vertices, mesh.triangles
    lines = ["# vtk DataFile Version 3.0", f"electric field at t={float(t)!r}", "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {len(V)} double"]
    lines += [f"{float(x)!r} {float(y)!r} 0.0" for x, y in V]
    lines.append(f"CELLS {len(T)} {4 * len(T)}")
    lines += [f"3 {a} {b} {c}" for a, b, c in T]
    lines.append(f"CELL_TYPES {len(T)}")
    lines += ["5"] * len(T)
    lines.append(f"CELL_DATA {len(T)}")
    lines.append("VECTORS E double")
    lines += [f"{float(ex)!r} {float(ey)!r} 0.0" for ex, ey in table[:, 2:4]]
    for name, col in (("absE", 4), ("curlE", 5)):
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [repr(float(v)) for v in table[:, col]]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
