"""Hybrid lattice simulator and the dense statevector oracle.

The hybrid backend keeps every site in the cheapest faithful form:

* ClassicalBit -- a definite 0/1 (scratch sites, the pointer, outcomes),
* ProductQubit -- an unentangled single-qubit amplitude pair,
* ClusterMember -- one leg of a small entangled cluster statevector.

Swaps are pure relabeling.  Controlled ops with a classical control never
allocate cluster memory.  After every op a demotion sweep factors clusters
whose members have become pure and collapses near-basis product qubits back
to classical bits, so entanglement cost tracks the genuinely quantum part
of a program.  Phases acquired by definite basis states are folded into a
single global phase register, never dropped.

The dense backend expands the full lattice statevector (capped at 22 sites)
and is the correctness oracle.  Both backends draw measurement outcomes
from the same counter-based generator, one draw per measured site in
canonical order, so their measurement records are identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from .core import (
    HControlled, HSwap, InitPointer, LatticeGeometry, MeasureAuxAlternate,
    PulseOp, PulseProgram, RamanRotate, RowSet, Site, Unitary2, VControlled,
    VSwap,
)

DENSE_MAX_SITES = 22
PURITY_TOL = 1e-12
BASIS_ATOL = 1e-12

_X = np.array([[0, 1], [1, 0]], dtype=complex)


class SimSizeError(Exception):
    """A state grew past the configured simulable size."""


class MeasurementRecord(NamedTuple):
    op_index: int
    site: Site
    outcome: int
    probability: float


class ClassicalBit(NamedTuple):
    bit: int


class ProductQubit(NamedTuple):
    vec: np.ndarray  # shape (2,), treated as immutable


class ClusterMember(NamedTuple):
    cluster_id: int
    local_index: int


SiteContent = ClassicalBit | ProductQubit | ClusterMember


@dataclass
class Cluster:
    members: list[Site]
    tensor: np.ndarray  # shape (2,)*len(members), axis i belongs to members[i]


@dataclass
class SimStats:
    clusters_allocated: int = 0
    max_cluster_size: int = 0
    rng_draws: int = 0


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator; streams are independent and reproducible."""
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, 0, stream]))


@dataclass
class HybridState:
    geometry: LatticeGeometry
    contents: dict[Site, SiteContent]
    clusters: dict[int, Cluster]
    rng: np.random.Generator
    seed: int
    max_cluster_qubits: int = 24
    global_phase: complex = 1.0 + 0j
    next_cluster_id: int = 0
    stats: SimStats = field(default_factory=SimStats)

    def copy(self) -> "HybridState":
        return HybridState(
            geometry=self.geometry,
            contents=dict(self.contents),
            clusters={cid: Cluster(list(c.members), c.tensor) for cid, c in self.clusters.items()},
            rng=self.rng,
            seed=self.seed,
            max_cluster_qubits=self.max_cluster_qubits,
            global_phase=self.global_phase,
            next_cluster_id=self.next_cluster_id,
            stats=SimStats(**vars(self.stats)),
        )


def init_state(geometry: LatticeGeometry, seed: int = 0,
               max_cluster_qubits: int = 24) -> HybridState:
    contents = {site: ClassicalBit(0) for site in geometry.sites()}
    return HybridState(geometry, contents, {}, make_rng(seed), seed,
                       max_cluster_qubits=max_cluster_qubits)


def set_site(state: HybridState, site: Site, value: int | np.ndarray):
    """Overwrite one site with a classical bit or a normalized 1q vector."""
    if isinstance(state.contents[site], ClusterMember):
        raise ValueError(f"site {site} already belongs to a cluster")
    if isinstance(value, (int, np.integer)):
        state.contents[site] = ClassicalBit(int(value))
        return
    v = np.asarray(value, dtype=complex).reshape(2)
    v = v / np.linalg.norm(v)
    state.contents[site] = ProductQubit(v)
    _try_classicalize(state, site)


def set_cluster(state: HybridState, sites: list[Site], vec: np.ndarray):
    """Install an entangled state over the given sites (axis i = sites[i])."""
    v = np.asarray(vec, dtype=complex).reshape((2,) * len(sites))
    v = v / np.linalg.norm(v.reshape(-1))
    cid = _new_cluster(state, list(sites), v)
    _try_factor(state, cid)


# --- internal content manipulation -------------------------------------------


def _new_cluster(state: HybridState, members: list[Site], tensor: np.ndarray) -> int:
    cid = state.next_cluster_id
    state.next_cluster_id += 1
    state.clusters[cid] = Cluster(members, tensor)
    for i, site in enumerate(members):
        state.contents[site] = ClusterMember(cid, i)
    state.stats.clusters_allocated += 1
    state.stats.max_cluster_size = max(state.stats.max_cluster_size, len(members))
    return cid


def _site_vector(state: HybridState, site: Site) -> np.ndarray:
    c = state.contents[site]
    if isinstance(c, ClassicalBit):
        v = np.zeros(2, dtype=complex)
        v[c.bit] = 1.0
        return v
    if isinstance(c, ProductQubit):
        return c.vec
    raise TypeError(f"site {site} is entangled")


def _merge_sites(state: HybridState, sites: Iterable[Site], op_index: int) -> int:
    """Bring all listed sites into one cluster; returns its id."""
    cluster_ids: list[int] = []
    single_sites: list[Site] = []
    seen = set()
    for site in sites:
        c = state.contents[site]
        if isinstance(c, ClusterMember):
            if c.cluster_id not in seen:
                seen.add(c.cluster_id)
                cluster_ids.append(c.cluster_id)
        else:
            single_sites.append(site)
    total = sum(len(state.clusters[cid].members) for cid in cluster_ids) + len(single_sites)
    if len(cluster_ids) == 1 and not single_sites:
        return cluster_ids[0]
    if total > state.max_cluster_qubits:
        raise SimSizeError(
            f"op {op_index}: cluster merge would need {total} qubits "
            f"(cap {state.max_cluster_qubits})")
    members: list[Site] = []
    tensor = np.ones((), dtype=complex)
    for cid in cluster_ids:
        cl = state.clusters.pop(cid)
        tensor = np.tensordot(tensor, cl.tensor, axes=0)
        members.extend(cl.members)
    for site in single_sites:
        tensor = np.tensordot(tensor, _site_vector(state, site), axes=0)
        members.append(site)
    return _new_cluster(state, members, tensor)


def _apply_1q(state: HybridState, site: Site, u: np.ndarray):
    c = state.contents[site]
    if isinstance(c, ClassicalBit):
        colvec = u[:, c.bit]
        other = abs(colvec[1 - c.bit])
        if other <= BASIS_ATOL:
            amp = colvec[c.bit]
            state.global_phase *= amp / abs(amp)
            return
        if abs(colvec[c.bit]) <= BASIS_ATOL:
            amp = colvec[1 - c.bit]
            state.global_phase *= amp / abs(amp)
            state.contents[site] = ClassicalBit(1 - c.bit)
            return
        state.contents[site] = ProductQubit(colvec.copy())
    elif isinstance(c, ProductQubit):
        state.contents[site] = ProductQubit(u @ c.vec)
    else:
        cl = state.clusters[c.cluster_id]
        t = np.tensordot(u, cl.tensor, axes=([1], [c.local_index]))
        cl.tensor = np.moveaxis(t, 0, c.local_index)


def _apply_cluster_2q(state: HybridState, cid: int, site_a: Site, site_b: Site,
                      gate4: np.ndarray):
    cl = state.clusters[cid]
    ia = state.contents[site_a].local_index
    ib = state.contents[site_b].local_index
    k = len(cl.members)
    t = np.moveaxis(cl.tensor, (ia, ib), (0, 1)).reshape(4, -1)
    t = (gate4 @ t).reshape((2, 2) + (2,) * (k - 2))
    cl.tensor = np.moveaxis(t, (0, 1), (ia, ib))


def _controlled_gate4(u: np.ndarray) -> np.ndarray:
    g = np.eye(4, dtype=complex)
    g[2:, 2:] = u
    return g


def _apply_controlled(state: HybridState, control: Site, target: Site,
                      u: np.ndarray, op_index: int, touched: set[int]):
    c = state.contents[control]
    if isinstance(c, ClassicalBit):
        if c.bit == 1:
            _apply_1q(state, target, u)
            t = state.contents[target]
            if isinstance(t, ClusterMember):
                touched.add(t.cluster_id)
        return
    t = state.contents[target]
    if isinstance(t, ClassicalBit) and abs(u[t.bit, t.bit]) >= 1 - BASIS_ATOL:
        # target is an eigenstate of u: the op is a pure phase on the control
        phase = u[t.bit, t.bit]
        if abs(phase - 1.0) > BASIS_ATOL:
            _apply_1q(state, control, np.diag([1.0, phase]).astype(complex))
            if isinstance(state.contents[control], ClusterMember):
                touched.add(state.contents[control].cluster_id)
        return
    cid = _merge_sites(state, [control, target], op_index)
    _apply_cluster_2q(state, cid, control, target, _controlled_gate4(u))
    touched.add(cid)


def _swap_contents(state: HybridState, a: Site, b: Site):
    ca, cb = state.contents[a], state.contents[b]
    if isinstance(ca, ClusterMember):
        state.clusters[ca.cluster_id].members[ca.local_index] = b
    if isinstance(cb, ClusterMember):
        state.clusters[cb.cluster_id].members[cb.local_index] = a
    state.contents[a], state.contents[b] = cb, ca


# --- demotion sweep ------------------------------------------------------------


def _try_classicalize(state: HybridState, site: Site):
    c = state.contents[site]
    if not isinstance(c, ProductQubit):
        return
    v = c.vec
    n = np.linalg.norm(v)
    for bit in (0, 1):
        if abs(v[1 - bit]) <= BASIS_ATOL * max(n, 1.0):
            state.global_phase *= v[bit] / abs(v[bit])
            state.contents[site] = ClassicalBit(bit)
            return


def _try_factor(state: HybridState, cid: int):
    """Split off every member whose reduced state is pure; demote singletons."""
    while cid in state.clusters:
        cl = state.clusters[cid]
        k = len(cl.members)
        if k == 1:
            site = cl.members[0]
            vec = cl.tensor.reshape(2)
            state.contents[site] = ProductQubit(vec / np.linalg.norm(vec))
            del state.clusters[cid]
            _try_classicalize(state, site)
            return
        split_idx = -1
        for idx in range(k):
            axes = list(range(k))
            axes.remove(idx)
            rho = np.tensordot(cl.tensor, cl.tensor.conj(), axes=(axes, axes))
            tr = rho[0, 0].real + rho[1, 1].real
            if tr <= 0:
                continue
            rho = rho / tr
            purity = np.trace(rho @ rho).real
            if purity >= 1 - PURITY_TOL:
                split_idx = idx
                break
        if split_idx < 0:
            return
        idx = split_idx
        rho = np.tensordot(cl.tensor, cl.tensor.conj(),
                           axes=(list(range(0, idx)) + list(range(idx + 1, k)),) * 2)
        evals, evecs = np.linalg.eigh(rho)
        v = evecs[:, int(np.argmax(evals))]
        rest = np.tensordot(v.conj(), cl.tensor, axes=([0], [idx]))
        rest = rest / np.linalg.norm(rest.reshape(-1))
        site = cl.members.pop(idx)
        for i, m in enumerate(cl.members):
            state.contents[m] = ClusterMember(cid, i)
        cl.tensor = rest
        state.contents[site] = ProductQubit(v)
        _try_classicalize(state, site)


def sweep_demotions(state: HybridState, cluster_ids: Iterable[int] | None = None,
                    sites: Iterable[Site] | None = None):
    """Demote whatever became separable: clusters first, then product sites."""
    ids = list(state.clusters) if cluster_ids is None else list(cluster_ids)
    for cid in ids:
        if cid in state.clusters:
            _try_factor(state, cid)
    if sites is None:
        sites = [s for s, c in state.contents.items() if isinstance(c, ProductQubit)]
    for site in sites:
        _try_classicalize(state, site)


# --- op application -------------------------------------------------------------


def _row_sites(geo: LatticeGeometry, rowset: RowSet) -> list[Site]:
    return [Site(c, r) for r in geo.rows_of(rowset) for c in range(geo.columns)]


def _h_pairs(geo: LatticeGeometry, rowset: RowSet, parity: int) -> list[tuple[Site, Site]]:
    pairs = []
    for r in geo.rows_of(rowset):
        for cl, cr in geo.column_pairs(parity):
            pairs.append((Site(cl, r), Site(cr, r)))
    return pairs


def _v_pairs(geo: LatticeGeometry, pairing: int) -> list[tuple[Site, Site]]:
    """(control aux site, target register site) per column per row pair."""
    pairs = []
    for r_lo, r_hi in geo.row_pairs(pairing):
        aux, reg = (r_lo, r_hi) if r_lo % 2 == 1 else (r_hi, r_lo)
        for c in range(geo.columns):
            pairs.append((Site(c, aux), Site(c, reg)))
    return pairs


def measured_sites(geo: LatticeGeometry, parity: int) -> list[Site]:
    """Canonical measurement scan order shared by both backends."""
    return [Site(c, r) for r in geo.rows_of(RowSet.AUXILIARY)
            for c in range(parity, geo.columns, 2)]


def _measure_site(state: HybridState, site: Site, op_index: int,
                  records: list[MeasurementRecord], touched: set[int]):
    c = state.contents[site]
    if isinstance(c, ClassicalBit):
        p1 = float(c.bit)
    elif isinstance(c, ProductQubit):
        p1 = float(abs(c.vec[1]) ** 2 / np.linalg.norm(c.vec) ** 2)
    else:
        cl = state.clusters[c.cluster_id]
        t = np.moveaxis(cl.tensor, c.local_index, 0)
        total = float(np.vdot(t, t).real)
        p1 = float(np.vdot(t[1], t[1]).real) / total
    draw = state.rng.random()
    state.stats.rng_draws += 1
    outcome = 1 if draw < p1 else 0
    p_out = p1 if outcome == 1 else 1.0 - p1
    records.append(MeasurementRecord(op_index, site, outcome, p_out))
    if isinstance(c, ProductQubit):
        amp = c.vec[outcome]
        state.global_phase *= amp / abs(amp)
        state.contents[site] = ClassicalBit(outcome)
    elif isinstance(c, ClusterMember):
        cl = state.clusters[c.cluster_id]
        t = np.moveaxis(cl.tensor, c.local_index, 0).copy()
        t[1 - outcome] = 0.0
        t = t / math.sqrt(p_out)
        cl.tensor = np.moveaxis(t, 0, c.local_index)
        touched.add(c.cluster_id)


def apply(state: HybridState, op: PulseOp, op_index: int = 0,
          demote: bool = True) -> list[MeasurementRecord]:
    """Apply one pulse; returns measurement records (empty for unitaries)."""
    geo = state.geometry
    records: list[MeasurementRecord] = []
    touched: set[int] = set()
    touched_sites: list[Site] = []

    if isinstance(op, RamanRotate):
        for site in _row_sites(geo, op.rowset):
            _apply_1q(state, site, op.u.mat)
            c = state.contents[site]
            if isinstance(c, ClusterMember):
                touched.add(c.cluster_id)
            touched_sites.append(site)
    elif isinstance(op, HSwap):
        for a, b in _h_pairs(geo, op.rowset, op.parity):
            _swap_contents(state, a, b)
    elif isinstance(op, VSwap):
        for r_lo, r_hi in geo.row_pairs(op.parity):
            for c in range(geo.columns):
                _swap_contents(state, Site(c, r_lo), Site(c, r_hi))
    elif isinstance(op, VControlled):
        for control, target in _v_pairs(geo, op.pairing):
            _apply_controlled(state, control, target, op.u.mat, op_index, touched)
            touched_sites.extend((control, target))
    elif isinstance(op, HControlled):
        for control, target in _h_pairs(geo, op.rowset, op.parity):
            _apply_controlled(state, control, target, op.u.mat, op_index, touched)
            touched_sites.extend((control, target))
    elif isinstance(op, MeasureAuxAlternate):
        for site in measured_sites(geo, op.parity):
            _measure_site(state, site, op_index, records, touched)
            touched_sites.append(site)
    elif isinstance(op, InitPointer):
        if geo.row_kind(op.site.row).value != "auxiliary":
            raise ValueError(f"InitPointer site {op.site} not on an auxiliary row")
        _apply_1q(state, op.site, _X)
        touched_sites.append(op.site)
    else:
        raise TypeError(f"unknown op {op!r}")

    if demote:
        sweep_demotions(state, touched, touched_sites)
    return records


def run(state: HybridState, program: PulseProgram) -> list[MeasurementRecord]:
    if program.geometry != state.geometry:
        raise ValueError("program geometry does not match state geometry")
    records: list[MeasurementRecord] = []
    for i, op in enumerate(program.ops):
        records.extend(apply(state, op, i))
    return records


# --- dense oracle ----------------------------------------------------------------


@dataclass
class DenseState:
    geometry: LatticeGeometry
    tensor: np.ndarray  # shape (2,)*n_sites, axis = geometry.site_index
    rng: np.random.Generator
    seed: int

    def axis(self, site: Site) -> int:
        return self.geometry.site_index(site)

    def copy(self) -> "DenseState":
        return DenseState(self.geometry, self.tensor.copy(), self.rng, self.seed)


def dense_init(geometry: LatticeGeometry, seed: int = 0) -> DenseState:
    if geometry.n_sites > DENSE_MAX_SITES:
        raise SimSizeError(
            f"dense oracle supports at most {DENSE_MAX_SITES} sites, "
            f"lattice has {geometry.n_sites}")
    t = np.zeros((2,) * geometry.n_sites, dtype=complex)
    t[(0,) * geometry.n_sites] = 1.0
    return DenseState(geometry, t, make_rng(seed), seed)


def _dense_1q(state: DenseState, site: Site, u: np.ndarray):
    ax = state.axis(site)
    t = np.tensordot(u, state.tensor, axes=([1], [ax]))
    state.tensor = np.moveaxis(t, 0, ax)


def _dense_2q(state: DenseState, a: Site, b: Site, gate4: np.ndarray):
    n = state.geometry.n_sites
    ia, ib = state.axis(a), state.axis(b)
    t = np.moveaxis(state.tensor, (ia, ib), (0, 1)).reshape(4, -1)
    t = (gate4 @ t).reshape((2, 2) + (2,) * (n - 2))
    state.tensor = np.moveaxis(t, (0, 1), (ia, ib))


def apply_dense(state: DenseState, op: PulseOp, op_index: int = 0) -> list[MeasurementRecord]:
    geo = state.geometry
    records: list[MeasurementRecord] = []
    if isinstance(op, RamanRotate):
        for site in _row_sites(geo, op.rowset):
            _dense_1q(state, site, op.u.mat)
    elif isinstance(op, HSwap):
        for a, b in _h_pairs(geo, op.rowset, op.parity):
            state.tensor = np.swapaxes(state.tensor, state.axis(a), state.axis(b))
    elif isinstance(op, VSwap):
        for r_lo, r_hi in geo.row_pairs(op.parity):
            for c in range(geo.columns):
                state.tensor = np.swapaxes(
                    state.tensor, state.axis(Site(c, r_lo)), state.axis(Site(c, r_hi)))
    elif isinstance(op, VControlled):
        g = _controlled_gate4(op.u.mat)
        for control, target in _v_pairs(geo, op.pairing):
            _dense_2q(state, control, target, g)
    elif isinstance(op, HControlled):
        g = _controlled_gate4(op.u.mat)
        for control, target in _h_pairs(geo, op.rowset, op.parity):
            _dense_2q(state, control, target, g)
    elif isinstance(op, MeasureAuxAlternate):
        state.tensor = np.ascontiguousarray(state.tensor)
        for site in measured_sites(geo, op.parity):
            ax = state.axis(site)
            t = np.moveaxis(state.tensor, ax, 0)
            total = float(np.vdot(t, t).real)
            p1 = float(np.vdot(t[1], t[1]).real) / total
            draw = state.rng.random()
            outcome = 1 if draw < p1 else 0
            p_out = p1 if outcome == 1 else 1.0 - p1
            records.append(MeasurementRecord(op_index, site, outcome, p_out))
            t = t.copy()
            t[1 - outcome] = 0.0
            t /= math.sqrt(p_out)
            state.tensor = np.moveaxis(t, 0, ax)
    elif isinstance(op, InitPointer):
        _dense_1q(state, op.site, _X)
    else:
        raise TypeError(f"unknown op {op!r}")
    return records


def dense_run(state: DenseState, program: PulseProgram) -> list[MeasurementRecord]:
    if program.geometry != state.geometry:
        raise ValueError("program geometry does not match state geometry")
    records: list[MeasurementRecord] = []
    for i, op in enumerate(program.ops):
        records.extend(apply_dense(state, op, i))
    return records


# --- expansion, fidelity, multi-shot ----------------------------------------------


def expand_to_dense(state: HybridState) -> np.ndarray:
    """Full statevector of a hybrid state, shape (2,)*n_sites (site-index order)."""
    geo = state.geometry
    if geo.n_sites > DENSE_MAX_SITES:
        raise SimSizeError(f"cannot expand {geo.n_sites} sites densely")
    factors: list[tuple[np.ndarray, list[Site]]] = []
    seen_clusters: set[int] = set()
    for site in geo.sites():
        c = state.contents[site]
        if isinstance(c, ClusterMember):
            if c.cluster_id not in seen_clusters:
                seen_clusters.add(c.cluster_id)
                cl = state.clusters[c.cluster_id]
                factors.append((cl.tensor, list(cl.members)))
        else:
            factors.append((_site_vector(state, site), [site]))
    full = np.asarray(state.global_phase, dtype=complex)
    order: list[Site] = []
    for tensor, sites in factors:
        full = np.tensordot(full, tensor, axes=0)
        order.extend(sites)
    pos = {site: i for i, site in enumerate(order)}
    perm = [pos[site] for site in geo.sites()]
    return np.transpose(full, perm)


def _block_vector(state: HybridState, block: list[Site]) -> np.ndarray:
    """Statevector of a set of sites that is closed under state's clusters."""
    factors: list[tuple[np.ndarray, list[Site]]] = []
    seen: set[int] = set()
    for site in block:
        c = state.contents[site]
        if isinstance(c, ClusterMember):
            if c.cluster_id not in seen:
                seen.add(c.cluster_id)
                cl = state.clusters[c.cluster_id]
                factors.append((cl.tensor, list(cl.members)))
        else:
            factors.append((_site_vector(state, site), [site]))
    full = np.ones((), dtype=complex)
    order: list[Site] = []
    for tensor, sites in factors:
        full = np.tensordot(full, tensor, axes=0)
        order.extend(sites)
    pos = {site: i for i, site in enumerate(order)}
    perm = [pos[site] for site in block]
    return np.transpose(full, perm).reshape(-1)


def fidelity(a, b) -> float:
    """Global-phase-insensitive fidelity |<a|b>|^2 between two pure states."""
    if isinstance(a, DenseState) and isinstance(b, DenseState):
        return float(abs(np.vdot(a.tensor, b.tensor)) ** 2)
    if isinstance(a, DenseState):
        return float(abs(np.vdot(a.tensor, expand_to_dense(b))) ** 2)
    if isinstance(b, DenseState):
        return float(abs(np.vdot(expand_to_dense(a), b.tensor)) ** 2)
    if a.geometry != b.geometry:
        raise ValueError("states live on different geometries")
    # union-find so every cluster of either state sits inside one block
    parent: dict[Site, Site] = {s: s for s in a.geometry.sites()}

    def find(s: Site) -> Site:
        while parent[s] != s:
            parent[s] = parent[parent[s]]
            s = parent[s]
        return s

    def union(x: Site, y: Site):
        parent[find(x)] = find(y)

    for state in (a, b):
        for cl in state.clusters.values():
            for m in cl.members[1:]:
                union(cl.members[0], m)
    blocks: dict[Site, list[Site]] = {}
    for site in a.geometry.sites():
        blocks.setdefault(find(site), []).append(site)
    overlap = np.conj(a.global_phase) * b.global_phase
    for block in blocks.values():
        if len(block) > DENSE_MAX_SITES:
            raise SimSizeError(f"overlap block of {len(block)} sites too large")
        overlap *= np.vdot(_block_vector(a, block), _block_vector(b, block))
        if overlap == 0:
            break
    return float(abs(overlap) ** 2)


def run_shots(program: PulseProgram, seed: int, shots: int,
              backend: str = "hybrid",
              max_cluster_qubits: int = 24) -> tuple[list[list[MeasurementRecord]], object]:
    """Run `shots` independent samples of a program.

    The unitary prefix before the first measurement is evolved once and
    reused; each shot gets its own counter stream so records are
    reproducible shot by shot.  Returns (per-shot records, last final state).
    """
    first_meas = next((i for i, op in enumerate(program.ops)
                       if isinstance(op, MeasureAuxAlternate)), len(program.ops))
    if backend == "hybrid":
        base = init_state(program.geometry, seed, max_cluster_qubits)
    elif backend == "dense":
        base = dense_init(program.geometry, seed)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    stepper = apply if backend == "hybrid" else apply_dense
    for i in range(first_meas):
        stepper(base, program.ops[i], i)
    all_records: list[list[MeasurementRecord]] = []
    final = base
    for shot in range(shots):
        st = base.copy()
        st.rng = make_rng(seed, stream=shot)
        recs: list[MeasurementRecord] = []
        for i in range(first_meas, len(program.ops)):
            recs.extend(stepper(st, program.ops[i], i))
        all_records.append(recs)
        final = st
    return all_records, final


# --- text outputs ------------------------------------------------------------------


def records_to_csv(records: list[MeasurementRecord], shot: int | None = None) -> list[str]:
    rows = []
    for r in records:
        base = f"{r.op_index},{r.site.col},{r.site.row},{r.outcome},{r.probability:.17g}"
        rows.append(f"{shot},{base}" if shot is not None else base)
    return rows


def snapshot_text(state: HybridState) -> str:
    """Human-readable dump: per-site content tag plus cluster amplitude tables."""
    geo = state.geometry
    lines = [f"GEOM cols={geo.columns} rows={geo.rows}",
             f"PHASE {state.global_phase.real:.17g} {state.global_phase.imag:.17g}"]
    for site in geo.sites():
        c = state.contents[site]
        if isinstance(c, ClassicalBit):
            lines.append(f"SITE {site.col} {site.row} CLASSICAL {c.bit}")
        elif isinstance(c, ProductQubit):
            v = c.vec
            lines.append(
                f"SITE {site.col} {site.row} PRODUCT "
                f"{v[0].real:.17g} {v[0].imag:.17g} {v[1].real:.17g} {v[1].imag:.17g}")
        else:
            lines.append(f"SITE {site.col} {site.row} CLUSTER {c.cluster_id} {c.local_index}")
    for cid in sorted(state.clusters):
        cl = state.clusters[cid]
        sites = " ".join(f"{s.col},{s.row}" for s in cl.members)
        lines.append(f"CLUSTER {cid} {sites}")
        amps = " ".join(f"{x.real:.17g} {x.imag:.17g}" for x in cl.tensor.reshape(-1))
        lines.append(f"AMPS {amps}")
    return "\n".join(lines) + "\n"
