"""Convergence regime, closed-form steady states, and influence centrality.

The canonical-order update matrix is block triangular, so its spectrum is
the union of the block spectra.  Sinks that are balanced and free of
stubborn agents keep an eigenvalue at exactly 1 (the limit is a rank-one
projector built from the eigenvector pair at 1); every other block is a
strict contraction and yields a resolvent.  Followers inherit their limit
from the sinks through one linear solve.  Stacking the per-block limit
operators gives the influence matrix mapping initial opinions to final
opinions; its absolute column sums are the centrality scores.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import cached_property

import numpy as np
from scipy import linalg as dense_linalg
from scipy import sparse
from scipy.sparse.linalg import ArpackNoConvergence, eigs, splu

from .dynamics import UpdateSystem, build_update_system
from .errors import InternalInconsistencyError, NumericalError
from .graph import SignedDigraph
from .topology import (
    AgentClassification,
    CondensationDag,
    SccPartition,
    SinkInfo,
    canonical_ordering,
    classify_agents,
    condense,
    strongly_connected_components,
)

__all__ = [
    "Regime",
    "SpectralReport",
    "SolutionKind",
    "SinkSolution",
    "InfluenceResult",
    "NetworkAnalysis",
    "spectral_check",
    "solve_sink",
    "solve_followers",
    "influence_matrix",
    "absolute_centrality",
    "steady_state",
    "analyze_network",
    "influence",
    "influence_triplets_csv",
    "influence_scatter_csv",
    "centrality_csv",
]

# Blocks below this size are solved densely; larger ones go through sparse LU.
DENSE_BLOCK_CUTOFF = 64
# Full-matrix eigenvalues are computed densely up to this size.
DENSE_SPECTRUM_CUTOFF = 200
# Direct stationary-vector fallback is attempted up to this block size.
STATIONARY_DIRECT_CUTOFF = 200


class Regime(str, Enum):
    CONVERGENT = "convergent"
    SEMI_CONVERGENT = "semi_convergent"


@dataclass(frozen=True, eq=False)
class SpectralReport:
    """Structural regime plus numerical spectral-radius corroboration.

    The regime is decided from the classification (semi-convergent iff
    some balanced sink has no stubborn member); the radius estimates are
    attached as a numerical cross-check, never as the decision rule.
    ``approximate`` flags estimates from iterative methods that did not
    fully settle.
    """

    regime: Regime
    spectral_radius: float
    spectral_radius_abs: float
    sink_spectral_radii: tuple[float, ...]
    approximate: bool


class SolutionKind(str, Enum):
    RESOLVENT = "resolvent"
    EIGENPAIR = "eigenpair"
    ZERO = "zero"


@dataclass(frozen=True, eq=False)
class SinkSolution:
    """Limit operator of one sink block.

    * ``EIGENPAIR``: limit is ``right_vec @ left_vec^T`` (eigenvectors of
      the block at eigenvalue 1, normalized to ``left_vec @ right_vec = 1``);
      the sink keeps a memory of all its members' initial opinions.
    * ``RESOLVENT``: limit is ``(I - block)^{-1} @ diag(beta)``; only
      stubborn columns are nonzero.
    * ``ZERO``: unbalanced sink with no stubborn member; the limit is 0.
    """

    sink_index: int
    members: tuple[int, ...]
    kind: SolutionKind
    operator: np.ndarray | sparse.spmatrix | None = None
    right_vec: np.ndarray | None = None
    left_vec: np.ndarray | None = None

    @property
    def size(self) -> int:
        return len(self.members)

    def apply(self, x_block: np.ndarray) -> np.ndarray:
        if self.kind is SolutionKind.ZERO:
            return np.zeros(self.size)
        if self.kind is SolutionKind.EIGENPAIR:
            return self.right_vec * float(self.left_vec @ x_block)
        return np.asarray(self.operator @ x_block).ravel()

    def column(self, local_index: int) -> np.ndarray:
        if self.kind is SolutionKind.ZERO:
            return np.zeros(self.size)
        if self.kind is SolutionKind.EIGENPAIR:
            return self.right_vec * float(self.left_vec[local_index])
        col = self.operator[:, local_index]
        return col.toarray().ravel() if sparse.issparse(col) else np.asarray(col).ravel()

    def influential_locals(self, beta_block: np.ndarray) -> list[int]:
        """Local indices of members whose initial opinion reaches the limit."""
        if self.kind is SolutionKind.ZERO:
            return []
        if self.kind is SolutionKind.EIGENPAIR:
            return list(range(self.size))
        return [int(j) for j in np.flatnonzero(beta_block > 0)]

    def limit_matrix(self) -> np.ndarray:
        if self.kind is SolutionKind.ZERO:
            return np.zeros((self.size, self.size))
        if self.kind is SolutionKind.EIGENPAIR:
            return np.outer(self.right_vec, self.left_vec)
        return self.operator.toarray() if sparse.issparse(self.operator) else np.asarray(self.operator)


@dataclass(frozen=True, eq=False)
class InfluenceResult:
    """Influence matrix (original node order), centrality scores, and ranking."""

    matrix: sparse.csr_matrix
    centrality: np.ndarray
    ranking: np.ndarray


# ---------------------------------------------------------------------------
# Linear-solve plumbing
# ---------------------------------------------------------------------------

class _ResolventSolver:
    """Solves ``(I - M) y = b`` with a prefactored LU and iterative refinement."""

    def __init__(self, m_block, *, what: str = "block"):
        size = m_block.shape[0]
        eye = sparse.identity(size, format="csr")
        self._a = sparse.csr_matrix(eye - m_block)
        self._what = what
        try:
            if size < DENSE_BLOCK_CUTOFF:
                import warnings

                with warnings.catch_warnings():
                    # lu_factor only warns on exact singularity; the zero
                    # pivot is caught explicitly below
                    warnings.simplefilter("ignore", dense_linalg.LinAlgWarning)
                    lu = dense_linalg.lu_factor(self._a.toarray())
                if np.any(np.diag(lu[0]) == 0.0) or not np.all(np.isfinite(lu[0])):
                    raise dense_linalg.LinAlgError("exactly singular")
                self._base = lambda b: dense_linalg.lu_solve(lu, b)
            else:
                factor = splu(self._a.tocsc())
                self._base = factor.solve
        except (RuntimeError, np.linalg.LinAlgError, dense_linalg.LinAlgError) as exc:
            raise InternalInconsistencyError(
                f"(I - {what}) is singular; the convergence classification "
                "says this cannot happen, so the classification is buggy"
            ) from exc

    def solve(self, b: np.ndarray) -> np.ndarray:
        x = self._base(b)
        if not np.isfinite(x).all():
            raise InternalInconsistencyError(
                f"solve against (I - {self._what}) produced non-finite values"
            )
        scale = max(1.0, float(np.max(np.abs(b))) if b.size else 1.0)
        for _ in range(4):
            r = b - self._a @ x
            if float(np.max(np.abs(r)) if r.size else 0.0) <= 1e-12 * scale:
                return x
            x = x + self._base(r)
        if float(np.max(np.abs(b - self._a @ x)) if b.size else 0.0) > 1e-6 * scale:
            raise InternalInconsistencyError(
                "iterative refinement stalled; block solve is unreliable"
            )
        return x


def _stationary_row_vector(
    m, *, residual_target: float = 1e-12, max_iters: int = 100_000
) -> np.ndarray:
    """Stationary distribution of a primitive row-stochastic matrix.

    Power iteration from the uniform vector (deterministic); on
    non-convergence falls back to a direct solve for small blocks.
    """
    size = m.shape[0]
    if size == 1:
        return np.ones(1)
    pi = np.full(size, 1.0 / size)
    for _ in range(max_iters):
        nxt = pi @ m
        nxt = nxt / nxt.sum()
        if float(np.abs(nxt - pi).sum()) <= residual_target:
            return nxt
        pi = nxt
    if size <= STATIONARY_DIRECT_CUTOFF:
        dense = m.toarray() if sparse.issparse(m) else np.asarray(m)
        a = dense.T - np.eye(size)
        a[-1, :] = 1.0
        b = np.zeros(size)
        b[-1] = 1.0
        pi = np.linalg.solve(a, b)
        return pi / pi.sum()
    raise NumericalError(
        f"stationary vector did not reach residual {residual_target:g} "
        f"within {max_iters} iterations on a block of size {size}"
    )


# ---------------------------------------------------------------------------
# Spectral regime
# ---------------------------------------------------------------------------

def _abs_power_radius(m, iters: int = 2000) -> tuple[float, bool]:
    """Spectral radius of a nonnegative matrix by normalized power iteration."""
    size = m.shape[0]
    v = np.full(size, 1.0 / np.sqrt(size))
    estimate = 0.0
    for _ in range(iters):
        w = m @ v
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            return 0.0, False
        new_estimate = norm
        w = w / norm
        settled = abs(new_estimate - estimate) <= 1e-12 * max(1.0, new_estimate) and bool(
            np.max(np.abs(w - v)) <= 1e-10
        )
        estimate, v = new_estimate, w
        if settled:
            return estimate, False
    return estimate, True


def _block_radius(block) -> tuple[float, bool]:
    """Spectral radius of one (possibly signed) block; flags approximate results."""
    size = block.shape[0]
    if size == 0:
        return 0.0, False
    if size <= max(DENSE_SPECTRUM_CUTOFF, DENSE_BLOCK_CUTOFF * 8):
        dense = block.toarray() if sparse.issparse(block) else np.asarray(block)
        return float(np.max(np.abs(np.linalg.eigvals(dense)))), False
    try:
        vals = eigs(
            sparse.csr_matrix(block), k=1, which="LM", return_eigenvectors=False, maxiter=5000
        )
        return float(np.max(np.abs(vals))), False
    except (ArpackNoConvergence, RuntimeError):
        # upper bound via the entrywise-absolute matrix
        radius, _ = _abs_power_radius(abs(sparse.csr_matrix(block)))
        return radius, True


def spectral_check(
    system: UpdateSystem, classification: AgentClassification
) -> SpectralReport:
    """Decide the regime structurally and attach numerical radius estimates.

    Semi-convergent iff some balanced sink has no stubborn member;
    otherwise all block radii sit strictly below one and powers of the
    update matrix vanish.
    """
    regime = Regime.SEMI_CONVERGENT if classification.s_ns else Regime.CONVERGENT
    p = system.update_matrix
    n = system.n
    approximate = False

    if n <= DENSE_SPECTRUM_CUTOFF:
        dense = p.toarray()
        radius = float(np.max(np.abs(np.linalg.eigvals(dense)))) if n else 0.0
        radius_abs = float(np.max(np.abs(np.linalg.eigvals(np.abs(dense))))) if n else 0.0
        sink_radii = []
        for k in range(len(classification.sinks)):
            sl = system.ordering.sink_slice(k)
            block = dense[sl, sl]
            sink_radii.append(float(np.max(np.abs(np.linalg.eigvals(block)))))
    else:
        sink_radii = []
        sink_radii_abs = []
        for k in range(len(classification.sinks)):
            block = system.sink_block(k)
            r, approx = _block_radius(block)
            sink_radii.append(r)
            approximate |= approx
            r_abs, approx = _block_radius(abs(block))
            sink_radii_abs.append(r_abs)
            approximate |= approx
        follower = system.follower_block()
        r11, approx = _block_radius(follower)
        approximate |= approx
        r11_abs, approx = _block_radius(abs(follower))
        approximate |= approx
        radius = max([r11, *sink_radii], default=0.0)
        radius_abs = max([r11_abs, *sink_radii_abs], default=0.0)

    return SpectralReport(
        regime=regime,
        spectral_radius=radius,
        spectral_radius_abs=radius_abs,
        sink_spectral_radii=tuple(sink_radii),
        approximate=approximate,
    )


# ---------------------------------------------------------------------------
# Per-sink limit operators
# ---------------------------------------------------------------------------

def solve_sink(system: UpdateSystem, sink: SinkInfo) -> SinkSolution:
    """Compute the limit operator of one sink block.

    Balanced stubborn-free sinks get the eigenvector pair at eigenvalue 1.
    Rather than a generic nonsymmetric eigensolve, the block is gauged by
    its bipartition signs: flipping the sign of one side turns the block
    into a nonnegative row-stochastic matrix with positive diagonal, whose
    stationary distribution (by power iteration, deterministic) is the
    left eigenvector up to the same sign flips.  The right eigenvector is
    the bipartition itself, so the sign convention (+1 on the sink's
    smallest member) comes for free and the normalization is exact.
    """
    members = sink.members
    size = len(members)
    block = system.sink_block(sink.sink_index)
    beta_block = system.stubbornness[list(members)]

    if sink.in_s_ns:
        if size == 1:
            v = np.ones(1)
            w = np.ones(1)
        else:
            sigma = np.asarray(sink.bipartition, dtype=np.float64)
            gauge = sparse.diags(sigma)
            gauged = sparse.csr_matrix(gauge @ block @ gauge)
            if size < DENSE_BLOCK_CUTOFF:
                gauged = gauged.toarray()
                lo = float(gauged.min())
                row_err = float(np.max(np.abs(gauged.sum(axis=1) - 1.0)))
            else:
                lo = float(gauged.data.min()) if gauged.nnz else 0.0
                row_err = float(np.max(np.abs(np.asarray(gauged.sum(axis=1)).ravel() - 1.0)))
            if lo < -1e-12 or row_err > 1e-9:
                raise InternalInconsistencyError(
                    f"gauged sink {sink.sink_index} is not row stochastic; "
                    "the bipartition disagrees with the edge signs"
                )
            pi = _stationary_row_vector(gauged)
            v = sigma.copy()
            w = sigma * pi
            w = w / float(w @ v)
        _check_eigenpair(block, v, w, sink)
        return SinkSolution(
            sink_index=sink.sink_index,
            members=members,
            kind=SolutionKind.EIGENPAIR,
            right_vec=v,
            left_vec=w,
        )

    if sink.contains_stubborn:
        solver = _ResolventSolver(block, what=f"sink block {sink.sink_index}")
        stubborn = np.flatnonzero(beta_block > 0)
        if size < DENSE_BLOCK_CUTOFF:
            operator: np.ndarray | sparse.spmatrix = np.zeros((size, size))
            for j in stubborn:
                rhs = np.zeros(size)
                rhs[j] = beta_block[j]
                operator[:, j] = solver.solve(rhs)
        else:
            cols = sparse.lil_matrix((size, size))
            for j in stubborn:
                rhs = np.zeros(size)
                rhs[j] = beta_block[j]
                cols[:, j] = solver.solve(rhs).reshape(-1, 1)
            operator = cols.tocsc()
        return SinkSolution(
            sink_index=sink.sink_index,
            members=members,
            kind=SolutionKind.RESOLVENT,
            operator=operator,
        )

    # unbalanced and stubborn-free: everything inside decays to zero
    return SinkSolution(
        sink_index=sink.sink_index, members=members, kind=SolutionKind.ZERO
    )


def _check_eigenpair(block, v: np.ndarray, w: np.ndarray, sink: SinkInfo) -> None:
    right_err = float(np.max(np.abs(block @ v - v)))
    left_err = float(np.max(np.abs(w @ block - w)))
    norm_err = abs(float(w @ v) - 1.0)
    if right_err > 1e-10 or left_err > 1e-10 or norm_err > 1e-10:
        raise InternalInconsistencyError(
            f"eigenvector pair of sink {sink.sink_index} failed verification "
            f"(right {right_err:.2e}, left {left_err:.2e}, normalization {norm_err:.2e})"
        )
    if np.any(w == 0.0):
        raise InternalInconsistencyError(
            f"left eigenvector of sink {sink.sink_index} has a zero entry"
        )


# ---------------------------------------------------------------------------
# Followers and the full steady state
# ---------------------------------------------------------------------------

def _follower_solver(system: UpdateSystem) -> _ResolventSolver | None:
    if system.ordering.follower_count == 0:
        return None
    return _ResolventSolver(system.follower_block(), what="follower block")


def solve_followers(
    system: UpdateSystem,
    sink_solutions: tuple[SinkSolution, ...],
    x0: np.ndarray,
    *,
    _solver: _ResolventSolver | None = None,
) -> np.ndarray:
    """Follower limits given every sink's limit, by one linear solve.

    The followers' fixed point balances their own block, the coupling into
    each sink's limit, and their own stubbornness anchor:

        x_F = (I - P_FF)^{-1} (sum_k P_Fk x_k* + beta_F * x0_F)

    Returns the follower values in ascending original-index order.
    """
    ordering = system.ordering
    m = ordering.follower_count
    if m == 0:
        return np.zeros(0)
    x0 = np.asarray(x0, dtype=np.float64)
    perm = ordering.permutation
    beta_c = system.stubbornness_canonical
    rhs = beta_c[:m] * x0[perm[:m]]
    for solution in sink_solutions:
        limit = solution.apply(x0[list(solution.members)])
        if np.any(limit != 0.0):
            rhs = rhs + system.coupling_block(solution.sink_index) @ limit
    solver = _solver if _solver is not None else _follower_solver(system)
    return solver.solve(rhs)


def influence_matrix(
    system: UpdateSystem,
    classification: AgentClassification,
    sink_solutions: tuple[SinkSolution, ...],
) -> sparse.csr_matrix:
    """Assemble the linear map from initial to final opinions.

    Only influential columns are ever materialized: stubborn followers,
    stubborn sink members, and every member of a balanced stubborn-free
    sink.  All other columns are structurally zero.  When no balanced
    stubborn-free sink exists and the graph is small, the assembly is
    cross-checked against the direct resolvent of the whole matrix.
    """
    ordering = system.ordering
    n = ordering.n
    m = ordering.follower_count
    beta_c = system.stubbornness_canonical
    solver = _follower_solver(system)

    columns: dict[int, np.ndarray] = {}
    for p in range(m):
        if beta_c[p] > 0:
            rhs = np.zeros(m)
            rhs[p] = beta_c[p]
            col = np.zeros(n)
            col[:m] = solver.solve(rhs)
            columns[p] = col

    for solution in sink_solutions:
        sl = ordering.sink_slice(solution.sink_index)
        beta_block = system.stubbornness[list(solution.members)]
        locals_ = solution.influential_locals(beta_block)
        if not locals_:
            continue
        coupling = system.coupling_block(solution.sink_index) if m else None
        for j in locals_:
            block_col = solution.column(j)
            col = np.zeros(n)
            col[sl] = block_col
            if m:
                col[:m] = solver.solve(coupling @ block_col)
            columns[sl.start + j] = col

    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    data: list[np.ndarray] = []
    perm = ordering.permutation
    for c, col in columns.items():
        nz = np.flatnonzero(col)
        rows.append(perm[nz])
        cols.append(np.full(nz.size, perm[c], dtype=np.int64))
        data.append(col[nz])
    if rows:
        theta = sparse.coo_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n, n),
        ).tocsr()
    else:
        theta = sparse.csr_matrix((n, n))
    theta.sort_indices()

    if not classification.s_ns and n <= DENSE_SPECTRUM_CUTOFF:
        _check_against_direct_resolvent(system, columns)

    return theta


def _check_against_direct_resolvent(
    system: UpdateSystem, columns: dict[int, np.ndarray]
) -> None:
    """Cross-check the blockwise assembly against ``(I - P)^{-1} beta``."""
    n = system.n
    dense = np.eye(n) - system.update_matrix.toarray()
    expected = np.linalg.solve(dense, np.diag(system.stubbornness_canonical))
    assembled = np.zeros((n, n))
    for c, col in columns.items():
        assembled[:, c] = col
    err = float(np.max(np.abs(assembled - expected)))
    if err > 1e-9:
        raise InternalInconsistencyError(
            f"blockwise influence assembly deviates from the direct resolvent by {err:.2e}"
        )


def absolute_centrality(theta: sparse.spmatrix) -> tuple[np.ndarray, np.ndarray]:
    """Column sums of the entrywise-absolute influence matrix, plus a ranking.

    The score aggregates positive and negative influence alike; the
    ranking is by descending score with ties broken by ascending index.
    """
    centrality = np.asarray(abs(theta).sum(axis=0)).ravel()
    ranking = np.argsort(-centrality, kind="stable")
    return centrality, ranking


# ---------------------------------------------------------------------------
# End-to-end pipeline
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class NetworkAnalysis:
    """Everything derivable from a validated ``(graph, beta)`` pair."""

    graph: SignedDigraph
    beta: np.ndarray
    sccs: SccPartition
    dag: CondensationDag
    classification: AgentClassification
    system: UpdateSystem
    spectral: SpectralReport

    @cached_property
    def sink_solutions(self) -> tuple[SinkSolution, ...]:
        return tuple(
            solve_sink(self.system, sink) for sink in self.classification.sinks
        )

    @cached_property
    def influence(self) -> InfluenceResult:
        theta = influence_matrix(self.system, self.classification, self.sink_solutions)
        centrality, ranking = absolute_centrality(theta)
        return InfluenceResult(matrix=theta, centrality=centrality, ranking=ranking)

    def steady_state(self, x0) -> np.ndarray:
        """Final opinions for the given initial opinions, in original order."""
        x0 = np.asarray(x0, dtype=np.float64)
        if x0.shape != (self.graph.n,):
            raise ValueError(f"x0 has shape {x0.shape}, expected ({self.graph.n},)")
        if not np.isfinite(x0).all():
            raise NumericalError("initial opinions contain non-finite entries")
        ordering = self.system.ordering
        x_canonical = np.zeros(self.graph.n)
        for solution in self.sink_solutions:
            sl = ordering.sink_slice(solution.sink_index)
            x_canonical[sl] = solution.apply(x0[list(solution.members)])
        m = ordering.follower_count
        if m:
            x_canonical[:m] = solve_followers(self.system, self.sink_solutions, x0)
        x = np.empty(self.graph.n)
        x[ordering.permutation] = x_canonical
        return x


def analyze_network(graph: SignedDigraph, beta) -> NetworkAnalysis:
    """Classify, order, and build the update system for validated inputs."""
    beta = np.asarray(beta, dtype=np.float64)
    sccs = strongly_connected_components(graph)
    dag = condense(graph, sccs)
    classification = classify_agents(graph, sccs, dag, beta)
    ordering = canonical_ordering(classification)
    system = build_update_system(graph, beta, ordering)
    spectral = spectral_check(system, classification)
    return NetworkAnalysis(
        graph=graph,
        beta=beta,
        sccs=sccs,
        dag=dag,
        classification=classification,
        system=system,
        spectral=spectral,
    )


def steady_state(graph: SignedDigraph, beta, x0) -> np.ndarray:
    """Closed-form final opinions; matches the simulation limit."""
    return analyze_network(graph, beta).steady_state(x0)


def influence(graph: SignedDigraph, beta) -> InfluenceResult:
    """Influence matrix, centrality scores, and ranking for validated inputs."""
    return analyze_network(graph, beta).influence


# ---------------------------------------------------------------------------
# Exports
# ---------------------------------------------------------------------------

def influence_triplets_csv(theta: sparse.spmatrix, labels: tuple[str, ...]) -> str:
    """Sparse triplets ``row_node,col_node,theta`` in row-major order."""
    coo = theta.tocoo()
    order = np.lexsort((coo.col, coo.row))
    lines = ["row_node,col_node,theta"]
    for i in order:
        lines.append(f"{labels[coo.row[i]]},{labels[coo.col[i]]},{float(coo.data[i])!r}")
    return "\n".join(lines) + "\n"


def influence_scatter_csv(theta: sparse.spmatrix, labels: tuple[str, ...]) -> str:
    """Triplets plus a +1/-1 sign column, ready for a colored scatter plot."""
    coo = theta.tocoo()
    order = np.lexsort((coo.col, coo.row))
    lines = ["row_node,col_node,theta,sign"]
    for i in order:
        sign = 1 if coo.data[i] > 0 else -1
        lines.append(f"{labels[coo.row[i]]},{labels[coo.col[i]]},{float(coo.data[i])!r},{sign}")
    return "\n".join(lines) + "\n"


def centrality_csv(
    centrality: np.ndarray, ranking: np.ndarray, labels: tuple[str, ...]
) -> str:
    lines = ["rank,node,centrality"]
    for rank, node in enumerate(ranking, start=1):
        lines.append(f"{rank},{labels[node]},{float(centrality[node])!r}")
    return "\n".join(lines) + "\n"
