"""Inverse Born series: linearized operator, truncated-SVD inverse, recursion.

The linearized map takes a volume field to data through the order-1 series
term; its truncated-SVD pseudoinverse (computed in the quadrature-weighted
inner products, so singular values are discrete weighted-L2 operator norms)
drives the order-by-order recursion

    eta_1 = pinv(phi),
    eta_j = -pinv( sum_{m=2..j} sum_{i_1+..+i_m=j} term(eta_{i_1}, .., eta_{i_m}) ),

which reproduces the tensor-composition coefficients of the inverse series
exactly whenever pinv K pinv = pinv (true for truncated SVD).  Only elementary
tensor applications are ever formed; the number of compositions at order j is
2^(j-1) - 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import bounds
from .forward import born_term
from .greens import OperatorSet
from .grid import data_norm, field_norm

__all__ = [
    "LinearizedOperator",
    "RegularizedInverse",
    "InverseSeriesResult",
    "linearized_operator",
    "regularize",
    "inverse_series",
    "diagnostics",
    "stability_probe",
]

MAX_ORDER = 12
_P_LABELS = ((2, "2"), (math.inf, "inf"))


@dataclass(frozen=True)
class LinearizedOperator:
    """Dense order-1 operator with its weighted singular value decomposition.

    Rows are (source, detector) pairs in row-major order, columns are voxels;
    volume weights are folded in so that ``matrix @ eta`` equals the order-1
    series term.  The SVD factors belong to the weight-scaled matrix
    row_scale * K / col_scale, so singular values are operator norms between
    the weighted L2 spaces.
    """

    ops: OperatorSet
    matrix: np.ndarray
    svals: np.ndarray
    u: np.ndarray
    vh: np.ndarray
    row_scale: float
    col_scale: np.ndarray

    @property
    def n_pairs(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.matrix.shape[1]


def linearized_operator(ops: OperatorSet) -> LinearizedOperator:
    """Assemble the order-1 matrix and factor it in weighted inner products."""
    mode = ops.mode
    w = ops.grid.weights
    # entry for pair (s, d) and voxel j: sign * k^2 * g_sv[s, j] * g_vd[j, d] * w_j
    k1 = ops.g_sv[:, None, :] * ops.g_vd.T[None, :, :]  # (S, D, V)
    k1 = (mode.sign * mode.k**2) * k1.reshape(-1, ops.n_nodes) * w[None, :]
    row_scale = math.sqrt(ops.boundary.pair_weight)
    col_scale = np.sqrt(w)
    u, s, vh = np.linalg.svd(k1 * (row_scale / col_scale[None, :]), full_matrices=False)
    return LinearizedOperator(
        ops=ops, matrix=k1, svals=s, u=u, vh=vh, row_scale=row_scale, col_scale=col_scale
    )


@dataclass(frozen=True)
class RegularizedInverse:
    """Truncated-SVD pseudoinverse of the linearized operator.

    ``matrix`` maps flattened data to a volume field.  norm2 = 1/sigma_min of
    the retained triplets is the weighted-L2 operator norm; norm_inf is the
    max absolute row sum of the realized matrix (the exact discrete sup-norm).
    """

    linop: LinearizedOperator
    rank: int
    sigma_min: float
    matrix: np.ndarray
    norm2: float
    norm_inf: float
    _v_r: np.ndarray = field(repr=False)

    def norm(self, p: float) -> float:
        if p == 2:
            return self.norm2
        if math.isinf(p):
            return self.norm_inf
        raise ValueError("pseudoinverse norms are computed for p in {2, inf}")

    def apply(self, phi: np.ndarray) -> np.ndarray:
        """Volume field from data (accepts (S, D) or flattened)."""
        phi = np.asarray(phi, dtype=complex).ravel()
        if phi.shape[0] != self.linop.n_pairs:
            raise ValueError("data size does not match the operator")
        return self.matrix @ phi

    def project(self, eta: np.ndarray) -> np.ndarray:
        """Orthogonal projection (weighted inner product) onto the retained subspace.

        Equals pinv applied to the linearized forward map of eta.
        """
        eta = np.asarray(eta, dtype=complex)
        coeff = self._v_r.conj().T @ (self.linop.col_scale * eta)
        return (self._v_r @ coeff) / self.linop.col_scale

    def projector_matrix(self) -> np.ndarray:
        """Dense retained-subspace projector (for diagnostics and tests)."""
        m = self._v_r @ self._v_r.conj().T
        return m * (self.linop.col_scale[None, :] / self.linop.col_scale[:, None])

    def truncated_forward(self) -> np.ndarray:
        """Rank-limited forward matrix sharing the retained triplets."""
        lin = self.linop
        u_r = lin.u[:, : self.rank]
        s_r = lin.svals[: self.rank]
        return (u_r * s_r[None, :]) @ (self._v_r.conj().T * lin.col_scale[None, :]) / lin.row_scale


def regularize(
    linop: LinearizedOperator, rank: int | None = None, tau: float | None = None
) -> RegularizedInverse:
    """Truncate the factorization by rank or by relative singular-value cutoff.

    Exactly one rule must be given: keep the top ``rank`` triplets, or keep
    singular values >= tau * sigma_max with tau in (0, 1].
    """
    if (rank is None) == (tau is None):
        raise ValueError("give exactly one of rank= or tau=")
    s = linop.svals
    if s.size == 0 or s[0] == 0:
        raise ValueError("operator is identically zero; nothing to invert")
    if tau is not None:
        if not 0 < tau <= 1:
            raise ValueError(f"tau must be in (0, 1], got {tau}")
        r = int(np.count_nonzero(s >= tau * s[0]))
    else:
        if not 1 <= rank <= s.size:
            raise ValueError(f"rank must be in [1, {s.size}], got {rank}")
        if s[rank - 1] == 0:
            raise ValueError("requested rank exceeds the numerical rank")
        r = int(rank)
    if r == 0:
        raise ValueError("truncation retained no singular triplets")
    u_r = linop.u[:, :r]
    s_r = s[:r]
    v_r = linop.vh[:r].conj().T
    pinv = ((v_r / linop.col_scale[:, None]) * (1.0 / s_r)[None, :]) @ u_r.conj().T
    pinv = pinv * linop.row_scale
    return RegularizedInverse(
        linop=linop,
        rank=r,
        sigma_min=float(s_r[-1]),
        matrix=pinv,
        norm2=float(1.0 / s_r[-1]),
        norm_inf=float(np.abs(pinv).sum(axis=1).max()),
        _v_r=v_r,
    )


@dataclass(frozen=True)
class InverseSeriesResult:
    """Series terms eta_j and their cumulative partial sums (volume fields)."""

    terms: list
    partial_sums: list

    @property
    def order(self) -> int:
        return len(self.terms)

    def term_norms(self, grid, p: float) -> list:
        return [field_norm(grid, t, p) for t in self.terms]


def inverse_series(
    kinv: RegularizedInverse,
    ops: OperatorSet,
    phi: np.ndarray,
    order: int,
    max_order: int = MAX_ORDER,
) -> InverseSeriesResult:
    """Evaluate the inverse series to the requested order by the recursion.

    Composition terms within an order are accumulated in depth-first
    lexicographic order (ascending part count), which fixes the floating-point
    result bit for bit.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    if order > max_order:
        raise ValueError(
            f"order {order} exceeds the composition enumeration budget ({max_order}); "
            f"the term count grows as 2^(order-1)"
        )
    phi = np.asarray(phi, dtype=complex)
    terms = [kinv.apply(phi)]
    for j in range(2, order + 1):
        acc = np.zeros((ops.n_src, ops.n_det), dtype=complex)
        for m in range(2, j + 1):
            for comp in bounds.compositions(j, m):
                acc += born_term(ops, [terms[i - 1] for i in comp])
        terms.append(-kinv.apply(acc))
    partial = list(np.cumsum(np.array(terms), axis=0))
    return InverseSeriesResult(terms=terms, partial_sums=partial)


def diagnostics(
    result: InverseSeriesResult,
    kinv: RegularizedInverse,
    constants: bounds.ConstantSet,
    ops: OperatorSet,
    phi: np.ndarray,
    eta_true: np.ndarray | None = None,
) -> dict:
    """Hypothesis values, certified bounds where computable, measured errors.

    Violated hypotheses are reported, never raised; bound entries are None
    whenever their inequality region is left.
    """
    record = {"order": result.order, "rank": kinv.rank, "p": {}}
    for p, label in _P_LABELS:
        record["p"][label] = _per_p(result, kinv, constants, ops, phi, p, eta_true)
    return record


def _per_p(result, kinv, constants, ops, phi, p, eta_true):
    grid = ops.grid
    mu_p, nu_p = bounds.interpolate_constants(
        constants.mu_2, constants.mu_inf, constants.nu_2, constants.nu_inf, p
    )
    tb = bounds.CertifiedBounds(mu_p, nu_p, kinv.norm(p))
    radius = tb.inverse_radius
    phi_norm = data_norm(ops.boundary, phi, p)
    eta1_norm = field_norm(grid, result.terms[0], p)
    q = tb.q
    r = q * phi_norm
    rec = {
        "mu_p": mu_p,
        "nu_p": nu_p,
        "inverse_radius": radius,
        "pinv_norm": kinv.norm(p),
        "hyp_operator_ok": bool(kinv.norm(p) < radius),
        "eta1_norm": eta1_norm,
        "hyp_data_ok": bool(eta1_norm < radius),
        "phi_norm": phi_norm,
        "q": q,
        "r": r,
        "term_norms": result.term_norms(grid, p),
    }
    violations = []
    if q >= 1:
        violations.append(f"(mu_p + nu_p) * pinv_norm = {q:.6g} >= 1")
    if r >= 1:
        violations.append(f"(mu_p + nu_p) * pinv_norm * phi_norm = {r:.6g} >= 1")
    if not violations:
        c_simple, c_refined = bounds.series_constant(mu_p, nu_p, kinv.norm(p))
        rec["c_simple"] = c_simple
        rec["c_refined"] = c_refined
        rec["tail_bound"] = [tb.remainder_bound(n, phi_norm) for n in range(1, result.order + 1)]
        rec["stability_constant"] = tb.stability_constant(phi_norm)
    else:
        rec["c_simple"] = None
        rec["c_refined"] = None
        rec["tail_bound"] = None
        rec["stability_constant"] = None
    if eta_true is not None:
        eta_true = np.asarray(eta_true, dtype=complex)
        proj = kinv.project(eta_true)
        linres = field_norm(grid, eta_true - proj, p)
        state_bound = max(field_norm(grid, eta_true, p), field_norm(grid, proj, p))
        rec["eta_true_norm"] = field_norm(grid, eta_true, p)
        rec["linear_residual"] = linres
        rec["state_bound"] = state_bound
        rec["measured_error"] = [
            field_norm(grid, eta_true - s_n, p) for s_n in result.partial_sums
        ]
        state_ok = tb.msum * state_bound < 1
        rec["hyp_state_ok"] = bool(state_ok)
        if not violations and state_ok:
            rec["error_bound"] = [
                tb.error_bound(n, phi_norm, linres, state_bound)
                for n in range(1, result.order + 1)
            ]
        else:
            rec["error_bound"] = None
    rec["hypothesis_violations"] = violations
    return rec


def stability_probe(
    kinv: RegularizedInverse,
    ops: OperatorSet,
    phi1: np.ndarray,
    phi2: np.ndarray,
    order: int,
    constants: bounds.ConstantSet,
) -> dict:
    """Measured sensitivity of order-N reconstructions to a data perturbation.

    Per p: lhs = ||S_N(phi1) - S_N(phi2)||_p against the stability bound
    C~ * ||phi1 - phi2||_p with M = max of the two data norms.  The bound is
    None (with the violation recorded) outside the hypothesis region.
    """
    res1 = inverse_series(kinv, ops, phi1, order)
    res2 = inverse_series(kinv, ops, phi2, order)
    out = {"order": order, "p": {}}
    for p, label in _P_LABELS:
        mu_p, nu_p = bounds.interpolate_constants(
            constants.mu_2, constants.mu_inf, constants.nu_2, constants.nu_inf, p
        )
        tb = bounds.CertifiedBounds(mu_p, nu_p, kinv.norm(p))
        lhs = field_norm(ops.grid, res1.partial_sums[-1] - res2.partial_sums[-1], p)
        dphi = data_norm(ops.boundary, np.asarray(phi1) - np.asarray(phi2), p)
        m_bound = max(data_norm(ops.boundary, phi1, p), data_norm(ops.boundary, phi2, p))
        rec = {
            "lhs": lhs,
            "dphi_norm": dphi,
            "data_bound": m_bound,
            "hyp_operator_ok": bool(tb.q < 1),
            "hyp_data_bound_ok": bool(tb.q * m_bound < 1),
        }
        if rec["hyp_operator_ok"] and rec["hyp_data_bound_ok"]:
            ctilde = tb.stability_constant(m_bound)
            rec["stability_constant"] = ctilde
            rec["rhs"] = ctilde * dphi
            rec["ratio"] = lhs / dphi if dphi > 0 else 0.0
        else:
            rec["stability_constant"] = None
            rec["rhs"] = None
            rec["ratio"] = lhs / dphi if dphi > 0 else 0.0
        out["p"][label] = rec
    return out
