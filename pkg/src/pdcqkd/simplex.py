"""Dense two-phase simplex for small box-bounded linear programs.

Variables live in finite boxes, constraints are ``<=`` / ``>=`` rows; rows
that are scalar multiples of each other up to rounding collapse into a single
ranged row.
Upper bounds are handled implicitly (bounded-variable simplex).  The basis is
refactorized from the original matrix before every pivot, the entering
variable is the lowest-index improving one and ties in the ratio test go to
the largest pivot, so the pivot sequence is a pure function of the input.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from pdcqkd.mathkit import DomainError

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

_PIVOT_TOL = 1e-9
_COST_TOL = 1e-12
_COST_REL_TOL = 1e-11
_FEAS_TOL = 1e-9
_MAX_ITER = 100_000
_RESIDUAL_TOL = 1e-9
_STEP_FEAS_TOL = 1e-11
_ROW_MATCH_TOL = 1e-13


@dataclass(frozen=True, eq=False)
class LinearProgram:
    """``sense`` c.x subject to ``A[i].x rel[i] b[i]`` and ``lo <= x <= hi``."""

    objective: np.ndarray
    sense: str
    A: np.ndarray
    relations: tuple[str, ...]
    b: np.ndarray
    bounds: np.ndarray
    names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        c = np.asarray(self.objective, dtype=float)
        a = np.asarray(self.A, dtype=float).reshape(-1, c.size)
        b = np.asarray(self.b, dtype=float)
        bounds = np.asarray(self.bounds, dtype=float).reshape(c.size, 2)
        if self.sense not in ("min", "max"):
            raise DomainError(f"sense must be 'min' or 'max', got {self.sense!r}")
        if a.shape[0] != b.size or len(self.relations) != b.size:
            raise DomainError("constraint dimensions are inconsistent")
        if any(r not in ("<=", ">=") for r in self.relations):
            raise DomainError("relations must be '<=' or '>='")
        if np.any(bounds[:, 0] > bounds[:, 1]) or not np.all(np.isfinite(bounds)):
            raise DomainError("variable bounds must be finite with lo <= hi")
        names = tuple(self.names) or tuple(f"x{j}" for j in range(c.size))
        if len(names) != c.size:
            raise DomainError("one name per variable is required")
        for attr, value in (("objective", c), ("A", a), ("b", b), ("bounds", bounds)):
            value.setflags(write=False)
            object.__setattr__(self, attr, value)
        object.__setattr__(self, "relations", tuple(self.relations))
        object.__setattr__(self, "names", names)

    @property
    def n_vars(self) -> int:
        return self.objective.size

    @property
    def n_constraints(self) -> int:
        return self.b.size

    @property
    def constraints(self) -> list[tuple[np.ndarray, str, float]]:
        return [(self.A[i], self.relations[i], float(self.b[i])) for i in range(self.b.size)]

    def to_text(self) -> str:
        """Plain-text dump, one line per constraint."""

        def terms(row: np.ndarray) -> str:
            parts = [f"{float(v)!r}*{self.names[j]}" for j, v in enumerate(row) if v != 0.0]
            return " + ".join(parts) if parts else "0"

        lines = [f"{self.sense} {terms(self.objective)}", "subject to"]
        for row, rel, bound in self.constraints:
            lines.append(f"{terms(row)} {rel} {bound!r}")
        lines.append("bounds")
        for name, (lo, hi) in zip(self.names, self.bounds):
            lines.append(f"{float(lo)!r} <= {name} <= {float(hi)!r}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True, eq=False)
class LPResult:
    value: float
    x: np.ndarray
    status: str
    residual: float = 0.0
    gap: float = 0.0
    iterations: int = 0
    duals: np.ndarray = field(default_factory=lambda: np.zeros(0))


class NumericalError(ArithmeticError):
    """The final basis does not reproduce a feasible point."""


class _Tableau:
    def __init__(
        self, a: np.ndarray, b: np.ndarray, upper: np.ndarray, basis: np.ndarray, at_upper: np.ndarray
    ):
        self.a = a  # original equality matrix, kept for refactorization
        self.b = b
        self.upper = upper
        self.basis = basis
        self.at_upper = at_upper
        self.iterations = 0
        self.refactor()

    def refactor(self) -> None:
        base = self.a[:, self.basis]
        self.t = np.linalg.solve(base, self.a)
        self.abs_base = np.abs(base)
        self.abs_inv = np.abs(np.linalg.inv(base))
        self.x_b = self.values()[self.basis]

    def _state(self) -> bytes:
        return np.sort(self.basis).tobytes() + np.packbits(self.at_upper).tobytes()

    def run(self, cost: np.ndarray, frozen: np.ndarray) -> str:
        """Pivot to optimality for ``cost``.

        Rounding on nearly singular bases can make reduced costs flip sign
        back and forth, so no (basis, bound) state is ever entered twice;
        that alone guarantees termination.  A pivot that would hand a
        magnified bound violation to the entering variable is skipped, which
        can stop the phase early; the duality gap then reports the shortfall.
        """
        is_basic = np.zeros(self.t.shape[1], dtype=bool)
        seen = {self._state()}
        while True:
            self.refactor()
            is_basic[:] = False
            is_basic[self.basis] = True
            # reduced costs from the duals; their rounding scales with |a|.|y|
            y = np.linalg.solve(self.a[:, self.basis].T, cost[self.basis])
            d = cost - self.a.T @ y
            d[self.basis] = 0.0
            d_tol = np.maximum(_COST_TOL, _COST_REL_TOL * (np.abs(cost) + np.abs(self.a).T @ np.abs(y)))
            movable = ~is_basic & ~frozen & (self.upper > 0)
            improving = movable & (
                (~self.at_upper & (d < -d_tol)) | (self.at_upper & (d > d_tol))
            )
            if self.iterations >= _MAX_ITER:
                raise RuntimeError("simplex iteration limit reached")
            for j in np.flatnonzero(improving):
                j = int(j)
                alpha = (-1.0 if self.at_upper[j] else 1.0) * self.t[:, j]
                theta, leave, leave_to_upper = self._ratio_test(alpha, self.upper[j])
                if not np.isfinite(theta):
                    return UNBOUNDED
                if leave >= 0 and self._fallout(leave, alpha[leave]) > _STEP_FEAS_TOL:
                    # the entering variable would inherit a magnified infeasibility
                    continue
                basis, at_upper = self.basis.copy(), self.at_upper.copy()
                if leave < 0:
                    self.at_upper[j] = not self.at_upper[j]
                else:
                    self.at_upper[self.basis[leave]] = leave_to_upper
                    self.at_upper[j] = False
                    self.basis[leave] = j
                state = self._state()
                if state not in seen:
                    seen.add(state)
                    self.iterations += 1
                    break
                self.basis, self.at_upper = basis, at_upper
            else:
                return OPTIMAL

    def _fallout(self, row: int, pivot: float) -> float:
        """Bound violation the entering variable takes over from a leaving row."""
        x = self.x_b[row]
        off = max(-x, x - self.upper[self.basis[row]], 0.0)
        return off / abs(pivot)

    def _ratio_test(self, alpha: np.ndarray, step_cap: float) -> tuple[float, int, bool]:
        """Minimum-ratio test; among tied rows the largest pivot wins.

        Entries below the pivot tolerance are skipped unless the step would
        push their basic variable out of its box by more than ``_STEP_FEAS_TOL``,
        in which case they block after all.
        """
        ub = self.upper[self.basis]
        big = _PIVOT_TOL * max(1.0, float(np.max(np.abs(alpha), initial=0.0)))
        theta, best, to_upper = self._min_ratio(alpha, ub, np.abs(alpha) > big)
        limit = min(theta, step_cap)
        # componentwise rounding bound of the solve; entries under it carry no sign
        floor = 64 * np.finfo(float).eps * (self.abs_inv @ (self.abs_base @ np.abs(alpha)))
        small = (np.abs(alpha) > floor) & (np.abs(alpha) <= big)
        if np.isfinite(limit) and np.any(small):
            moved = self.x_b - alpha * limit
            breach = small & ((moved < -_STEP_FEAS_TOL) | (moved > ub + _STEP_FEAS_TOL))
            if np.any(breach):
                theta, best, to_upper = self._min_ratio(alpha, ub, breach)
        if step_cap <= theta:
            return step_cap, -1, False
        return theta, best, to_upper

    def _min_ratio(self, alpha: np.ndarray, ub: np.ndarray, rows: np.ndarray) -> tuple[float, int, bool]:
        down = rows & (alpha > 0.0)
        up = rows & (alpha < 0.0) & np.isfinite(ub)
        slack = np.full(alpha.size, np.inf)
        slack[down] = np.maximum(self.x_b[down], 0.0)
        slack[up] = np.maximum(ub[up] - self.x_b[up], 0.0)
        mag = np.abs(alpha)
        with np.errstate(divide="ignore", invalid="ignore"):
            exact = np.where(down | up, slack / mag, np.inf)
        theta = float(np.min(exact, initial=np.inf))
        if not np.isfinite(theta):
            return np.inf, -1, False
        eligible = np.flatnonzero(exact <= theta * (1.0 + 1e-12))
        best = eligible[np.lexsort((self.basis[eligible], -mag[eligible]))[0]]
        return float(exact[best]), int(best), bool(up[best])

    def values(self) -> np.ndarray:
        """Recompute all variable values from the final basis."""
        x = np.where(self.at_upper, self.upper, 0.0)
        x[~np.isfinite(x)] = 0.0
        x[self.basis] = 0.0
        rhs = self.b - self.a @ x
        x[self.basis] = np.linalg.solve(self.a[:, self.basis], rhs)
        return x


def _pow2(x: np.ndarray) -> np.ndarray:
    # powers of two scale without rounding
    return np.exp2(np.round(np.log2(x)))


def _equilibrate(a: np.ndarray, rounds: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """Row and column factors giving every nonzero row and column unit-order max."""
    rows = np.ones(a.shape[0])
    cols = np.ones(a.shape[1])
    work = np.abs(a)
    for _ in range(rounds):
        rmax = work.max(axis=1, initial=0.0)
        rmax[rmax == 0.0] = 1.0
        f = _pow2(1.0 / rmax)
        rows *= f
        work *= f[:, None]
        cmax = work.max(axis=0, initial=0.0)
        cmax[cmax == 0.0] = 1.0
        g = _pow2(1.0 / cmax)
        cols *= g
        work *= g[None, :]
    return rows, cols


def _row_groups(a: np.ndarray) -> list[tuple[int, list[tuple[int, float]]]]:
    """Group rows that are scalar multiples of one another up to rounding.

    Returns ``(representative, [(row, scale), ...])`` with
    ``a[row] ~= scale * a[representative]``, in order of first appearance.
    Symmetric herald classes produce such rows, and keeping both makes the
    basis numerically singular.
    """
    norm = np.zeros_like(a)
    lead = np.zeros(a.shape[0])
    for i, row in enumerate(a):
        k = int(np.argmax(np.abs(row)))
        if row[k] != 0.0:
            lead[i] = row[k]
            norm[i] = row / row[k]
    groups: list[tuple[int, list[tuple[int, float]]]] = []
    for i in range(a.shape[0]):
        for rep, members in groups:
            if lead[i] != 0.0 and lead[rep] != 0.0 and np.max(np.abs(norm[i] - norm[rep])) <= _ROW_MATCH_TOL:
                members.append((i, lead[i] / lead[rep]))
                break
        else:
            groups.append((i, [(i, 1.0)]))
    return groups


def solve(lp: LinearProgram) -> LPResult:
    """Solve ``lp`` exactly as posed.

    Returns:
        LPResult with ``status`` one of ``"optimal"``, ``"infeasible"``,
        ``"unbounded"``.  For optimal results ``residual`` is the largest
        constraint violation, measured on rows scaled to unit max
        coefficient, and ``gap`` the primal-dual objective gap.

    Raises:
        NumericalError: If the final basis fails the residual check.
    """
    sign = 1.0 if lp.sense == "min" else -1.0
    lo, hi = lp.bounds[:, 0], lp.bounds[:, 1]
    n = lp.n_vars

    # x = lo + cols * z; rows are rescaled again after merging ranged pairs
    _, cols = _equilibrate(lp.A)
    u = (hi - lo) / cols
    cost_struct = sign * lp.objective * cols
    c_scale = float(np.max(np.abs(cost_struct), initial=0.0)) or 1.0
    cost_struct = cost_struct / c_scale

    is_le = np.array([rel == "<=" for rel in lp.relations], dtype=bool)
    groups = _row_groups(lp.A)
    m = len(groups)
    a_rows = np.empty((m, n))
    beta = np.empty(m)
    sigma = np.empty(m)
    s_upper = np.empty(m)
    shifted = lp.b - lp.A @ lo
    for g, (rep, members) in enumerate(groups):
        a_rows[g] = lp.A[rep] * cols
        hi_b, lo_b = np.inf, -np.inf
        for i, scale in members:
            # a[i] = scale * a[rep]; a negative scale flips the side
            if is_le[i] == (scale > 0):
                hi_b = min(hi_b, shifted[i] / scale)
            else:
                lo_b = max(lo_b, shifted[i] / scale)
        if hi_b < lo_b:
            return LPResult(float("nan"), lo.copy(), INFEASIBLE)
        # lo <= a.x <= hi becomes a.x + s = hi with 0 <= s <= hi - lo
        if np.isfinite(hi_b):
            sigma[g], beta[g], s_upper[g] = 1.0, hi_b, hi_b - lo_b
        else:
            sigma[g], beta[g], s_upper[g] = -1.0, lo_b, np.inf
    row_norm = np.max(np.abs(a_rows), axis=1, initial=0.0)
    row_norm[row_norm == 0.0] = 1.0
    rows = _pow2(1.0 / row_norm)
    a = a_rows * rows[:, None]
    b = beta * rows
    s_upper = s_upper * rows

    # initial point: structurals at 0, each slack basic if that is feasible,
    # otherwise parked at its nearest bound with an artificial taking the rest
    s0 = np.clip(b / sigma, 0.0, s_upper)
    slack_basic = (b / sigma >= 0.0) & (b / sigma <= s_upper)
    resid = np.where(slack_basic, 0.0, b - sigma * s0)
    flip = np.where(resid < 0, -1.0, 1.0)
    a *= flip[:, None]
    b *= flip
    sigma *= flip

    art_rows = np.flatnonzero(~slack_basic)
    n_art = art_rows.size
    full = np.zeros((m, n + m + n_art))
    full[:, :n] = a
    full[np.arange(m), n + np.arange(m)] = sigma
    full[art_rows, n + m + np.arange(n_art)] = 1.0
    upper = np.concatenate([u, s_upper, np.full(n_art, np.inf)])
    basis = n + np.arange(m)
    basis[art_rows] = n + m + np.arange(n_art)
    at_upper = np.zeros(full.shape[1], dtype=bool)
    at_upper[n + art_rows] = ~slack_basic[art_rows] & (s0[art_rows] > 0.0)
    r = m

    try:
        tab = _Tableau(full, b, upper, basis, at_upper)
        frozen = np.zeros(full.shape[1], dtype=bool)
        if n_art:
            phase1 = np.zeros(full.shape[1])
            phase1[n + r :] = 1.0
            tab.run(phase1, frozen)
            tab.refactor()
            tab.run(phase1, frozen)
            infeas = float(np.sum(tab.values()[n + r :]))
            if infeas > _FEAS_TOL * max(float(np.max(np.abs(b), initial=0.0)), 1.0):
                return LPResult(float("nan"), lo.copy(), INFEASIBLE, iterations=tab.iterations)
            tab.upper = upper = upper.copy()
            upper[n + r :] = 0.0
            frozen[n + r :] = True
            tab.refactor()

        cost = np.zeros(full.shape[1])
        cost[:n] = cost_struct
        status = tab.run(cost, frozen)
        if status == UNBOUNDED:
            return LPResult(float("nan"), lo.copy(), UNBOUNDED, iterations=tab.iterations)
        tab.refactor()
        status = tab.run(cost, frozen)
        w = tab.values()
        y = np.linalg.solve(full[:, tab.basis].T, cost[tab.basis])
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"singular basis in simplex: {exc}") from exc

    z = np.clip(w[:n], 0.0, u)
    x = np.clip(lo + cols * z, lo, hi)
    value = float(lp.objective @ x)

    row_max = np.max(np.abs(lp.A), axis=1, initial=0.0)
    row_max[row_max == 0.0] = 1.0
    activity = lp.A @ x
    viol = np.where(is_le, activity - lp.b, lp.b - activity) / row_max
    residual = float(max(np.max(viol, initial=0.0), 0.0))

    reduced = cost - full.T @ y
    box = np.isfinite(upper) & (upper > 0)
    dual_obj = float(b @ y + np.sum(np.minimum(reduced[box], 0.0) * upper[box]))
    dual_infeas = float(np.sum(-np.minimum(reduced[~np.isfinite(upper)], 0.0)))
    primal_obj = float(cost_struct @ z)
    gap = (abs(primal_obj - dual_obj) + dual_infeas) * c_scale
    merged = sign * c_scale * y * flip * rows
    duals = np.zeros(lp.n_constraints)
    for g, (_, members) in enumerate(groups):
        # credit the member whose own bound is closest to active
        gaps = [abs(activity[i] - lp.b[i]) / abs(scale) for i, scale in members]
        i, scale = members[int(np.argmin(gaps))]
        duals[i] = merged[g] / scale
    if residual > _RESIDUAL_TOL:
        raise NumericalError(
            f"simplex finished with constraint residual {residual:.3g} after {tab.iterations} pivots"
        )
    return LPResult(value, x, status, residual, gap, tab.iterations, duals)
