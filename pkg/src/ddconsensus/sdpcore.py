"""Small semidefinite-programming facade for matrix-variable LMI problems.

Models problems with named variable blocks (symmetric matrices, rectangular
matrices, scalars), affine symmetric constraints required PSD (optionally with
a strictness margin), linear equality constraints, and linear trace
objectives.  The backend is cvxpy with an interior-point solver; returned
solutions are re-certified against every constraint with plain numpy before
they are reported feasible.

Intended for desk-scale problems; the variable budget is capped at
MAX_SCALAR_UNKNOWNS (20000) scalar unknowns.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_SOLVER = "CLARABEL"
FEASIBILITY_TOL = 1e-7
EQUALITY_TOL = 1e-6
STRICT_MARGIN = 1e-6
ASYMMETRY_TOL = 1e-10
MAX_SCALAR_UNKNOWNS = 20_000


# ---------------------------------------------------------------------------
# affine matrix expressions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Term:
    """One affine contribution: left @ var @ right, optionally var.T, or
    scalar_var * coeff for scalar variables."""

    var: str
    left: np.ndarray | None   # None marks a scalar-variable term
    right: np.ndarray | None
    coeff: np.ndarray | None  # scalar-term coefficient matrix
    transposed: bool = False

    @property
    def is_scalar_term(self) -> bool:
        return self.left is None

    def shape(self):
        if self.is_scalar_term:
            return self.coeff.shape
        return (self.left.shape[0], self.right.shape[1])


class Expr:
    """Affine matrix expression over declared variable blocks."""

    # keep numpy from broadcasting over us so ndarray <op> Expr reflects here
    __array_ufunc__ = None

    def __init__(self, shape, const: np.ndarray | None = None, terms=()):
        self.shape = tuple(shape)
        self.const = np.zeros(self.shape) if const is None else np.asarray(const, dtype=float)
        if self.const.shape != self.shape:
            raise ValueError(f"constant shape {self.const.shape} != {self.shape}")
        self.terms = list(terms)

    # -- construction -------------------------------------------------------

    @staticmethod
    def constant(m) -> "Expr":
        m = np.atleast_2d(np.asarray(m, dtype=float))
        return Expr(m.shape, const=m)

    def __add__(self, other) -> "Expr":
        other = other if isinstance(other, Expr) else Expr.constant(other)
        if other.shape != self.shape:
            raise ValueError(f"shape mismatch {self.shape} + {other.shape}")
        return Expr(self.shape, self.const + other.const, self.terms + other.terms)

    __radd__ = __add__

    def __neg__(self) -> "Expr":
        return self * -1.0

    def __sub__(self, other) -> "Expr":
        other = other if isinstance(other, Expr) else Expr.constant(other)
        return self + (-other)

    def __rsub__(self, other) -> "Expr":
        return Expr.constant(other) + (-self)

    def __mul__(self, scale: float) -> "Expr":
        scale = float(scale)
        terms = []
        for t in self.terms:
            if t.is_scalar_term:
                terms.append(_Term(t.var, None, None, scale * t.coeff))
            else:
                terms.append(_Term(t.var, scale * t.left, t.right, None, t.transposed))
        return Expr(self.shape, scale * self.const, terms)

    __rmul__ = __mul__

    def __matmul__(self, right) -> "Expr":
        right = np.atleast_2d(np.asarray(right, dtype=float))
        if right.shape[0] != self.shape[1]:
            raise ValueError(f"matmul mismatch {self.shape} @ {right.shape}")
        shape = (self.shape[0], right.shape[1])
        terms = []
        for t in self.terms:
            if t.is_scalar_term:
                terms.append(_Term(t.var, None, None, t.coeff @ right))
            else:
                terms.append(_Term(t.var, t.left, t.right @ right, None, t.transposed))
        return Expr(shape, self.const @ right, terms)

    def __rmatmul__(self, left) -> "Expr":
        left = np.atleast_2d(np.asarray(left, dtype=float))
        if left.shape[1] != self.shape[0]:
            raise ValueError(f"matmul mismatch {left.shape} @ {self.shape}")
        shape = (left.shape[0], self.shape[1])
        terms = []
        for t in self.terms:
            if t.is_scalar_term:
                terms.append(_Term(t.var, None, None, left @ t.coeff))
            else:
                terms.append(_Term(t.var, left @ t.left, t.right, None, t.transposed))
        return Expr(shape, left @ self.const, terms)

    @property
    def T(self) -> "Expr":
        terms = []
        for t in self.terms:
            if t.is_scalar_term:
                terms.append(_Term(t.var, None, None, t.coeff.T))
            else:
                terms.append(_Term(t.var, t.right.T, t.left.T, None, not t.transposed))
        return Expr((self.shape[1], self.shape[0]), self.const.T, terms)

    # -- evaluation ---------------------------------------------------------

    def evaluate(self, values: dict) -> np.ndarray:
        out = self.const.copy()
        for t in self.terms:
            v = values[t.var]
            if t.is_scalar_term:
                out += float(v) * t.coeff
            else:
                m = np.atleast_2d(np.asarray(v))
                out += t.left @ (m.T if t.transposed else m) @ t.right
        return out

    def describe(self) -> str:
        parts = []
        if np.any(self.const != 0):
            parts.append(f"const[{self.shape[0]}x{self.shape[1]}]")
        for t in self.terms:
            if t.is_scalar_term:
                parts.append(f"{t.var}*C[{t.coeff.shape[0]}x{t.coeff.shape[1]}]")
            else:
                name = f"{t.var}'" if t.transposed else t.var
                parts.append(f"L[{t.left.shape[0]}x{t.left.shape[1]}]@{name}@R[{t.right.shape[0]}x{t.right.shape[1]}]")
        return " + ".join(parts) if parts else "0"


def block(rows) -> Expr:
    """Assemble a block matrix from Expr / array entries (like np.block)."""
    rows = [[e if isinstance(e, Expr) else Expr.constant(e) for e in row] for row in rows]
    row_heights = [row[0].shape[0] for row in rows]
    col_widths = [e.shape[1] for e in rows[0]]
    for row, h in zip(rows, row_heights):
        if len(row) != len(col_widths):
            raise ValueError("ragged block structure")
        for e, w in zip(row, col_widths):
            if e.shape != (h, w):
                raise ValueError(f"block entry shape {e.shape} != ({h}, {w})")
    total = (sum(row_heights), sum(col_widths))
    out = Expr(total)
    r_off = 0
    for row, h in zip(rows, row_heights):
        c_off = 0
        for e, w in zip(row, col_widths):
            emb_l = np.zeros((total[0], h))
            emb_l[r_off:r_off + h] = np.eye(h)
            emb_r = np.zeros((w, total[1]))
            emb_r[:, c_off:c_off + w] = np.eye(w)
            out = out + (emb_l @ e @ emb_r)
            c_off += w
        r_off += h
    return out


def trace(expr: "Expr | ScalarVar") -> "LinearFunctional":
    """Linear functional trace(expr) usable as an objective."""
    if isinstance(expr, ScalarVar):
        return LinearFunctional({expr.name: np.ones((1, 1))}, 0.0)
    if expr.shape[0] != expr.shape[1]:
        raise ValueError("trace needs a square expression")
    coeffs: dict[str, np.ndarray] = {}
    for t in expr.terms:
        if t.is_scalar_term:
            c = np.array([[np.trace(t.coeff)]])
        else:
            # trace(L v R) = trace((R L) v);  trace(L v' R) = trace((R L)' v)
            rl = t.right @ t.left
            c = rl.T if t.transposed else rl
        coeffs[t.var] = coeffs.get(t.var, 0) + c
    return LinearFunctional(coeffs, float(np.trace(expr.const)))


@dataclass
class LinearFunctional:
    """sum_v trace(coeffs[v] @ v) + const (scalar coefficient for scalar vars)."""

    coeffs: dict
    const: float = 0.0

    def evaluate(self, values: dict) -> float:
        out = self.const
        for name, c in self.coeffs.items():
            v = values[name]
            if np.ndim(v) == 0:
                out += float(np.asarray(c).reshape(-1)[0]) * float(v)
            else:
                out += float(np.trace(c @ np.atleast_2d(v)))
        return out


# ---------------------------------------------------------------------------
# problem container
# ---------------------------------------------------------------------------

class ScalarVar:
    __array_ufunc__ = None

    def __init__(self, name: str, nonneg: bool):
        self.name = name
        self.nonneg = nonneg

    def __mul__(self, coeff) -> Expr:
        m = np.atleast_2d(np.asarray(coeff, dtype=float))
        return Expr(m.shape, terms=[_Term(self.name, None, None, m)])

    __rmul__ = __mul__

    def as_expr(self) -> Expr:
        return self * np.ones((1, 1))


@dataclass
class _Constraint:
    kind: str        # "psd" or "eq"
    expr: Expr
    margin: float = 0.0
    label: str = ""


@dataclass
class SdpSolution:
    """Solver verdict plus certified values.

    status is one of "optimal", "feasible", "infeasible", "numerical-failure".
    ``residuals`` carries, per constraint, the certified slack (min eigenvalue
    past the margin for PSD constraints, -max|entry| for equalities).
    """

    status: str
    values: dict = field(default_factory=dict)
    objective_value: float | None = None
    residuals: list = field(default_factory=list)
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.status in ("optimal", "feasible")


class SdpProblem:
    """Declarative container: declare variables, add constraints, set objective."""

    def __init__(self, name: str = "sdp"):
        self.name = name
        self.variables: dict[str, tuple] = {}   # name -> (kind, shape)
        self.constraints: list[_Constraint] = []
        self.objective: tuple[str, LinearFunctional] | None = None

    # -- variables ----------------------------------------------------------

    def _register(self, name, kind, shape):
        if name in self.variables:
            raise ValueError(f"variable {name!r} already declared")
        self.variables[name] = (kind, shape)

    def symmetric(self, name: str, order: int) -> Expr:
        self._register(name, "symmetric", (order, order))
        return Expr((order, order), terms=[_Term(name, np.eye(order), np.eye(order), None)])

    def matrix(self, name: str, rows: int, cols: int) -> Expr:
        self._register(name, "matrix", (rows, cols))
        return Expr((rows, cols), terms=[_Term(name, np.eye(rows), np.eye(cols), None)])

    def scalar(self, name: str, nonneg: bool = False) -> ScalarVar:
        self._register(name, "scalar", (nonneg,))
        return ScalarVar(name, nonneg)

    def scalar_unknowns(self) -> int:
        total = 0
        for kind, shape in self.variables.values():
            if kind == "symmetric":
                total += shape[0] * (shape[0] + 1) // 2
            elif kind == "matrix":
                total += shape[0] * shape[1]
            else:
                total += 1
        return total

    # -- constraints --------------------------------------------------------

    def require_psd(self, expr: "Expr | ScalarVar", strict: bool = False,
                    label: str = "") -> None:
        """Add expr >= 0 (or >= margin*I when strict) on the PSD cone.

        Expressions are symmetrized as (M + M')/2 at compile time; solve()
        rejects constraints whose asymmetry exceeds ASYMMETRY_TOL anywhere on
        the manifold cut out by the equality constraints.
        """
        if isinstance(expr, ScalarVar):
            expr = expr.as_expr()
        if expr.shape[0] != expr.shape[1]:
            raise ValueError(f"PSD constraint needs a square expression, got {expr.shape}")
        margin = 0.0
        if strict:
            margin = STRICT_MARGIN * (1.0 + float(np.linalg.norm(expr.const, 2)))
        self.constraints.append(_Constraint("psd", expr, margin, label))

    def require_zero(self, expr: Expr, label: str = "") -> None:
        self.constraints.append(_Constraint("eq", expr, 0.0, label))

    def minimize(self, objective) -> None:
        self.objective = ("min", self._as_functional(objective))

    def maximize(self, objective) -> None:
        self.objective = ("max", self._as_functional(objective))

    @staticmethod
    def _as_functional(objective) -> LinearFunctional:
        if isinstance(objective, LinearFunctional):
            return objective
        if isinstance(objective, ScalarVar):
            return trace(objective)
        if isinstance(objective, Expr):
            if objective.shape != (1, 1):
                raise ValueError("matrix objectives must go through trace()")
            return trace(objective)
        raise TypeError(f"cannot interpret objective of type {type(objective)}")

    # -- symmetry validation --------------------------------------------

    def _free_layout(self) -> list[tuple[str, str, tuple, int]]:
        layout = []
        for name, (kind, shape) in self.variables.items():
            if kind == "symmetric":
                size = shape[0] * (shape[0] + 1) // 2
            elif kind == "matrix":
                size = shape[0] * shape[1]
            else:
                size = 1
            layout.append((name, kind, shape, size))
        return layout

    def _assignment_from_vector(self, theta: np.ndarray) -> dict:
        values = {}
        offset = 0
        for name, kind, shape, size in self._free_layout():
            chunk = theta[offset:offset + size]
            offset += size
            if kind == "symmetric":
                k = shape[0]
                m = np.zeros((k, k))
                iu = np.triu_indices(k)
                m[iu] = chunk
                values[name] = m + np.triu(m, 1).T
            elif kind == "matrix":
                values[name] = chunk.reshape(shape)
            else:
                values[name] = float(chunk[0])
        return values

    def validate_symmetry(self) -> None:
        """Reject PSD constraints that stay asymmetric on the equality manifold.

        All expressions are affine, so each constraint is checked exactly: a
        feasible point of the equality constraints plus random directions in
        their null space must leave the asymmetry below ASYMMETRY_TOL.
        """
        n_free = sum(size for *_, size in self._free_layout())
        eq = [c.expr for c in self.constraints if c.kind == "eq"]
        if eq:
            zero_vals = self._assignment_from_vector(np.zeros(n_free))
            c0 = np.concatenate([e.evaluate(zero_vals).reshape(-1) for e in eq])
            cols = []
            for i in range(n_free):
                unit = self._assignment_from_vector(np.eye(n_free)[i])
                cols.append(np.concatenate([e.evaluate(unit).reshape(-1) for e in eq]) - c0)
            c_mat = np.column_stack(cols)
            theta0, *_ = np.linalg.lstsq(c_mat, -c0, rcond=None)
            _, s, vh = np.linalg.svd(c_mat)
            rank = int(np.sum(s > 1e-12 * (s[0] if s.size else 1.0)))
            null_basis = vh[rank:].T
        else:
            theta0 = np.zeros(n_free)
            null_basis = np.eye(n_free)

        rng = np.random.default_rng(0)
        for c in self.constraints:
            if c.kind != "psd":
                continue
            gap = c.expr - c.expr.T
            for _ in range(3):
                theta = theta0 + null_basis @ rng.standard_normal(null_basis.shape[1])
                values = self._assignment_from_vector(theta)
                dev = np.max(np.abs(gap.evaluate(values)))
                scale = 1.0 + np.max(np.abs(c.expr.evaluate(values)))
                if dev > ASYMMETRY_TOL * scale:
                    raise ValueError(
                        f"PSD constraint {c.label or c.expr.describe()} is not "
                        f"symmetric on the feasible set (deviation {dev:.2e})")

    # -- debugging ----------------------------------------------------------

    def dump(self) -> str:
        """Plain-text problem listing: variable table + constraint trees."""
        lines = [f"problem {self.name}", "variables:"]
        for name, (kind, shape) in self.variables.items():
            lines.append(f"  {name}: {kind} {shape}")
        if self.objective is not None:
            sense, fn = self.objective
            body = " + ".join(f"trace(C{list(np.shape(c))}@{v})" for v, c in fn.coeffs.items())
            lines.append(f"objective: {sense} {body or fn.const}")
        else:
            lines.append("objective: feasibility")
        lines.append("constraints:")
        for c in self.constraints:
            op = ">= 0" if c.kind == "psd" else "== 0"
            tag = f" [{c.label}]" if c.label else ""
            marg = f" (margin {c.margin:.1e})" if c.margin else ""
            lines.append(f"  {c.expr.describe()} {op}{marg}{tag}")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# solving
# ---------------------------------------------------------------------------

# interior-point retry ladder: default settings occasionally stall just past
# the certification tolerance on benign instances; disabling equilibration
# and tightening the gap recovers them deterministically
_CLARABEL_ATTEMPTS = (
    {},
    {"equilibrate_enable": False},
    {"equilibrate_enable": False, "tol_gap_abs": 1e-11, "tol_gap_rel": 1e-11,
     "tol_feas": 1e-11, "max_iter": 400},
)


def solve(problem: SdpProblem, solver: str | None = None, solver_opts: dict | None = None,
          feas_tol: float = FEASIBILITY_TOL) -> SdpSolution:
    """Solve a problem and certify the returned point with numpy.

    Never raises on solver breakdown; such cases come back with status
    "numerical-failure" and a detail message.  Explicit solver_opts disable
    the built-in retry ladder.
    """
    import cvxpy as cp

    total = problem.scalar_unknowns()
    if total > MAX_SCALAR_UNKNOWNS:
        raise ValueError(f"{total} scalar unknowns exceeds the {MAX_SCALAR_UNKNOWNS} cap")
    problem.validate_symmetry()

    cvars: dict[str, object] = {}
    for name, (kind, shape) in problem.variables.items():
        if kind == "symmetric":
            cvars[name] = cp.Variable(shape, name=name, symmetric=True)
        elif kind == "matrix":
            cvars[name] = cp.Variable(shape, name=name)
        else:
            cvars[name] = cp.Variable(name=name, nonneg=shape[0])

    def compile_expr(expr: Expr):
        out = cp.Constant(expr.const)
        for t in expr.terms:
            v = cvars[t.var]
            if t.is_scalar_term:
                out = out + v * cp.Constant(t.coeff)
            else:
                body = v.T if t.transposed else v
                out = out + cp.Constant(t.left) @ body @ cp.Constant(t.right)
        return out

    constraints = []
    for c in problem.constraints:
        ce = compile_expr(c.expr)
        if c.kind == "psd":
            sym = (ce + ce.T) / 2
            shifted = sym - c.margin * np.eye(c.expr.shape[0]) if c.margin else sym
            constraints.append(shifted >> 0)
        else:
            constraints.append(ce == 0)

    if problem.objective is None:
        objective = cp.Minimize(0)
    else:
        sense, fn = problem.objective
        body = cp.Constant(fn.const)
        for name, coeff in fn.coeffs.items():
            v = cvars[name]
            if v.ndim == 0:
                body = body + float(np.asarray(coeff).reshape(-1)[0]) * v
            else:
                body = body + cp.trace(cp.Constant(coeff) @ v)
        objective = cp.Minimize(body) if sense == "min" else cp.Maximize(body)

    chosen = solver or DEFAULT_SOLVER
    if solver_opts is not None:
        attempts = (solver_opts,)
    elif chosen == "CLARABEL":
        attempts = _CLARABEL_ATTEMPTS
    else:
        attempts = ({},)

    last = SdpSolution(status="numerical-failure", detail="no solver attempt ran")
    for opts in attempts:
        # fresh problem per attempt: solver settings are cached on the object
        cproblem = cp.Problem(objective, constraints)
        try:
            import warnings

            with warnings.catch_warnings():
                # inaccurate solves are handled by certification + retries
                warnings.filterwarnings("ignore", message="Solution may be inaccurate")
                cproblem.solve(solver=chosen, **opts)
        except Exception as exc:  # solver breakdown is a status, not a crash
            last = SdpSolution(status="numerical-failure", detail=f"solver raised: {exc}")
            continue

        raw = cproblem.status
        if raw == "infeasible":
            return SdpSolution(status="infeasible", detail=raw)
        if raw in ("infeasible_inaccurate", "unbounded_inaccurate"):
            last = SdpSolution(status="infeasible" if "infeasible" in raw else "numerical-failure",
                               detail=raw)
            continue
        if raw == "unbounded":
            return SdpSolution(status="numerical-failure", detail=raw)
        if raw not in ("optimal", "optimal_inaccurate"):
            last = SdpSolution(status="numerical-failure", detail=f"solver status {raw}")
            continue

        values = {}
        missing = False
        for name, (kind, _) in problem.variables.items():
            v = cvars[name].value
            if v is None:
                last = SdpSolution(status="numerical-failure", detail=f"no value for {name}")
                missing = True
                break
            values[name] = float(v) if kind == "scalar" else np.atleast_2d(np.asarray(v))
            if kind == "symmetric":
                values[name] = (values[name] + values[name].T) / 2
        if missing:
            continue

        residuals = []
        for c in problem.constraints:
            val = c.expr.evaluate(values)
            if c.kind == "psd":
                sym = (val + val.T) / 2
                residuals.append(float(np.linalg.eigvalsh(sym)[0] - c.margin))
            else:
                residuals.append(-float(np.max(np.abs(val))))

        bad = [i for i, (r, c) in enumerate(zip(residuals, problem.constraints))
               if (c.kind == "psd" and r < -feas_tol) or (c.kind == "eq" and -r > EQUALITY_TOL)]
        if bad:
            last = SdpSolution(status="numerical-failure", values=values, residuals=residuals,
                               detail=f"certification failed on constraints {bad} "
                                      f"(solver said {raw})")
            continue

        status = "feasible" if problem.objective is None else "optimal"
        obj_val = None if problem.objective is None else problem.objective[1].evaluate(values)
        detail = "" if raw == "optimal" else raw
        return SdpSolution(status=status, values=values, objective_value=obj_val,
                           residuals=residuals, detail=detail)
    return last
