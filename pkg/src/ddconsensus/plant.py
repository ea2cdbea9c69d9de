"""Ground-truth plant simulation, open-loop data collection, and data checks.

The synthesis side never reads the plant matrices; they exist so the harness
can generate data and verify what the data-driven programs produce.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionMismatchError, HorizonTooShortError

log = logging.getLogger(__name__)

RANK_RTOL = 1e-8
PSD_TOL = 1e-9


@dataclass(frozen=True)
class Plant:
    """Discrete-time linear agent x(t+1) = A x(t) + B u(t)."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        b = np.atleast_2d(np.asarray(self.b, dtype=float))
        if a.shape[0] != a.shape[1]:
            raise DimensionMismatchError(f"state matrix must be square, got {a.shape}")
        if b.shape[0] != a.shape[0]:
            raise DimensionMismatchError(f"input matrix rows {b.shape[0]} != order {a.shape[0]}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def p(self) -> int:
        return self.b.shape[1]

    def step(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self.a @ x + self.b @ u


def is_controllable(plant: Plant, rtol: float = RANK_RTOL) -> bool:
    """Rank test on the controllability matrix [B, AB, ..., A^(n-1)B]."""
    blocks = [plant.b]
    for _ in range(plant.n - 1):
        blocks.append(plant.a @ blocks[-1])
    c = np.hstack(blocks)
    s = np.linalg.svd(c, compute_uv=False)
    return bool(np.sum(s > rtol * s[0]) == plant.n)


@dataclass(frozen=True)
class NoiseBound:
    """Quadratic prior on an unknown noise block D:

        N11 + N12 D' + D N21 + D N22 D'  >=  0

    with N11 positive definite and N22 negative definite.
    """

    n11: np.ndarray
    n12: np.ndarray
    n22: np.ndarray

    def __post_init__(self):
        n11 = np.atleast_2d(np.asarray(self.n11, dtype=float))
        n22 = np.atleast_2d(np.asarray(self.n22, dtype=float))
        n12 = np.asarray(self.n12, dtype=float).reshape(n11.shape[0], n22.shape[0])
        if not np.allclose(n11, n11.T):
            raise DimensionMismatchError("N11 must be symmetric")
        if not np.allclose(n22, n22.T):
            raise DimensionMismatchError("N22 must be symmetric")
        if np.linalg.eigvalsh(n11)[0] <= 0:
            raise DimensionMismatchError("N11 must be positive definite")
        if np.linalg.eigvalsh(n22)[-1] >= 0:
            raise DimensionMismatchError("N22 must be negative definite")
        object.__setattr__(self, "n11", n11)
        object.__setattr__(self, "n12", n12)
        object.__setattr__(self, "n22", n22)

    @property
    def n21(self) -> np.ndarray:
        return self.n12.T

    def stacked(self) -> np.ndarray:
        return np.block([[self.n11, self.n12], [self.n21, self.n22]])


@dataclass(frozen=True)
class DataRecord:
    """One agent's sampled trajectory: inputs U_-, states X, optional noise D.

    ``d`` is the true process noise used to generate the record.  It is
    carried only so harness-side checks can reconstruct consistent systems;
    synthesis code must not read it.
    """

    u_minus: np.ndarray
    x: np.ndarray
    d: np.ndarray | None = field(default=None)

    def __post_init__(self):
        u = np.atleast_2d(np.asarray(self.u_minus, dtype=float))
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        if x.shape[1] != u.shape[1] + 1:
            raise DimensionMismatchError(
                f"state samples {x.shape[1]} must be input samples {u.shape[1]} + 1")
        object.__setattr__(self, "u_minus", u)
        object.__setattr__(self, "x", x)
        if self.d is not None:
            d = np.atleast_2d(np.asarray(self.d, dtype=float))
            if d.shape != (x.shape[0], u.shape[1]):
                raise DimensionMismatchError(f"noise block shape {d.shape} mismatch")
            object.__setattr__(self, "d", d)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.u_minus.shape[0]

    @property
    def horizon(self) -> int:
        return self.u_minus.shape[1]

    @property
    def x_minus(self) -> np.ndarray:
        return self.x[:, :-1]

    @property
    def x_plus(self) -> np.ndarray:
        return self.x[:, 1:]

    def stacked(self) -> np.ndarray:
        """The (p+n) x T matrix [U_-; X_-] whose row rank gates synthesis."""
        return np.vstack([self.u_minus, self.x_minus])


def collect_data(plant: Plant, horizon: int, rng: np.random.Generator, *,
                 input_scale: float = 1.0, x0=None,
                 noise_bound: NoiseBound | None = None,
                 noise_fill: float = 0.8) -> DataRecord:
    """Run the plant open loop under i.i.d. uniform exciting inputs.

    With a ``noise_bound``, Gaussian process noise is drawn and, if it violates
    the quadratic prior, the whole block is rescaled to sit at ``noise_fill``
    of the admissible size.  All draws come from ``rng``, so a record is
    reproducible from its seed.
    """
    n, p = plant.n, plant.p
    if horizon < n + p:
        raise HorizonTooShortError(f"horizon {horizon} < n + p = {n + p}")
    x0 = rng.uniform(-1.0, 1.0, n) if x0 is None else np.asarray(x0, dtype=float)
    u = input_scale * rng.uniform(-1.0, 1.0, (p, horizon))

    d = None
    if noise_bound is not None:
        if noise_bound.n22.shape[0] != horizon:
            raise DimensionMismatchError(
                f"noise bound N22 is {noise_bound.n22.shape[0]}x..., horizon is {horizon}")
        d = _draw_bounded_noise(n, horizon, noise_bound, noise_fill, rng)

    x = np.empty((n, horizon + 1))
    x[:, 0] = x0
    for t in range(horizon):
        x[:, t + 1] = plant.step(x[:, t], u[:, t])
        if d is not None:
            x[:, t + 1] += d[:, t]
    return DataRecord(u_minus=u, x=x, d=d)


def _draw_bounded_noise(n, horizon, bound, fill, rng) -> np.ndarray:
    d = rng.standard_normal((n, horizon))
    if check_noise_bound(d, bound):
        return d
    # bisect for the largest admissible scale, then back off by `fill`
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if check_noise_bound(mid * d, bound):
            lo = mid
        else:
            hi = mid
    return fill * lo * d


def check_rank(rec: DataRecord, rtol: float = RANK_RTOL) -> bool:
    """True iff [U_-; X_-] has full row rank n + p (SVD with relative cutoff)."""
    w = rec.stacked()
    if w.shape[1] < w.shape[0]:
        return False
    s = np.linalg.svd(w, compute_uv=False)
    return bool(np.sum(s > rtol * s[0]) == w.shape[0])


def check_noise_bound(d, bound: NoiseBound, tol: float = PSD_TOL) -> bool:
    """Evaluate the quadratic noise prior at a realized noise block."""
    d = np.atleast_2d(np.asarray(d, dtype=float))
    if d.shape[0] != bound.n11.shape[0] or d.shape[1] != bound.n22.shape[0]:
        raise DimensionMismatchError(
            f"noise block {d.shape} does not match bound ({bound.n11.shape[0]}, {bound.n22.shape[0]})")
    form = bound.n11 + bound.n12 @ d.T + d @ bound.n21 + d @ bound.n22 @ d.T
    return bool(np.linalg.eigvalsh(form)[0] >= -tol)


# ---------------------------------------------------------------------------
# CSV import/export so externally measured records can feed synthesis
# ---------------------------------------------------------------------------

def _write_matrix(path: Path, name: str, m: np.ndarray) -> None:
    with open(path, "w") as fh:
        fh.write(f"# matrix {name} rows={m.shape[0]} cols={m.shape[1]}\n")
        for row in m:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def _read_matrix(path: Path) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline().strip()
        parts = dict(kv.split("=") for kv in header.replace("# matrix ", "").split()[1:])
        rows, cols = int(parts["rows"]), int(parts["cols"])
        data = [[float(v) for v in line.split(",")] for line in fh if line.strip()]
    m = np.array(data, dtype=float)
    if m.shape != (rows, cols):
        raise DimensionMismatchError(f"{path}: header says {(rows, cols)}, data is {m.shape}")
    return m


def export_data_record(rec: DataRecord, outdir, prefix: str = "") -> list[Path]:
    """Write one CSV per matrix (row-major, dimension header). Returns paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, m in (("u_minus", rec.u_minus), ("x", rec.x)):
        path = outdir / f"{prefix}{name}.csv"
        _write_matrix(path, name, m)
        written.append(path)
    if rec.d is not None:
        path = outdir / f"{prefix}d.csv"
        _write_matrix(path, "d", rec.d)
        written.append(path)
    return written


def import_data_record(indir, prefix: str = "") -> DataRecord:
    indir = Path(indir)
    u = _read_matrix(indir / f"{prefix}u_minus.csv")
    x = _read_matrix(indir / f"{prefix}x.csv")
    d_path = indir / f"{prefix}d.csv"
    d = _read_matrix(d_path) if d_path.exists() else None
    return DataRecord(u_minus=u, x=x, d=d)
