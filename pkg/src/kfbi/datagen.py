"""Training-data generation from manufactured solutions.

A catalog of closed-form solution families supplies exact u, its
gradient and Laplacian.  For each draw, the standard solver runs on the
derived boundary data and source term; the converged density together
with the modified boundary data forms one training record.  Records are
stored in the "KFBID1" container (ASCII header + float64 little-endian
payload) shared with the external trainer.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass

import numpy as np

from kfbi.bie import (
    DIRICHLET,
    PotentialCalculator,
    ProblemSpec,
    assemble_solution,
    modified_boundary_data,
    richardson_solve,
    solution_errors,
)
from kfbi.geometry import build_curve
from kfbi.grid import GridContext

log = logging.getLogger(__name__)

MAGIC = "KFBID1"


class DatasetError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Solution catalog
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CatalogEntry:
    """One closed-form solution with analytic derivatives."""

    family: str
    coeffs: tuple[float, ...]

    def u(self, x, y):
        return _FAMILIES[self.family].u(self.coeffs, x, y)

    def grad(self, x, y):
        return _FAMILIES[self.family].grad(self.coeffs, x, y)

    def lap(self, x, y):
        return _FAMILIES[self.family].lap(self.coeffs, x, y)

    def source(self, kappa: float):
        """f = (Delta - kappa) u as a callable, or None when it vanishes."""
        if kappa == 0.0 and _FAMILIES[self.family].harmonic:
            return None
        return lambda x, y: self.lap(x, y) - kappa * self.u(x, y)


@dataclass(frozen=True)
class _Family:
    n_coeffs: int
    harmonic: bool
    u: callable
    grad: callable
    lap: callable
    sample: callable  # (rng, lo, hi) -> coeffs


def _zero_like(x):
    return np.zeros_like(np.asarray(x, dtype=float))


_FAMILIES: dict[str, _Family] = {}


def _register(name, **kw):
    _FAMILIES[name] = _Family(**kw)


def _uniform_sample(n):
    def sample(rng, lo, hi):
        return tuple(rng.uniform(lo, hi, size=n))
    return sample


_register(
    "harmonic-exp-cos",
    n_coeffs=1,
    harmonic=True,
    u=lambda c, x, y: np.exp(c[0] * x) * np.cos(c[0] * y),
    grad=lambda c, x, y: (
        c[0] * np.exp(c[0] * x) * np.cos(c[0] * y),
        -c[0] * np.exp(c[0] * x) * np.sin(c[0] * y),
    ),
    lap=lambda c, x, y: _zero_like(x),
    sample=_uniform_sample(1),
)

_register(
    "harmonic-exp-sin",
    n_coeffs=1,
    harmonic=True,
    u=lambda c, x, y: np.exp(c[0] * y) * np.sin(c[0] * x),
    grad=lambda c, x, y: (
        c[0] * np.exp(c[0] * y) * np.cos(c[0] * x),
        c[0] * np.exp(c[0] * y) * np.sin(c[0] * x),
    ),
    lap=lambda c, x, y: _zero_like(x),
    sample=_uniform_sample(1),
)

_register(
    "harmonic-sin-sinh",
    n_coeffs=1,
    harmonic=True,
    u=lambda c, x, y: np.sin(c[0] * x) * np.sinh(c[0] * y),
    grad=lambda c, x, y: (
        c[0] * np.cos(c[0] * x) * np.sinh(c[0] * y),
        c[0] * np.sin(c[0] * x) * np.cosh(c[0] * y),
    ),
    lap=lambda c, x, y: _zero_like(x),
    sample=_uniform_sample(1),
)

_register(
    "harmonic-cosh-cos",
    n_coeffs=1,
    harmonic=True,
    u=lambda c, x, y: np.cosh(c[0] * x) * np.cos(c[0] * y),
    grad=lambda c, x, y: (
        c[0] * np.sinh(c[0] * x) * np.cos(c[0] * y),
        -c[0] * np.cosh(c[0] * x) * np.sin(c[0] * y),
    ),
    lap=lambda c, x, y: _zero_like(x),
    sample=_uniform_sample(1),
)


def _zpow_re(c, x, y):
    n, x0, y0 = int(c[0]), c[1], c[2]
    return ((x - x0) + 1j * (y - y0)) ** n


# real part of (z - z0)^n: harmonic with n oscillations along a loop,
# the main source of high-frequency content in the datasets
_register(
    "harmonic-poly",
    n_coeffs=3,
    harmonic=True,
    u=lambda c, x, y: _zpow_re(c, x, y).real,
    grad=lambda c, x, y: (
        (int(c[0]) * ((x - c[1]) + 1j * (y - c[2])) ** (int(c[0]) - 1)).real,
        -(int(c[0]) * ((x - c[1]) + 1j * (y - c[2])) ** (int(c[0]) - 1)).imag,
    ),
    lap=lambda c, x, y: _zero_like(x),
    sample=lambda rng, lo, hi: (
        float(rng.integers(1, 13)), rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3)
    ),
)

_register(
    "exp",
    n_coeffs=2,
    harmonic=False,
    u=lambda c, x, y: np.exp(c[0] * x + c[1] * y),
    grad=lambda c, x, y: (
        c[0] * np.exp(c[0] * x + c[1] * y),
        c[1] * np.exp(c[0] * x + c[1] * y),
    ),
    lap=lambda c, x, y: (c[0] ** 2 + c[1] ** 2) * np.exp(c[0] * x + c[1] * y),
    sample=_uniform_sample(2),
)

_register(
    "separable",
    n_coeffs=2,
    harmonic=False,
    u=lambda c, x, y: np.sin(c[0] * x) * np.cos(c[1] * y),
    grad=lambda c, x, y: (
        c[0] * np.cos(c[0] * x) * np.cos(c[1] * y),
        -c[1] * np.sin(c[0] * x) * np.sin(c[1] * y),
    ),
    lap=lambda c, x, y: -(c[0] ** 2 + c[1] ** 2) * np.sin(c[0] * x) * np.cos(c[1] * y),
    sample=_uniform_sample(2),
)


def _poly_pq(c):
    return int(c[0]), int(c[1]), c[2]


def _poly_u(c, x, y):
    p, q, a = _poly_pq(c)
    return a * x**p * y**q


_register(
    "polynomial",
    n_coeffs=3,
    harmonic=False,
    u=_poly_u,
    grad=lambda c, x, y: (
        _poly_pq(c)[2] * _poly_pq(c)[0] * x ** max(_poly_pq(c)[0] - 1, 0) * y ** _poly_pq(c)[1],
        _poly_pq(c)[2] * _poly_pq(c)[1] * x ** _poly_pq(c)[0] * y ** max(_poly_pq(c)[1] - 1, 0),
    ),
    lap=lambda c, x, y: (
        _poly_pq(c)[2] * _poly_pq(c)[0] * (_poly_pq(c)[0] - 1)
        * x ** max(_poly_pq(c)[0] - 2, 0) * y ** _poly_pq(c)[1]
        + _poly_pq(c)[2] * _poly_pq(c)[1] * (_poly_pq(c)[1] - 1)
        * x ** _poly_pq(c)[0] * y ** max(_poly_pq(c)[1] - 2, 0)
    ),
    sample=lambda rng, lo, hi: (
        float(rng.integers(0, 4)), float(rng.integers(0, 4)), rng.uniform(-1.0, 1.0)
    ),
)

@dataclass(frozen=True)
class SumSolution:
    """Sum of catalog entries; covers composite manufactured solutions."""

    terms: tuple[CatalogEntry, ...]

    def u(self, x, y):
        return sum(t.u(x, y) for t in self.terms)

    def grad(self, x, y):
        gs = [t.grad(x, y) for t in self.terms]
        return sum(g[0] for g in gs), sum(g[1] for g in gs)

    def lap(self, x, y):
        return sum(t.lap(x, y) for t in self.terms)

    def source(self, kappa: float):
        if kappa == 0.0 and all(_FAMILIES[t.family].harmonic for t in self.terms):
            return None
        return lambda x, y: self.lap(x, y) - kappa * self.u(x, y)


HARMONIC_FAMILIES = tuple(n for n, f in _FAMILIES.items() if f.harmonic)
SMOOTH_FAMILIES = tuple(n for n, f in _FAMILIES.items() if not f.harmonic)


def catalog_families() -> tuple[str, ...]:
    return tuple(_FAMILIES)


def sample_entry(rng, families, coeff_lo=0.5, coeff_hi=3.0) -> CatalogEntry:
    family = families[int(rng.integers(len(families)))]
    coeffs = _FAMILIES[family].sample(rng, coeff_lo, coeff_hi)
    return CatalogEntry(family=family, coeffs=tuple(float(c) for c in coeffs))


def verify_entry(entry: CatalogEntry, rng=None, tol=1e-6) -> None:
    """Spot-check grad/lap against finite differences at random points."""
    rng = rng or np.random.default_rng(0)
    pts = rng.uniform(-0.9, 0.9, size=(10, 2))
    h = 1e-5
    x, y = pts[:, 0], pts[:, 1]
    scale = max(np.abs(entry.u(x, y)).max(), 1.0)
    gx, gy = entry.grad(x, y)
    fdx = (entry.u(x + h, y) - entry.u(x - h, y)) / (2 * h)
    fdy = (entry.u(x, y + h) - entry.u(x, y - h)) / (2 * h)
    fdl = (
        entry.u(x + h, y) + entry.u(x - h, y) + entry.u(x, y + h) + entry.u(x, y - h)
        - 4 * entry.u(x, y)
    ) / h**2
    if (
        np.abs(gx - fdx).max() > tol * scale * 1e2
        or np.abs(gy - fdy).max() > tol * scale * 1e2
        or np.abs(entry.lap(x, y) - fdl).max() > 1e-4 * scale * 1e2
    ):
        raise DatasetError(f"catalog entry {entry} fails derivative spot check")


# ---------------------------------------------------------------------------
# Record generation
# ---------------------------------------------------------------------------


@dataclass
class DatasetRecord:
    params: np.ndarray
    g_mod: np.ndarray  # modified boundary data at the M nodes
    phi: np.ndarray  # converged density at the M nodes
    provenance: str = ""


@dataclass
class GenerationStats:
    requested: int = 0
    accepted: int = 0
    rejected_error: int = 0
    rejected_diverged: int = 0
    lines: list[str] = dataclasses.field(default_factory=list)


def generate_record(
    spec: ProblemSpec,
    entry: CatalogEntry,
    calc: PotentialCalculator | None = None,
    tol: float = 1e-8,
    tol_mode: str = "relative",
    error_budget: float | None = None,
) -> tuple[DatasetRecord | None, str]:
    """Solve one manufactured problem and package the resulting pair.

    Returns (record, log line); record is None when the run failed the
    convergence or accuracy screen.  ``error_budget`` defaults to
    10 * h^2, a loose multiple of the expected discretization error.
    """
    calc = calc or PotentialCalculator(spec)
    if spec.bc_kind != DIRICHLET:
        raise DatasetError("record generation supports Dirichlet problems only")
    run_spec = dataclasses.replace(spec, g=entry.u, f=entry.source(spec.kappa))
    run_calc = calc.with_spec(run_spec)
    g_mod = modified_boundary_data(run_calc)
    phi, report = richardson_solve(run_spec, calc=run_calc, g_tilde=g_mod, tol=tol, tol_mode=tol_mode)
    tag = f"{entry.family}{entry.coeffs}"
    if not report.converged:
        return None, f"reject diverged {tag}"
    field, inside = assemble_solution(run_spec, phi, calc=run_calc)
    linf, _ = solution_errors(run_spec, field, inside, entry.u)
    budget = error_budget if error_budget is not None else 10.0 * spec.grid.h**2
    scale = max(np.abs(field[inside]).max(), 1.0)
    if linf > budget * scale:
        return None, f"reject error {linf:.3e} > {budget * scale:.3e} {tag}"
    scale_g = np.abs(g_mod).max()
    if scale_g > 0:
        g_mod = g_mod / scale_g
        phi = phi / scale_g
    rec = DatasetRecord(params=np.empty(0), g_mod=g_mod, phi=phi, provenance=tag)
    return rec, f"accept iters={report.iterations} err={linf:.3e} {tag}"


# ---------------------------------------------------------------------------
# Dataset container
# ---------------------------------------------------------------------------


@dataclass
class Dataset:
    param_names: tuple[str, ...]
    params: np.ndarray  # (n, n_params)
    g_mod: np.ndarray  # (n, M)
    phi: np.ndarray  # (n, M)

    @property
    def count(self) -> int:
        return self.g_mod.shape[0]

    @property
    def m(self) -> int:
        return self.g_mod.shape[1]


def write_dataset(path, dataset: Dataset) -> None:
    n, m = dataset.g_mod.shape
    n_params = dataset.params.shape[1] if dataset.params.size else 0
    lines = [
        MAGIC,
        f"m {m}",
        f"n_params {n_params}",
        "param_names " + " ".join(dataset.param_names),
        f"count {n}",
        "end",
    ]
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("ascii"))
        for i in range(n):
            if n_params:
                fh.write(np.ascontiguousarray(dataset.params[i], dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(dataset.g_mod[i], dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(dataset.phi[i], dtype="<f8").tobytes())


def read_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        blob = fh.read()
    pos = blob.find(b"\n")
    if pos < 0 or blob[:pos].decode("ascii", "replace") != MAGIC:
        raise DatasetError(f"{path}: not a {MAGIC} dataset file")
    pos += 1
    fields = {}
    while True:
        nxt = blob.find(b"\n", pos)
        if nxt < 0:
            raise DatasetError(f"{path}: truncated header")
        line = blob[pos:nxt].decode("ascii")
        pos = nxt + 1
        if line == "end":
            break
        parts = line.split()
        fields[parts[0]] = parts[1:]
    m = int(fields["m"][0])
    n_params = int(fields["n_params"][0])
    count = int(fields["count"][0])
    names = tuple(fields.get("param_names", []))
    rec_len = (n_params + 2 * m) * 8
    if len(blob) - pos != count * rec_len:
        raise DatasetError(f"{path}: payload size mismatch")
    raw = np.frombuffer(blob[pos:], dtype="<f8").reshape(count, n_params + 2 * m)
    return Dataset(
        param_names=names,
        params=raw[:, :n_params].copy(),
        g_mod=raw[:, n_params:n_params + m].copy(),
        phi=raw[:, n_params + m:].copy(),
    )


def export_csv(path, dataset: Dataset) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        hdr = list(dataset.param_names)
        hdr += [f"g{i}" for i in range(dataset.m)] + [f"phi{i}" for i in range(dataset.m)]
        wr.writerow(hdr)
        for i in range(dataset.count):
            row = list(dataset.params[i]) if dataset.params.size else []
            wr.writerow(row + list(dataset.g_mod[i]) + list(dataset.phi[i]))


def split_dataset(dataset: Dataset, fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded random split into (train, test) with train share ``fraction``."""
    if not 0 < fraction < 1:
        raise DatasetError("split fraction must lie strictly between 0 and 1")
    n = dataset.count
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(round(n * fraction))
    tr, te = order[:n_train], order[n_train:]

    def take(idx):
        return Dataset(
            param_names=dataset.param_names,
            params=dataset.params[idx] if dataset.params.size else dataset.params,
            g_mod=dataset.g_mod[idx],
            phi=dataset.phi[idx],
        )

    return take(tr), take(te)


# ---------------------------------------------------------------------------
# Dataset generation driver
# ---------------------------------------------------------------------------


def _star_descriptor(sm: float, sc: float) -> dict:
    return {"kind": "star", "arms": int(sm), "amplitude": float(sc)}


def generate_dataset(config: dict, seed: int = 0) -> tuple[Dataset, GenerationStats]:
    """Generate records per config, deterministically under a fixed seed.

    Config keys: ``box`` [x_lo, x_hi, y_lo, y_hi]; ``grid`` cells per
    direction; ``m`` boundary nodes (0 = grid default); ``kappa``;
    ``count`` records (fixed-domain case) or ``pairs_per_point`` with
    ``param_points`` (parameterized case); ``curve`` descriptor dict for
    a fixed domain or ``domain_family`` = "star" with param vectors
    (arms, amplitude); ``families`` catalog subset; ``coeff_range``.
    """
    rng = np.random.default_rng(seed)
    box = config["box"]
    n_cells = int(config["grid"])
    grid = GridContext(box[0], box[1], box[2], box[3], n_cells, n_cells)
    kappa = float(config.get("kappa", 0.0))
    m = int(config.get("m", 0))
    families = tuple(config.get("families") or catalog_families())
    lo, hi = config.get("coeff_range", (0.5, 3.0))
    tol = float(config.get("tol", 1e-8))
    tol_mode = config.get("tol_mode", "relative")

    if "param_points" in config:
        family_kind = config.get("domain_family", "star")
        if family_kind != "star":
            raise DatasetError(f"unknown domain family {family_kind!r}")
        points = [np.asarray(p, dtype=float) for p in config["param_points"]]
        per = int(config.get("pairs_per_point", 1))
        plan = [(p, per) for p in points]
        names = tuple(config.get("param_names", ("arms", "amplitude")))
    else:
        plan = [(np.empty(0), int(config["count"]))]
        names = ()

    stats = GenerationStats()
    all_params, all_g, all_phi = [], [], []
    for pvec, n_records in plan:
        if pvec.size:
            curve = build_curve(_star_descriptor(pvec[0], pvec[1]))
        else:
            curve = build_curve(dict(config["curve"]))
        spec = ProblemSpec(curve, grid, kappa, DIRICHLET, g=lambda x, y: 0 * x, num_nodes=m)
        calc = PotentialCalculator(spec)
        got = 0
        attempts = 0
        while got < n_records and attempts < 3 * n_records + 10:
            attempts += 1
            stats.requested += 1
            entry = sample_entry(rng, families, lo, hi)
            rec, line = generate_record(spec, entry, calc=calc, tol=tol, tol_mode=tol_mode)
            stats.lines.append(line)
            if rec is None:
                if "diverged" in line:
                    stats.rejected_diverged += 1
                else:
                    stats.rejected_error += 1
                continue
            stats.accepted += 1
            got += 1
            all_params.append(pvec)
            all_g.append(rec.g_mod)
            all_phi.append(rec.phi)
        if got < n_records:
            raise DatasetError(
                f"could not generate {n_records} records at params {pvec}: "
                f"only {got} accepted"
            )
    params = np.array(all_params) if names else np.empty((len(all_g), 0))
    dataset = Dataset(
        param_names=names,
        params=params,
        g_mod=np.array(all_g),
        phi=np.array(all_phi),
    )
    return dataset, stats
