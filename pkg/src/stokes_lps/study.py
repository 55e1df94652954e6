"""Convergence studies over a hierarchy of unit-square meshes.

A study assembles, solves and (optionally) postprocesses one level at a
time, then writes a CSV table, an SVG log-log error plot and a VTK file of
the first eigenfunction on the finest level.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .assembly import ALPHA_SCALINGS, BlockSystem, assemble_blocks, form_eval
from .eigensolver import EigenPair, solve_smallest
from .errors import InvalidArgumentError, StokesLPSError, StudyAbortedError
from .mesh import mesh_size, unit_square_mesh, write_vtk
from .postprocess import postprocess
from .spaces import ElementKind, ProjectionKind

REFERENCE_LAMBDA = 52.3446911  # first eigenvalue of the unit-square Stokes problem
ORDER_FLOOR = 1e-13
UNDEFINED = "undefined"

ELEMENT_PAIRS = {
    "P1-Zero": (ElementKind.P1, ProjectionKind.zero()),
    "P2Bubble-PDisc1": (ElementKind.P2_BUBBLE, ProjectionKind.pdisc(1)),
}
POSTPROCESS_MODES = ("none", "two-grid", "two-space")


@dataclass(frozen=True)
class StudyConfig:
    element: str = "P1-Zero"
    alpha0: float = 0.1
    alpha_scaling: str = "h2"
    levels: tuple = (8, 16, 32, 64)
    count: int = 1
    tol: float = 1e-10
    max_iterations: int = 500
    postprocess: str = "none"
    two_grid_levels: int | None = None  # None: auto, mesh size about h**2
    two_grid_max_levels: int = 4
    reference: float | str = "default"  # "default", "richardson" or a number
    output_dir: str = "study_output"
    write_vtk: bool = True

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(self.levels))
        self.validate()

    def validate(self):
        if self.element not in ELEMENT_PAIRS:
            raise InvalidArgumentError(f"element must be one of {sorted(ELEMENT_PAIRS)}, got {self.element!r}")
        if not self.levels:
            raise InvalidArgumentError("levels must not be empty")
        if any(not isinstance(n, (int, np.integer)) or isinstance(n, bool) or n < 1 for n in self.levels):
            raise InvalidArgumentError(f"levels must be positive integers, got {self.levels}")
        if any(b <= a for a, b in zip(self.levels, self.levels[1:])):
            raise InvalidArgumentError(f"levels must be strictly increasing, got {self.levels}")
        if not (self.alpha0 > 0 and math.isfinite(self.alpha0)):
            raise InvalidArgumentError(f"alpha0 must be positive, got {self.alpha0}")
        if self.alpha_scaling not in ALPHA_SCALINGS:
            raise InvalidArgumentError(f"alpha_scaling must be one of {ALPHA_SCALINGS}, got {self.alpha_scaling!r}")
        if self.count < 1:
            raise InvalidArgumentError(f"count must be at least 1, got {self.count}")
        if not self.tol > 0:
            raise InvalidArgumentError(f"tol must be positive, got {self.tol}")
        if self.max_iterations < 1:
            raise InvalidArgumentError(f"max_iterations must be at least 1, got {self.max_iterations}")
        if self.postprocess not in POSTPROCESS_MODES:
            raise InvalidArgumentError(f"postprocess must be one of {POSTPROCESS_MODES}, got {self.postprocess!r}")
        if self.postprocess == "two-space" and self.element != "P1-Zero":
            raise InvalidArgumentError("two-space postprocessing needs element P1-Zero")
        if self.two_grid_levels is not None and self.two_grid_levels < 1:
            raise InvalidArgumentError(f"two_grid_levels must be at least 1, got {self.two_grid_levels}")
        if self.two_grid_max_levels < 1:
            raise InvalidArgumentError(f"two_grid_max_levels must be at least 1, got {self.two_grid_max_levels}")
        if isinstance(self.reference, str):
            if self.reference not in ("default", "richardson"):
                raise InvalidArgumentError(f"reference must be a number, 'default' or 'richardson', got {self.reference!r}")
            if self.reference == "richardson" and len(self.levels) < 2:
                raise InvalidArgumentError("Richardson reference needs at least two levels")
        elif not math.isfinite(float(self.reference)):
            raise InvalidArgumentError(f"reference must be finite, got {self.reference}")

    @property
    def pair(self):
        return ELEMENT_PAIRS[self.element]


@dataclass
class StudyRow:
    n: int
    h: float
    n_velocity_dofs: int
    n_pressure_dofs: int
    lambda_h: float = math.nan
    error_lambda_h: float = math.nan
    lambda_tilde: float = math.nan
    error_lambda_tilde: float = math.nan
    stabilization_pp: float = math.nan
    eig_residual: float = math.nan
    wall_time: float = math.nan
    status: str = "ok"
    eigenvalues: tuple = ()


NUMERIC_COLUMNS = ("n", "h", "n_velocity_dofs", "n_pressure_dofs", "lambda_h", "error_lambda_h",
                   "lambda_tilde", "error_lambda_tilde", "stabilization_pp", "eig_residual", "wall_time")
ORDER_COLUMNS = ("order_lambda_h", "order_lambda_tilde")


@dataclass
class ConvergenceTable:
    rows: list = field(default_factory=list)
    reference: float = math.nan
    reference_kind: str = "default"
    # finest-level solution, kept for VTK output
    finest_system: BlockSystem | None = None
    finest_pair: EigenPair | None = None

    def column(self, name) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def orders(self) -> dict:
        return observed_orders(self)

    def __len__(self):
        return len(self.rows)


def _order_list(h, e):
    out = []
    for i in range(len(h) - 1):
        e0, e1 = e[i], e[i + 1]
        if not (e0 > ORDER_FLOOR and e1 > ORDER_FLOOR) or not (np.isfinite(e0) and np.isfinite(e1)):
            out.append(None)
        else:
            out.append(math.log(e0 / e1) / math.log(h[i] / h[i + 1]))
    return out


def observed_orders(table) -> dict:
    """Observed rates p_i = ln(e_i/e_{i+1}) / ln(h_i/h_{i+1}) per error column.

    Accepts a ConvergenceTable or a mapping with keys ``h`` and error columns.
    Entries with an error at or below 1e-13 (or missing) are ``None``.
    """
    if isinstance(table, ConvergenceTable):
        h = table.column("h")
        cols = {"lambda_h": table.column("error_lambda_h"), "lambda_tilde": table.column("error_lambda_tilde")}
    else:
        h = np.asarray(table["h"], dtype=float)
        cols = {k: np.asarray(v, dtype=float) for k, v in table.items() if k != "h"}
    if len(h) < 2:
        raise InvalidArgumentError(f"observed orders need at least two rows, got {len(h)}")
    return {k: _order_list(h, e) for k, e in cols.items()}


def richardson_reference(h, lam, order: float = 2.0) -> float:
    """Extrapolate the last two eigenvalues assuming error ~ h**order."""
    if len(lam) < 2:
        raise InvalidArgumentError("Richardson extrapolation needs two levels")
    ratio = (h[-2] / h[-1]) ** order
    return float(lam[-1] + (lam[-1] - lam[-2]) / (ratio - 1.0))


def _solve_level(cfg: StudyConfig, n: int, row: StudyRow, table: ConvergenceTable):
    vel, proj = cfg.pair
    mesh = unit_square_mesh(n)
    sys = assemble_blocks(mesh, vel, proj=proj, alpha0=cfg.alpha0, alpha_scaling=cfg.alpha_scaling)
    row.n_velocity_dofs, row.n_pressure_dofs = sys.n_u, sys.n_p
    pairs = solve_smallest(sys, count=cfg.count, tol=cfg.tol, max_iterations=cfg.max_iterations)
    first = pairs[0]
    row.lambda_h = first.lam
    row.eigenvalues = tuple(p.lam for p in pairs)
    row.eig_residual = max(p.residual for p in pairs)
    row.stabilization_pp = form_eval(sys, "S", first.p, first.p)
    if cfg.postprocess != "none":
        pp = postprocess(first, sys, cfg.postprocess, levels=cfg.two_grid_levels,
                         max_levels=cfg.two_grid_max_levels)
        row.lambda_tilde = pp.lambda_tilde
    table.finest_system, table.finest_pair = sys, first


def _fill_errors(table: ConvergenceTable, cfg: StudyConfig):
    ok = [r for r in table.rows if r.status == "ok"]
    if cfg.reference == "default":
        ref = REFERENCE_LAMBDA
    elif cfg.reference == "richardson":
        ref = richardson_reference([r.h for r in ok], [r.lambda_h for r in ok]) if len(ok) >= 2 else math.nan
    else:
        ref = float(cfg.reference)
    table.reference, table.reference_kind = ref, str(cfg.reference)
    for r in table.rows:
        r.error_lambda_h = abs(r.lambda_h - ref)
        r.error_lambda_tilde = abs(r.lambda_tilde - ref)


def run_study(cfg: StudyConfig, flush_on_error: bool = True) -> ConvergenceTable:
    """Run every level of ``cfg`` in order and return the filled table.

    On any library error the failing row is recorded with its error category,
    the partial table is written to the output directory, and
    StudyAbortedError is raised.
    """
    cfg.validate()
    table = ConvergenceTable()
    for n in cfg.levels:
        row = StudyRow(n=int(n), h=math.sqrt(2.0) / n, n_velocity_dofs=0, n_pressure_dofs=0)
        table.rows.append(row)
        t0 = time.perf_counter()
        try:
            _solve_level(cfg, n, row, table)
        except StokesLPSError as exc:
            row.wall_time = time.perf_counter() - t0
            row.status = f"error:{exc.category}"
            _fill_errors(table, cfg)
            if flush_on_error:
                try:
                    export_outputs(table, cfg)
                except OSError:
                    pass
            raise StudyAbortedError(f"study aborted at n={n}: {exc}", table, exc) from exc
        row.wall_time = time.perf_counter() - t0
    _fill_errors(table, cfg)
    return table


def _fmt(v) -> str:
    if v is None:
        return UNDEFINED
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.16e}"


def table_to_csv(table: ConvergenceTable, count: int = 1) -> str:
    """CSV text: fixed header, one line per level, 17 significant digits."""
    extra = [f"lambda_h_{k}" for k in range(2, count + 1)]
    header = list(NUMERIC_COLUMNS) + list(ORDER_COLUMNS) + extra + ["status"]
    if len(table.rows) >= 2:
        orders = observed_orders(table)
    else:
        orders = {"lambda_h": [], "lambda_tilde": []}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for i, r in enumerate(table.rows):
        vals = [_fmt(getattr(r, c)) for c in NUMERIC_COLUMNS]
        for key in ("lambda_h", "lambda_tilde"):
            vals.append(_fmt(orders[key][i - 1]) if i > 0 else UNDEFINED)
        for k in range(2, count + 1):
            vals.append(_fmt(r.eigenvalues[k - 1]) if len(r.eigenvalues) >= k else _fmt(math.nan))
        vals.append(r.status)
        w.writerow(vals)
    return buf.getvalue()


def read_csv(path) -> list[dict]:
    """Parse a study CSV back into dicts of floats (``None`` for undefined orders)."""
    out = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            out.append({k: (v if k == "status" else (None if v == UNDEFINED else float(v)))
                        for k, v in rec.items()})
    return out


def _svg_plot(table: ConvergenceTable) -> str:
    width, height, pad = 640, 480, 60
    h = table.column("h")
    series = [("error_lambda_h", "|lambda_h - ref|", "#1f77b4"),
              ("error_lambda_tilde", "|lambda_tilde - ref|", "#d62728")]
    data = []
    for col, label, color in series:
        e = table.column(col)
        keep = np.isfinite(e) & (e > 0) & np.isfinite(h)
        if keep.any():
            data.append((label, color, h[keep], e[keep]))
    allh = np.concatenate([d[2] for d in data]) if data else np.array([0.1, 1.0])
    alle = np.concatenate([d[3] for d in data]) if data else np.array([0.1, 1.0])
    lx0, lx1 = math.log10(allh.min()) - 0.1, math.log10(allh.max()) + 0.1
    ly0, ly1 = math.log10(alle.min()) - 0.5, math.log10(alle.max()) + 0.5
    if lx1 - lx0 < 1e-9:
        lx0, lx1 = lx0 - 0.5, lx1 + 0.5

    def px(x, y):
        sx = pad + (math.log10(x) - lx0) / (lx1 - lx0) * (width - 2 * pad)
        sy = height - pad - (math.log10(y) - ly0) / (ly1 - ly0) * (height - 2 * pad)
        return f"{sx:.2f},{sy:.2f}"

    out = ['<?xml version="1.0" encoding="UTF-8"?>',
           f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
           f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" '
           'fill="none" stroke="black"/>',
           f'<text x="{width / 2}" y="{height - 15}" text-anchor="middle" font-size="14">h</text>',
           f'<text x="15" y="{height / 2}" font-size="14" transform="rotate(-90 15 {height / 2})" '
           'text-anchor="middle">eigenvalue error</text>']
    # slope guides through the first point of the first series
    if data:
        h0, e0 = data[0][2][0], data[0][3][0]
        h1 = allh.min()
        for slope, dash in ((2, "6,4"), (4, "2,3")):
            e1 = e0 * (h1 / h0) ** slope
            if e1 > 0 and math.log10(e1) > ly0:
                out.append(f'<path d="M {px(h0, e0)} L {px(h1, e1)}" stroke="gray" fill="none" '
                           f'stroke-dasharray="{dash}"/>')
                out.append(f'<text x="{px(h1, e1).split(",")[0]}" y="{px(h1, e1).split(",")[1]}" '
                           f'font-size="11" fill="gray">slope {slope}</text>')
    for k, (label, color, hx, ey) in enumerate(data):
        pts = " ".join(px(a, b) for a, b in zip(hx, ey))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{pad + 10}" y="{pad + 20 + 18 * k}" font-size="12" fill="{color}">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def export_outputs(table: ConvergenceTable, cfg: StudyConfig) -> dict:
    """Write study.csv, errors.svg and (if enabled) solution.vtk; return their paths."""
    out = Path(cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    paths = {}
    for name, text in (("csv", table_to_csv(table, cfg.count)), ("svg", _svg_plot(table))):
        path = out / ("study.csv" if name == "csv" else "errors.svg")
        try:
            path.write_text(text)
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc}") from exc
        paths[name] = path
    if cfg.write_vtk and table.finest_pair is not None:
        sys, pair = table.finest_system, table.finest_pair
        nv = sys.mesh.n_vertices
        # vertex coefficients are point values for both elements
        uc = pair.u.component_coefficients()[:, :nv].T
        pc = pair.p.coefficients[:nv]
        paths["vtk"] = write_vtk(sys.mesh, out / "solution.vtk", {"velocity": uc, "pressure": pc},
                                 title=f"first eigenfunction n={table.rows[-1].n}")
    return paths


# ---- flat key = value configuration files ----

_INT_KEYS = {"count", "max_iterations", "two_grid_max_levels"}
_FLOAT_KEYS = {"alpha0", "tol"}


def _parse_value(key, raw):
    raw = raw.strip()
    if key == "levels":
        try:
            return tuple(int(t) for t in raw.replace(",", " ").split())
        except ValueError as exc:
            raise InvalidArgumentError(f"levels must be integers, got {raw!r}") from exc
    if key in _INT_KEYS:
        return int(raw)
    if key in _FLOAT_KEYS:
        return float(raw)
    if key == "two_grid_levels":
        return None if raw.lower() == "auto" else int(raw)
    if key == "reference":
        return raw if raw in ("default", "richardson") else float(raw)
    if key == "write_vtk":
        low = raw.lower()
        if low not in ("true", "false", "yes", "no", "1", "0"):
            raise InvalidArgumentError(f"write_vtk must be a boolean, got {raw!r}")
        return low in ("true", "yes", "1")
    return raw


CONFIG_KEYS = tuple(f.name for f in fields(StudyConfig))


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment; blank lines ignored."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidArgumentError(f"config line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (t.strip() for t in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise InvalidArgumentError(f"config line {lineno}: unknown key {key!r}")
        if key in out:
            raise InvalidArgumentError(f"config line {lineno}: duplicate key {key!r}")
        try:
            out[key] = _parse_value(key, raw)
        except ValueError as exc:
            if isinstance(exc, InvalidArgumentError):
                raise
            raise InvalidArgumentError(f"config line {lineno}: bad value for {key}: {raw!r}") from exc
    return out


def load_config(path=None, **overrides) -> StudyConfig:
    """Build a StudyConfig from an optional file, then apply non-None overrides."""
    values = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise InvalidArgumentError(f"cannot read config {path}: {exc}") from exc
        values.update(parse_config_text(text))
    values.update({k: v for k, v in overrides.items() if v is not None})
    return StudyConfig(**values)


def with_overrides(cfg: StudyConfig, **kw) -> StudyConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
