"""Convergence sweeps over ``(eps, N)`` and EoC tables.

A sweep writes, per ``(problem, q)``:

* ``<problem>_q<q>.csv``: one row per ``(eps, N)`` with the table columns,
  their EoCs, the extra reconstruction-gap column and the bound;
* ``<problem>_q<q>.json``: the full estimator reports;
* ``<problem>_q<q>_plot.csv``: long-format ``(column, eps, N, h, value)``
  data for log-log plots.

Values are written with four significant digits; EoCs are computed from
the written values so that they can be recomputed from the CSV alone.
"""
import csv
import io
import json
import math
import os
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

from .errors import ConfigurationError, DgsiacError
from .problems import PROBLEMS

__all__ = [
    "RunConfig", "TableRow", "SweepResult", "COLUMNS", "EXTRA_COLUMNS", "DIFFUSIVE",
    "compute_eoc", "format_value", "run_sweep", "write_csv", "read_csv", "recompute_eocs",
    "load_config",
]

DEFAULT_N = (16, 32, 64, 128)
DEFAULT_EPS = (0.0, 1e-4, 1e-3, 1e-2, 1e-1)
QUICK_MAX_N = 32

# (key, csv header); order is the table order
COLUMNS = (
    ("err_dg_L2L2", "||u_h^t-u||_L2(L2)"),
    ("err_LinfL2", "||u^ts-u||_Linf(L2)"),
    ("r1_L1L2", "||r1||_L1(L2)"),
    ("err_L2H1", "|u^ts-u|_L2(H1)"),
    ("E_r2", "E_r2"),
)
EXTRA_COLUMNS = (("recon_gap_LinfL2", "||u_h-u^ts||_Linf(L2)"),)
DIFFUSIVE = frozenset({"err_L2H1", "E_r2"})
ABSENT = "--"
UNDEFINED = "undef"


def _is_pow2(n):
    return n >= 1 and n & (n - 1) == 0


@dataclass
class RunConfig:
    """Sweep configuration.

    ``N`` values above 32 are skipped unless ``full`` is set.
    """

    problem: str = "linadv"
    q: int = 1
    N: tuple = DEFAULT_N
    eps: tuple = DEFAULT_EPS
    T: Optional[float] = None
    C_adv: float = 0.1
    out: str = "results"
    full: bool = False
    n_space: Optional[int] = None
    n_time: Optional[int] = None
    c_pen: float = 2.0

    def __post_init__(self):
        self.N = tuple(int(n) for n in _as_list(self.N))
        self.eps = tuple(float(e) for e in _as_list(self.eps))
        self.q = int(self.q)
        self.validate()

    def validate(self):
        if self.problem not in PROBLEMS:
            raise ConfigurationError(
                f"unknown problem {self.problem!r}; choose from {sorted(PROBLEMS)}")
        if self.q not in (1, 2):
            raise ConfigurationError(f"q must be 1 or 2, got {self.q}")
        if not self.N:
            raise ConfigurationError("need at least one mesh size")
        for n in self.N:
            if n < 8 or not _is_pow2(n):
                raise ConfigurationError(f"mesh sizes must be powers of two >= 8, got {n}")
        if not self.eps:
            raise ConfigurationError("need at least one eps value")
        for e in self.eps:
            if not e >= 0 or not math.isfinite(e):
                raise ConfigurationError(f"eps must be finite and non-negative, got {e}")
        if not self.C_adv > 0:
            raise ConfigurationError(f"C_adv must be positive, got {self.C_adv}")
        if self.T is not None and not self.T > 0:
            raise ConfigurationError(f"T must be positive, got {self.T}")

    @property
    def active_N(self):
        return tuple(sorted(n for n in self.N if self.full or n <= QUICK_MAX_N))

    @property
    def stem(self):
        return f"{self.problem}_q{self.q}"

    @classmethod
    def from_dict(cls, data):
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise ConfigurationError(f"unknown configuration keys {sorted(extra)}")
        try:
            return cls(**data)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigurationError):
                raise
            raise ConfigurationError(f"invalid configuration: {exc}") from exc

    def with_overrides(self, **kw):
        kw = {k: v for k, v in kw.items() if v is not None}
        try:
            return replace(self, **kw)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigurationError):
                raise
            raise ConfigurationError(f"invalid override: {exc}") from exc

    def to_dict(self):
        return asdict(self)


def _as_list(v):
    if isinstance(v, str):
        return [x for x in v.replace(",", " ").split() if x]
    if isinstance(v, (int, float)):
        return [v]
    return list(v)


def _parse_scalar(text):
    text = text.strip()
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", "null", ""):
        return None
    return text


def load_config(path):
    """Read a JSON object or flat ``key = value`` file into a :class:`RunConfig`."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read configuration {path!r}: {exc}") from exc
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"malformed JSON in {path!r}: {exc}") from exc
    else:
        data = {}
        for num, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError(f"{path}:{num}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            data[key] = _as_list(val) if key in ("N", "eps") else _parse_scalar(val)
    if not isinstance(data, dict):
        raise ConfigurationError("configuration must be an object")
    return RunConfig.from_dict(data)


# ---------------------------------------------------------------------------
# formatting and EoC

def format_value(v):
    """Scientific notation with four significant digits."""
    return f"{v:.3e}"


def compute_eoc(E1, E2, h1, h2):
    """``log(E1 / E2) / log(h1 / h2)``; ``None`` when an error is not positive."""
    if h1 <= 0 or h2 <= 0 or h1 == h2:
        raise ValueError("mesh widths must be positive and distinct")
    if E1 is None or E2 is None or not (E1 > 0 and E2 > 0):
        return None
    if not (math.isfinite(E1) and math.isfinite(E2)):
        return None
    return math.log(E1 / E2) / math.log(h1 / h2)


@dataclass
class TableRow:
    """One ``(eps, N)`` row; ``values[key]`` is the rounded value or a marker."""

    eps: float
    N: int
    values: dict = field(default_factory=dict)
    eocs: dict = field(default_factory=dict)
    bound: Optional[float] = None
    lhs: Optional[float] = None
    ratio: Optional[float] = None
    status: str = "ok"

    @property
    def failed(self):
        return self.status != "ok"


@dataclass
class SweepResult:
    config: RunConfig
    rows: list
    reports: list
    paths: dict = field(default_factory=dict)

    @property
    def failures(self):
        return [r for r in self.rows if r.failed]


def _row_from_report(eps, N, rep):
    row = TableRow(eps=eps, N=N)
    norms = rep.norms
    for key, _ in COLUMNS + EXTRA_COLUMNS:
        if key in DIFFUSIVE and eps == 0:
            row.values[key] = ABSENT
            continue
        v = getattr(norms, key)
        row.values[key] = None if v is None else float(format_value(v))
    row.bound, row.lhs, row.ratio = rep.bound, rep.lhs, rep.ratio
    if rep.reliable is False:
        row.status = f"unreliable: bound {rep.bound:.3e} < lhs {rep.lhs:.3e}"
    return row


def _fill_eocs(rows):
    by_eps = {}
    for r in rows:
        by_eps.setdefault(r.eps, []).append(r)
    for group in by_eps.values():
        group.sort(key=lambda r: r.N)
        prev = None
        for r in group:
            for key, _ in COLUMNS + EXTRA_COLUMNS:
                v = r.values.get(key)
                if v == ABSENT:
                    r.eocs[key] = ABSENT
                elif prev is None:
                    r.eocs[key] = ""
                else:
                    pv = prev.values.get(key)
                    if isinstance(v, float) and isinstance(pv, float):
                        e = compute_eoc(pv, v, 1.0 / prev.N, 1.0 / r.N)
                        r.eocs[key] = UNDEFINED if e is None else e
                    else:
                        r.eocs[key] = UNDEFINED
            prev = r


def run_sweep(config, runner=None, progress=None):
    """Run every ``(eps, N)`` of ``config``, recording failures per row.

    ``runner(problem, q, N, eps, **kw)`` defaults to
    :func:`dgsiac.estimators.run_estimate`.  Output files are written to
    ``config.out``.
    """
    from .estimators import run_estimate
    from .operators import PenaltyConfig

    runner = runner or run_estimate
    rows, reports = [], []
    for eps in config.eps:
        for N in config.active_N:
            if progress:
                progress(f"{config.problem} q={config.q} eps={eps:g} N={N}")
            try:
                rep = runner(config.problem, config.q, N, eps, T=config.T, C_adv=config.C_adv,
                             penalty=PenaltyConfig(config.c_pen), n_space=config.n_space,
                             n_time=config.n_time)
            except (DgsiacError, ArithmeticError, ValueError, RuntimeError) as exc:
                rows.append(TableRow(eps=eps, N=N, status=f"failed: {type(exc).__name__}: {exc}"))
                reports.append({"problem": config.problem, "q": config.q, "N": N, "eps": eps,
                                "error": f"{type(exc).__name__}: {exc}"})
                continue
            rows.append(_row_from_report(eps, N, rep))
            reports.append(rep.to_dict())
    _fill_eocs(rows)
    result = SweepResult(config, rows, reports)
    os.makedirs(config.out, exist_ok=True)
    base = os.path.join(config.out, config.stem)
    result.paths["csv"] = write_csv(rows, base + ".csv")
    with open(base + ".json", "w") as fh:
        json.dump({"config": config.to_dict(), "reports": reports}, fh, indent=1,
                  allow_nan=True)
    result.paths["json"] = base + ".json"
    result.paths["plot"] = _write_plot_data(rows, base + "_plot.csv")
    return result


# ---------------------------------------------------------------------------
# CSV

def _header():
    cols = ["eps", "N"]
    for _, name in COLUMNS + EXTRA_COLUMNS:
        cols += [name, f"EoC {name}"]
    return cols + ["bound", "lhs", "ratio", "status"]


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    return format_value(v)


def _eoc_cell(v):
    if isinstance(v, str):
        return v
    return f"{v:.6f}"


def write_csv(rows, path):
    """Write rows in table order; returns ``path``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(_header())
    for r in sorted(rows, key=lambda r: (r.eps, r.N)):
        line = [f"{r.eps:g}", str(r.N)]
        for key, _ in COLUMNS + EXTRA_COLUMNS:
            line += [_cell(r.values.get(key)), _eoc_cell(r.eocs.get(key, ""))]
        line += [_cell(r.bound), _cell(r.lhs), _cell(r.ratio), r.status]
        w.writerow(line)
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())
    return path


def read_csv(path):
    """Parse a sweep CSV back into :class:`TableRow` objects."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigurationError(f"{path!r} is empty") from None
        if header != _header():
            raise ConfigurationError(f"{path!r} does not have the sweep column layout")
        rows = []
        for line in reader:
            if not line:
                continue
            rec = dict(zip(header, line))
            row = TableRow(eps=float(rec["eps"]), N=int(rec["N"]), status=rec["status"])
            for key, name in COLUMNS + EXTRA_COLUMNS:
                row.values[key] = _parse_cell(rec[name])
                row.eocs[key] = _parse_cell(rec[f"EoC {name}"])
            for k in ("bound", "lhs", "ratio"):
                setattr(row, k, _parse_cell(rec[k]))
            rows.append(row)
    return rows


def _parse_cell(text):
    if text in ("", ABSENT, UNDEFINED):
        return text if text else None
    return float(text)


def recompute_eocs(rows):
    """EoCs recomputed from the stored values; list of ``(row, key, stored, new)``."""
    out = []
    fresh = [TableRow(eps=r.eps, N=r.N, values=dict(r.values)) for r in rows]
    _fill_eocs(fresh)
    for old, new in zip(rows, fresh):
        for key, _ in COLUMNS + EXTRA_COLUMNS:
            stored = old.eocs.get(key)
            stored = "" if stored is None else stored
            out.append((old, key, stored, new.eocs[key]))
    return out


def _write_plot_data(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["column", "eps", "N", "h", "value"])
        for key, name in COLUMNS + EXTRA_COLUMNS:
            for r in sorted(rows, key=lambda r: (r.eps, r.N)):
                v = r.values.get(key)
                if isinstance(v, float):
                    w.writerow([name, f"{r.eps:g}", r.N, format_value(1.0 / r.N), format_value(v)])
    return path
