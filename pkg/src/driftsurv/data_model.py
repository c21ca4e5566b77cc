"""Loan panel data model.

Parses delimiter-separated origination and monthly-performance files,
joins them into an immutable column-oriented :class:`LoanPanel`, serializes
panels to a canonical single-file format, and generates synthetic
portfolios with a known ground-truth default law for desk-scale testing.

File layout conventions
-----------------------
Input files are delimiter-separated text (pipe by default). A
:class:`FileSchema` maps field names to column positions (or header names
when the file has a header row) and carries the plausibility ranges used
to turn invalid or extreme values into missing ones. Values that fail
type or range validation become missing; rows that lack structurally
required fields (the join key, the original balance, rate and term) count
as malformed and are dropped, with a hard failure once the malformed
fraction exceeds ``max_bad_fraction``.
"""

from __future__ import annotations

import io
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from driftsurv.errors import ConfigError, DataError

logger = logging.getLogger(__name__)

OCCUPANCY_LEVELS = ("owner", "second-home", "investment")
LOAN_PURPOSE_LEVELS = ("cash-out-refi", "no-cash-out-refi", "purchase")
ASSISTANCE_LEVELS = ("F", "R", "T")

# Plausibility ranges; values outside become missing. (lo, hi, lo_open)
DEFAULT_RANGES: dict[str, tuple[float, float, bool]] = {
    "credit_score": (300.0, 850.0, False),
    "dti": (0.0, 100.0, True),
    "orig_ltv": (0.0, 250.0, True),
    "eltv": (0.0, 250.0, True),
}

_ORIG_FIELDS = (
    "loan_id", "credit_score", "occupancy", "dti", "orig_upb", "orig_ltv",
    "orig_interest_rate", "loan_purpose", "orig_loan_term", "num_borrowers",
)
_PERF_FIELDS = (
    "loan_id", "period", "loan_age", "cur_act_upb", "cur_loan_del",
    "cur_int_rate", "cnib_upb", "eltv", "zero_bal_code", "assistance_code",
)
_ORIG_REQUIRED = ("loan_id", "orig_upb", "orig_interest_rate", "orig_loan_term")
_PERF_REQUIRED = ("loan_id", "period", "loan_age")


@dataclass(frozen=True)
class LoanOrigination:
    """Static covariates of one loan at origination."""

    loan_id: str
    credit_score: float | None
    occupancy: str | None
    dti: float | None
    orig_upb: float
    orig_ltv: float | None
    orig_interest_rate: float
    loan_purpose: str | None
    orig_loan_term: int
    num_borrowers: int | None


@dataclass(frozen=True)
class PerformanceRecord:
    """One monthly servicing observation of one loan.

    ``period`` is the raw calendar reporting value from the file (any
    sortable integer, e.g. 202001). The within-panel month index used by
    the drift schedules is the rank of the period among the panel's
    distinct periods and is assigned at join time.
    """

    loan_id: str
    period: int
    loan_age: int
    cur_act_upb: float | None
    cur_loan_del: int | None
    cur_int_rate: float | None
    cnib_upb: float | None
    eltv: float | None
    zero_bal_code: str | None
    assistance_code: str | None


@dataclass(frozen=True)
class FileSchema:
    """Column mapping for a delimited input file.

    ``columns`` maps field names to 0-based positions, or to header names
    when ``has_header`` is true. ``value_maps`` optionally recodes raw
    categorical tokens (e.g. Freddie's "P" -> "owner").
    """

    columns: Mapping[str, int | str]
    delimiter: str = "|"
    has_header: bool = False
    max_bad_fraction: float = 0.05
    ranges: Mapping[str, tuple[float, float, bool]] = field(
        default_factory=lambda: dict(DEFAULT_RANGES))
    value_maps: Mapping[str, Mapping[str, str]] = field(default_factory=dict)

    @classmethod
    def from_json(cls, path: str | Path) -> "FileSchema":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        known = {"columns", "delimiter", "has_header", "max_bad_fraction",
                 "ranges", "value_maps"}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown schema keys: {sorted(unknown)}")
        if "columns" not in raw:
            raise ConfigError("schema must declare 'columns'")
        ranges = dict(DEFAULT_RANGES)
        for name, spec in raw.get("ranges", {}).items():
            lo, hi = float(spec[0]), float(spec[1])
            lo_open = bool(spec[2]) if len(spec) > 2 else False
            ranges[name] = (lo, hi, lo_open)
        return cls(
            columns=raw["columns"],
            delimiter=raw.get("delimiter", "|"),
            has_header=raw.get("has_header", False),
            max_bad_fraction=raw.get("max_bad_fraction", 0.05),
            ranges=ranges,
            value_maps=raw.get("value_maps", {}),
        )


# Canonical column orders, used by the shipped default schemas and by the
# panel serializer.
ORIGINATION_SCHEMA = FileSchema(
    columns={name: i for i, name in enumerate(_ORIG_FIELDS)})
PERFORMANCE_SCHEMA = FileSchema(
    columns={name: i for i, name in enumerate(_PERF_FIELDS)})


@dataclass(frozen=True)
class JoinReport:
    """Counts reported by :func:`join_panel`."""

    loans_kept: int
    orig_dropped: int
    perf_rows_dropped: int

    def to_dict(self) -> dict:
        return {"loans_kept": self.loans_kept,
                "orig_dropped": self.orig_dropped,
                "perf_rows_dropped": self.perf_rows_dropped}


@dataclass(frozen=True)
class LoanPanel:
    """Joined, cleaned portfolio: origination columns + performance columns.

    Column-oriented and immutable by convention: all arrays are owned by
    the panel and must not be mutated. ``perf`` rows are sorted by
    (loan, loan_age); ``perf_start``/``perf_stop`` delimit each loan's
    row slice in loan order.
    """

    loan_ids: tuple[str, ...]
    orig: dict[str, np.ndarray]
    perf: dict[str, np.ndarray]
    perf_start: np.ndarray
    perf_stop: np.ndarray
    observation_span: int
    provenance: tuple[str, ...] = ()

    @property
    def n_loans(self) -> int:
        return len(self.loan_ids)

    @property
    def n_rows(self) -> int:
        return int(self.perf["loan_age"].shape[0])

    def loan_slice(self, i: int) -> slice:
        return slice(int(self.perf_start[i]), int(self.perf_stop[i]))

    def loan_index(self, loan_id: str) -> int:
        i = int(np.searchsorted(np.asarray(self.loan_ids, dtype=object), loan_id))
        if i >= self.n_loans or self.loan_ids[i] != loan_id:
            raise KeyError(loan_id)
        return i

    def origination(self, loan_id: str) -> LoanOrigination:
        i = self.loan_index(loan_id)
        o = self.orig
        return LoanOrigination(
            loan_id=loan_id,
            credit_score=_opt_float(o["credit_score"][i]),
            occupancy=o["occupancy"][i],
            dti=_opt_float(o["dti"][i]),
            orig_upb=float(o["orig_upb"][i]),
            orig_ltv=_opt_float(o["orig_ltv"][i]),
            orig_interest_rate=float(o["orig_interest_rate"][i]),
            loan_purpose=o["loan_purpose"][i],
            orig_loan_term=int(o["orig_loan_term"][i]),
            num_borrowers=_opt_int(o["num_borrowers"][i]),
        )

    def performance(self, loan_id: str) -> list[PerformanceRecord]:
        i = self.loan_index(loan_id)
        s = self.loan_slice(i)
        p = self.perf
        out = []
        for j in range(s.start, s.stop):
            out.append(PerformanceRecord(
                loan_id=loan_id,
                period=int(p["period"][j]),
                loan_age=int(p["loan_age"][j]),
                cur_act_upb=_opt_float(p["cur_act_upb"][j]),
                cur_loan_del=_opt_int(p["cur_loan_del"][j]),
                cur_int_rate=_opt_float(p["cur_int_rate"][j]),
                cnib_upb=_opt_float(p["cnib_upb"][j]),
                eltv=_opt_float(p["eltv"][j]),
                zero_bal_code=p["zero_bal_code"][j],
                assistance_code=p["assistance_code"][j],
            ))
        return out

    def replace_perf(self, **columns: np.ndarray) -> "LoanPanel":
        """New panel with some performance columns replaced (or added)."""
        perf = dict(self.perf)
        for name, col in columns.items():
            if name in perf and col.shape != perf[name].shape:
                raise ValueError(f"column {name!r} has wrong length")
            perf[name] = col
        return replace(self, perf=perf)

    def with_provenance(self, tag: str) -> "LoanPanel":
        return replace(self, provenance=self.provenance + (tag,))


def _opt_float(v) -> float | None:
    v = float(v)
    return None if math.isnan(v) else v


def _opt_int(v) -> int | None:
    v = float(v)
    return None if math.isnan(v) else int(v)


def panels_equal(a: LoanPanel, b: LoanPanel) -> bool:
    """Field-wise equality with NaN == NaN for float columns."""
    if a.loan_ids != b.loan_ids or a.observation_span != b.observation_span \
            or a.provenance != b.provenance:
        return False
    if set(a.orig) != set(b.orig) or set(a.perf) != set(b.perf):
        return False
    for name in a.orig:
        if not _columns_equal(a.orig[name], b.orig[name]):
            return False
    for name in a.perf:
        if not _columns_equal(a.perf[name], b.perf[name]):
            return False
    return True


def _columns_equal(x: np.ndarray, y: np.ndarray) -> bool:
    if x.shape != y.shape:
        return False
    if x.dtype.kind == "f":
        return bool(np.array_equal(x, y, equal_nan=True))
    return bool(np.array_equal(x, y))


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

def _open_lines(source) -> Iterator[str]:
    if isinstance(source, (str, Path)):
        with open(source, "rb") as fh:
            yield from io.TextIOWrapper(fh, encoding="utf-8", newline="")
    elif isinstance(source, bytes):
        yield from io.StringIO(source.decode("utf-8"))
    else:  # binary file-like
        yield from io.TextIOWrapper(source, encoding="utf-8", newline="")


def _resolve_columns(schema: FileSchema, header: list[str] | None,
                     fields: Sequence[str], required: Sequence[str]) -> dict[str, int]:
    positions: dict[str, int] = {}
    for name, col in schema.columns.items():
        if name not in fields:
            raise ConfigError(f"schema maps unknown field {name!r}")
        if isinstance(col, str):
            if header is None:
                raise ConfigError(
                    f"column for {name!r} given by name but file has no header")
            try:
                positions[name] = header.index(col)
            except ValueError:
                raise ConfigError(f"header does not contain column {col!r}")
        else:
            positions[name] = int(col)
    missing = [name for name in required if name not in positions]
    if missing:
        raise ConfigError(f"schema does not map mandatory columns: {missing}")
    return positions


def _parse_rows(source, schema: FileSchema, fields: Sequence[str],
                required: Sequence[str]):
    """Split a delimited stream into (lineno, token dict) rows.

    Returns ``(rows, malformed)`` where ``malformed`` lists
    (lineno, reason) for structurally invalid lines.
    """
    lines = _open_lines(source)
    header = None
    if schema.has_header:
        try:
            header = next(lines).rstrip("\r\n").split(schema.delimiter)
        except StopIteration:
            return [], []
    positions = _resolve_columns(schema, header, fields, required)
    min_width = max(positions.values()) + 1
    rows = []
    bad: list[tuple[int, str]] = []
    start = 2 if schema.has_header else 1
    for lineno, line in enumerate(lines, start=start):
        line = line.rstrip("\r\n")
        if not line:
            continue
        parts = line.split(schema.delimiter)
        if len(parts) < min_width:
            bad.append((lineno, f"expected >= {min_width} columns, got {len(parts)}"))
            continue
        tokens = {name: parts[pos].strip() for name, pos in positions.items()}
        rows.append((lineno, tokens))
    return rows, bad


def _fail_if_too_many_bad(bad: list[tuple[int, str]], total: int,
                          schema: FileSchema, what: str) -> None:
    if total == 0 or not bad:
        return
    if len(bad) / total > schema.max_bad_fraction:
        detail = "; ".join(f"line {n}: {r}" for n, r in bad[:20])
        raise DataError(
            f"{len(bad)}/{total} malformed {what} lines exceeds "
            f"max_bad_fraction={schema.max_bad_fraction}: {detail}")
    logger.warning("%d/%d malformed %s lines dropped (first: line %d)",
                   len(bad), total, what, bad[0][0])


def _float_in_range(token: str, rng: tuple[float, float, bool] | None) -> float | None:
    if not token:
        return None
    try:
        v = float(token)
    except ValueError:
        return None
    if not math.isfinite(v):
        return None
    if rng is not None:
        lo, hi, lo_open = rng
        if v > hi or v < lo or (lo_open and v == lo):
            return None
    return v


def _categorical(token: str, name: str, schema: FileSchema) -> str | None:
    if not token:
        return None
    vmap = schema.value_maps.get(name)
    if vmap:
        return vmap.get(token, token)
    return token


def parse_origination(source, schema: FileSchema = ORIGINATION_SCHEMA
                      ) -> list[LoanOrigination]:
    """Parse an origination file into records, in file order.

    Values failing type or plausibility-range validation become missing.
    Rows missing the loan id, a positive original balance, a non-negative
    rate or a positive term are malformed and dropped; too many malformed
    rows raise :class:`DataError` with line numbers.
    """
    rows, bad = _parse_rows(source, schema, _ORIG_FIELDS, _ORIG_REQUIRED)
    out: list[LoanOrigination] = []
    total = len(rows) + len(bad)
    for lineno, tok in rows:
        loan_id = tok.get("loan_id", "")
        upb = _float_in_range(tok.get("orig_upb", ""), None)
        rate = _float_in_range(tok.get("orig_interest_rate", ""), None)
        term = _float_in_range(tok.get("orig_loan_term", ""), None)
        if not loan_id or upb is None or upb <= 0 or rate is None or rate < 0 \
                or term is None or term < 1:
            bad.append((lineno, "invalid required field"))
            continue
        nb = _float_in_range(tok.get("num_borrowers", ""), None)
        out.append(LoanOrigination(
            loan_id=loan_id,
            credit_score=_float_in_range(tok.get("credit_score", ""),
                                         schema.ranges.get("credit_score")),
            occupancy=_categorical(tok.get("occupancy", ""), "occupancy", schema),
            dti=_float_in_range(tok.get("dti", ""), schema.ranges.get("dti")),
            orig_upb=upb,
            orig_ltv=_float_in_range(tok.get("orig_ltv", ""),
                                     schema.ranges.get("orig_ltv")),
            orig_interest_rate=rate,
            loan_purpose=_categorical(tok.get("loan_purpose", ""),
                                      "loan_purpose", schema),
            orig_loan_term=int(term),
            num_borrowers=int(nb) if nb is not None and nb >= 1 else None,
        ))
    _fail_if_too_many_bad(sorted(bad), total, schema, "origination")
    return out


def parse_performance(source, schema: FileSchema = PERFORMANCE_SCHEMA
                      ) -> list[PerformanceRecord]:
    """Parse a monthly performance file into records, in file order.

    Non-numeric delinquency sentinels (e.g. "RA") map to missing status;
    numeric codes are kept as-is (0 = current).
    """
    rows, bad = _parse_rows(source, schema, _PERF_FIELDS, _PERF_REQUIRED)
    out: list[PerformanceRecord] = []
    total = len(rows) + len(bad)
    for lineno, tok in rows:
        loan_id = tok.get("loan_id", "")
        period = _float_in_range(tok.get("period", ""), None)
        age = _float_in_range(tok.get("loan_age", ""), None)
        if not loan_id or period is None or age is None or age < 0:
            bad.append((lineno, "invalid required field"))
            continue
        del_tok = tok.get("cur_loan_del", "")
        try:
            status: int | None = int(del_tok)
            if status < 0:
                status = None
        except ValueError:
            status = None
        upb = _float_in_range(tok.get("cur_act_upb", ""), None)
        out.append(PerformanceRecord(
            loan_id=loan_id,
            period=int(period),
            loan_age=int(age),
            cur_act_upb=upb if upb is None or upb >= 0 else None,
            cur_loan_del=status,
            cur_int_rate=_float_in_range(tok.get("cur_int_rate", ""), None),
            cnib_upb=_float_in_range(tok.get("cnib_upb", ""), None),
            eltv=_float_in_range(tok.get("eltv", ""), schema.ranges.get("eltv")),
            zero_bal_code=_categorical(tok.get("zero_bal_code", ""),
                                       "zero_bal_code", schema),
            assistance_code=_categorical(tok.get("assistance_code", ""),
                                         "assistance_code", schema),
        ))
    _fail_if_too_many_bad(sorted(bad), total, schema, "performance")
    return out


# ---------------------------------------------------------------------------
# Join
# ---------------------------------------------------------------------------

def join_panel(origs: Iterable[LoanOrigination],
               perfs: Iterable[PerformanceRecord],
               provenance: tuple[str, ...] = (),
               ) -> tuple[LoanPanel, JoinReport]:
    """Join origination and performance records into a panel.

    Performance rows without a matching origination and originations
    without any performance rows are dropped (counted in the report), as
    are rows whose loan age exceeds the loan's term. Duplicate loan ids
    or duplicate (loan, age) pairs are errors.
    """
    origs = list(origs)
    perfs = list(perfs)
    by_id: dict[str, LoanOrigination] = {}
    for o in origs:
        if o.loan_id in by_id:
            raise DataError(f"duplicate origination loan_id {o.loan_id!r}")
        by_id[o.loan_id] = o

    grouped: dict[str, list[PerformanceRecord]] = {}
    perf_rows_dropped = 0
    for r in perfs:
        o = by_id.get(r.loan_id)
        if o is None or r.loan_age > o.orig_loan_term:
            perf_rows_dropped += 1
            continue
        grouped.setdefault(r.loan_id, []).append(r)

    dupes = []
    for loan_id, rows in grouped.items():
        rows.sort(key=lambda r: r.loan_age)
        for a, b in zip(rows, rows[1:]):
            if a.loan_age == b.loan_age:
                dupes.append((loan_id, a.loan_age))
    if dupes:
        shown = ", ".join(f"({lid}, age {age})" for lid, age in dupes[:20])
        raise DataError(f"duplicate (loan_id, loan_age) pairs: {shown}")

    loan_ids = tuple(sorted(grouped))
    orig_dropped = len(by_id) - len(loan_ids)

    n = len(loan_ids)
    orig_cols = {
        "credit_score": np.full(n, np.nan),
        "occupancy": np.empty(n, dtype=object),
        "dti": np.full(n, np.nan),
        "orig_upb": np.empty(n),
        "orig_ltv": np.full(n, np.nan),
        "orig_interest_rate": np.empty(n),
        "loan_purpose": np.empty(n, dtype=object),
        "orig_loan_term": np.empty(n, dtype=np.int64),
        "num_borrowers": np.full(n, np.nan),
    }
    counts = np.array([len(grouped[lid]) for lid in loan_ids], dtype=np.int64)
    stops = np.cumsum(counts)
    starts = stops - counts
    m = int(stops[-1]) if n else 0
    perf_cols = {
        "loan_index": np.empty(m, dtype=np.int64),
        "period": np.empty(m, dtype=np.int64),
        "month_index": np.empty(m, dtype=np.int64),
        "loan_age": np.empty(m, dtype=np.int64),
        "cur_act_upb": np.full(m, np.nan),
        "cur_loan_del": np.full(m, np.nan),
        "cur_int_rate": np.full(m, np.nan),
        "cnib_upb": np.full(m, np.nan),
        "eltv": np.full(m, np.nan),
        "zero_bal_code": np.empty(m, dtype=object),
        "assistance_code": np.empty(m, dtype=object),
    }
    for i, lid in enumerate(loan_ids):
        o = by_id[lid]
        orig_cols["credit_score"][i] = _nan(o.credit_score)
        orig_cols["occupancy"][i] = o.occupancy
        orig_cols["dti"][i] = _nan(o.dti)
        orig_cols["orig_upb"][i] = o.orig_upb
        orig_cols["orig_ltv"][i] = _nan(o.orig_ltv)
        orig_cols["orig_interest_rate"][i] = o.orig_interest_rate
        orig_cols["loan_purpose"][i] = o.loan_purpose
        orig_cols["orig_loan_term"][i] = o.orig_loan_term
        orig_cols["num_borrowers"][i] = _nan(o.num_borrowers)
        for j, r in enumerate(grouped[lid], start=int(starts[i])):
            perf_cols["loan_index"][j] = i
            perf_cols["period"][j] = r.period
            perf_cols["loan_age"][j] = r.loan_age
            perf_cols["cur_act_upb"][j] = _nan(r.cur_act_upb)
            perf_cols["cur_loan_del"][j] = _nan(r.cur_loan_del)
            perf_cols["cur_int_rate"][j] = _nan(r.cur_int_rate)
            perf_cols["cnib_upb"][j] = _nan(r.cnib_upb)
            perf_cols["eltv"][j] = _nan(r.eltv)
            perf_cols["zero_bal_code"][j] = r.zero_bal_code
            perf_cols["assistance_code"][j] = r.assistance_code

    distinct = np.unique(perf_cols["period"]) if m else np.empty(0, dtype=np.int64)
    rank = {int(p): k + 1 for k, p in enumerate(distinct)}
    for j in range(m):
        perf_cols["month_index"][j] = rank[int(perf_cols["period"][j])]

    panel = LoanPanel(
        loan_ids=loan_ids,
        orig=orig_cols,
        perf=perf_cols,
        perf_start=starts,
        perf_stop=stops,
        observation_span=len(distinct),
        provenance=provenance,
    )
    report = JoinReport(loans_kept=n, orig_dropped=orig_dropped,
                        perf_rows_dropped=perf_rows_dropped)
    logger.info("join: kept %d loans, dropped %d originations, %d perf rows",
                n, orig_dropped, perf_rows_dropped)
    return panel, report


def _nan(v) -> float:
    return np.nan if v is None else float(v)


# ---------------------------------------------------------------------------
# Canonical serialization
# ---------------------------------------------------------------------------

_MAGIC = "#driftsurv-panel"


def _fmt(v, integer: bool = False) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    f = float(v)
    if math.isnan(f):
        return ""
    if integer:
        return str(int(f))
    return repr(f)


def write_panel(panel: LoanPanel, path: str | Path) -> None:
    """Write the canonical single-file panel serialization.

    The file is pipe-delimited with embedded section headers; floats are
    written with full round-trip precision so that
    ``read_panel(write_panel(p)) == p``.
    """
    has_shadow = "cur_loan_del_raw" in panel.perf
    perf_fields = list(_PERF_FIELDS) + (["cur_loan_del_raw"] if has_shadow else [])
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{_MAGIC} 1|provenance={','.join(panel.provenance)}\n")
        fh.write("#orig|" + "|".join(_ORIG_FIELDS) + "\n")
        o = panel.orig
        for i, lid in enumerate(panel.loan_ids):
            fh.write("|".join([
                lid,
                _fmt(o["credit_score"][i]),
                _fmt(o["occupancy"][i]),
                _fmt(o["dti"][i]),
                _fmt(o["orig_upb"][i]),
                _fmt(o["orig_ltv"][i]),
                _fmt(o["orig_interest_rate"][i]),
                _fmt(o["loan_purpose"][i]),
                _fmt(o["orig_loan_term"][i], integer=True),
                _fmt(o["num_borrowers"][i], integer=True),
            ]) + "\n")
        fh.write("#perf|" + "|".join(perf_fields) + "\n")
        p = panel.perf
        for i in range(panel.n_loans):
            lid = panel.loan_ids[i]
            for j in range(int(panel.perf_start[i]), int(panel.perf_stop[i])):
                row = [
                    lid,
                    _fmt(p["period"][j], integer=True),
                    _fmt(p["loan_age"][j], integer=True),
                    _fmt(p["cur_act_upb"][j]),
                    _fmt(p["cur_loan_del"][j], integer=True),
                    _fmt(p["cur_int_rate"][j]),
                    _fmt(p["cnib_upb"][j]),
                    _fmt(p["eltv"][j]),
                    _fmt(p["zero_bal_code"][j]),
                    _fmt(p["assistance_code"][j]),
                ]
                if has_shadow:
                    row.append(_fmt(p["cur_loan_del_raw"][j], integer=True))
                fh.write("|".join(row) + "\n")


def read_panel(path: str | Path) -> LoanPanel:
    """Read a panel written by :func:`write_panel`."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith(_MAGIC):
        raise DataError(f"{path}: not a driftsurv panel file")
    head = lines[0].split("|", 1)
    provenance: tuple[str, ...] = ()
    if len(head) > 1 and head[1].startswith("provenance="):
        tags = head[1][len("provenance="):]
        provenance = tuple(t for t in tags.split(",") if t)

    sections: dict[str, tuple[list[str], list[str]]] = {}
    current: list[str] | None = None
    for line in lines[1:]:
        if line.startswith("#"):
            name, *cols = line[1:].split("|")
            current = []
            sections[name] = (cols, current)
        elif line:
            if current is None:
                raise DataError(f"{path}: data before section header")
            current.append(line)
    if "orig" not in sections or "perf" not in sections:
        raise DataError(f"{path}: missing orig/perf sections")

    ocols, olines = sections["orig"]
    oschema = FileSchema(columns={name: k for k, name in enumerate(ocols)})
    origs = parse_origination("\n".join(olines).encode(), oschema)

    pcols, plines = sections["perf"]
    has_shadow = "cur_loan_del_raw" in pcols
    pschema = FileSchema(
        columns={name: k for k, name in enumerate(pcols)
                 if name in _PERF_FIELDS})
    perfs = parse_performance("\n".join(plines).encode(), pschema)
    panel, _ = join_panel(origs, perfs, provenance=provenance)

    if has_shadow and plines:
        idx = pcols.index("cur_loan_del_raw")
        key_idx = (pcols.index("loan_id"), pcols.index("loan_age"))
        raw_by_key = {}
        for line in plines:
            parts = line.split("|")
            tok = parts[idx].strip() if idx < len(parts) else ""
            raw_by_key[(parts[key_idx[0]], int(parts[key_idx[1]]))] = (
                float(tok) if tok else np.nan)
        shadow = np.full(panel.n_rows, np.nan)
        for i, lid in enumerate(panel.loan_ids):
            s = panel.loan_slice(i)
            for j in range(s.start, s.stop):
                shadow[j] = raw_by_key.get((lid, int(panel.perf["loan_age"][j])), np.nan)
        panel = panel.replace_perf(cur_loan_del_raw=shadow)
    return panel


# ---------------------------------------------------------------------------
# Synthetic portfolio generator
# ---------------------------------------------------------------------------

_SUPPORTED_HAZARD_FEATURES = ("credit_score", "dti", "orig_ltv", "orig_interest_rate")


@dataclass(frozen=True)
class SyntheticConfig:
    """Parameters of the synthetic portfolio generator.

    The default law is a monthly logistic hazard on generator-standardized
    static covariates plus the true behavioural marker, so that ground
    truth coefficients are known exactly:

        logit(h_it) = base_logit + sum_f hazard_coef[f] * z_if
                      + marker_coef * (bd_intercept_i + bd_slope_i * t/N_i)

    Balances follow the scheduled amortization path perturbed by the
    per-loan behavioural deviation process, so the balance-deviation
    marker carries signal exactly when ``marker_coef`` is nonzero.
    """

    n_loans: int = 1000
    n_months: int = 60
    term_choices: tuple[int, ...] = (180, 240, 360)
    rate_range: tuple[float, float] = (3.0, 6.5)
    upb_range: tuple[float, float] = (75_000.0, 450_000.0)
    credit_score_mean: float = 740.0
    credit_score_sd: float = 50.0
    dti_mean: float = 33.0
    dti_sd: float = 8.0
    ltv_mean: float = 75.0
    ltv_sd: float = 10.0
    occupancy_probs: tuple[float, float, float] = (0.90, 0.05, 0.05)
    purpose_probs: tuple[float, float, float] = (0.25, 0.35, 0.40)
    two_borrower_prob: float = 0.5
    base_logit: float = -5.8
    hazard_coef: Mapping[str, float] = field(default_factory=dict)
    marker_coef: float = 0.0
    bd_intercept_sd: float = 0.03
    bd_slope_mean: float = 0.05
    bd_slope_sd: float = 0.15
    bd_noise_sd: float = 0.01
    prepay_rate: float = 0.003
    assistance_prob: float = 0.02
    delinquency_exit_months: int = 3
    n_cohorts: int = 1

    def validate(self) -> None:
        if self.n_loans < 1:
            raise ConfigError("n_loans must be positive")
        if self.n_months < 1:
            raise ConfigError("n_months must be positive")
        if not self.term_choices or any(t < 1 for t in self.term_choices):
            raise ConfigError("term_choices must be positive months")
        for name in ("rate_range", "upb_range"):
            lo, hi = getattr(self, name)
            if not (0 <= lo <= hi):
                raise ConfigError(f"degenerate {name}: {(lo, hi)}")
        for name in ("credit_score_sd", "dti_sd", "ltv_sd"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        for probs in (self.occupancy_probs, self.purpose_probs):
            if abs(sum(probs) - 1.0) > 1e-9 or min(probs) < 0:
                raise ConfigError(f"probabilities must sum to 1: {probs}")
        unknown = set(self.hazard_coef) - set(_SUPPORTED_HAZARD_FEATURES)
        if unknown:
            raise ConfigError(f"unsupported hazard_coef features: {sorted(unknown)}")
        if self.n_cohorts < 1 or self.n_cohorts > self.n_months:
            raise ConfigError("n_cohorts must be in [1, n_months]")
        if not (0 <= self.prepay_rate < 1):
            raise ConfigError("prepay_rate must be in [0, 1)")
        if self.delinquency_exit_months < 1:
            raise ConfigError("delinquency_exit_months must be >= 1")


@dataclass(frozen=True)
class SyntheticOracle:
    """Ground-truth monthly design rows emitted alongside a synthetic panel.

    One row per at-risk (loan, month): standardized static features in
    ``z`` (column order = ``feature_names``), the true (noise-free) marker
    value, and whether a default fired that month.
    """

    feature_names: tuple[str, ...]
    z: np.ndarray
    marker: np.ndarray
    default: np.ndarray
    true_intercept: float
    true_coef: tuple[float, ...]
    true_marker_coef: float


def generate_synthetic_portfolio(config: SyntheticConfig, seed: int) -> LoanPanel:
    """Deterministic synthetic Freddie-style panel; see :class:`SyntheticConfig`."""
    panel, _ = generate_portfolio_with_oracle(config, seed)
    return panel


def generate_portfolio_with_oracle(config: SyntheticConfig, seed: int
                                   ) -> tuple[LoanPanel, SyntheticOracle]:
    """Generate a panel plus the ground-truth design rows of its default law."""
    config.validate()
    rng = np.random.default_rng(seed)
    n = config.n_loans
    T = config.n_months

    terms = rng.choice(np.asarray(config.term_choices, dtype=np.int64), size=n)
    rates = rng.uniform(config.rate_range[0], config.rate_range[1], size=n)
    upb = np.exp(rng.uniform(np.log(config.upb_range[0]),
                             np.log(config.upb_range[1]), size=n))
    cs = np.clip(rng.normal(config.credit_score_mean, config.credit_score_sd, n),
                 300.0, 850.0)
    dti = np.clip(rng.normal(config.dti_mean, config.dti_sd, n), 1.0, 100.0)
    ltv = np.clip(rng.normal(config.ltv_mean, config.ltv_sd, n), 5.0, 250.0)
    occupancy = rng.choice(np.asarray(OCCUPANCY_LEVELS, dtype=object), size=n,
                           p=config.occupancy_probs)
    purpose = rng.choice(np.asarray(LOAN_PURPOSE_LEVELS, dtype=object), size=n,
                         p=config.purpose_probs)
    borrowers = 1 + (rng.random(n) < config.two_borrower_prob).astype(np.int64)
    cohort = (rng.integers(0, config.n_cohorts, size=n) + 1
              if config.n_cohorts > 1 else np.ones(n, dtype=np.int64))

    b0 = rng.normal(0.0, config.bd_intercept_sd, n)
    b1 = rng.normal(config.bd_slope_mean, config.bd_slope_sd, n)

    # Generator-standardized statics entering the true hazard.
    zmap = {
        "credit_score": (cs - config.credit_score_mean) / config.credit_score_sd,
        "dti": (dti - config.dti_mean) / config.dti_sd,
        "orig_ltv": (ltv - config.ltv_mean) / config.ltv_sd,
        "orig_interest_rate": _uniform_z(rates, config.rate_range),
    }
    feature_names = tuple(sorted(config.hazard_coef))
    static_part = np.zeros(n)
    for name in feature_names:
        static_part += config.hazard_coef[name] * zmap[name]

    max_ages = np.minimum(terms, T - cohort + 1)
    u_def = rng.random((n, T))
    u_pre = rng.random((n, T))
    bd_noise = rng.normal(0.0, config.bd_noise_sd, (n, T))
    u_assist = rng.random(n)
    assist_start = rng.integers(1, max(T, 2), size=n)
    assist_code = rng.choice(np.asarray(ASSISTANCE_LEVELS, dtype=object), size=n)

    origs: list[LoanOrigination] = []
    perfs: list[PerformanceRecord] = []
    oracle_z: list[np.ndarray] = []
    oracle_m: list[float] = []
    oracle_y: list[int] = []

    for i in range(n):
        lid = f"L{i:06d}"
        origs.append(LoanOrigination(
            loan_id=lid, credit_score=float(round(cs[i])),
            occupancy=str(occupancy[i]), dti=float(dti[i]),
            orig_upb=float(upb[i]), orig_ltv=float(ltv[i]),
            orig_interest_rate=float(rates[i]), loan_purpose=str(purpose[i]),
            orig_loan_term=int(terms[i]), num_borrowers=int(borrowers[i]),
        ))
        N = int(terms[i])
        r = rates[i] / 1200.0
        avail = int(max_ages[i])
        if avail < 1:
            # still emit one observation so every origination links
            avail = 1
        zrow = np.array([zmap[f][i] for f in feature_names])
        in_assist = u_assist[i] < config.assistance_prob

        default_age = 0  # 0 = never
        prepay_age = 0
        for t in range(1, avail + 1):
            m_true = b0[i] + b1[i] * t / N
            eta = config.base_logit + static_part[i] + config.marker_coef * m_true
            h = 1.0 / (1.0 + math.exp(-eta))
            fired = u_def[i, t - 1] < h
            oracle_z.append(zrow)
            oracle_m.append(m_true)
            oracle_y.append(1 if fired else 0)
            if fired:
                default_age = t
                break
            if u_pre[i, t - 1] < config.prepay_rate:
                prepay_age = t
                break

        if default_age:
            last_age = min(default_age + config.delinquency_exit_months - 1, avail)
        elif prepay_age:
            last_age = prepay_age
        else:
            last_age = avail

        for t in range(1, last_age + 1):
            b_sch = _sched(r, N, float(upb[i]), t)
            bd = b0[i] + b1[i] * t / N + bd_noise[i, t - 1]
            cur_upb = max(b_sch * (1.0 + bd), 0.0)
            eltv = min(max(ltv[i] * b_sch / upb[i], 0.1), 250.0)
            status = 0
            if default_age and t >= default_age:
                status = t - default_age + 1
            zbc = "01" if (prepay_age and t == prepay_age) else None
            assistance = None
            if in_assist and assist_start[i] <= t < assist_start[i] + 3 and status == 0:
                assistance = str(assist_code[i])
            perfs.append(PerformanceRecord(
                loan_id=lid, period=int(cohort[i] + t - 1), loan_age=t,
                cur_act_upb=float(cur_upb), cur_loan_del=status,
                cur_int_rate=float(rates[i]), cnib_upb=None,
                eltv=float(eltv), zero_bal_code=zbc,
                assistance_code=assistance,
            ))

    panel, _ = join_panel(origs, perfs)
    oracle = SyntheticOracle(
        feature_names=feature_names,
        z=np.asarray(oracle_z) if oracle_z else np.empty((0, len(feature_names))),
        marker=np.asarray(oracle_m),
        default=np.asarray(oracle_y, dtype=np.int64),
        true_intercept=config.base_logit,
        true_coef=tuple(config.hazard_coef[f] for f in feature_names),
        true_marker_coef=config.marker_coef,
    )
    return panel, oracle


def _uniform_z(v: np.ndarray, rng_: tuple[float, float]) -> np.ndarray:
    lo, hi = rng_
    mean = 0.5 * (lo + hi)
    sd = (hi - lo) / math.sqrt(12.0) if hi > lo else 1.0
    return (v - mean) / sd


def _sched(r: float, N: int, upb: float, t: int) -> float:
    if r == 0.0:
        return (1.0 - t / N) * upb
    gN = (1.0 + r) ** N
    return (gN - (1.0 + r) ** t) / (gN - 1.0) * upb
