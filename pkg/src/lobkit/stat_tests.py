"""CLT statistics for the price/inventory covariation, confidence intervals,
the windowed rejection procedure and the summary table."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.special import ndtr, ndtri

from .diffusion.simulate import PathBundle
from .sfe_discrete import validate
from .trade_tape import TradeClockSeries

__all__ = [
    "CovariationTestReport",
    "ReportRow",
    "ReportTable",
    "clt_stats",
    "ci",
    "window_rejection",
    "reject_null",
    "report_row",
    "report_table",
    "parse_report_csv",
    "REPORT_COLUMNS",
    "WINDOW",
]

WINDOW = 100
REPORT_COLUMNS = ("stock", "proba reject", "nb false", "nb trades", "percent false", "recovery rejection")


def _v_terms(dp: np.ndarray, dL: np.ndarray) -> np.ndarray:
    """Summands ``(dp_n dL_{n+1})^2 + dp_n dL_n dp_{n+1} dL_{n+1}``, n = 0..K-2."""
    return (dp[:-1] * dL[1:]) ** 2 + dp[:-1] * dL[:-1] * dp[1:] * dL[1:]


def clt_stats(p, L, N: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Cumulative ``C^N`` and ``V^N`` paths (length = number of observations).

    ``C[k] = sum_{n<k} dp_n dL_n``; ``V[k] = N sum_{n+1<k} (...)`` uses the
    adjacent pair ``(n, n+1)``.  ``N`` defaults to the number of increments,
    i.e. the observations span unit time.
    """
    p = np.asarray(p, dtype=float)
    L = np.asarray(L, dtype=float)
    if p.shape != L.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {L.shape}")
    if p.ndim != 1 or p.size < 3:
        raise ValueError("need one-dimensional paths with at least 3 observations")
    dp, dL = np.diff(p), np.diff(L)
    N = dp.size if N is None else N
    C = np.concatenate([[0.0], np.cumsum(dp * dL)])
    V = np.concatenate([[0.0, 0.0], N * np.cumsum(_v_terms(dp, dL))])
    return C, V


def ci(C, V, N: int, q: float = 0.95):
    """``C +- z_{(1+q)/2} sqrt(|V| / N)``."""
    if not 0 < q < 1:
        raise ValueError("level must lie in (0, 1)")
    z = float(ndtri((1 + q) / 2))
    half = z * np.sqrt(np.abs(np.asarray(V, dtype=float)) / N)
    C = np.asarray(C, dtype=float)
    return C - half, C + half


def window_rejection(C: float, V: float) -> float:
    """``P(true covariation <= 0)`` under ``N(C, |V|/N)``; ``V`` is the window
    sum already multiplied by ``N``, so pass ``sum`` directly and N cancels."""
    se = math.sqrt(abs(V))
    if se == 0:
        return 1.0 if C < 0 else (0.0 if C > 0 else 0.5)
    return float(ndtr(-C / se))


@dataclass
class CovariationTestReport:
    C_path: np.ndarray
    V_path: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    level: float
    window: int
    window_rejections: np.ndarray
    overall_rejection: float
    min_window_rejection: float
    n_trades: int
    impact_violations: int
    recovery_violations: int
    N: int
    extra: dict = field(default_factory=dict)

    @property
    def percent_false(self) -> float:
        return 100.0 * self.impact_violations / self.n_trades if self.n_trades else 0.0

    @property
    def recovery_rejection(self) -> float:
        return 100.0 * self.recovery_violations / self.n_trades if self.n_trades else 0.0

    def to_dict(self, paths: bool = True) -> dict:
        d = {
            "level": self.level,
            "window": self.window,
            "N": self.N,
            "n_windows": int(self.window_rejections.size),
            "window_rejections": self.window_rejections.tolist(),
            "overall_rejection": self.overall_rejection,
            "min_window_rejection": self.min_window_rejection,
            "n_trades": self.n_trades,
            "impact_violations": self.impact_violations,
            "recovery_violations": self.recovery_violations,
            "percent_false": self.percent_false,
            "recovery_rejection": self.recovery_rejection,
            "C_final": float(self.C_path[-1]),
            "V_final": float(self.V_path[-1]),
            "ci_final": [float(self.ci_lower[-1]), float(self.ci_upper[-1])],
        }
        if paths:
            d.update(C_path=self.C_path.tolist(), V_path=self.V_path.tolist(),
                     ci_lower=self.ci_lower.tolist(), ci_upper=self.ci_upper.tolist())
        return d


def _extract(data, path: int):
    """``(p, L, N, impact_violations, recovery_violations)``."""
    if isinstance(data, TradeClockSeries):
        v = validate(data)  # exact half-tick comparisons
        L = np.concatenate([[0.0], np.cumsum(data.dL.astype(float))])
        return data.p, L, len(data), v.impact_violations, v.recovery_violations
    if isinstance(data, PathBundle):
        p, L = data.p[path], data.L[path]
        dp, dL = np.diff(p), np.diff(L)
        impact = int(np.sum(dp * dL > 0))
        recovery = int(np.sum(np.abs(dp) > data.s_N[:-1]))
        return p, L, data.N, impact, recovery
    raise TypeError(f"unsupported input {type(data).__name__}")


def reject_null(data, window: int = WINDOW, level: float = 0.95, path: int = 0) -> CovariationTestReport:
    """Windowed test of ``rho_t > 0``: one rejection probability per full window of
    ``window`` increments (a trailing partial window is dropped), multiplied.

    Accepts a :class:`TradeClockSeries` (unit time spans the tape) or one path
    of a :class:`PathBundle`.
    """
    p, L, N, impact, recovery = _extract(data, path)
    dp, dL = np.diff(p), np.diff(L)
    K = dp.size
    if K < window:
        raise ValueError(f"need at least one full window of {window} increments, got {K}")
    C, V = clt_stats(p, L, N)
    lo, hi = ci(C, V, N, level)
    n_win = K // window
    probs = np.empty(n_win)
    for k in range(n_win):
        a, b = k * window, (k + 1) * window
        c_k = float(np.sum(dp[a:b] * dL[a:b]))
        v_k = float(np.sum(_v_terms(dp[a:b], dL[a:b])))
        probs[k] = window_rejection(c_k, v_k)
    return CovariationTestReport(C, V, lo, hi, level, window, probs, float(np.prod(probs)),
                                 float(np.min(probs)), K, impact, recovery, N)


# -- summary table ------------------------------------------------------------------


@dataclass(frozen=True)
class ReportRow:
    stock: str
    proba_reject: float
    nb_false: int
    nb_trades: int
    percent_false: float
    recovery_rejection: float

    def cells(self) -> list[str]:
        return [self.stock, f"{self.proba_reject:.7f}", str(self.nb_false), str(self.nb_trades),
                f"{self.percent_false:.7g}", f"{self.recovery_rejection:.6f}"]


def report_row(name: str, report: CovariationTestReport) -> ReportRow:
    """Row rounded to the table's printed precision."""
    r = ReportRow(name, report.overall_rejection, report.impact_violations, report.n_trades,
                  report.percent_false, report.recovery_rejection)
    return _parse_cells(r.cells())


def _parse_cells(cells: Sequence[str]) -> ReportRow:
    if len(cells) != len(REPORT_COLUMNS):
        raise ValueError(f"expected {len(REPORT_COLUMNS)} columns, got {len(cells)}")
    return ReportRow(cells[0], float(cells[1]), int(cells[2]), int(cells[3]), float(cells[4]), float(cells[5]))


@dataclass
class ReportTable:
    rows: list[ReportRow]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in self.rows:
            w.writerow(r.cells())
        return buf.getvalue()

    def to_text(self) -> str:
        body = [list(REPORT_COLUMNS)] + [r.cells() for r in self.rows]
        widths = [max(len(row[i]) for row in body) for i in range(len(REPORT_COLUMNS))]
        lines = []
        for row in body:
            lines.append("  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths))))
        return "\n".join(lines) + "\n"


def report_table(entries: Iterable[tuple[str, CovariationTestReport | ReportRow]]) -> ReportTable:
    rows = []
    for name, rep in entries:
        if isinstance(rep, ReportRow):
            rows.append(_parse_cells([name] + rep.cells()[1:]))
        else:
            rows.append(report_row(name, rep))
    return ReportTable(rows)


def parse_report_csv(text: str) -> ReportTable:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != REPORT_COLUMNS:
        raise ValueError("missing or unexpected report header")
    return ReportTable([_parse_cells(r) for r in rows[1:]])
