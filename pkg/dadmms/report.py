"""
Text, JSON and LaTeX rendering of theory and experiment results.
"""

import json
from typing import Iterable, Optional, Sequence

import numpy as np
import sympy as sp

from .checks import CheckResult
from .metrics import ConvergenceSeries, summarize_final
from .theory import TheoryReport, threshold_expression

THEORY_ROWS = (
    ("tau_g", "tau_G"),
    ("tau_f", "tau_f"),
    ("m_f", "m_f"),
    ("M_f", "M_f"),
    ("kappa_star", "kappa*"),
    ("rho_star", "rho*"),
    ("delta_max", "delta_max"),
    ("a", "a"),
    ("b", "b"),
    ("c", "c"),
    ("d", "d"),
    ("e", "e"),
    ("sigma_max_m_plus", "sigma_max(M+)"),
    ("sigma_min_m_minus", "sigma_min(M-)"),
    ("sigma_max_m_minus", "sigma_max(M-)"),
    ("tau_f_threshold", "tau_f threshold"),
    ("margin", "margin"),
)

LATEX_NAMES = {
    "tau_g": r"\tau_G",
    "tau_f": r"\tau_f",
    "m_f": r"m_f",
    "M_f": r"M_f",
    "kappa_star": r"\kappa^*",
    "rho_star": r"\rho^*",
    "delta_max": r"\delta_{\max}",
    "a": "a",
    "b": "b",
    "c": "c",
    "d": "d",
    "e": "e",
    "sigma_max_m_plus": r"\sigma_{\max}(M_+)",
    "sigma_min_m_minus": r"\sigma_{\min}(M_-)",
    "sigma_max_m_minus": r"\sigma_{\max}(M_-)",
    "tau_f_threshold": r"\tau_f^{\star}",
    "margin": r"\text{margin}",
}


def _fmt(value) -> str:
    if value is None:
        return "n/a"
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def latex_matrix(matrix, precision: int = 4) -> str:
    """
    bmatrix environment for a 2-D array; integral entries are written without decimals.

    Example:
        >>> print(latex_matrix([[1, 2], [3, 4]]))
        \\begin{bmatrix} 1 & 2 \\\\ 3 & 4 \\end{bmatrix}
    """
    rows = []
    for row in np.atleast_2d(np.asarray(matrix, dtype=float)):
        cells = [str(int(v)) if v.is_integer() else f"{v:.{precision}g}" for v in row]
        rows.append(" & ".join(cells))
    matrix_body = " \\\\ ".join(rows)
    return f"\\begin{{bmatrix}} {matrix_body} \\end{{bmatrix}}"


def theory_text(report: TheoryReport) -> str:
    """Fixed-width table printed by the ``theory`` command."""
    data = report.as_dict()
    lines = [f"topology: {data['topology']} (N={data['n_agents']})"]
    width = max(len(label) for _, label in THEORY_ROWS)
    for key, label in THEORY_ROWS:
        lines.append(f"{label:<{width}}  {_fmt(data[key])}")
    verdict = "holds" if data["sufficient_condition"] else "does not hold"
    lines.append(f"sufficient condition {verdict}")
    return "\n".join(lines)


def theory_json(report: TheoryReport) -> str:
    return json.dumps(report.as_dict(), indent=2, sort_keys=True)


def theory_latex(report: TheoryReport, laplacian: Optional[np.ndarray] = None) -> str:
    """LaTeX tabular of the theory constants, the symbolic tau_f threshold and optionally L-."""
    data = report.as_dict()
    body = [f"${LATEX_NAMES[key]}$ & {_fmt(data[key])} \\\\" for key, _ in THEORY_ROWS]
    threshold = sp.latex(threshold_expression())
    lines = (
        ["\\begin{tabular}{lr}", "\\hline", "quantity & value \\\\", "\\hline"]
        + body
        + ["\\hline", "\\end{tabular}", "", f"$\\tau_f < {threshold}$"]
    )
    if laplacian is not None:
        lines += ["", f"$L_- = {latex_matrix(laplacian)}$"]
    return "\n".join(lines)


def series_table(series: ConvergenceSeries, columns: Optional[Sequence[str]] = None) -> str:
    """Final value of every metric column, one per line."""
    finals = summarize_final(series)
    keys = list(columns) if columns else sorted(finals)
    width = max((len(k) for k in keys), default=0)
    return "\n".join(f"{k:<{width}}  {_fmt(finals[k])}" for k in keys if k in finals)


def check_table(results: Iterable[CheckResult]) -> str:
    """One line per property check: status, name and worst value."""
    lines = []
    for r in results:
        status = "ok  " if r.passed else "FAIL"
        lines.append(f"{status} {r.name}: {_fmt(r.value)}")
    return "\n".join(lines)
