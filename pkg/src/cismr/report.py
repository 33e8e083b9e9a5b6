"""Human-readable rendering of analysis reports."""

import math

COLUMNS = ("Method", "Estimate", "95% CI", "Q p-value")


def _num(x, digits=3):
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return "-"
    return f"{x:.{digits}f}"


def format_interval(cs, digits=3):
    """``[lo, hi]``; ``NA`` for an empty set, ``-`` when absent.

    Unbounded ends are written as ``-Inf``/``Inf``; a disjoint set is shown as
    its hull with a trailing ``*``.
    """
    if cs is None:
        return "-"
    if cs.get("empty") or not cs.get("intervals"):
        return "NA"
    lo = cs["intervals"][0][0]
    hi = cs["intervals"][-1][1]
    lo_s = "-Inf" if cs.get("unbounded_low") else _num(lo, digits)
    hi_s = "Inf" if cs.get("unbounded_high") else _num(hi, digits)
    mark = "*" if cs.get("disjoint") else ""
    return f"[{lo_s}, {hi_s}]{mark}"


def format_row(record, digits=3):
    """Cells of one table row from a method record."""
    if record.get("error"):
        return [record["method"], "-", "error: " + record["error"]["type"], "-"]
    q = record.get("q")
    q_cell = "-"
    if q and q.get("p_value") is not None:
        q_cell = _num(q["p_value"], digits) + ("+" if q.get("substituted") else "")
    return [record["method"], _num(record.get("estimate"), digits), format_interval(record.get("confidence_set"), digits), q_cell]


def render_table(report, digits=3):
    """Fixed-width table, one row per method, with a short legend."""
    d = report if isinstance(report, dict) else report.to_dict()
    rows = [list(COLUMNS)] + [format_row(r, digits) for r in d["methods"]]
    widths = [max(len(r[i]) for r in rows) for i in range(len(COLUMNS))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    f = d.get("factors", {})
    lines.append("")
    lines.append(f"r = {f.get('r')} factors; alpha = {d['provenance']['config']['alpha']}")
    lines.append("NA: every grid point rejected. *: disjoint set, hull shown. "
                 "+: Q evaluated at the interval midpoint.")
    for r in d["methods"]:
        sel = r.get("selection")
        if sel:
            idx = ", ".join(str(j + 1) for j in sel["selected_indices"])
            lines.append(f"{r['method']}: {sel['r_star']} of {sel['r']} factors selected "
                         f"at delta = {sel['delta']:g} (factors {idx})")
    errors = [r for r in d["methods"] if r.get("error")]
    for r in errors:
        lines.append(f"{r['method']}: {r['error']['type']}: {r['error']['message']}")
    return "\n".join(lines) + "\n"
