"""Static HTML evaluation reports.

A report is a single self-contained HTML file: summary metrics, a per-class
table, and one inline SVG precision-recall plot per class. No scripts, no
external assets, no timestamps, so identical results always render to
byte-identical files.
"""

from __future__ import annotations

from pathlib import Path

__all__ = ["render_report", "write_report"]

_STYLE = """
body { font-family: sans-serif; margin: 2em; color: #222; }
h1 { font-size: 1.4em; }
table { border-collapse: collapse; margin: 1em 0; }
th, td { border: 1px solid #999; padding: 0.3em 0.8em; text-align: right; }
th { background: #eee; }
.warn { color: #a40000; }
.curves { display: flex; flex-wrap: wrap; gap: 1em; }
figure { margin: 0; }
figcaption { text-align: center; font-size: 0.9em; }
"""


def _svg_pr_curve(recall: list[float], precision: list[float]) -> str:
    """Render one PR curve as a small inline SVG."""
    w, h, pad = 220, 170, 30
    span_x, span_y = w - 2 * pad, h - 2 * pad

    def px(r: float) -> float:
        return pad + r * span_x

    def py(p: float) -> float:
        return h - pad - p * span_y

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
        f'viewBox="0 0 {w} {h}">',
        f'<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>',
        f'<line x1="{pad}" y1="{h - pad}" x2="{w - pad}" y2="{h - pad}" '
        f'stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{h - pad}" stroke="black"/>',
        f'<text x="{w / 2:.0f}" y="{h - 6}" font-size="10" '
        f'text-anchor="middle">recall</text>',
        f'<text x="10" y="{h / 2:.0f}" font-size="10" text-anchor="middle" '
        f'transform="rotate(-90 10 {h / 2:.0f})">precision</text>',
    ]
    for frac in (0.0, 0.5, 1.0):
        parts.append(
            f'<text x="{px(frac):.1f}" y="{h - pad + 12}" font-size="8" '
            f'text-anchor="middle">{frac:g}</text>'
        )
        parts.append(
            f'<text x="{pad - 4}" y="{py(frac) + 3:.1f}" font-size="8" '
            f'text-anchor="end">{frac:g}</text>'
        )
    if recall:
        pts = [(0.0, precision[0])] + list(zip(recall, precision))
        coords = " ".join(f"{px(r):.2f},{py(p):.2f}" for r, p in pts)
        parts.append(
            f'<polyline points="{coords}" fill="none" stroke="#0b61a4" '
            f'stroke-width="1.5"/>'
        )
    else:
        parts.append(
            f'<text x="{w / 2:.0f}" y="{h / 2:.0f}" font-size="9" '
            f'text-anchor="middle">no detections</text>'
        )
    parts.append("</svg>")
    return "".join(parts)


def render_report(results: dict, title: str = "Detection evaluation") -> str:
    """Build the report HTML from a results dict (see store.results_to_dict)."""
    classes = [str(c) for c in results.get("classes", [])]
    per_ap = results.get("per_class_ap", {})
    per_rmse = results.get("per_class_rmse", {})
    curves = results.get("pr_curves", {})
    rows = []
    for c in classes:
        rows.append(
            f"<tr><td>{c}</td><td>{per_ap.get(c, 0.0) * 100:.2f}</td>"
            f"<td>{per_rmse.get(c, 0.0):.4f}</td></tr>"
        )
    figures = []
    for c in classes:
        curve = curves.get(c, {})
        svg = _svg_pr_curve(curve.get("recall", []), curve.get("precision", []))
        figures.append(
            f"<figure>{svg}<figcaption>class {c} "
            f"(AP {per_ap.get(c, 0.0) * 100:.2f}%)</figcaption></figure>"
        )
    warnings = results.get("warnings", [])
    warning_html = ""
    if warnings:
        items = "".join(f"<li>{w}</li>" for w in warnings)
        warning_html = f'<h2 class="warn">Warnings</h2><ul class="warn">{items}</ul>'
    return f"""<!DOCTYPE html>
<html>
<head>
<meta charset="utf-8"/>
<title>{title}</title>
<style>{_STYLE}</style>
</head>
<body>
<h1>{title}</h1>
<p><b>mAP:</b> {results.get("map", 0.0) * 100:.2f}% &nbsp;
<b>mean column-wise RMSE:</b> {results.get("mean_rmse", 0.0):.4f} &nbsp;
<b>images:</b> {results.get("num_images", 0)}</p>
{warning_html}
<h2>Per-class metrics</h2>
<table>
<tr><th>class</th><th>AP %</th><th>count RMSE</th></tr>
{"".join(rows)}
</table>
<h2>Precision-recall curves</h2>
<div class="curves">
{"".join(figures)}
</div>
</body>
</html>
"""


def write_report(path: str | Path, results: dict, title: str = "Detection evaluation") -> None:
    Path(path).write_text(render_report(results, title=title), encoding="utf-8")
