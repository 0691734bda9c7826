"""Static SVG figures of a pipeline run, each with a CSV twin of its data."""

from __future__ import annotations

import json
import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .characterization.idm import PARAM_NAMES  # noqa: E402

log = logging.getLogger(__name__)

UNITS = {"s0": "m", "v0": "m/s", "T": "s", "a": "m/s²", "b": "m/s²"}

_RC = {"svg.hashsalt": "drivesense", "svg.fonttype": "path", "figure.figsize": (6.4, 3.6)}


def _save(fig, path: Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def _rel_seconds(times_us, t0_us: int) -> list[float]:
    return [(t - t0_us) * 1e-6 for t in times_us]


def emit_plots(report: dict | str | Path, out_dir: str | Path) -> dict:
    """Write parameter, physiology and correlation plots for a run report.

    ``report`` is the report dict or a path to ``report.json``. Returns
    ``{"written": [paths], "notices": [messages]}``; plots without data are
    skipped with a notice instead of producing empty figures.
    """
    if not isinstance(report, dict):
        report = json.loads(Path(report).read_text())
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    notices: list[str] = []
    windows = report.get("windows") or []
    phys = report.get("physiology")
    corr = report.get("correlation")

    with plt.rc_context(_RC):
        if not windows:
            notices.append("no estimation windows: parameter and overlay plots skipped")
        else:
            t0 = windows[0]["t_center_us"]
            t = _rel_seconds([w["t_center_us"] for w in windows], t0)
            for name in PARAM_NAMES:
                vals = [w["params"][name] for w in windows]
                csv_path = out / f"param_{name}.csv"
                csv_path.write_text(
                    f"t_center_us,{name}\n" + "".join(f"{w['t_center_us']},{v:.9g}\n" for w, v in zip(windows, vals))
                )
                fig, ax = plt.subplots()
                ax.plot(t, vals, marker="o")
                ax.set_xlabel("time since first window centre (s)")
                ax.set_ylabel(f"{name} ({UNITS[name]})")
                ax.grid(alpha=0.3)
                svg_path = out / f"param_{name}.svg"
                _save(fig, svg_path)
                written += [svg_path, csv_path]

            if not phys or not phys.get("times_us"):
                notices.append("no physiology series: overlay skipped")
            else:
                pt = _rel_seconds(phys["times_us"], t0)
                csv_path = out / "physiology_overlay.csv"
                lines = ["series,timestamp_us,value"]
                lines += [f"physiology,{ts},{v:.9g}" for ts, v in zip(phys["times_us"], phys["values"])]
                for name in PARAM_NAMES:
                    lines += [f"{name},{w['t_center_us']},{w['params'][name]:.9g}" for w in windows]
                csv_path.write_text("\n".join(lines) + "\n")
                fig, ax = plt.subplots()
                ax.plot(pt, phys["values"], color="black", lw=1, label="physiology")
                ax.set_xlabel("time since first window centre (s)")
                ax.set_ylabel("physiology")
                ax2 = ax.twinx()
                for name in PARAM_NAMES:
                    vals = [w["params"][name] for w in windows]
                    lo, hi = min(vals), max(vals)
                    scaled = [0.5 if hi == lo else (v - lo) / (hi - lo) for v in vals]
                    ax2.plot(t, scaled, marker=".", lw=1, label=name)
                ax2.set_ylabel("parameter (min-max scaled)")
                fig.legend(loc="upper right", fontsize="small")
                svg_path = out / "physiology_overlay.svg"
                _save(fig, svg_path)
                written += [svg_path, csv_path]

        if not corr:
            notices.append("no correlation results: bar chart skipped")
        else:
            names = list(corr)
            vals = [corr[n] for n in names]
            csv_path = out / "correlation.csv"
            csv_path.write_text("param,r\n" + "".join(f"{n},{'' if v is None else f'{v:.9f}'}\n" for n, v in zip(names, vals)))
            fig, ax = plt.subplots()
            ax.bar(names, [0.0 if v is None else v for v in vals])
            for i, v in enumerate(vals):
                if v is None:
                    ax.text(i, 0.0, "n/a", ha="center", va="bottom", fontsize="small")
            ax.axhline(0.0, color="black", lw=0.8)
            ax.set_ylim(-1.05, 1.05)
            ax.set_ylabel("Pearson r")
            svg_path = out / "correlation.svg"
            _save(fig, svg_path)
            written += [svg_path, csv_path]

    for msg in notices:
        log.warning("%s", msg)
    return {"written": written, "notices": notices}
