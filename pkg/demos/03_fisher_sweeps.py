"""CRLB and ellipse-area sweeps over the weight for the three light states."""

import sys

from retinaprobe.scenario import preset, resolve, run

names = sys.argv[1:] or ["fig4a", "fig4b", "fig7a", "fig11"]

for name in names:
    raw = preset(name)
    raw["sweep"] = {"start": 0.1, "stop": 1.0, "points": 10}
    table = run(resolve(raw))
    print(f"\n{name}: {table.scenario.config['figure']}")
    series = table.series()
    ws = series["fock"][0]
    print("   w    " + "  ".join(f"{k:>10s}" for k in series))
    for i, w in enumerate(ws):
        print(f"{w:6.3f}  " + "  ".join(f"{series[k][1][i]:10.4g}" for k in series))

    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(5, 3.5))
        for k, (x, y) in series.items():
            ax.plot(x, y, marker=".", label=k)
        ax.set_xlabel("w")
        ax.set_ylabel(table.rows[0].metric_kind)
        ax.set_title(name)
        ax.legend()
        fig.tight_layout()
        fig.savefig(f"{name}.png", dpi=120)
    except ImportError:
        pass
