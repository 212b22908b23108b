import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd

# ---------- Plot config ----------

CURVES = {
    "mat": "MAT",
    "su": "SU",
    "tsm1": "TSM (fixed topology, delayed CSIT)",
    "tsm2": "TSM (alternating topology, delayed CSIT)",
}


def load_fig3(path) -> pd.DataFrame:
    """Reads the CSV written by `python -m topobc.run sweep-fig3`; manifest lines are comments."""
    return pd.read_csv(path, comment="#")


def plot_fig3(df: pd.DataFrame, out_path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))

    for col, label in CURVES.items():
        if col in df.columns:
            ax.plot(df["alpha"], df[col], label=label)
        # measured slopes, when the sweep ran with --simulated
        if f"{col}_sim" in df.columns:
            ax.plot(df["alpha"], df[f"{col}_sim"], "o", markersize=3)

    ax.set_xlabel("alpha")
    ax.set_ylabel("sum GDoF")
    ax.set_xlim(0, 1)
    ax.grid(True)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


if __name__ == "__main__":
    if len(sys.argv) != 3:
        print("usage: python research/plot_fig3.py <fig3.csv> <out.png>")
        sys.exit(2)
    plot_fig3(load_fig3(sys.argv[1]), sys.argv[2])
