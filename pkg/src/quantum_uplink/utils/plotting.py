"""
Plotting Utilities
Render the aperture sweep and the feasibility grid from their CSV tables.
"""

from pathlib import Path
from typing import Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from .logger import get_logger  # noqa: E402

logger = get_logger(__name__)

PathLike = Union[str, Path]


def plot_aperture_sweep(df: pd.DataFrame, output_path: PathLike) -> Path:
    """Attenuation versus transmitter aperture, SNR per background on the right axis."""
    fig, ax = plt.subplots(figsize=(8, 5))
    ax.plot(df["D_T_m"], df["total_db"], color="black", label="total attenuation")
    ax.plot(df["D_T_m"], df["geometric_db"], color="gray", linestyle="--", label="geometric")
    ax.set_xlabel("Transmitter aperture D_T (m)")
    ax.set_ylabel("Attenuation (dB)")
    ax.grid(alpha=0.3)

    snr_columns = [c for c in df.columns if c.startswith("snr_")]
    if snr_columns:
        right = ax.twinx()
        for column in snr_columns:
            right.plot(df["D_T_m"], df[column], label=column.replace("snr_", "SNR "))
        right.set_ylabel("Coincidence SNR")
        right.legend(loc="upper right")
    ax.legend(loc="upper left")
    fig.suptitle("Uplink attenuation versus transmitter aperture")
    return _save(fig, output_path)


def plot_feasibility(df: pd.DataFrame, output_path: PathLike) -> Path:
    """SNR and key rate versus attenuation, one curve per background level."""
    fig, axes = plt.subplots(1, 2, figsize=(13, 5))
    for background, group in df.groupby("background_cps"):
        label = f"{background:g} cps"
        axes[0].semilogy(group["attenuation_db"], group["snr"], label=label)
        positive = group[group["key_rate_cps"] > 0]
        axes[1].semilogy(positive["attenuation_db"], positive["key_rate_cps"], label=label)

    axes[0].axhline(2.0 / (2.0**0.5 - 1.0), color="red", linestyle=":", label="CHSH limit")
    axes[0].set_title("Bell coincidence SNR")
    axes[1].set_title("Decoy-state key rate")
    axes[0].set_ylabel("SNR")
    axes[1].set_ylabel("Secret key rate (bit/s)")
    for ax in axes:
        ax.set_xlabel("Attenuation (dB)")
        ax.grid(alpha=0.3, which="both")
        ax.legend()
    return _save(fig, output_path)


def _save(fig, output_path: PathLike) -> Path:
    output_path = Path(output_path)
    fig.tight_layout()
    fig.savefig(output_path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    logger.info("Figure saved to %s", output_path)
    return output_path
