"""Figure rendering for the report commands.

Everything draws through the Agg backend so the CLI works headless; each
renderer writes one PNG and returns the path.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from . import perf


def render_mwr_sweep(rows: list[dict], path: str) -> str:
    """Measured write speed against transfer size, with its limit line."""
    sizes = [r["size_bytes"] for r in rows]
    speeds = [r["v_gbps"] for r in rows]
    pl = rows[0]["payload_dw"] if rows else 4
    limit = float(perf.mwr_asymptotic_gbps(pl))
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.semilogx(sizes, speeds, marker="o", base=2, label="measured")
    ax.axhline(limit, linestyle="--", color="tab:red",
               label=f"stream limit {limit:.4f} GB/s")
    ax.set_xlabel("transfer size (bytes)")
    ax.set_ylabel("speed (GB/s)")
    ax.set_title(f"DMA write speed, {4 * pl}-byte payload")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_mrd_sweep(rows: list[dict], path: str) -> str:
    """Measured read speed against payload size, with the datapath bound."""
    payloads = [4 * r["payload_dw"] for r in rows]
    speeds = [r["v_gbps"] for r in rows]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.semilogx(payloads, speeds, marker="o", base=2, label="measured")
    ax.axhline(2.0, linestyle="--", color="tab:red",
               label="datapath bound 2.0 GB/s")
    ax.set_xlabel("payload size (bytes)")
    ax.set_ylabel("speed (GB/s)")
    ax.set_title("DMA read speed against payload size")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_theory(rows: list[dict], path: str) -> str:
    """Link throughput and stream speed against payload size."""
    payloads = [r["payload_bytes"] for r in rows]
    link = [r["link_mbps"] for r in rows]
    stream = [1000.0 * r["v_gbps"] for r in rows]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.semilogx(payloads, link, marker="o", base=2, label="link payload rate")
    ax.semilogx(payloads, stream, marker="s", base=2, label="DMA stream model")
    ax.axhline(2000.0, linestyle="--", color="tab:red",
               label="raw lane rate 2000 MB/s")
    ax.set_xlabel("payload size (bytes)")
    ax.set_ylabel("throughput (MB/s)")
    ax.set_title("Analytic throughput against payload size")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
