"""Render publication-style figures from cdma-lab CSV files.

This package is a pure consumer of the CSV contract published by the
cdma-lab command line tool: the expected headers are pinned verbatim
below, every figure is a derived artifact, and no numeric computation
happens here beyond axis transforms (reciprocals for SNR axes, pivoting a
sweep into a grid).  Each figure kind maps to one builder:

``capacity-vs-snr``
    Capacity bound curve from a replica sweep, optionally overlaid with
    finite-size simulation points and their error bars.
``crs-landscape``
    The capacity surface over the (load, noise power) plane from a replica
    sweep that covers a full grid.  This is the only schema that carries
    the functional's values, so the landscape is over system parameters,
    not over the overlap variable.
``concentration-scaling``
    Log-log mutual-information variance versus user count with a slope -1
    reference line anchored at the first point.
``interpolation-terms``
    The two derivative terms and the remainder versus interpolation time.
``phase-diagram``
    Fixed-point count shaded over the (load, noise power) plane, with the
    uniqueness boundary drawn as a contour when both phases are present.
``universality-gap``
    Per-distribution capacity estimates versus user count with error bars.

Rendering is deterministic for a given input: the style is fixed inside an
rc context, the SVG hash salt is pinned, and no timestamps are written to
either output format.  Every figure embeds the seed recorded in the input
CSV's sidecar manifest in its caption line.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass
from typing import Optional

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

# Pinned copies of the producer's CSV headers (the published contract).
SCHEMAS = {
    "replica": "beta,sigma2,m_star,lambda_star,c_rs_nats,c_rs_bits,n_fixed_points",
    "phase": "beta,sigma2,m_star,lambda_star,c_rs_nats,c_rs_bits,"
             "n_fixed_points,root_count",
    "simulate": "K,N,beta_actual,sigma2,dist,n_matrices,n_noise,"
                "mi_nats_mean,mi_nats_se,ber_mean,ber_se,bound_nats",
    "concentrate": "K,var_mi,var_f,tail_freq_mi,tail_freq_f,epsilon",
    "universality": "K,dist,mi_nats_mean,mi_nats_se",
    "interpolate": "t,u,f_mean,f_se,dfdt_fd,T1_raw,T2_raw,"
                   "T1_reduced,T2_reduced,R,R_se",
}

# Optional columns appended by the producer's --bits flag.
BITS_SUFFIX = {"simulate": ",mi_bits_mean,mi_bits_se"}

KINDS = (
    "capacity-vs-snr",
    "crs-landscape",
    "concentration-scaling",
    "interpolation-terms",
    "phase-diagram",
    "universality-gap",
)

_KIND_SCHEMAS = {
    "capacity-vs-snr": ("replica", "simulate"),
    "crs-landscape": ("replica",),
    "concentration-scaling": ("concentrate",),
    "interpolation-terms": ("interpolate",),
    "phase-diagram": ("phase",),
    "universality-gap": ("universality",),
}

_STRING_COLUMNS = {"dist", "model", "levels"}

_STYLE = {
    "figure.figsize": (6.4, 4.2),
    "figure.dpi": 100,
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.hashsalt": "cdma-lab-plots",
}


class PlotError(Exception):
    """Raised for unusable inputs: bad kind, bad schema, or no data."""


@dataclass(frozen=True)
class FigureSpec:
    """What to draw: a kind, its input CSV path(s), and an output base.

    ``out`` may carry a .png or .svg extension, which is stripped; both
    formats are always written.  ``bits`` switches capacity axes from nats
    to bits where the input carries the bits columns.
    """

    kind: str
    inputs: tuple
    out: str
    bits: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PlotError(
                f"unknown figure kind {self.kind!r}; expected one of "
                + ", ".join(KINDS))
        expected = _KIND_SCHEMAS[self.kind]
        lo = 1
        hi = len(expected)
        if not (lo <= len(self.inputs) <= hi):
            need = " + ".join(expected)
            raise PlotError(
                f"{self.kind} takes {lo}..{hi} input CSVs ({need}); "
                f"got {len(self.inputs)}")

    def out_base(self) -> str:
        root, ext = os.path.splitext(self.out)
        return root if ext.lower() in (".png", ".svg") else self.out


def _read_table(path: str, schema_name: str) -> dict:
    """Load a CSV whose header must match the pinned schema.

    Returns a dict of column name -> numpy array (floats) or list of
    strings, plus ``__bits__`` marking whether the optional bits columns
    were present.  Mismatched headers name the missing/extra columns.
    """
    if not os.path.exists(path):
        raise PlotError(f"input CSV not found: {path}")
    expected = SCHEMAS[schema_name].split(",")
    with_bits = None
    if schema_name in BITS_SUFFIX:
        with_bits = (SCHEMAS[schema_name] + BITS_SUFFIX[schema_name]).split(",")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise PlotError(f"{path}: empty file") from None
        has_bits = with_bits is not None and header == with_bits
        if header != expected and not has_bits:
            missing = [c for c in expected if c not in header]
            extra = [c for c in header if c not in expected]
            raise PlotError(
                f"{path}: header does not match the {schema_name} schema; "
                f"missing columns: {missing or 'none'}; "
                f"extra columns: {extra or 'none'}")
        rows = [row for row in reader if row]
    if not rows:
        raise PlotError(f"{path}: no data rows")
    table: dict = {"__bits__": has_bits}
    for j, name in enumerate(header):
        cells = [row[j] for row in rows]
        if name in _STRING_COLUMNS:
            table[name] = cells
        else:
            table[name] = np.array([float(c) for c in cells])
    return table


def _manifest_seed(path: str) -> str:
    manifest_path = path + ".manifest.json"
    if not os.path.exists(manifest_path):
        return "no manifest"
    with open(manifest_path, encoding="utf-8") as fh:
        seed = json.load(fh).get("seed")
    return "unseeded" if seed is None else f"seed {seed}"


def _caption(inputs) -> str:
    return "; ".join(
        f"{os.path.basename(p)}: {_manifest_seed(p)}" for p in inputs)


def _pivot_grid(table: dict, value_col: str):
    """Arrange a (beta, sigma2) sweep into a full grid or refuse."""
    betas = np.unique(table["beta"])
    sigma2s = np.unique(table["sigma2"])
    if len(table[value_col]) != len(betas) * len(sigma2s):
        raise PlotError(
            "sweep does not cover a full (beta, sigma2) grid: "
            f"{len(table[value_col])} rows for {len(betas)} x {len(sigma2s)}")
    grid = np.full((len(betas), len(sigma2s)), np.nan)
    for b, s, v in zip(table["beta"], table["sigma2"], table[value_col]):
        grid[np.searchsorted(betas, b), np.searchsorted(sigma2s, s)] = v
    if np.any(np.isnan(grid)):
        raise PlotError("sweep repeats some (beta, sigma2) cells and "
                        "misses others; cannot form a grid")
    return betas, sigma2s, grid


def _maybe_log_x(ax, values) -> None:
    if np.min(values) > 0 and np.max(values) / np.min(values) >= 10:
        ax.set_xscale("log")


def _build_capacity_vs_snr(spec: FigureSpec, fig) -> None:
    ax = fig.add_subplot(111)
    replica = _read_table(spec.inputs[0], "replica")
    unit = "bits" if spec.bits else "nats"
    y_col = "c_rs_bits" if spec.bits else "c_rs_nats"
    snr = 1.0 / replica["sigma2"]
    order = np.argsort(snr)
    ax.plot(snr[order], replica[y_col][order], "-",
            label="replica bound")
    if len(spec.inputs) > 1:
        sim = _read_table(spec.inputs[1], "simulate")
        if spec.bits and not sim["__bits__"]:
            raise PlotError(
                f"{spec.inputs[1]}: bits axis requested but the simulate "
                "CSV lacks the mi_bits_mean,mi_bits_se columns")
        col = "mi_bits" if spec.bits else "mi_nats"
        for K in np.unique(sim["K"]):
            mask = sim["K"] == K
            ax.errorbar(1.0 / sim["sigma2"][mask],
                        sim[f"{col}_mean"][mask],
                        yerr=sim[f"{col}_se"][mask],
                        fmt="o", capsize=3, label=f"simulated K={int(K)}")
    _maybe_log_x(ax, snr)
    ax.set_xlabel("signal-to-noise ratio 1/sigma^2")
    ax.set_ylabel(f"capacity ({unit} per user)")
    ax.legend()


def _build_crs_landscape(spec: FigureSpec, fig) -> None:
    ax = fig.add_subplot(111)
    table = _read_table(spec.inputs[0], "replica")
    value_col = "c_rs_bits" if spec.bits else "c_rs_nats"
    unit = "bits" if spec.bits else "nats"
    betas, sigma2s, grid = _pivot_grid(table, value_col)
    mesh = ax.pcolormesh(sigma2s, betas, grid, shading="nearest")
    fig.colorbar(mesh, ax=ax, label=f"capacity bound ({unit} per user)")
    _maybe_log_x(ax, sigma2s)
    ax.set_xlabel("noise power sigma^2")
    ax.set_ylabel("load beta")


def _build_concentration_scaling(spec: FigureSpec, fig) -> None:
    ax = fig.add_subplot(111)
    table = _read_table(spec.inputs[0], "concentrate")
    ks, first = np.unique(table["K"], return_index=True)
    var_mi = table["var_mi"][first]
    ax.loglog(ks, var_mi, "o-", label="var of per-user MI")
    ref = var_mi[0] * (ks[0] / ks)
    ax.loglog(ks, ref, "--", label="slope -1 reference")
    ax.set_xlabel("users K")
    ax.set_ylabel("variance across matrices")
    ax.legend()


def _build_interpolation_terms(spec: FigureSpec, fig) -> None:
    ax = fig.add_subplot(111)
    table = _read_table(spec.inputs[0], "interpolate")
    u0 = table["u"][0]
    mask = table["u"] == u0
    t = table["t"][mask]
    for col, label in (("T1_raw", "T1"), ("T2_raw", "T2"),
                       ("R", "remainder R")):
        ax.plot(t, table[col][mask], "o-", label=label)
    ax.set_xlabel("interpolation time t")
    ax.set_ylabel("derivative terms (nats)")
    ax.set_title(f"u = {u0:g}")
    ax.legend()


def _build_phase_diagram(spec: FigureSpec, fig) -> None:
    ax = fig.add_subplot(111)
    table = _read_table(spec.inputs[0], "phase")
    betas, sigma2s, grid = _pivot_grid(table, "root_count")
    mesh = ax.pcolormesh(sigma2s, betas, grid, shading="nearest",
                         cmap="viridis")
    fig.colorbar(mesh, ax=ax, label="fixed point count")
    if len(np.unique(grid)) > 1 and grid.shape[0] > 1 and grid.shape[1] > 1:
        ax.contour(sigma2s, betas, grid, levels=[2.0], colors="red",
                   linewidths=1.5)
    ax.set_xlabel("noise power sigma^2")
    ax.set_ylabel("load beta")


def _build_universality_gap(spec: FigureSpec, fig) -> None:
    ax = fig.add_subplot(111)
    table = _read_table(spec.inputs[0], "universality")
    dists = list(dict.fromkeys(table["dist"]))
    ks = table["K"]
    for dist in dists:
        mask = np.array([d == dist for d in table["dist"]])
        ax.errorbar(ks[mask], table["mi_nats_mean"][mask],
                    yerr=table["mi_nats_se"][mask],
                    fmt="o-", capsize=3, label=dist)
    ax.set_xlabel("users K")
    ax.set_ylabel("capacity estimate (nats per user)")
    ax.legend()


_BUILDERS = {
    "capacity-vs-snr": _build_capacity_vs_snr,
    "crs-landscape": _build_crs_landscape,
    "concentration-scaling": _build_concentration_scaling,
    "interpolation-terms": _build_interpolation_terms,
    "phase-diagram": _build_phase_diagram,
    "universality-gap": _build_universality_gap,
}


def build_figure(spec: FigureSpec):
    """Build and return the matplotlib Figure for ``spec`` (not saved)."""
    with plt.rc_context(_STYLE):
        fig = plt.figure()
        try:
            _BUILDERS[spec.kind](spec, fig)
            fig.text(0.005, 0.005, _caption(spec.inputs), fontsize=7)
            fig.tight_layout(rect=(0, 0.03, 1, 1))
        except Exception:
            plt.close(fig)
            raise
    return fig


def render(spec: FigureSpec) -> list:
    """Render ``spec`` to <out>.png and <out>.svg; return written paths."""
    fig = build_figure(spec)
    base = spec.out_base()
    written = []
    try:
        with plt.rc_context(_STYLE):
            fig.savefig(base + ".png", dpi=150,
                        metadata={"Software": "cdma-lab-plots"})
            fig.savefig(base + ".svg", metadata={"Date": None})
        written = [base + ".png", base + ".svg"]
    finally:
        plt.close(fig)
    return written
