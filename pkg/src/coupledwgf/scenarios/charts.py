"""Static SVG charts with deterministic bytes (fixed hash salt, no date metadata)."""

from __future__ import annotations

from pathlib import Path
from typing import List, Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..measures import DiracState, GridDensity, ParticleEnsemble, histogram2d  # noqa: E402
from ..trajectory import Trajectory  # noqa: E402

_RC = {"svg.hashsalt": "coupledwgf", "svg.fonttype": "path", "figure.max_open_warning": 0}


def _save(fig, path: Path) -> Path:
    try:
        fig.savefig(path, format="svg", metadata={"Date": None})
    except OSError as exc:
        raise OSError(f"cannot write chart {path}: {exc}") from exc
    finally:
        plt.close(fig)
    return path


def rate_chart(traj: Trajectory, summary: dict, path: Path) -> Path:
    """Log-scale decay of the fitted channels with the fitted line."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 4))
        fit = summary.get("fit")
        channels = [fit["channel"]] if fit else []
        channels += [k[len("rate_"):] for k in summary.get("metrics", {}) if k.startswith("rate_")]
        for ch in channels:
            t, v = traj.series(ch)
            ok = v > 0
            if np.any(ok):
                ax.semilogy(t[ok], v[ok], label=ch)
        if fit:
            t, _ = traj.series(fit["channel"])
            lo, hi = fit["window"]
            tt = t[(t >= lo) & (t <= hi)]
            if tt.size:
                ax.semilogy(tt, np.exp(fit["intercept"] - fit["rate"] * tt), "k--",
                            label=f"fit rate {fit['rate']:.4g}")
        ax.set_xlabel("t")
        ax.set_title(summary.get("name", ""))
        if channels:
            ax.legend()
        return _save(fig, path)


def density_chart(traj: Trajectory, path: Path, reference: Optional[dict] = None, n_curves: int = 6) -> Path:
    """ρ snapshots over z for 1D runs; a 2D histogram of the final ensemble in 2D."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 4))
        snaps = traj.snapshots
        if snaps:
            idx = np.unique(np.linspace(0, len(snaps) - 1, n_curves).round().astype(int))
            for k in idx:
                s = snaps[k]
                r = s.rho
                if isinstance(r, GridDensity):
                    ax.plot(r.centers, r.values, label=f"t={s.time:.3g}")
                elif isinstance(r, ParticleEnsemble) and r.dim == 1:
                    ax.hist(r.points[:, 0], bins=60, density=True, histtype="step", label=f"t={s.time:.3g}")
            last = snaps[-1].rho
            if isinstance(last, ParticleEnsemble) and last.dim == 2:
                ax.cla()
                both = np.vstack([snaps[0].rho.points, last.points])
                bounds = list(zip(both.min(axis=0), both.max(axis=0)))
                vals, xe, ye = histogram2d(last, bounds, 40)
                mesh = ax.pcolormesh(xe, ye, vals.T, cmap="viridis")
                fig.colorbar(mesh, ax=ax, label="final density")
                ax.set_ylabel("z_2")
                mu = snaps[-1].mu
                if isinstance(mu, DiracState):
                    ax.plot(*mu.point, "k*", ms=12, label="classifier")
            if reference and isinstance(reference.get("rho"), GridDensity):
                g = reference["rho"]
                ax.plot(g.centers, g.values, "k--", label="reference")
            if ax.has_data():
                ax.legend(fontsize=7)
        ax.set_xlabel("z")
        return _save(fig, path)


def loss_chart(traj: Trajectory, path: Path, others: Optional[dict] = None) -> Path:
    """Classifier loss against time; ``others`` maps labels to extra trajectories."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 4))
        series = {"this run": traj}
        series.update(others or {})
        for label, tr in series.items():
            t, v = tr.series("classifier_loss")
            if t.size:
                ax.plot(t, v, label=label)
        ax.set_xlabel("t")
        ax.set_ylabel("classifier loss")
        if ax.has_data():
            ax.legend()
        return _save(fig, path)


def emit_charts(traj: Trajectory, summary: dict, out_dir, reference: Optional[dict] = None) -> List[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = [rate_chart(traj, summary, out / "rates.svg"),
             density_chart(traj, out / "density.svg", reference)]
    if "classifier_loss" in traj.diagnostics:
        files.append(loss_chart(traj, out / "loss.svg"))
    return files
