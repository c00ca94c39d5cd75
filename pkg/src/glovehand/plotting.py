"""PNG figures for the CLI outputs.  Uses the non-interactive Agg backend."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def plot_glove_trace(t, values, names, path) -> Path:
    fig, ax = plt.subplots(figsize=(8, 4))
    for j, name in enumerate(names):
        ax.plot(t, values[:, j], lw=0.8, label=name)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("joint angle [deg]")
    ax.legend(ncol=4, fontsize=7)
    return _save(fig, path)


def plot_intent(t, dtheta, path, truth=None) -> Path:
    fig, ax = plt.subplots(figsize=(8, 3.5))
    for j, axis in enumerate("xyz"):
        ax.plot(t, np.rad2deg(dtheta[:, j]), label=f"estimate {axis}")
        if truth is not None:
            ax.plot(t, np.rad2deg(truth[:, j]), "--", lw=0.8, label=f"truth {axis}")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("rotation intent [deg]")
    ax.legend(fontsize=7)
    return _save(fig, path)


def plot_pca(eigenvalues, explained_ratio, path) -> Path:
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 3.5))
    idx = np.arange(1, len(eigenvalues) + 1)
    a1.bar(idx, eigenvalues)
    a1.set_xlabel("component")
    a1.set_ylabel("eigenvalue [deg^2]")
    a2.plot(idx, np.cumsum(explained_ratio), "o-")
    a2.axhline(0.95, color="grey", ls=":")
    a2.set_ylim(0, 1.05)
    a2.set_xlabel("components kept")
    a2.set_ylabel("cumulative explained variance")
    return _save(fig, path)


def plot_loss(train_loss, val_loss, path, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ep = np.arange(len(train_loss))
    ax.semilogy(ep, train_loss, label="train")
    if val_loss is not None and len(val_loss):
        ax.semilogy(ep, val_loss, label="validation")
    ax.set_xlabel("epoch")
    ax.set_ylabel("MSE [deg^2]")
    ax.set_title(title)
    ax.legend()
    return _save(fig, path)


def plot_prediction(t, signal, t_pred, pred, path, truth=None) -> Path:
    fig, ax = plt.subplots(figsize=(8, 3.5))
    ax.plot(t, signal, label="intent")
    if truth is not None:
        ax.plot(t, truth, ":", label="truth")
    ax.plot(t_pred, pred, label="prediction (at issue time)")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("angle [deg]")
    ax.legend()
    return _save(fig, path)


def plot_trajectory(t, q, tau, rotvec, path, goal_t=None, goal_rotvec=None) -> Path:
    fig, axes = plt.subplots(3, 1, figsize=(8, 7), sharex=True)
    axes[0].plot(t, np.rad2deg(q), lw=0.7)
    axes[0].set_ylabel("q [deg]")
    axes[1].plot(t, tau, lw=0.7)
    axes[1].set_ylabel("tau [N m]")
    for j, axis in enumerate("xyz"):
        axes[2].plot(t, np.rad2deg(rotvec[:, j]), label=axis)
        if goal_t is not None:
            axes[2].step(goal_t, np.rad2deg(goal_rotvec[:, j]), "--", where="post", lw=0.7)
    axes[2].set_ylabel("object rotation [deg]")
    axes[2].set_xlabel("time [s]")
    axes[2].legend(fontsize=7)
    return _save(fig, path)


def plot_pipeline(t, intent, command, obj, path, axis: int = 2) -> Path:
    fig, ax = plt.subplots(figsize=(8, 3.5))
    ax.plot(t, np.rad2deg(intent[:, axis]), label="intent")
    ax.plot(t, np.rad2deg(command[:, axis]), label="command")
    ax.plot(t, np.rad2deg(obj[:, axis]), label="object")
    ax.set_xlabel("time [s]")
    ax.set_ylabel(f"rotation about {'xyz'[axis]} [deg]")
    ax.legend()
    return _save(fig, path)
