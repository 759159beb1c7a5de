"""Truncated Dirichlet-process mixture of products of multinomials.

Blocked Gibbs sampler over (eta, V, pi, phi, alpha) with a stick-breaking
prior truncated at F classes, and partial synthesis from saved draws.
Full conditionals used by :func:`gibbs_sweep`:

    eta_i      ~ Cat(pi_f * prod_k phi_f[k][y_ik])
    V_f        ~ Beta(1 + n_f, alpha + sum_{l>f} n_l),   f < F;  V_F = 1
    phi_f[k]   ~ Dirichlet(a_k + counts of y_.k within class f)
    alpha      ~ Gamma(a_alpha + F - 1, rate = b_alpha - sum_{f<F} log(1 - V_f))

Between the eta draw and the parameter draws, Metropolis-Hastings moves
swap the labels of two classes, scored by p(eta | alpha) with V integrated
out. The truncated stick-breaking prior is not label-exchangeable, and plain
Gibbs updates almost never move a large class to an earlier label, which
leaves empty labels with inflated weight and keeps spurious small classes
alive. The swap moves leave the posterior unchanged.

Class labels are 0-based in code (0..F-1).
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from .data_model import (
    Dataset,
    SyntheticRelease,
    concat_geocode_as_categorical,
    decode_geocode_categorical,
)
from .diagnostics import autocorrelation, geweke_z, heidelberger_welch

log = logging.getLogger(__name__)

_V_MAX = 1.0 - 1e-12


@dataclass(frozen=True)
class DpmpmConfig:
    F: int = 100
    a_alpha: float = 0.25
    b_alpha: float = 0.25
    dirichlet_a: float = 1.0
    iterations: int = 10_000
    burn_in: int = 5_000
    thin: int = 10
    acf_threshold: float = 0.2
    escalation_thin: int = 50
    label_swaps: int = 20  # MH label-swap proposals per sweep

    def __post_init__(self):
        if self.F < 1:
            raise ValueError("F must be >= 1")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("need 0 <= burn_in < iterations")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.label_swaps < 0:
            raise ValueError("label_swaps must be >= 0")

    @property
    def n_saved(self) -> int:
        return (self.iterations - self.burn_in) // self.thin


@dataclass
class DpmpmState:
    eta: np.ndarray
    V: np.ndarray
    pi: np.ndarray
    alpha: float
    phi: list[np.ndarray]  # per variable, (F, d_k)

    @property
    def F(self) -> int:
        return self.V.size

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.eta, minlength=self.F)

    def occupied(self) -> int:
        return int(np.unique(self.eta).size)

    def check(self) -> None:
        assert abs(self.pi.sum() - 1.0) < 1e-10
        assert all(np.all(np.abs(p.sum(axis=1) - 1.0) < 1e-10) for p in self.phi)
        assert self.alpha > 0
        assert self.eta.min() >= 0 and self.eta.max() < self.F


@dataclass
class ChainTrace:
    iterations: list[int] = field(default_factory=list)
    alpha_draws: list[float] = field(default_factory=list)
    occupied_classes: list[int] = field(default_factory=list)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "alpha", "occupied_classes"])
            for row in zip(self.iterations, self.alpha_draws, self.occupied_classes):
                w.writerow([row[0], repr(float(row[1])), row[2]])


@dataclass
class Snapshot:
    """Parameters saved at one thinned iteration."""

    iteration: int
    pi: np.ndarray
    alpha: float
    phi: list[np.ndarray] | None


def stick_breaking_weights(V) -> np.ndarray:
    V = np.asarray(V, dtype=np.float64)
    if V.size == 0 or V[-1] != 1.0:
        raise ValueError("last stick fraction must equal 1")
    if np.any((V < 0) | (V > 1)):
        raise ValueError("stick fractions must lie in [0, 1]")
    left = np.concatenate(([1.0], np.cumprod(1.0 - V[:-1])))
    return V * left


def _dirichlet_rows(shape: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_gamma(shape)
    s = g.sum(axis=1, keepdims=True)
    # all-underflow rows only happen with tiny shapes; fall back to the mean
    bad = s[:, 0] <= 0
    if np.any(bad):
        g[bad] = shape[bad]
        s[bad] = shape[bad].sum(axis=1, keepdims=True)
    return g / s


def _categorical_columns(logp: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One draw per column from unnormalised log-probabilities (classes x records)."""
    p = np.exp(logp - logp.max(axis=0))
    np.cumsum(p, axis=0, out=p)
    u = rng.random(p.shape[1]) * p[-1]
    return np.minimum((p < u).sum(axis=0), p.shape[0] - 1)


def _update_params(state_eta: np.ndarray, alpha: float, Y: np.ndarray, d: Sequence[int], cfg: DpmpmConfig, rng):
    """Steps (ii)-(v) given class labels."""
    F = cfg.F
    n_f = np.bincount(state_eta, minlength=F)
    tail = np.concatenate((np.cumsum(n_f[::-1])[::-1][1:], [0]))
    V = np.ones(F)
    if F > 1:
        V[:-1] = rng.beta(1.0 + n_f[:-1], alpha + tail[:-1])
    pi = stick_breaking_weights(V)
    phi = []
    for k, dk in enumerate(d):
        counts = np.bincount(state_eta * dk + Y[:, k], minlength=F * dk).reshape(F, dk)
        phi.append(_dirichlet_rows(cfg.dirichlet_a + counts, rng))
    Vc = np.minimum(V[:-1], _V_MAX)
    rate = cfg.b_alpha - np.sum(np.log1p(-Vc))
    shape = cfg.a_alpha + F - 1
    alpha = float(rng.gamma(shape, 1.0 / rate)) if shape > 0 else float(alpha)
    alpha = max(alpha, np.finfo(float).tiny)
    return V, pi, phi, alpha


def label_log_prior(counts: np.ndarray, alpha: float) -> float:
    """log p(eta | alpha) up to a constant, with the stick fractions integrated out."""
    tail = np.cumsum(counts[::-1])[::-1][1:].astype(np.float64)
    n = counts[:-1].astype(np.float64)
    return float(np.sum(gammaln(1.0 + n) + gammaln(alpha + tail) - gammaln(1.0 + alpha + n + tail)))


def swap_labels(eta: np.ndarray, counts: np.ndarray, alpha: float, n_proposals: int, rng) -> np.ndarray:
    """MH label swaps of an occupied label against a uniformly chosen other label.

    ``counts`` (length F) is updated in place. The number of occupied labels
    is unchanged by a swap, so the proposal is symmetric.
    """
    F = counts.size
    if F < 2 or n_proposals == 0:
        return eta
    perm = np.arange(F)
    current = label_log_prior(counts, alpha)
    for _ in range(n_proposals):
        occ = np.flatnonzero(counts)
        j = occ[rng.integers(occ.size)]
        l = rng.integers(F - 1)
        l += l >= j
        if counts[l] == counts[j]:
            rng.random()  # keep the stream layout independent of the data
            continue
        counts[j], counts[l] = counts[l], counts[j]
        proposed = label_log_prior(counts, alpha)
        if np.log(rng.random()) < proposed - current:
            current = proposed
            perm[j], perm[l] = perm[l], perm[j]
        else:
            counts[j], counts[l] = counts[l], counts[j]
    # perm maps new label -> old label; invert to relabel records
    inverse = np.empty(F, dtype=np.int64)
    inverse[perm] = np.arange(F)
    return inverse[eta]


def init_state(Y: np.ndarray, d: Sequence[int], cfg: DpmpmConfig, rng: np.random.Generator) -> DpmpmState:
    """All records in class 0, then parameters drawn from their conditionals.

    Starting from one class and letting the sampler split it mixes far
    faster than merging F randomly seeded classes.
    """
    eta = np.zeros(Y.shape[0], dtype=np.int64)
    V, pi, phi, alpha = _update_params(eta, 1.0, Y, d, cfg, rng)
    return DpmpmState(eta, V, pi, alpha, phi)


def gibbs_sweep(state: DpmpmState, Y: np.ndarray, d: Sequence[int], cfg: DpmpmConfig, rng) -> DpmpmState:
    """One blocked Gibbs sweep. ``Y`` holds 0-based category indices."""
    with np.errstate(divide="ignore"):
        logp = np.repeat(np.log(state.pi)[:, None], Y.shape[0], axis=1)
        for k in range(Y.shape[1]):
            logp += np.log(state.phi[k])[:, Y[:, k]]
    eta = _categorical_columns(logp, rng)
    counts = np.bincount(eta, minlength=cfg.F)
    eta = swap_labels(eta, counts, state.alpha, cfg.label_swaps, rng)
    V, pi, phi, alpha = _update_params(eta, state.alpha, Y, d, cfg, rng)
    return DpmpmState(eta, V, pi, alpha, phi)


def select_snapshots(n_saved: int, m: int) -> list[int]:
    """m saved-draw positions spread evenly over the chain: j * S // (m - 1),
    capped at the last draw."""
    if m < 1 or m > n_saved:
        raise ValueError(f"cannot pick {m} snapshots from {n_saved} saved draws")
    if m == 1:
        return [n_saved - 1]
    return [min(j * n_saved // (m - 1), n_saved - 1) for j in range(m)]


def encode(ds: Dataset):
    """All-categorical 0-based matrix, category counts and geocode codebook."""
    book = None
    if ds.schema.geocode is not None:
        ds, book = concat_geocode_as_categorical(ds)
    d = [v.d for v in ds.schema.categorical]
    return ds, ds.codes - 1, d, book


def run_chain(
    Y: np.ndarray,
    d: Sequence[int],
    cfg: DpmpmConfig,
    rng: np.random.Generator,
    keep: Sequence[int] | None = None,
    phi_vars: Sequence[int] | None = None,
) -> tuple[list[Snapshot], ChainTrace]:
    """Run the sampler; save every ``thin``-th draw after burn-in.

    ``keep`` limits which saved draws retain the (large) phi arrays and
    ``phi_vars`` which variables' phi are stored; pi and alpha are always
    kept.
    """
    Y = np.asarray(Y, dtype=np.int64)
    state = init_state(Y, d, cfg, rng)
    keep = None if keep is None else set(keep)
    snaps: list[Snapshot] = []
    trace = ChainTrace()
    for it in range(1, cfg.iterations + 1):
        state = gibbs_sweep(state, Y, d, cfg, rng)
        if it > cfg.burn_in and (it - cfg.burn_in) % cfg.thin == 0:
            pos = len(snaps)
            phi = None
            if keep is None or pos in keep:
                vars_ = range(len(d)) if phi_vars is None else phi_vars
                phi = [state.phi[k].copy() if k in vars_ else None for k in range(len(d))]
            snaps.append(Snapshot(it, state.pi.copy(), state.alpha, phi))
            trace.iterations.append(it)
            trace.alpha_draws.append(state.alpha)
            trace.occupied_classes.append(state.occupied())
    return snaps, trace


def diagnose(trace: ChainTrace, max_lag: int = 20) -> dict:
    """Convergence summary on the alpha draws."""
    alpha = np.asarray(trace.alpha_draws)
    out: dict = {"n_saved": int(alpha.size)}
    try:
        out["geweke_z"] = geweke_z(alpha)
    except ValueError as exc:
        out["geweke_z"] = None
        out["geweke_error"] = str(exc)
    if alpha.size >= 50:
        passed, start = heidelberger_welch(alpha)
        out["heidelberger_welch"] = {"passed": passed, "start": start}
    try:
        acf = autocorrelation(alpha, min(max_lag, alpha.size - 1))
        out["acf"] = [float(a) for a in acf]
    except ValueError as exc:
        out["acf"] = None
        out["acf_error"] = str(exc)
    occ = np.asarray(trace.occupied_classes)
    if occ.size:
        out["occupied_mean"] = float(occ.mean())
        out["occupied_interval_95"] = [float(np.quantile(occ, 0.025)), float(np.quantile(occ, 0.975))]
        out["occupied_max"] = int(occ.max())
    return out


@dataclass
class DpmpmFit:
    snapshots: list[Snapshot]
    trace: ChainTrace
    diagnostics: dict
    cfg: DpmpmConfig


def fit(
    Y: np.ndarray,
    d: Sequence[int],
    cfg: DpmpmConfig,
    rng: np.random.Generator,
    m: int | None = None,
    phi_vars: Sequence[int] | None = None,
) -> DpmpmFit:
    """Run a chain; rerun with heavier thinning if alpha stays autocorrelated."""
    keep = None if m is None else select_snapshots(cfg.n_saved, m)
    snaps, trace = run_chain(Y, d, cfg, rng, keep, phi_vars)
    diag = diagnose(trace)
    acf = diag.get("acf")
    escalate = acf and len(acf) > 1 and abs(acf[1]) > cfg.acf_threshold and cfg.thin < cfg.escalation_thin
    # same iteration budget; skipped when it would leave fewer saved draws than replicates
    if escalate and (cfg.iterations - cfg.burn_in) // cfg.escalation_thin < (m or 1):
        log.warning("alpha autocorrelated but thin=%d leaves too few draws; keeping thin=%d",
                    cfg.escalation_thin, cfg.thin)
        diag["rerun_skipped"] = True
        escalate = False
    if escalate:
        log.info("lag-1 autocorrelation of alpha %.3f above %.2f, rerunning with thin=%d",
                 acf[1], cfg.acf_threshold, cfg.escalation_thin)
        cfg = replace(cfg, thin=cfg.escalation_thin)
        keep = None if m is None else select_snapshots(cfg.n_saved, m)
        snaps, trace = run_chain(Y, d, cfg, rng, keep, phi_vars)
        diag = diagnose(trace)
        diag["rerun_thin"] = cfg.thin
    return DpmpmFit(snaps, trace, diag, cfg)


def synthesize_codes(
    Y: np.ndarray,
    targets: Sequence[int],
    snapshots: Sequence[Snapshot],
    rng: np.random.Generator,
) -> list[np.ndarray]:
    """One synthetic copy of ``Y`` per snapshot, target columns redrawn.

    Each replicate draws fresh class labels from pi, then every target
    independently from phi of the drawn class.
    """
    out = []
    n = Y.shape[0]
    for snap, rep_rng in zip(snapshots, rng.spawn(len(snapshots))):
        syn = Y.copy()
        cum_pi = np.cumsum(snap.pi)
        eta = np.minimum(np.searchsorted(cum_pi, rep_rng.random(n) * cum_pi[-1], side="right"), snap.pi.size - 1)
        order = np.argsort(eta, kind="stable")
        bounds = np.searchsorted(eta[order], np.arange(snap.pi.size + 1))
        for k in targets:
            phi = snap.phi[k]
            u = rep_rng.random(n)
            col = np.empty(n, dtype=np.int64)
            for f in np.flatnonzero(np.diff(bounds)):
                members = order[bounds[f] : bounds[f + 1]]
                cum = np.cumsum(phi[f])
                col[members] = np.minimum(np.searchsorted(cum, u[members] * cum[-1], side="right"), phi.shape[1] - 1)
            syn[:, k] = col
        out.append(syn)
    return out


def synthesize(
    ds: Dataset,
    targets: Sequence[str],
    snapshots: Sequence[Snapshot],
    m: int,
    rng: np.random.Generator,
) -> SyntheticRelease:
    """Partial synthesis of ``targets`` from m evenly spaced snapshots."""
    enc, Y, _, book = encode(ds)
    idx = select_snapshots(len(snapshots), m)
    chosen = [snapshots[i] for i in idx]
    cols = [enc.schema.column_index(t) for t in targets]
    reps = []
    for syn in synthesize_codes(Y, cols, chosen, rng):
        enc_rep = Dataset(enc.schema, syn + 1, None, enc.row_ids)
        reps.append(decode_geocode_categorical(enc_rep, book, ds.schema) if book is not None else enc_rep)
    return SyntheticRelease(reps, tuple(targets))


def synthesize_dataset(
    ds: Dataset,
    targets: Sequence[str],
    cfg: DpmpmConfig,
    m: int,
    rng: np.random.Generator,
) -> tuple[SyntheticRelease, DpmpmFit]:
    """Fit the model on ``ds`` and draw an m-replicate release."""
    enc, Y, d, _ = encode(ds)
    cols = [enc.schema.column_index(t) for t in targets]
    model = fit(Y, d, cfg, rng, m=m, phi_vars=cols)
    return synthesize(ds, targets, model.snapshots, m, rng), model
