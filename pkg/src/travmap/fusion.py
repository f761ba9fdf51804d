"""Per-cell, per-channel 1-D Kalman fusion of successive Gaussian feature maps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .traversability import FeatureDistMap


@dataclass
class FusedState:
    """Running estimate ``(mu_hat, sigma_hat)`` plus per-cell update counts."""

    spec: object
    mu: np.ndarray
    sigma: np.ndarray
    observed: np.ndarray
    update_count: np.ndarray
    channels: tuple

    @classmethod
    def empty(cls, spec, channels):
        shape = (len(channels),) + spec.shape
        return cls(
            spec,
            np.full(shape, np.nan),
            np.full(shape, np.nan),
            np.zeros(spec.shape, dtype=bool),
            np.zeros(spec.shape, dtype=np.int64),
            tuple(channels),
        )

    @classmethod
    def from_dist(cls, dist):
        return cls(
            dist.spec,
            dist.mu.copy(),
            dist.sigma.copy(),
            dist.observed.copy(),
            dist.observed.astype(np.int64),
            dist.channels,
        )

    def as_dist(self):
        return FeatureDistMap(self.spec, self.mu.copy(), self.sigma.copy(), self.observed.copy(), self.channels)

    def shifted(self, di, dj):
        """Re-centre the grid by whole cells: cell ``(i, j)`` takes the old ``(i + di, j + dj)``."""
        W, H = self.spec.shape

        def move(a, fill):
            out = np.full_like(a, fill)
            src_i = slice(max(di, 0), W + min(di, 0))
            dst_i = slice(max(-di, 0), W + min(-di, 0))
            src_j = slice(max(dj, 0), H + min(dj, 0))
            dst_j = slice(max(-dj, 0), H + min(-dj, 0))
            out[..., dst_i, dst_j] = a[..., src_i, src_j]
            return out

        return FusedState(
            self.spec,
            move(self.mu, np.nan),
            move(self.sigma, np.nan),
            move(self.observed, False),
            move(self.update_count, 0),
            self.channels,
        )


def fuse_gaussians(mu_hat, sigma_hat, mu, sigma):
    """Measurement update of a 1-D Gaussian estimate (elementwise)."""
    v_hat = sigma_hat * sigma_hat
    v = sigma * sigma
    denom = v_hat + v
    return (mu_hat * v + mu * v_hat) / denom, np.sqrt(v_hat * v / denom)


def kalman_update(state, meas, process_var=0.0):
    """Fuse ``meas`` into ``state`` and return a new state.

    Cells seen by both are fused; cells seen only by the measurement adopt
    it; the rest keep the prior. ``process_var`` inflates the prior variance
    before fusing (0 keeps the pure measurement update).
    """
    if meas.spec != state.spec or tuple(meas.channels) != tuple(state.channels):
        raise ContractError("measurement grid/channels do not match the fused state")
    if process_var < 0:
        raise ContractError("process_var must be >= 0")
    m_obs = meas.observed[None] & np.isfinite(meas.mu) & (meas.sigma > 0)
    s_obs = state.observed[None] & np.isfinite(state.mu)
    both = m_obs & s_obs
    only_m = m_obs & ~s_obs

    sig_prior = np.sqrt(state.sigma**2 + process_var) if process_var else state.sigma
    mu = state.mu.copy()
    sigma = state.sigma.copy()
    with np.errstate(invalid="ignore"):
        fm, fs = fuse_gaussians(state.mu, sig_prior, meas.mu, meas.sigma)
    mu[both] = fm[both]
    sigma[both] = fs[both]
    mu[only_m] = meas.mu[only_m]
    sigma[only_m] = meas.sigma[only_m]
    measured = m_obs.any(axis=0)
    return FusedState(
        state.spec,
        mu,
        sigma,
        state.observed | measured,
        state.update_count + measured,
        state.channels,
    )
