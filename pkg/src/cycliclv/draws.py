"""Simulation draws for the latent disturbances.

Each observation gets its own block of R standard-normal draw vectors,
one dimension per latent (fatigue and arousal in the reference model).
Draws are generated once per estimation run and reused for every
objective evaluation, so the simulated likelihood is a deterministic
function of the parameters (common random numbers).

Two schemes are supported:

* ``pseudo``: `numpy.random.Generator` normals;
* ``halton``: scrambled Halton points (scipy's generalized Faure
  scrambling) mapped through the normal inverse CDF.  ``burn`` drops
  leading points, ``leap`` keeps every (leap+1)-th point.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.stats import qmc


class DrawsError(ValueError):
    pass


@dataclass
class SimulationDraws:
    """(n_obs, R, n_dims) tensor of standard-normal draws plus its key."""

    tensor: np.ndarray
    seed: int
    scheme: str
    burn: int = 0
    leap: int = 0

    @property
    def n_obs(self) -> int:
        return self.tensor.shape[0]

    @property
    def R(self) -> int:
        return self.tensor.shape[1]

    @property
    def n_dims(self) -> int:
        return self.tensor.shape[2]

    def for_obs(self, i) -> np.ndarray:
        """Draws for observation position ``i``: an (R, n_dims) block."""
        return self.tensor[i]

    def key(self) -> dict:
        return {
            "seed": self.seed,
            "scheme": self.scheme,
            "burn": self.burn,
            "leap": self.leap,
            "shape": list(self.tensor.shape),
        }

    def save(self, path) -> None:
        np.savez_compressed(
            path,
            tensor=self.tensor,
            seed=self.seed,
            scheme=self.scheme,
            burn=self.burn,
            leap=self.leap,
        )

    @classmethod
    def load(cls, path, expect=None) -> "SimulationDraws":
        """Load a cached tensor; ``expect`` (a key dict) must match."""
        with np.load(path, allow_pickle=False) as data:
            out = cls(
                tensor=data["tensor"],
                seed=int(data["seed"]),
                scheme=str(data["scheme"]),
                burn=int(data["burn"]),
                leap=int(data["leap"]),
            )
        if expect is not None and out.key() != dict(expect):
            raise DrawsError(
                f"draw cache key mismatch: file has {out.key()}, expected {dict(expect)}"
            )
        return out


def make_draws(n_obs, R, n_dims=2, scheme="halton", seed=1, burn=0, leap=0):
    """Generate a :class:`SimulationDraws` tensor.

    The Halton sequence is scrambled with ``seed`` and laid out so that
    observation ``i`` receives points ``i*R .. (i+1)*R - 1``.
    """
    if R < 1:
        raise DrawsError("R must be >= 1")
    if n_dims < 0:
        raise DrawsError("n_dims must be >= 0")
    total = n_obs * R
    if n_dims == 0 or total == 0:
        tensor = np.zeros((n_obs, R, n_dims))
        return SimulationDraws(tensor, seed, scheme, burn, leap)
    if scheme == "pseudo":
        rng = np.random.default_rng(seed)
        tensor = rng.standard_normal((n_obs, R, n_dims))
    elif scheme == "halton":
        engine = qmc.Halton(d=n_dims, scramble=True, seed=seed)
        if burn:
            engine.fast_forward(burn)
        if leap:
            u = engine.random(total * (leap + 1))[:: leap + 1]
        else:
            u = engine.random(total)
        # clip away exact 0/1 before the inverse CDF
        eps = np.finfo(float).tiny
        u = np.clip(u, eps, 1.0 - 1e-16)
        tensor = stats.norm.ppf(u).reshape(n_obs, R, n_dims)
    else:
        raise DrawsError(f"unknown draw scheme {scheme!r}")
    return SimulationDraws(tensor, seed, scheme, burn, leap)


def draws_for_spec(ds_n_obs, spec, R=None, seed=None, burn=0, leap=0):
    """Draws sized for a dataset under ``spec`` (one dim per latent)."""
    return make_draws(
        ds_n_obs,
        R if R is not None else spec.draws_count,
        n_dims=len(spec.latents),
        scheme=spec.draws_scheme,
        seed=seed if seed is not None else spec.draws_seed,
        burn=burn,
        leap=leap,
    )
