"""MCMC output container with CSV/JSON export."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


class StuckChainError(RuntimeError):
    """A coordinate rejected every proposal for too many iterations."""

    def __init__(self, name: str, n_rejected: int, step: float, state: float):
        self.parameter = name
        super().__init__(
            f"parameter {name!r} rejected {n_rejected} consecutive proposals "
            f"(step={step:g}, current value={state:g})"
        )


@dataclass
class Chain:
    """Ordered posterior draws, one named column per parameter."""

    names: list[str]
    draws: np.ndarray
    burn_in: int
    thin: int
    seed: int
    acceptance: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        self.draws = np.asarray(self.draws, dtype=float)
        if self.draws.ndim != 2 or self.draws.shape[1] != len(self.names):
            raise ValueError("draws must be (n_samples, n_parameters)")
        if not np.all(np.isfinite(self.draws)):
            raise ValueError("draws contain non-finite values")

    def __len__(self) -> int:
        return self.draws.shape[0]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.draws[:, self.names.index(name)]

    def mean(self, name: str) -> float:
        return float(np.mean(self[name]))

    def sd(self, name: str) -> float:
        return float(np.std(self[name], ddof=1))

    def subset(self, names) -> "Chain":
        idx = [self.names.index(n) for n in names]
        return Chain(
            names=list(names),
            draws=self.draws[:, idx],
            burn_in=self.burn_in,
            thin=self.thin,
            seed=self.seed,
            acceptance={n: self.acceptance[n] for n in names if n in self.acceptance},
        )

    def to_csv(self, path) -> None:
        """One column per parameter, one row per retained draw."""
        header = ",".join(self.names)
        np.savetxt(path, self.draws, delimiter=",", header=header, comments="",
                   fmt="%.17g")

    @classmethod
    def from_csv(cls, path, burn_in: int = 0, thin: int = 1, seed: int = 0) -> "Chain":
        with open(path) as fh:
            names = fh.readline().strip().split(",")
        draws = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(names=names, draws=draws, burn_in=burn_in, thin=thin, seed=seed)

    def summary(self) -> dict:
        """Per-parameter mean, SD, ESS and stationarity p-value."""
        from . import diagnostics

        out = {}
        for j, name in enumerate(self.names):
            col = self.draws[:, j]
            ess = diagnostics.ess(col) if col.size >= 10 else float("nan")
            hw = diagnostics.heidelberger_welch(col) if col.size >= 100 else float("nan")
            out[name] = {
                "mean": float(np.mean(col)),
                "sd": float(np.std(col, ddof=1)) if col.size > 1 else 0.0,
                "ess": ess,
                "hw_pvalue": hw,
            }
        return out

    def summary_json(self, path) -> None:
        payload = {
            "burn_in": self.burn_in,
            "thin": self.thin,
            "seed": self.seed,
            "n_samples": len(self),
            "acceptance": self.acceptance,
            "parameters": self.summary(),
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, allow_nan=True)
