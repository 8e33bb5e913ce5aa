"""Controller gain bundles shared by the filters and the simulator."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

U_BAR_VARIANTS = ("revised", "draft")
GENERAL_VARIANTS = ("damped", "printed")


@dataclass(frozen=True, eq=False)
class FilterGains:
    """Safety-filter gains.

    ``R`` is the actuation weight of the contraction condition (identity when
    ``None``); ``q_margin`` scales the Riccati margin matrix ``Q = q_margin * I``.
    ``relaxation`` is the coefficient ``sigma0`` of the class-K allowance
    ``sigma0 * min(1, min_j h_j)`` added to the projection constraint; zero
    gives the strict decrease condition.
    """

    k_p: float = 1.0
    k_v: float = 1.0
    R: np.ndarray = None
    q_margin: float = 1.0
    u_bar_variant: str = "revised"
    general_variant: str = "damped"
    residual_tol: float = 1e-6
    m_floor: float = 1e-9
    relaxation: float = 0.0

    def __post_init__(self):
        if not self.relaxation >= 0:
            raise ConfigError("gains.relaxation", f"must be >= 0, got {self.relaxation}")
        if not self.k_p > 0:
            raise ConfigError("gains.k_p", f"must be > 0, got {self.k_p}")
        if not self.k_v >= 0:
            raise ConfigError("gains.k_v", f"must be >= 0, got {self.k_v}")
        if not self.q_margin > 0:
            raise ConfigError("gains.q_margin", f"must be > 0, got {self.q_margin}")
        if self.u_bar_variant not in U_BAR_VARIANTS:
            raise ConfigError("gains.u_bar_variant", f"must be one of {U_BAR_VARIANTS}")
        if self.general_variant not in GENERAL_VARIANTS:
            raise ConfigError("gains.general_variant", f"must be one of {GENERAL_VARIANTS}")
        if self.R is not None:
            R = np.atleast_2d(np.array(self.R, dtype=float))
            if R.shape[0] != R.shape[1] or not np.allclose(R, R.T) or np.linalg.eigvalsh(R)[0] <= 0:
                raise ConfigError("gains.R", "must be symmetric positive definite")
            object.__setattr__(self, "R", R)

    def allowance(self, min_h: float) -> float:
        """Class-K slack ``sigma0 * min(1, min_h)``; ``min_h`` is ``inf`` without neighbors."""
        if self.relaxation == 0.0:
            return 0.0
        return self.relaxation * min(1.0, max(0.0, float(min_h)))

    def R_for(self, m: int) -> np.ndarray:
        return np.eye(m) if self.R is None else self.R

    def Q_for(self, n: int) -> np.ndarray:
        return self.q_margin * np.eye(n)


@dataclass(frozen=True, eq=False)
class RobustGains:
    """Robust-filter gains: position gain ``lambda_r`` (SPD), composite gain ``k_r``, split ``epsilon_d``."""

    lambda_r: np.ndarray = 1.0
    k_r: float = 1.0
    epsilon_d: float = 1.0
    dim: int = None

    def __post_init__(self):
        lam = np.array(self.lambda_r, dtype=float)
        if lam.ndim == 0:
            if self.dim is None:
                object.__setattr__(self, "lambda_r", float(lam))
            else:
                lam = float(lam) * np.eye(self.dim)
        elif lam.ndim == 1:
            lam = np.diag(lam)
        if isinstance(lam, np.ndarray) and lam.ndim == 2:
            if lam.shape[0] != lam.shape[1] or not np.allclose(lam, lam.T):
                raise ConfigError("robust.lambda_r", "must be a symmetric matrix")
            if np.linalg.eigvalsh(lam)[0] <= 0:
                raise ConfigError("robust.lambda_r", "must be positive definite")
            object.__setattr__(self, "lambda_r", lam)
        elif not float(self.lambda_r) > 0:
            raise ConfigError("robust.lambda_r", f"must be > 0, got {self.lambda_r}")
        if not self.k_r > 0:
            raise ConfigError("robust.k_r", f"must be > 0, got {self.k_r}")
        if not self.epsilon_d > 0:
            raise ConfigError("robust.epsilon_d", f"must be > 0, got {self.epsilon_d}")

    def lambda_matrix(self, n: int) -> np.ndarray:
        if isinstance(self.lambda_r, np.ndarray):
            return self.lambda_r
        return self.lambda_r * np.eye(n)

    def lambda_min(self, n: int = 1) -> float:
        return float(np.linalg.eigvalsh(self.lambda_matrix(n))[0])
