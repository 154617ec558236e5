"""Online estimation of the per-calendar-type conditional Gaussian models."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .errors import ConfigError, NumericalError
from .features import R_FEATURES, TempContext, build_feature_r, build_feature_s, update_temp_context


def _check_lambda(lam, name="lambda"):
    if not (0.0 < lam <= 1.0):
        raise ConfigError(f"{name}={lam} outside the valid range (0, 1]")


@dataclass
class ConditionalModel:
    """Running estimate of ``s ~ N(M u, Sigma)`` with RLS state ``(P, gamma)``.

    ``M`` is ``K x D``, ``Sigma`` is ``K x K`` and ``P`` is ``D x D``. A fresh
    model starts at ``M = 0``, ``Sigma = 0``, ``P = I_D`` and ``gamma = 0``.
    """

    M: np.ndarray
    Sigma: np.ndarray
    P: np.ndarray
    gamma: float = 0.0
    lam: float = 1.0

    def __post_init__(self):
        _check_lambda(self.lam)
        self.M = np.ascontiguousarray(self.M, dtype=np.float64)
        self.Sigma = np.ascontiguousarray(self.Sigma, dtype=np.float64)
        self.P = np.ascontiguousarray(self.P, dtype=np.float64)
        K, D = self.M.shape
        if self.Sigma.shape != (K, K) or self.P.shape != (D, D):
            raise ValueError(f"inconsistent shapes M{self.M.shape} Sigma{self.Sigma.shape} P{self.P.shape}")
        self.gamma = float(self.gamma)
        self.lam = float(self.lam)

    @classmethod
    def initial(cls, K: int, D: int, lam: float) -> "ConditionalModel":
        return cls(np.zeros((K, D)), np.zeros((K, K)), np.eye(D), 0.0, lam)

    @property
    def K(self) -> int:
        return self.M.shape[0]

    @property
    def D(self) -> int:
        return self.M.shape[1]

    def copy(self) -> "ConditionalModel":
        return ConditionalModel(self.M.copy(), self.Sigma.copy(), self.P.copy(), self.gamma, self.lam)

    def update_(self, u, s) -> "ConditionalModel":
        """In-place version of :func:`update`."""
        u = np.ascontiguousarray(u, dtype=np.float64)
        s = np.ascontiguousarray(s, dtype=np.float64)
        if u.shape != (self.D,) or s.shape != (self.K,):
            raise ValueError(f"expected u of length {self.D} and s of length {self.K}, got {u.shape} and {s.shape}")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(s))):
            raise NumericalError("non-finite update input", u=u.tolist(), s=s.tolist())
        self.gamma = _backend.rls_update(self.M, self.Sigma, self.P, self.gamma, self.lam, u, s)
        return self

    def to_dict(self) -> dict:
        return {
            "M": self.M.tolist(), "Sigma": self.Sigma.tolist(), "P": self.P.tolist(),
            "gamma": self.gamma, "lam": self.lam,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ConditionalModel":
        return cls(np.array(d["M"]), np.array(d["Sigma"]), np.array(d["P"]), d["gamma"], d["lam"])


def update(model: ConditionalModel, u, s) -> ConditionalModel:
    """Return ``model`` advanced by one observation ``(u, s)``.

    With ``e = s - M u`` and ``g = lam + u' P u``::

        M'     = M + e u' P / g
        gamma' = lam * gamma + 1
        Sigma' = Sigma - (Sigma - lam^2 e e' / g^2) / gamma'
        P'     = (P - P u u' P / g) / lam

    ``Sigma'`` is then symmetrized and projected onto the PSD cone, and the
    eigenvalues of ``P'`` are capped at ``_kernels_py.P_CEILING``.
    """
    return model.copy().update_(u, s)


@dataclass
class ModelBank:
    """Load-transition and observation models for every calendar type."""

    K: int
    C: int
    lam_s: float = 0.8
    lam_r: float = 0.7
    R: int = R_FEATURES
    s_models: list = field(default=None, repr=False)
    r_models: list = field(default=None, repr=False)

    def __post_init__(self):
        _check_lambda(self.lam_s, "lambda_s")
        _check_lambda(self.lam_r, "lambda_r")
        if self.s_models is None:
            self.s_models = [ConditionalModel.initial(self.K, self.K + 1, self.lam_s) for _ in range(self.C)]
        if self.r_models is None:
            self.r_models = [ConditionalModel.initial(self.K, self.K * self.R, self.lam_r) for _ in range(self.C)]
        if len(self.s_models) != self.C or len(self.r_models) != self.C:
            raise ValueError("bank needs one s-model and one r-model per calendar type")

    def models(self, c: int) -> tuple[ConditionalModel, ConditionalModel]:
        return self.s_models[c - 1], self.r_models[c - 1]

    def copy(self) -> "ModelBank":
        return ModelBank(
            self.K, self.C, self.lam_s, self.lam_r, self.R,
            [m.copy() for m in self.s_models], [m.copy() for m in self.r_models],
        )

    def to_dict(self) -> dict:
        return {
            "K": self.K, "C": self.C, "lam_s": self.lam_s, "lam_r": self.lam_r, "R": self.R,
            "s_models": [m.to_dict() for m in self.s_models],
            "r_models": [m.to_dict() for m in self.r_models],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelBank":
        return cls(
            d["K"], d["C"], d["lam_s"], d["lam_r"], d["R"],
            [ConditionalModel.from_dict(m) for m in d["s_models"]],
            [ConditionalModel.from_dict(m) for m in d["r_models"]],
        )


def learn_step(bank: ModelBank, ctx: TempContext, c: int, s_prev, s_now, temps_now):
    """Consume the observation arriving at an hour of calendar type ``c``.

    The s-model is updated before the r-model, and the temperature context
    only after ``u_r`` is built, so the shift indicators compare against
    strictly earlier temperatures. ``bank`` and ``ctx`` are modified in
    place and returned.
    """
    s_model, r_model = bank.models(c)
    u_s = build_feature_s(s_prev)
    u_r = build_feature_r(temps_now, ctx, c)
    s_now = np.ascontiguousarray(s_now, dtype=np.float64)
    for kind, model, u in (("s", s_model, u_s), ("r", r_model, u_r)):
        try:
            model.update_(u, s_now)
        except NumericalError as exc:
            raise NumericalError(str(exc), calendar_type=c, model=kind) from exc
    update_temp_context(ctx, c, temps_now)
    return bank, ctx
