"""Spacecraft mass build-up from the array area."""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class MassConfig:
    m_bus: float = 200.0
    m_eng: float = 4.5
    n_eng: int = 1
    rho_SA: float = 2.0
    m_propellant: float = 100.0

    def __post_init__(self):
        for name in ("m_bus", "m_eng", "rho_SA", "m_propellant"):
            if not getattr(self, name) > 0:
                raise ValueError(f"mass.{name} must be positive")
        if int(self.n_eng) != self.n_eng or self.n_eng < 1:
            raise ValueError("mass.n_eng must be an integer >= 1")


def dry_mass(cfg: MassConfig, A_SA):
    return cfg.m_bus + cfg.n_eng * cfg.m_eng + cfg.rho_SA * A_SA


def initial_mass(cfg: MassConfig, A_SA):
    return dry_mass(cfg, A_SA) + cfg.m_propellant


def mass_area_slope(cfg: MassConfig) -> float:
    """d(m_dry)/dA_SA, which equals d(m_initial)/dA_SA."""
    return cfg.rho_SA
