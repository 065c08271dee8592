import numpy as np
import pytest

from psyche_mdo import sizing


CFG = sizing.MassConfig()


def test_dry_mass_spot_values():
    assert sizing.dry_mass(CFG, 50.0) == 304.5
    assert sizing.dry_mass(CFG, 0.0) == 204.5
    assert sizing.dry_mass(CFG, 79.79) == pytest.approx(364.08, abs=1e-9)


def test_initial_mass_spot_values():
    assert sizing.initial_mass(CFG, 50.0) == 404.5
    assert sizing.initial_mass(CFG, 79.79) == pytest.approx(464.08, abs=1e-9)


def test_affine_in_area():
    a = np.linspace(0, 300, 31)
    m = sizing.initial_mass(CFG, a)
    np.testing.assert_allclose(np.diff(m) / np.diff(a), CFG.rho_SA, rtol=1e-12)
    np.testing.assert_allclose(m - sizing.dry_mass(CFG, a), CFG.m_propellant, rtol=0, atol=1e-12)
    assert sizing.mass_area_slope(CFG) == 2.0


def test_engine_count_enters_dry_mass():
    assert sizing.dry_mass(sizing.MassConfig(n_eng=2), 50.0) == 309.0


@pytest.mark.parametrize("field", ["m_bus", "m_eng", "rho_SA", "m_propellant"])
def test_validation(field):
    with pytest.raises(ValueError, match=f"mass.{field}"):
        sizing.MassConfig(**{field: 0.0})
    with pytest.raises(ValueError):
        sizing.MassConfig(n_eng=1.5)
