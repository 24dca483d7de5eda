import numpy as np
import pytest

from eulergibbs.spectral import SpectralField, mode_count


def random_field(rng: np.random.Generator, period: float, cutoff, scale: float = 1.0) -> SpectralField:
    """A test fixture field with i.i.d. standard complex Gaussian coefficients."""
    n = mode_count(cutoff)
    coeffs = scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2.0)
    return SpectralField(period, tuple(cutoff), coeffs)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20260822)
