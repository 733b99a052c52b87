"""Gaussian (identity link) and binomial (logit link) likelihood pieces."""
import numpy as np
from scipy.special import expit, logit, xlogy

from app.errors import ConfigError, DimensionMismatch, NonFiniteInput
from app.models import FamilyKind

PROB_CLAMP = 1e-10


class Family:
    kind: FamilyKind
    has_dispersion: bool

    def linkinv(self, eta: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def deviance(self, y: np.ndarray, mu: np.ndarray, phi: float = 1.0) -> float:
        raise NotImplementedError

    def pseudo_data(self, y: np.ndarray, eta: np.ndarray, phi: float = 1.0):
        raise NotImplementedError

    def validate_response(self, y) -> np.ndarray:
        values = np.asarray(y, dtype=float).ravel()
        if not np.all(np.isfinite(values)):
            raise NonFiniteInput("response contains NaN or Inf")
        return values

    def initial_intercept(self, y: np.ndarray) -> float:
        raise NotImplementedError

    def initial_phi(self, y: np.ndarray) -> float:
        return 1.0

    def __repr__(self):
        return f"{type(self).__name__}()"


class Gaussian(Family):
    kind = FamilyKind.GAUSSIAN
    has_dispersion = True

    def linkinv(self, eta):
        return np.asarray(eta, dtype=float)

    def deviance(self, y, mu, phi=1.0):
        y, mu = _matched(y, mu)
        rss = float(np.sum((y - mu) ** 2))
        return float(y.size * np.log(2.0 * np.pi * phi) + rss / phi)

    def pseudo_data(self, y, eta, phi=1.0):
        y = np.asarray(y, dtype=float)
        return y.copy(), np.full(y.shape, 1.0 / phi)

    def initial_intercept(self, y):
        return float(np.mean(y))


class Binomial(Family):
    kind = FamilyKind.BINOMIAL
    has_dispersion = False

    def linkinv(self, eta):
        return np.clip(expit(np.asarray(eta, dtype=float)), PROB_CLAMP, 1.0 - PROB_CLAMP)

    def deviance(self, y, mu, phi=1.0):
        y, mu = _matched(y, mu)
        return float(-2.0 * np.sum(xlogy(y, mu) + xlogy(1.0 - y, 1.0 - mu)))

    def pseudo_data(self, y, eta, phi=1.0):
        eta = np.asarray(eta, dtype=float)
        mu = self.linkinv(eta)
        w = mu * (1.0 - mu)
        return eta + (np.asarray(y, dtype=float) - mu) / w, w

    def validate_response(self, y):
        values = super().validate_response(y)
        if not np.all((values == 0) | (values == 1)):
            raise ConfigError("binomial responses must be 0 or 1")
        return values

    def initial_intercept(self, y):
        return float(logit(np.clip(np.mean(y), PROB_CLAMP, 1.0 - PROB_CLAMP)))


def _matched(y, mu):
    y = np.asarray(y, dtype=float).ravel()
    mu = np.asarray(mu, dtype=float).ravel()
    if y.shape != mu.shape:
        raise DimensionMismatch(f"y has {y.size} entries, mu has {mu.size}")
    return y, mu


_FAMILIES = {
    FamilyKind.GAUSSIAN: Gaussian(),
    FamilyKind.BINOMIAL: Binomial(),
}


def get_family(kind) -> Family:
    return _FAMILIES[FamilyKind(kind)]


def linkinv(family: Family, eta) -> np.ndarray:
    return family.linkinv(eta)


def deviance(family: Family, y, mu, phi: float = 1.0) -> float:
    return family.deviance(y, mu, phi)


def pseudo_data(family: Family, y, eta, phi: float = 1.0):
    return family.pseudo_data(y, eta, phi)
