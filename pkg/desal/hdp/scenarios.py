"""
Joint PV and price scenarios.

Scenarios are drawn from a Gaussian copula over (PV, price) × hours.
PV and price deviations are rank-correlated within an hour and
autocorrelated across hours. Each hour's marginal is a truncated normal
centred on the forecast, with the deviation range taken as ±2σ.

Large sets are reduced to representative members by k-medoids (PAM).
The built-in PAM is the default; ``HDP_REDUCER=sklearn_extra`` uses
scikit-learn-extra's ``KMedoids`` instead, when it is installed.
"""

from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats
from scipy.spatial.distance import cdist
from arxiv.base.globals import get_application_config as config
from arxiv.base import logging

from .domain import Case, Scenario

try:
    from sklearn_extra.cluster import KMedoids
except ModuleNotFoundError:
    KMedoids = None

logger = logging.getLogger(__name__)

EIGEN_TOLERANCE = 1e-10


class InvalidCorrelation(Exception):
    """The requested correlation structure is not a valid correlation."""


class InvalidScenarioCount(ValueError):
    """A scenario or medoid count is out of range."""


class UnknownReducer(ValueError):
    """The named k-medoids implementation is unknown or not installed."""


def correlation_matrix(horizon: int, rank_correlation: float,
                       autocorrelation: float) -> np.ndarray:
    """
    Copula correlation over PV hours followed by price hours.

    The Spearman rank correlation is converted to the Pearson correlation
    of the underlying normals, ρ = 2 sin(π ρ_s / 6).

    Raises
    ------
    :class:`InvalidCorrelation`
        If the matrix is not positive semidefinite.

    """
    if not -1 <= rank_correlation <= 1:
        raise InvalidCorrelation(f'Rank correlation {rank_correlation} '
                                 'outside [-1, 1]')
    if not 0 <= autocorrelation < 1:
        raise InvalidCorrelation(f'Autocorrelation {autocorrelation} '
                                 'outside [0, 1)')
    rho = 2 * np.sin(np.pi * rank_correlation / 6)
    lags = np.abs(np.subtract.outer(np.arange(horizon), np.arange(horizon)))
    corr = np.kron(np.array([[1.0, rho], [rho, 1.0]]),
                   autocorrelation ** lags)
    smallest = float(np.min(np.linalg.eigvalsh(corr)))
    if smallest < -EIGEN_TOLERANCE:
        raise InvalidCorrelation(f'Correlation matrix has eigenvalue '
                                 f'{smallest:.3g}')
    return corr


def _marginal(u: np.ndarray, forecast: np.ndarray, spread: float,
              upper: float) -> np.ndarray:
    """Truncated-normal quantiles around ``forecast``, floor 0."""
    sigma = spread * np.abs(forecast) / 2
    active = sigma > 0
    safe = np.where(active, sigma, 1.0)
    a = (0.0 - forecast) / safe
    b = (upper - forecast) / safe
    values = stats.truncnorm.ppf(u, a, b, loc=forecast, scale=safe)
    return np.where(active, values, forecast)


def generate(pv_forecast: Sequence[float], price_forecast: Sequence[float],
             deviation_ranges: Tuple[float, float], rank_correlation: float,
             n: int, seed: int, pv_rating: float,
             autocorrelation: float = 0.8,
             sell_ratio: float = 0.5) -> List[Scenario]:
    """
    Draw ``n`` joint PV and price scenarios.

    Parameters
    ----------
    pv_forecast, price_forecast : sequence
        Hourly forecasts, kW and $/kWh.
    deviation_ranges : tuple
        (PV, price) deviation ranges as fractions of the forecast.
    rank_correlation : float
        Spearman correlation of PV and price in the same hour.
    n : int
    seed : int
    pv_rating : float
        PV samples are truncated to [0, rating]; prices to [0, ∞).
    sell_ratio : float
        Sell price as a fraction of the buy price.

    Returns
    -------
    list
        :class:`.Scenario` instances with probability 1/n.

    """
    if n < 1:
        raise InvalidScenarioCount(f'Need at least one scenario, got {n}')
    pv = np.asarray(pv_forecast, dtype=float)
    price = np.asarray(price_forecast, dtype=float)
    horizon = len(pv)
    corr = correlation_matrix(horizon, rank_correlation, autocorrelation)
    w, v = np.linalg.eigh(corr)
    factor = v * np.sqrt(np.maximum(w, 0.0))
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, 2 * horizon)) @ factor.T
    u = np.clip(stats.norm.cdf(z), 1e-12, 1 - 1e-12)

    pv_range, price_range = deviation_ranges
    pv_samples = _marginal(u[:, :horizon], pv, pv_range, pv_rating)
    price_samples = _marginal(u[:, horizon:], price, price_range, np.inf)
    pv_samples = np.clip(pv_samples, 0.0, pv_rating)
    price_samples = np.maximum(price_samples, 0.0)
    logger.info('Generated %i scenarios (seed %i, rank correlation %g)',
                n, seed, rank_correlation)
    return [Scenario(pv=pv_samples[i], buy_price=price_samples[i],
                     sell_price=sell_ratio * price_samples[i],
                     probability=1.0 / n, index=i)
            for i in range(n)]


def from_case(case: Case, n: Optional[int] = None,
              seed: Optional[int] = None) -> List[Scenario]:
    """Scenarios around a case's forecasts with its configured spread."""
    cfg = case.config.scenarios
    series = case.series
    buy = series.buy_price
    ratio = float(np.mean(series.sell_price[buy > 0] / buy[buy > 0])) \
        if np.any(buy > 0) else case.config.series.sell_ratio
    return generate(series.pv_forecast, buy,
                    (cfg.pv_range, cfg.price_range), cfg.rank_correlation,
                    cfg.count if n is None else n,
                    cfg.seed if seed is None else seed,
                    case.config.grid.pv_rating, cfg.autocorrelation, ratio)


def pam(distances: np.ndarray, k: int, seed: int = 0) \
        -> Tuple[np.ndarray, np.ndarray, List[float]]:
    """
    Partitioning around medoids.

    Greedy BUILD, then SWAP until no exchange of a medoid with a
    non-medoid lowers the total distance. Ties go to the candidate that
    comes first in a seeded permutation.

    Returns
    -------
    tuple
        Medoid indices, the medoid position each point is assigned to, and
        the total distance after BUILD and after every swap.

    """
    n = distances.shape[0]
    if not 1 <= k <= n:
        raise InvalidScenarioCount(f'k must be in [1, {n}], got {k}')
    order = np.random.default_rng(seed).permutation(n)

    def first_min(values: np.ndarray) -> int:
        return int(order[np.argmin(values[order])])

    medoids = [first_min(distances.sum(axis=0))]
    nearest = distances[:, medoids[0]].copy()
    while len(medoids) < k:
        gain = np.maximum(nearest[:, None] - distances, 0.0).sum(axis=0)
        gain[medoids] = -np.inf
        chosen = first_min(-gain)
        medoids.append(chosen)
        nearest = np.minimum(nearest, distances[:, chosen])
    history = [float(nearest.sum())]

    for _ in range(100 * k):
        if k == n:
            break
        ranked = np.sort(distances[:, medoids], axis=1)
        d1 = ranked[:, 0]
        d2 = ranked[:, 1] if k > 1 else np.full(n, np.inf)
        owner = np.argmin(distances[:, medoids], axis=1)
        base = np.minimum(distances - d1[:, None], 0.0).sum(axis=0)
        delta = np.empty((k, n))
        for i in range(k):
            members = owner == i
            dm = distances[members]
            delta[i] = base + (np.minimum(dm, d2[members, None])
                               - d1[members, None]
                               - np.minimum(dm - d1[members, None], 0.0)
                               ).sum(axis=0)
        delta[:, medoids] = np.inf
        flat = delta[:, order]
        i, pos = np.unravel_index(int(np.argmin(flat)), flat.shape)
        if flat[i, pos] >= -1e-12 * max(history[-1], 1.0):
            break
        medoids[i] = int(order[pos])
        history.append(float(np.min(distances[:, medoids], axis=1).sum()))

    labels = np.argmin(distances[:, medoids], axis=1)
    return np.array(medoids), labels, history


def sklearn_pam(distances: np.ndarray, k: int, seed: int = 0) \
        -> Tuple[np.ndarray, np.ndarray, List[float]]:
    """PAM from scikit-learn-extra, with the same returns as :func:`pam`."""
    if KMedoids is None:
        raise UnknownReducer('scikit-learn-extra is not installed')
    n = distances.shape[0]
    if not 1 <= k <= n:
        raise InvalidScenarioCount(f'k must be in [1, {n}], got {k}')
    fitted = KMedoids(n_clusters=k, metric='precomputed', method='pam',
                      init='build', random_state=seed).fit(distances)
    return (np.asarray(fitted.medoid_indices_), np.asarray(fitted.labels_),
            [float(fitted.inertia_)])


REDUCERS = {'pam': pam, 'sklearn_extra': sklearn_pam}


def reduce(scenarios: Sequence[Scenario], k: int, seed: int = 0,
           method: Optional[str] = None) \
        -> Tuple[List[Scenario], np.ndarray]:
    """
    Reduce a scenario set to ``k`` medoids.

    Features are the PV and price trajectories, each standardized per
    hour, and distances are Euclidean. A medoid's weight is the total
    probability of its cluster. ``method`` names an entry of
    :data:`REDUCERS` and defaults to ``HDP_REDUCER``.

    Returns
    -------
    tuple
        The medoid scenarios, carrying their weights as probabilities, and
        the weights.

    """
    method = method or config().get('HDP_REDUCER', 'pam')
    if method not in REDUCERS:
        raise UnknownReducer(f'No k-medoids method {method!r}; choose '
                             f'from {sorted(REDUCERS)}')
    if k <= 0:
        raise InvalidScenarioCount(f'k must be positive, got {k}')
    if k > len(scenarios):
        raise InvalidScenarioCount(f'Cannot pick {k} medoids from '
                                   f'{len(scenarios)} scenarios')
    features = np.array([np.concatenate([s.pv, s.buy_price])
                         for s in scenarios])
    spread = features.std(axis=0)
    features = (features - features.mean(axis=0)) \
        / np.where(spread > 0, spread, 1.0)
    medoids, labels, history = REDUCERS[method](cdist(features, features),
                                                k, seed)
    probability = np.array([s.probability for s in scenarios])
    weights = np.array([probability[labels == i].sum() for i in range(k)])
    weights = weights / weights.sum()
    logger.info('Reduced %i scenarios to %i medoids with %s, total '
                'distance %.6g', len(scenarios), k, method, history[-1])
    reduced = [scenarios[m]._replace(probability=float(w))
               for m, w in zip(medoids, weights)]
    return reduced, weights
