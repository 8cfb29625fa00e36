"""scikit-learn style facade over the evolution protocols."""
from __future__ import annotations

import dataclasses

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import experiment as ex
from .config import ExperimentConfig
from .controller import GAIN_NAMES, N_GAINS


def check_gains(gains) -> np.ndarray:
    """Validate and return an 18-gain vector (accepts GainSet, Individual or array)."""
    g = np.asarray(getattr(gains, "gains", getattr(gains, "values", gains)), dtype=np.float64)
    if g.ndim != 1 or g.shape[0] != N_GAINS:
        raise ValueError(f"expected {N_GAINS} gains, got shape {g.shape}")
    if not np.all(np.isfinite(g)):
        raise ValueError("gains must be finite")
    return g


def check_gain_matrix(X) -> np.ndarray:
    """Validate a (n_controllers, 18) array of gain sets."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != N_GAINS:
        raise ValueError(f"expected {N_GAINS} columns, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise ValueError("gains must be finite")
    return X


class StagedGainTuner(BaseEstimator):
    """Evolve controller gains with one- or two-stage DE.

    ``fit()`` ignores ``X``/``y``: the simulator is the data source.
    ``score(X)`` is the mean unseen-schedule fitness of the controllers in
    ``X`` (the fitted best controller when ``X`` is None).

    >>> tuner = StagedGainTuner(method="tse", seed=3).fit()   # doctest: +SKIP
    >>> tuner.best_gains_.shape                                # doctest: +SKIP
    (18,)
    """

    def __init__(self, method="tse", population_size=20, generation_cap=200, trial_repeats=3,
                 score_repeats=20, seed=0, workers=1, config=None):
        self.method = method
        self.population_size = population_size
        self.generation_cap = generation_cap
        self.trial_repeats = trial_repeats
        self.score_repeats = score_repeats
        self.seed = seed
        self.workers = workers
        self.config = config

    def _config(self) -> ExperimentConfig:
        base = self.config if self.config is not None else ExperimentConfig()
        trial = dataclasses.replace(base.trial, repeats=self.trial_repeats)
        return dataclasses.replace(base, population_size=self.population_size,
                                   generation_cap=self.generation_cap, seed=self.seed,
                                   workers=self.workers, trial=trial)

    def fit(self, X=None, y=None):
        if self.method not in ex.RUNNERS:
            raise ValueError(f"method must be one of {tuple(ex.RUNNERS)}, got {self.method!r}")
        cfg = self._config()
        self.result_ = ex.RUNNERS[self.method](cfg, self.seed)
        self.best_gains_ = self.result_.best.gains.copy()
        self.converged_ = self.result_.converged
        self.n_generations_ = len(self.result_.records) - 1
        self.convergence_generation_ = self.result_.convergence_generation
        return self

    def gains_dict(self) -> dict:
        check_is_fitted(self, "best_gains_")
        return dict(zip(GAIN_NAMES, map(float, self.best_gains_)))

    def score(self, X=None, y=None) -> float:
        if X is None:
            check_is_fitted(self, "best_gains_")
            X = self.best_gains_[None, :]
        X = check_gain_matrix(X)
        res = ex.evaluate_generalisation(list(X), self.seed, self._config(), self.score_repeats)
        return res.mean
