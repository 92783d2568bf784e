"""Monitored-qubit dynamics as a stochastic resetting process."""

from .model import (ModelParams, Regime, CountingRegime, RegimeError, make_params,
                    params_from_lambda, drift, click_rate, fixed_points, wrap)

__all__ = ["ModelParams", "Regime", "CountingRegime", "RegimeError", "make_params",
           "params_from_lambda", "drift", "click_rate", "fixed_points", "wrap"]
