"""Asymptotic exponential arbitrage in Markovian log-price models: simulation,
ergodic averages and large-deviations estimates."""

__version__ = "0.1.0"
