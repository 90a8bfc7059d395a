"""Spiking distributional RL: multi-compartment neurons, population-coded
quantile fractions and explicitly differentiated spiking networks."""

__version__ = "0.1.0"
