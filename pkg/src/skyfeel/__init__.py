"""UAV deployment and sensing/computation/communication resource planning
for federated edge learning, with convergence-bound oracles, a Monte Carlo
training simulator and an FMCW micro-Doppler sensing study."""

__version__ = "0.1.0"
