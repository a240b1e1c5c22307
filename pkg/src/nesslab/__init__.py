"""ness-lab: McLennan ensembles for driven Markov processes."""
__version__ = "0.1.0"
