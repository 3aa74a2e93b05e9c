"""whysim: counterfactual what-if interrogation engine for driving scenarios."""

__version__ = "0.1.0"
