"""Last passage times of continuous local martingales: closed-form laws,
option-price identities and a Monte Carlo verification harness."""
__version__ = "0.1.0"
