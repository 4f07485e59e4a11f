"""Verification laboratory for ergodicity of order-preserving Markov processes.

Exact finite-state machinery (stochastic domination, monotone couplings,
Lyapunov return-time bounds, optimal-transport distances) plus a monotone
Monte-Carlo solver for a stochastic reaction-diffusion equation on the
1-D torus with degenerate noise.
"""

__version__ = "0.1.0"


def fixture_path(name: str) -> str:
    """Absolute path of a bundled JSON fixture file."""
    from importlib import resources
    return str(resources.files(__name__).joinpath("fixtures", name))
