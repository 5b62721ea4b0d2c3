"""Monte Carlo and quadrature toolkit for frozen fragmentation trees.

Frozen fragments of a conservative fragmentation chain, the tagged
renewal processes they induce, the coupled-pair covariance kernel and
the central-limit and U-statistic limits built on top of them.
"""

__version__ = "0.1.0"
