"""Link functions connecting a distribution parameter to its linear predictor."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = ["LinkFunction", "LOG", "IDENTITY", "get_link"]


@dataclass(frozen=True)
class LinkFunction:
    """A strictly monotone, twice differentiable link ``g``.

    ``deriv`` and ``deriv2`` are g'(m) and g''(m) taken with respect to the
    parameter ``m`` (not the predictor).
    """

    tag: str
    link: Callable[[np.ndarray], np.ndarray]
    inverse: Callable[[np.ndarray], np.ndarray]
    deriv: Callable[[np.ndarray], np.ndarray]
    deriv2: Callable[[np.ndarray], np.ndarray]
    positive_inverse: bool

    def dinverse(self, m):
        """d m / d eta evaluated at parameter value ``m``."""
        return 1.0 / self.deriv(m)

    def d2inverse(self, m):
        """d^2 m / d eta^2 evaluated at parameter value ``m``."""
        g1 = self.deriv(m)
        return -self.deriv2(m) / g1**3

    def __repr__(self):
        return f"LinkFunction({self.tag!r})"

    def __reduce__(self):
        # registered links pickle by tag so worker processes can receive them
        return (get_link, (self.tag,))


LOG = LinkFunction(
    tag="log",
    link=np.log,
    inverse=np.exp,
    deriv=lambda m: 1.0 / m,
    deriv2=lambda m: -1.0 / (m * m),
    positive_inverse=True,
)

IDENTITY = LinkFunction(
    tag="identity",
    link=lambda m: np.asarray(m, dtype=float),
    inverse=lambda eta: np.asarray(eta, dtype=float),
    deriv=lambda m: np.ones_like(np.asarray(m, dtype=float)),
    deriv2=lambda m: np.zeros_like(np.asarray(m, dtype=float)),
    positive_inverse=False,
)

_LINKS = {"log": LOG, "identity": IDENTITY}


def get_link(link) -> LinkFunction:
    if isinstance(link, LinkFunction):
        return link
    try:
        return _LINKS[str(link).strip().lower()]
    except KeyError:
        raise ValueError(f"unknown link {link!r}; expected one of {sorted(_LINKS)}") from None
