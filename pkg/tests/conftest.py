import math
import sys
from pathlib import Path

import pytest
from scipy import special

sys.path.insert(0, str(Path(__file__).parent))

from ladderlab import (
    LognormalShifted,
    WeibullShifted,
    build_chain,
    certify,
    make_builtin,
)

# Bases with strictly lighter tails than exp(-g), shifted to mean -1.
CHAIN_SPECS = {
    "g1": ("g1", 2.0, lambda: LognormalShifted(0.0, 0.25, -1.0 - math.exp(0.125))),
    "g2": ("g2", 0.5, lambda: WeibullShifted(1.0, 0.6, -1.0 - special.gamma(1 + 1 / 0.6))),
    "g3": ("g3", 0.5, lambda: WeibullShifted(1.0, 0.8, -1.0 - special.gamma(1 + 1 / 0.8))),
}


@pytest.fixture(scope="session")
def certified():
    """Certification reports of the three builtin families, fitted once."""
    out = {}
    for key, (family, param, _) in CHAIN_SPECS.items():
        g = make_builtin(family, param)
        out[key] = (g, certify(g))
    return out


@pytest.fixture(scope="session")
def chains(certified):
    """Fully built construction chains for the three example families."""
    out = {}
    for key, (_, _, base_factory) in CHAIN_SPECS.items():
        g, report = certified[key]
        out[key] = build_chain(base_factory(), g, report)
    return out
