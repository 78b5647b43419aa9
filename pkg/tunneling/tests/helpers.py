# tunneling/tests/helpers.py
import os
import unittest

import numpy as np

from tunneling.dvr import four_level_closed_form
from tunneling.models import DvrBasis

SLOW_TESTS = os.environ.get("DVRGME_SLOW_TESTS") == "1"
slow = unittest.skipUnless(SLOW_TESTS, "set DVRGME_SLOW_TESTS=1 to run")

# representative two-doublet matrix elements (deep double well)
A11, A22, A12 = 3.0, 3.4, 0.7


def two_level_basis(delta=0.5, half_width=1.0, bias=0.0):
    """Symmetric 2LS in the DVR: lambda = -+half_width, tunneling delta."""
    return DvrBasis(
        positions=np.array([-half_width, half_width]),
        transform=np.array([[1.0, -1.0], [1.0, 1.0]]) / np.sqrt(2.0),
        tunneling=np.array([[0.0, delta], [delta, 0.0]]),
        site_energies=np.array([0.0, bias]),
        labels=("L", "R"),
    )


def four_level_basis(delta1=0.01, delta2=0.05, mean_gap=0.8):
    return four_level_closed_form(A11, A22, A12, delta1, delta2, mean_gap)
