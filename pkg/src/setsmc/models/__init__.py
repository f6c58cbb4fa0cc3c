"""Bayesian target models exposed behind the TargetModel interface."""

from setsmc.models.base import TargetModel
from setsmc.models.elliptic import EllipticInverse, make_synthetic_fixture
from setsmc.models.toy import GaussianToy

__all__ = ["TargetModel", "GaussianToy", "EllipticInverse", "make_synthetic_fixture"]
