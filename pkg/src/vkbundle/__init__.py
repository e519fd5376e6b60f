"""Finite-dimensional vectorial bundles and twisted K-theory approximations."""

__version__ = "0.1.0"
SCHEMA = "vk/1"
