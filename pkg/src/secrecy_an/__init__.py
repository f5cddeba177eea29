"""Artificial-noise aided secrecy rate maximization."""
