"""Federated DDPG training and evaluation for collision-avoidance vehicle control."""

__version__ = "0.1.0"
