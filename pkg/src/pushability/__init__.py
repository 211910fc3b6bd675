"""Obstacle pushability from scene point clouds and push-force feedback."""

__version__ = "0.1.0"
