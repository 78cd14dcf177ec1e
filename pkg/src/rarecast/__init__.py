"""Reservoir-computing prediction of chaotic systems with rare true-state updates."""
