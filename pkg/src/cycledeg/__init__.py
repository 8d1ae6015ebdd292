"""Periodic solutions of perturbed autonomous systems near limit cycles."""
