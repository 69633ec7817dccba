"""Simulation and verification toolkit for the Cramer-Lundberg model with investments."""
