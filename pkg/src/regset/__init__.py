"""Finite-resolution constructions on Ahlfors-David regular sets."""
