"""Virtual element solver for coupled Poisson-Nernst-Planck/Navier-Stokes flow."""

__version__ = "0.1.0"
