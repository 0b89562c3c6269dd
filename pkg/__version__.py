"""
Version information for slipflow
"""

__version__ = "0.3.0"
__title__ = "slipflow"
__description__ = "A CLI laboratory for incompressible surface Navier-Stokes flow with Navier slip boundary conditions"
__author__ = "slipflow contributors"
__license__ = "MIT"
