"""
Numerical services: models, stationary measures, fixed points, spectra, semigroups and particles
"""
