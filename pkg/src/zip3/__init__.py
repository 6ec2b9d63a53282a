"""ZIP3: mean/dispersion zero-inflated Poisson distribution and regression."""
