"""Key rates for unidimensional discrete-modulation CV-QKD."""
