# H2 analysis and synthesis for systems with i.i.d. random coefficients

__version__ = "1.0.0"
