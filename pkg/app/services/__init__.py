# Services package - numerical core (expressions, moments, LMIs, simulation)
