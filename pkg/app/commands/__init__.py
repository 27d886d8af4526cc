# Commands package - one module per CLI command family
