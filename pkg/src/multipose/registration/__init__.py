"""Point-cloud registration and the alignment metric."""
