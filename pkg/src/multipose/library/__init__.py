"""Object model library: meshes, sampling, visibility and crops."""
