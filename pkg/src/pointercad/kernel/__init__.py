"""Simplified B-rep kernel over provenance-tagged triangle meshes."""
