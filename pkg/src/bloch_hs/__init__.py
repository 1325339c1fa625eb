"""Bloch-wave homogenization of Hashin-Shtrikman micro-structures."""
