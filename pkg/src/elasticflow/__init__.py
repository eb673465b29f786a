"""Elastic flow of inextensible curves with cubic Hermite finite elements."""
