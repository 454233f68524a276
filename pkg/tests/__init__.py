"""test suite for the lattice laboratory"""
