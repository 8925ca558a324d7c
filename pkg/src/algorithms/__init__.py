"""Autodiff core, code hierarchy, co-graphs and the network layers"""
