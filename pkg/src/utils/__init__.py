"""Utilities module (types, config, validators)"""
