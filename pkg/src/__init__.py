"""Hierarchical ICD code assignment - main package"""
