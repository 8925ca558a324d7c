"""Algorithm tests module"""
