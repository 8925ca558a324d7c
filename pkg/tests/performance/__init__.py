"""Performance benchmark tests module"""
