"""Corpus I/O, synthesis, checkpoints and training services"""
