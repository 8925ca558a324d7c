"""UI components module (input form, metrics, predictions, attention)"""
