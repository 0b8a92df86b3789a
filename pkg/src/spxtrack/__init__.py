"""Long-term superpixel tracking."""
