"""Monte Carlo benchmark on the gust-disturbed Boeing 747 model."""
