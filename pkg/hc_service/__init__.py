"""Command-line service that runs Heat Conduction influence experiments."""
