"""Shared pytest configuration."""


def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "slow: reduced-scale acceptance runs (deselect with -m 'not slow')",
    )
