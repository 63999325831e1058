"""Shared test configuration.

Property tests run derandomized with no deadline so the suite is
reproducible and immune to scheduler noise on loaded machines.
"""

from hypothesis import settings

settings.register_profile("repro", deadline=None, derandomize=True)
settings.load_profile("repro")
