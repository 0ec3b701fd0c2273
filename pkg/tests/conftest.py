"""Shared pytest knobs: keep hypothesis deadlines off (FE assembly inside
property tests is slow and timing noise is not a failure)."""

from hypothesis import settings

settings.register_profile("suite", deadline=None, max_examples=50)
settings.load_profile("suite")
