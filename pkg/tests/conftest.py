from hypothesis import settings

# the first call into a compiled kernel includes loading it from the cache
settings.register_profile("nambd", deadline=None)
settings.load_profile("nambd")
