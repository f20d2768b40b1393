from hypothesis import settings

settings.register_profile("lab", deadline=None, max_examples=60, derandomize=True)
settings.load_profile("lab")
