import hypothesis

hypothesis.settings.register_profile(
    "qbuffer", deadline=None, derandomize=True)
hypothesis.settings.load_profile("qbuffer")
