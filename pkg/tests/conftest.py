import os

# keep BLAS single-threaded so timings and float reductions are reproducible
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

from hypothesis import settings  # noqa: E402

settings.register_profile("default", max_examples=200, deadline=None)
settings.load_profile("default")
