import os
import sys


def run() -> None:
    # BLAS reads its thread count at import time, so cap it before numpy loads
    threads = os.environ.get("SHOTMEM_THREADS")
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = threads
    from .cli import main

    sys.exit(main())


if __name__ == "__main__":
    run()
