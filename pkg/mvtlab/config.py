import os
from fractions import Fraction

from dotenv import load_dotenv

load_dotenv()

DATA_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "data")


class Config:
    DATABASE_URL = os.getenv("MVT_DATABASE_URL", "sqlite:///mvtlab.db")
    CACHE_DIR = os.getenv("MVT_CACHE_DIR", ".mvt_cache")

    # Fixed-point resolution for window comparisons
    SCALE_BITS = int(os.getenv("MVT_SCALE_BITS", "48"))

    # "O(W)" windows become |.| <= WINDOW_CONSTANT * W
    WINDOW_CONSTANT = float(os.getenv("MVT_WINDOW_CONSTANT", "1.0"))

    # Stand-in for the unspecified implicit constants of "<<" statements
    AUDIT_CONSTANT = float(os.getenv("MVT_AUDIT_CONSTANT", "10.0"))
    LOWER_BOUND_CONSTANT = float(os.getenv("MVT_LOWER_BOUND_CONSTANT", "0.01"))

    MEMORY_BUDGET = int(os.getenv("MVT_MEMORY_BUDGET", str(8 * 1024 ** 3)))
    ORACLE_CEILING = int(os.getenv("MVT_ORACLE_CEILING", str(10 ** 9)))
    WORKERS = int(os.getenv("MVT_WORKERS", "1"))

    DEGENERACY_THRESHOLD = float(os.getenv("MVT_DEGENERACY_THRESHOLD", "1e-9"))
    SINGULAR_THRESHOLD = 1e-12

    # "half-open": n in (N/2, N]; "closed": n in [ceil(N/2), N]
    RANGE_MODE = os.getenv("MVT_RANGE_MODE", "half-open")

    # Slope band around a claimed exponent
    BAND_LOW = 1.0
    BAND_HIGH = 0.35
    RESIDUAL_GATE = 0.1

    DEFAULT_LADDERS = {
        2: [32, 48, 64, 96, 128],
        3: [32, 48, 64, 96, 128],
        4: [32, 48, 64, 96, 128],
        5: [24, 32, 48, 64, 96],
        6: [16, 20, 24, 28, 32],
    }

    # Exponent sigma(8) in Weyl's inequality for the eighth power
    WEYL_SIGMAS = {
        "sigma-3-256": Fraction(3, 256),
        "sigma-1-84": Fraction(1, 84),
        "sigma-16-1280": Fraction(16, 5) / 256,
        "sigma-56-3840": Fraction(56, 15) / 256,
    }

    CURVE_LIBRARY = os.getenv("MVT_CURVE_LIBRARY", os.path.join(DATA_DIR, "curves.env"))

    REPORT_VERSION = 1
    MC_CHUNK = 4096
