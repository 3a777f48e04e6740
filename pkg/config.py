import os
from dotenv import load_dotenv

# Load environment variables from .env file, if it exists
load_dotenv()


def _default_jobs():
    return max(1, os.cpu_count() or 1)


class Config:
    """Base configuration class."""
    ENV = 'default'

    # Identity tester
    SEED = int(os.environ.get('LINEARIZER_SEED') or 0)
    POINTS = int(os.environ.get('LINEARIZER_POINTS') or 8)
    SAMPLE_BOUND = int(os.environ.get('LINEARIZER_SAMPLE_BOUND') or 10000)
    MAX_RESAMPLES = int(os.environ.get('LINEARIZER_MAX_RESAMPLES') or 50)
    PRECISION_BITS = int(os.environ.get('LINEARIZER_PRECISION_BITS') or 256)
    FLOAT_THRESHOLD = float(os.environ.get('LINEARIZER_FLOAT_THRESHOLD') or 1e-40)
    FLOAT_RANGE = int(os.environ.get('LINEARIZER_FLOAT_RANGE') or 3)

    # Worker parallelism for zero tests and grid sweeps
    JOBS = int(os.environ.get('LINEARIZER_JOBS') or _default_jobs())

    # Synthesizer
    REFERENCE_Q = float(os.environ.get('LINEARIZER_REFERENCE_Q') or 1)
    ODE_RTOL = float(os.environ.get('LINEARIZER_ODE_RTOL') or 1e-12)
    ODE_ATOL = float(os.environ.get('LINEARIZER_ODE_ATOL') or 1e-14)
    QUAD_DPS = int(os.environ.get('LINEARIZER_QUAD_DPS') or 30)

    LOG_LEVEL = os.environ.get('LINEARIZER_LOG_LEVEL', 'WARNING').upper()


class QuickConfig(Config):
    """Fewer sample points at lower precision, for interactive use."""
    ENV = 'quick'
    POINTS = 4
    PRECISION_BITS = 128


class ThoroughConfig(Config):
    """More sample points at higher precision."""
    ENV = 'thorough'
    POINTS = 16
    PRECISION_BITS = 512


# Dictionary to easily access config classes by name
config_by_name = dict(
    quick=QuickConfig,
    thorough=ThoroughConfig,
    default=Config
)
