# Standard library imports
import os
import logging
from dataclasses import dataclass

# Import config
from config import config_by_name

from .identity import SamplerConfig
from .synthesizer import SynthesisOptions

# --- Configure Logging ---
logging.basicConfig(level=os.environ.get('LINEARIZER_LOG_LEVEL', 'WARNING').upper(),
                    format='%(asctime)s - %(levelname)s - %(name)s - %(threadName)s - %(message)s')

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Settings:
    """Resolved configuration; the CLI overrides individual fields before use."""
    env: str
    seed: int
    points: int
    sample_bound: int
    max_resamples: int
    precision_bits: int
    float_threshold: float
    float_range: int
    jobs: int
    reference_q: float
    ode_rtol: float
    ode_atol: float
    quad_dps: int
    log_level: str

    def sampler(self, **overrides) -> SamplerConfig:
        values = dict(
            seed=self.seed, points=self.points, bound=self.sample_bound, max_resamples=self.max_resamples,
            precision_bits=self.precision_bits, float_threshold=self.float_threshold, float_range=self.float_range,
        )
        values.update(overrides)
        return SamplerConfig(**values)

    def synthesis(self, sampler: SamplerConfig, **overrides) -> SynthesisOptions:
        values = dict(
            sampler=sampler, q_ref=self.reference_q, rtol=self.ode_rtol, atol=self.ode_atol,
            quad_dps=self.quad_dps, jobs=self.jobs,
        )
        values.update(overrides)
        return SynthesisOptions(**values)


def _validate(settings: Settings) -> None:
    checks = [
        ("POINTS", settings.points >= 1),
        ("SAMPLE_BOUND", settings.sample_bound > 0),
        ("MAX_RESAMPLES", settings.max_resamples > 0),
        ("PRECISION_BITS", settings.precision_bits >= 64),
        ("FLOAT_THRESHOLD", settings.float_threshold > 0),
        ("FLOAT_RANGE", settings.float_range > 0),
        ("JOBS", settings.jobs >= 1),
        ("REFERENCE_Q", settings.reference_q != 0),
        ("ODE_RTOL", settings.ode_rtol > 0),
        ("ODE_ATOL", settings.ode_atol > 0),
        ("QUAD_DPS", settings.quad_dps > 0),
    ]
    invalid = [name for name, ok in checks if not ok]
    if invalid:
        raise ValueError(f"Invalid configuration values: {', '.join(invalid)}")


# --- Settings Factory Function ---
def create_settings(config_name=None):
    """Pick a configuration class by name (LINEARIZER_ENV by default) and validate it."""
    env_name = config_name or os.getenv('LINEARIZER_ENV', 'default')
    try:
        cfg = config_by_name[env_name]
        logger.info(f"Loading configuration for environment: {env_name}")
    except KeyError:
        logger.warning(f"Invalid LINEARIZER_ENV value: '{env_name}'. Falling back to default configuration.")
        cfg = config_by_name['default']

    settings = Settings(
        env=cfg.ENV,
        seed=cfg.SEED,
        points=cfg.POINTS,
        sample_bound=cfg.SAMPLE_BOUND,
        max_resamples=cfg.MAX_RESAMPLES,
        precision_bits=cfg.PRECISION_BITS,
        float_threshold=cfg.FLOAT_THRESHOLD,
        float_range=cfg.FLOAT_RANGE,
        jobs=cfg.JOBS,
        reference_q=cfg.REFERENCE_Q,
        ode_rtol=cfg.ODE_RTOL,
        ode_atol=cfg.ODE_ATOL,
        quad_dps=cfg.QUAD_DPS,
        log_level=cfg.LOG_LEVEL,
    )
    _validate(settings)
    logger.debug(f"Resolved settings: {settings}")
    return settings
