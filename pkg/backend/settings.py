"""
Django settings for the reverse Ising toolkit.

Only the pieces the management commands and the test runner need are
configured; everything numeric is read from ``REVERSE_ISING`` below.
"""
import os
from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


SECRET_KEY = os.environ.get('SECRET_KEY', 'reverse-ising-local-only')

DEBUG = os.environ.get('DEBUG', 'False') == 'True'

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'django.contrib.contenttypes',

    # Local apps
    'backend.reverse_ising',
]

# No models; the database is only declared so the test runner has a default alias.
DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': BASE_DIR / 'db.sqlite3',
    }
}

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

USE_TZ = True


def _env_float(name, default):
    return float(os.environ.get(name, default))


def _env_int(name, default):
    return int(os.environ.get(name, default))


# Reverse Ising defaults. Command-line flags and --config files override these.
REVERSE_ISING = {
    'LAMBDA': _env_float('REVERSE_ISING_LAMBDA', 100.0),
    'BETA': _env_float('REVERSE_ISING_BETA', 1.0),
    'MODE': os.environ.get('REVERSE_ISING_MODE', 'aux-fixed'),
    'CORRECT_AUX_FREE': os.environ.get('REVERSE_ISING_CORRECT_AUX_FREE', 'False') == 'True',
    'SEED': _env_int('REVERSE_ISING_SEED', 0),

    # Projected quasi-Newton solver
    'SOLVER_MAX_ITERATIONS': _env_int('REVERSE_ISING_SOLVER_MAX_ITERATIONS', 500),
    'SOLVER_GRADIENT_TOLERANCE': _env_float('REVERSE_ISING_SOLVER_GRADIENT_TOLERANCE', 1e-6),
    'SOLVER_STEP_TOLERANCE': _env_float('REVERSE_ISING_SOLVER_STEP_TOLERANCE', 1e-10),
    'SOLVER_STARTS': _env_int('REVERSE_ISING_SOLVER_STARTS', 8),
    'SOLVER_MEMORY': _env_int('REVERSE_ISING_SOLVER_MEMORY', 10),

    # Data generation / surrogates
    'SPLIT_RATIO': _env_float('REVERSE_ISING_SPLIT_RATIO', 0.8),
    'FOREST_TREES': _env_int('REVERSE_ISING_FOREST_TREES', 100),
    'MLP_LAYERS': os.environ.get('REVERSE_ISING_MLP_LAYERS', '64,32'),
    'MLP_EPOCHS': _env_int('REVERSE_ISING_MLP_EPOCHS', 200),
    'MLP_STEP_SIZE': _env_float('REVERSE_ISING_MLP_STEP_SIZE', 1e-3),
    'MLP_BATCH_SIZE': _env_int('REVERSE_ISING_MLP_BATCH_SIZE', 64),

    'OUTPUT_DIR': os.environ.get('REVERSE_ISING_OUTPUT_DIR', str(BASE_DIR / 'runs')),
}


# Logging
LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'loggers': {
        'backend.reverse_ising': {
            'handlers': ['console'],
            'level': os.environ.get('REVERSE_ISING_LOG_LEVEL', 'INFO'),
            'propagate': False,
        },
    },
}
