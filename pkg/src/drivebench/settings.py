"""
Django settings for the drivebench project.

The harness has no web surface: Django provides the settings layer, the ORM
for campaign bookkeeping, the management commands that form the CLI and the
test runner. Harness defaults are collected in the DRIVEBENCH dictionary
below; per-deployment values come from environment variables.
"""

import os

# Build paths inside the project like this: os.path.join(BASE_DIR, ...)
BASE_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = os.environ.get(
    'DRIVEBENCH_SECRET_KEY',
    'drivebench-local-only-8v$1q_0m!c2x#r4kz7t9w')

DEBUG = os.environ.get('DRIVEBENCH_DEBUG', '0') == '1'

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'core',
    'sim',
    'adapters',
    'dualsys',
    'metrics',
    'scengen',
    'hil',
    'campaign',
]

MIDDLEWARE = []


# Database
# https://docs.djangoproject.com/en/3.2/ref/settings/#databases

DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': os.environ.get('DRIVEBENCH_DB_PATH',
                               os.path.join(BASE_DIR, 'db.sqlite3')),
    }
}

DEFAULT_AUTO_FIELD = 'django.db.models.AutoField'


# Internationalization

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True


# Logging

LOG_LEVEL = os.environ.get('DRIVEBENCH_LOG_LEVEL', 'INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '%(asctime)s %(levelname)s %(name)s: %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'root': {
        'handlers': ['console'],
        'level': LOG_LEVEL,
    },
}


# Celery

REDIS_URL = os.environ.get('DRIVEBENCH_REDIS_URL', 'redis://localhost:6379/0')

CELERY_BROKER_URL = REDIS_URL
CELERY_RESULT_BACKEND = REDIS_URL
CELERY_TASK_ALWAYS_EAGER = os.environ.get('DRIVEBENCH_CELERY_EAGER', '1') == '1'
CELERY_TASK_EAGER_PROPAGATES = True
CELERY_TASK_SERIALIZER = 'json'
CELERY_RESULT_SERIALIZER = 'json'


# Harness

DRIVEBENCH = {
    # Observation history {I_(t-k), ..., I_t} handed to the fast system.
    'HISTORY_LENGTH': 4,
    'FAST_DEADLINE_S': 10.0,
    'SLOW_DEADLINE_S': 10.0,
    'PROMPT_DIR': os.path.join(BASE_DIR, 'dualsys', 'prompts', 'v1'),
    'SCENGEN_PROMPT_DIR': os.path.join(BASE_DIR, 'scengen', 'prompts', 'v1'),
    'DSL_GRAMMAR': os.path.join(BASE_DIR, 'scengen', 'dsl_grammar.txt'),
    'ROUTE_LIBRARY': os.path.join(BASE_DIR, 'sim', 'routes'),
    'SCENARIO_SUITE': os.path.join(BASE_DIR, 'scengen', 'suites', 'threat_v1'),
    'SIM': {
        'DT': 0.1,
        'MAX_ACCEL': 4.0,
        'MAX_BRAKE': 8.0,
        'DRAG': 0.25,
        'WHEEL_BASE': 2.9,
        'MAX_STEER_ANGLE': 0.7,
        'EGO_LENGTH': 4.5,
        'EGO_WIDTH': 2.0,
        'DEVIATION_MARGIN': 3.0,
        'FINISH_TOLERANCE': 0.5,
        'STOP_SPEED': 0.05,
        'ACTOR_SPEED_JITTER': 0.05,
        'RENDER_RANGE': 50.0,
        'RASTER_SIZE': 64,
        'RASTER_RESOLUTION': 0.5,
    },
    'BLOCKED_FRAMES': 200,
    'MAX_FRAMES': 2000,
    'REPETITIONS': 10,
    'PARALLELISM': 1,
    'REPAIR_BUDGET': 3,
    'PENALTIES': {
        'collision_pedestrian': 0.50,
        'collision_vehicle': 0.60,
        'collision_static': 0.65,
        'red_light': 0.70,
        'boundary_crossing': 0.80,
        'route_deviation': 0.70,
        'timeout': 0.70,
    },
    'COMFORT': {
        'MAX_STEER_DELTA': 0.1,
        'MAX_ACCEL': 3.0,
        'MAX_JERK': 10.0,
    },
    'HIL': {
        'PROTOCOL_VERSION': 1,
        'CYCLE_S': 0.5,
        'CONTROLLER_BUDGET_S': 0.5,
        'MAX_FRAME_BYTES': 1 << 20,
        'SILENCE_CYCLES': 3,
        'BIND': '127.0.0.1:8800',
        'FINISH_TOLERANCE': 0.1,
        'ROUTES': os.path.join(BASE_DIR, 'hil', 'routes'),
        'PLATFORMS': {
            'jetbot': {'kind': 'differential', 'max_speed': 0.6,
                       'track_width': 0.12, 'body_length': 0.26,
                       'body_width': 0.2},
            'limo': {'kind': 'ackermann', 'max_speed': 1.0, 'wheel_base': 0.2,
                     'max_steer_angle': 0.4, 'body_length': 0.32,
                     'body_width': 0.22},
        },
    },
}
