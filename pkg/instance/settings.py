"""
Django settings of the SegResMamba instance.

The following environment variables are used in settings:
    * `SRM_DEBUG` (`DEBUG`): enable/disable debugging (dev or prod logging);
    * `SRM_LOG`: log level of the `segresmamba` loggers;
    * `SRM_CHECK_FINITE`: check for NaN/Inf at every op boundary (defaults
      to `SRM_DEBUG`);
    * `SRM_TOM_PARALLEL`: run the three ToM branches in a thread pool.

Other `SRM_*` values of `segresmamba/settings.py` can be overridden here.

For Django settings see:
    https://docs.djangoproject.com/en/4.2/ref/settings/
"""
import os


def env_flag(name, default):
    if name not in os.environ:
        return default
    return os.environ[name].lower() in ('true', '1', 'yes')


# Project root directory
PROJECT_ROOT = os.path.dirname(os.path.dirname(__file__))
# DEBUG mode
DEBUG = env_flag('SRM_DEBUG', False)

# Only used by Django internals: no session, no request is ever signed
SECRET_KEY = os.environ.get('SRM_SECRET_KEY', 'segresmamba-local')

# No model is stored in a database
DATABASES = {}

LANGUAGE_CODE = 'en-us'
TIME_ZONE = os.environ.get('TZ') or 'UTC'
USE_I18N = True
USE_TZ = True

INSTALLED_APPS = (
    'segresmamba.apps.SegResMambaConfig',

    # SegResMamba dependencies
    'rest_framework',
)

# Include specific configuration depending of DEBUG
if DEBUG:
    from .dev import *
else:
    from .prod import *


########################################################################
# SegResMamba
########################################################################
SRM_CHECK_FINITE = env_flag('SRM_CHECK_FINITE', DEBUG)
SRM_TOM_PARALLEL = env_flag('SRM_TOM_PARALLEL', False)
