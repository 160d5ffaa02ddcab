import os

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'simple': {
            'format': '%(levelname)s %(name)s: %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
    },
    'loggers': {
        'segresmamba': {
            'handlers': ['console'],
            'level': os.getenv('SRM_LOG', 'DEBUG'),
        },
        'segresmamba.commands': {
            'handlers': ['console'],
            'level': os.getenv('SRM_LOG', 'DEBUG'),
            'propagate': False,
        },
        'segresmamba.test': {
            'handlers': ['console'],
            'level': os.getenv('SRM_LOG', 'DEBUG'),
            'propagate': False,
        },
    },
}
