from django.apps import AppConfig


class SegResMambaConfig(AppConfig):
    name = 'segresmamba'
    verbose_name = 'SegResMamba'
