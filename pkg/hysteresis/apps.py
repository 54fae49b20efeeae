from django.apps import AppConfig


class HysteresisConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "hysteresis"
