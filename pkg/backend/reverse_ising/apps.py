from django.apps import AppConfig


class ReverseIsingConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'backend.reverse_ising'
    verbose_name = 'Reverse Ising toolkit'
