"""Point pytest at the Django settings, as manage.py does for the test runner."""
import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'backend.settings')
django.setup()
