from django.contrib import admin

from .models import FitRun, Generation

admin.site.register(FitRun)
admin.site.register(Generation)
