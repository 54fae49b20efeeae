from django.contrib import admin
from django.urls import include, path

from .consumer import NotificationConsumer

urlpatterns = [
    path("admin/", admin.site.urls),
    path("", include("records.urls")),
    path("", include("fitting.urls")),
]

websocket_urlpatterns = [
    path("ws/notifications/", NotificationConsumer.as_asgi()),
]
