from django.urls import path

from .api import FitGenerationsAPI, FitStatusAPI

urlpatterns = [
    path(
        "api/v1/fits/status/<uuid:run_id>",
        FitStatusAPI.as_view(),
        name="api_get_status_fit",
    ),
    path(
        "api/v1/fits/<uuid:run_id>/generations",
        FitGenerationsAPI.as_view(),
        name="api_get_fit_generations",
    ),
]
