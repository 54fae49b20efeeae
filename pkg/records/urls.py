from django.urls import path

from .api import RecordRetrieveAPI, RecordUploadAPI

urlpatterns = [
    path(
        "api/v1/records/upload",
        RecordUploadAPI.as_view(),
        name="api_upload_record",
    ),
    path(
        "api/v1/records",
        RecordRetrieveAPI.as_view(),
        name="api_get_all_record",
    ),
]
