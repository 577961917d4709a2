from django.urls import path

from . import views


urlpatterns = [
    path("health/", views.health_check, name="health-check"),
    path("instances/", views.list_instance_catalog, name="instances"),
    path("runs/", views.list_runs, name="runs"),
    path("runs/<str:run_id>/", views.run_detail, name="run-detail"),
]
