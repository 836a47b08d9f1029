from .classify import ObjectClass, classify_dims, classify_object
from .dbscan import NOISE, cluster, dbscan
from .geofence import GeofencePolygon, geofence_filter, geofence_mask
from .lof import lof_filter, lof_mask, lof_scores
from .obb import OBB, fit_obb
from .pipeline import LOF_REMOVED, DetectionPipeline, FrameResult
from .tracking import Detection, Track, Tracker, TrackStatus, track_step, read_trajectories, write_trajectories

__all__ = ["OBB", "NOISE", "LOF_REMOVED", "Detection", "DetectionPipeline", "FrameResult", "GeofencePolygon",
           "ObjectClass", "Track", "TrackStatus", "Tracker", "classify_dims", "classify_object", "cluster",
           "dbscan", "fit_obb", "geofence_filter", "geofence_mask", "lof_filter", "lof_mask", "lof_scores",
           "read_trajectories", "track_step", "write_trajectories"]
