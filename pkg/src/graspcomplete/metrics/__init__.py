from .core import (
    F1_RADIUS,
    VOXEL_DIMS,
    MetricsReport,
    aggregate,
    chamfer,
    common_grid_bounds,
    directed_distances,
    evaluate_meshes,
    gsr,
    hausdorff,
    jaccard,
    mesh_jaccard,
    precision_recall_f1,
    wilcoxon_signed_rank,
    write_json,
    write_rows_csv,
)

__all__ = [
    "F1_RADIUS",
    "VOXEL_DIMS",
    "MetricsReport",
    "aggregate",
    "chamfer",
    "common_grid_bounds",
    "directed_distances",
    "evaluate_meshes",
    "gsr",
    "hausdorff",
    "jaccard",
    "mesh_jaccard",
    "precision_recall_f1",
    "wilcoxon_signed_rank",
    "write_json",
    "write_rows_csv",
]
