"""circumtri: point cloud triangulation by detecting triangle circumcenters.

The library triangulates 3D point clouds into edge-manifold surface meshes.
Each point's K-nearest-neighbor patch is normalized and fed to a detector
that predicts circumcenters of the point's adjacent triangles under a fixed
spherical anchor grid; the vertex triplets dual to the detected centers are
recovered through the equidistance property, unioned into a primitive mesh
and post-processed. An exact-oracle mode verifies the geometric path without
any training, and a metric suite scores reconstructions against references.
"""

from .anchors import AnchorGrid, build_grid
from .dataset import (TrainingSample, adjacent_triangles, augment, make_sample,
                      mesh_samples, normalize_mesh, read_samples, voxel_decimate,
                      write_samples)
from .detector import (AdamState, Detector, DetectorConfig, bce_loss,
                       graph_conv, load_checkpoint, loc_loss, positional_encode,
                       positives_from_samples, run_training, save_checkpoint,
                       train_step)
from .duality import DetectedCenter, RecoveredTriangle, recover_all, recover_triangle
from .errors import (CheckpointError, CircumtriError, DegeneratePatch,
                     DegenerateTriangle, DuplicatePoints, EmptyMesh,
                     IndexOutOfRange, NonFiniteLoss, NoPositives, ParseError)
from .geometry import (KnnIndex, Patch, PointCloud, Spherical, build_knn_index,
                       circumcenter, circumcenters, circumradii, extract_all_patches,
                       extract_patch, from_spherical, from_spherical_array,
                       to_spherical, to_spherical_array)
from .mesh import IndexedMesh, canonical_faces, edge_face_counts, mesh_edges
from .metrics import (angle_accuracy_report, chamfer, edge_metrics, f_score,
                      normal_metrics, sample_surface)
from .pipeline import (OracleStats, TriangulationStats, oracle_triangulate,
                       patch_detection_metrics, triangulate)
from .postprocess import (boundary_loops, enforce_edge_manifold, fill_small_holes,
                          is_edge_manifold, non_manifold_edge_fraction)
from .synthetic import grid_plane, icosphere, open_cylinder, wavy_delaunay_sheet

__version__ = "0.1.0"
