//! Geographic hotspot prediction by point cloud, voxel and community
//! partition clustering.
//!
//! Records are mapped into a normalized feature space, quantized into sparse
//! voxels, and grouped into communities of nearby voxels. Each community gets
//! a share of the hotspot budget proportional to its density and is clustered
//! on its own with k-means; the cluster centers are then combined with the
//! community centroid. Global k-means and fuzzy c-means are provided as
//! comparators, along with the holdout and timing harness used to compare them.
//!
//! The `parallel` feature (on by default) runs the data-parallel loops on
//! rayon. All reductions use fixed chunking, so results are bit-identical with
//! or without it and for any pool size.

pub mod baselines;
pub mod community;
pub mod error;
pub mod evaluation;
pub mod feature_space;
pub mod io;
pub mod kmeans;
pub mod par;
pub mod partition;
pub mod prediction;
pub mod voxel_grid;

pub use error::{Error, Result};
pub use feature_space::{FeaturePoint, FeatureSpec, GeoCoord, NormalizedCloud, PointCloud, Points};
pub use kmeans::{ClusterModel, KMeansParams};
pub use partition::{predict_hotspots, CenterAdjust, PredictConfig};
pub use prediction::{Hotspot, HotspotPrediction, Method};
