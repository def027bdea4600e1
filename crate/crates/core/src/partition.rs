//! The community partition predictor: budget allocation, per-community
//! k-means, center adjustment and the dispersion diagnostic.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::community::{partition_communities, Community, CommunityConfig};
use crate::error::{Error, Result};
use crate::feature_space::{normalize, NormalizedCloud, PointCloud, Points};
use crate::kmeans::{kmeans, sq_dist, stream_rng, ClusterModel, KMeansParams};
use crate::par;
use crate::prediction::{
    CommunityRegularization, CommunityTag, Diagnostics, Hotspot, HotspotPrediction, Method,
};
use crate::voxel_grid::{build_grid, VoxelGrid, DEFAULT_BINS};

pub const DEFAULT_LAMBDA: f64 = 0.1;

/// How cluster means are combined with the community centroid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CenterAdjust {
    /// `mean + lambda * centroid`.
    #[default]
    Paper,
    /// `(1 - lambda) * mean + lambda * centroid`, with `lambda <= 1`.
    Convex,
}

impl std::str::FromStr for CenterAdjust {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(CenterAdjust::Paper),
            "convex" => Ok(CenterAdjust::Convex),
            other => Err(Error::config(format!(
                "unknown center-adjust mode {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub community_id: usize,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub k_global: usize,
    /// One entry per community, in community id order.
    pub allocations: Vec<Allocation>,
}

impl PartitionPlan {
    pub fn total(&self) -> usize {
        self.allocations.iter().map(|a| a.k).sum()
    }

    pub fn k_for(&self, community_id: usize) -> Option<usize> {
        self.allocations
            .iter()
            .find(|a| a.community_id == community_id)
            .map(|a| a.k)
    }
}

/// `k_c = max(1, round(K * density_c))`, capped at the community size.
/// Rounding is half away from zero.
pub fn allocate_hotspot_budget(
    communities: &[Community],
    k_global: usize,
) -> Result<PartitionPlan> {
    if k_global == 0 {
        return Err(Error::config("hotspot budget must be at least 1"));
    }
    if communities.is_empty() {
        return Err(Error::data("no communities to allocate hotspots to"));
    }
    let allocations: Vec<Allocation> = communities
        .iter()
        .map(|c| {
            let raw = (k_global as f64 * c.density).round().max(1.0) as usize;
            Allocation {
                community_id: c.id,
                k: raw.min(c.len()),
            }
        })
        .collect();
    let plan = PartitionPlan {
        k_global,
        allocations,
    };
    if plan.total() as f64 > 1.5 * k_global as f64 {
        warn!(
            "{} communities inflate the hotspot budget from {} to {}",
            communities.len(),
            k_global,
            plan.total()
        );
    }
    Ok(plan)
}

/// A cluster center after combination with its community centroid.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjustedCenter {
    pub center: Vec<f64>,
    pub out_of_cube: bool,
}

/// Applies the center adjustment to every cluster mean. Values outside the
/// unit cube are kept as computed and flagged.
pub fn adjust_centers(
    means: &Points,
    centroid: &[f64],
    lambda: f64,
    mode: CenterAdjust,
) -> Result<Vec<AdjustedCenter>> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::config(format!(
            "lambda must be non-negative, got {lambda}"
        )));
    }
    if mode == CenterAdjust::Convex && lambda > 1.0 {
        return Err(Error::config("convex center adjustment needs lambda <= 1"));
    }
    if centroid.len() != means.dim() {
        return Err(Error::config(
            "centroid dimension does not match the cluster centers",
        ));
    }
    Ok(means
        .rows()
        .map(|mean| {
            let center: Vec<f64> = mean
                .iter()
                .zip(centroid)
                .map(|(&m, &c)| match mode {
                    CenterAdjust::Paper => m + lambda * c,
                    CenterAdjust::Convex => (1.0 - lambda) * m + lambda * c,
                })
                .collect();
            let out_of_cube = center.iter().any(|v| !(0.0..=1.0).contains(v));
            AdjustedCenter {
                center,
                out_of_cube,
            }
        })
        .collect())
}

/// Sum of squared Euclidean distances from each center to `mean`.
pub fn regularization_score(centers: &Points, mean: &[f64]) -> Result<f64> {
    if centers.is_empty() {
        return Err(Error::config("no centers to score"));
    }
    if centers.dim() != mean.len() {
        return Err(Error::config(
            "community mean dimension does not match the centers",
        ));
    }
    Ok(centers.rows().map(|c| sq_dist(c, mean)).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictConfig {
    pub bins: u32,
    /// Defaults to `1.5 / bins` when unset.
    pub epsilon: Option<f64>,
    pub lambda: f64,
    pub k_global: usize,
    pub seed: u64,
    pub kmeans: KMeansParams,
    pub center_adjust: CenterAdjust,
}

impl Default for PredictConfig {
    fn default() -> Self {
        Self {
            bins: DEFAULT_BINS,
            epsilon: None,
            lambda: DEFAULT_LAMBDA,
            k_global: 10,
            seed: 0,
            kmeans: KMeansParams::default(),
            center_adjust: CenterAdjust::Paper,
        }
    }
}

impl PredictConfig {
    pub fn community_config(&self) -> Result<CommunityConfig> {
        match self.epsilon {
            Some(e) => CommunityConfig::new(e),
            None => Ok(CommunityConfig::for_bins(self.bins)),
        }
    }

    pub fn epsilon_value(&self) -> f64 {
        self.epsilon.unwrap_or(1.5 / self.bins as f64)
    }
}

/// The normalized cloud with its grid and communities.
#[derive(Debug, Clone)]
pub struct Partitioned {
    pub normalized: NormalizedCloud,
    pub grid: VoxelGrid,
    pub communities: Vec<Community>,
}

/// Normalizes the cloud, voxelizes it and groups the voxels into communities.
pub fn partition_cloud(
    cloud: &PointCloud,
    bins: u32,
    config: CommunityConfig,
) -> Result<Partitioned> {
    let normalized = normalize(cloud)?;
    let grid = build_grid(&normalized, bins)?;
    let communities = partition_communities(&grid, &normalized, config)?;
    Ok(Partitioned {
        normalized,
        grid,
        communities,
    })
}

struct CommunityRun {
    model: ClusterModel,
    adjusted: Vec<AdjustedCenter>,
    regularization: f64,
}

/// Full pipeline: normalize, voxelize, partition, allocate, cluster each
/// community, adjust centers and score their dispersion.
pub fn predict_hotspots(cloud: &PointCloud, config: &PredictConfig) -> Result<HotspotPrediction> {
    config.kmeans.validate()?;
    let parts = partition_cloud(cloud, config.bins, config.community_config()?)?;
    let plan = allocate_hotspot_budget(&parts.communities, config.k_global)?;

    let runs = par::map_slice(&parts.communities, |c| -> Result<CommunityRun> {
        let k = plan.k_for(c.id).expect("plan covers every community");
        let points = parts.normalized.points.gather(&c.member_ids);
        let mut rng = stream_rng(config.seed, c.id as u64);
        let model = kmeans(&points, k, &config.kmeans, &mut rng)?;
        let adjusted = adjust_centers(
            &model.centers,
            &c.centroid,
            config.lambda,
            config.center_adjust,
        )?;
        let regularization = regularization_score(&model.centers, &c.centroid)?;
        Ok(CommunityRun {
            model,
            adjusted,
            regularization,
        })
    });

    let params = &parts.normalized.params;
    let geo_dims = cloud.geo_dims();
    let mut hotspots = Vec::with_capacity(plan.total());
    let mut regularization = Vec::with_capacity(runs.len());
    let mut warnings = Vec::new();
    if plan.total() as f64 > 1.5 * config.k_global as f64 {
        warnings.push(format!(
            "hotspot budget inflated from {} to {} by the one-per-community floor",
            config.k_global,
            plan.total()
        ));
    }
    for j in params.degenerate_dims() {
        warnings.push(format!(
            "feature {:?} is constant and was mapped to 0",
            cloud.feature_names()[j]
        ));
    }
    for (c, run) in parts.communities.iter().zip(runs) {
        let run = run?;
        regularization.push(CommunityRegularization {
            community_id: c.id,
            regularization: run.regularization,
        });
        for (k, adj) in run.adjusted.into_iter().enumerate() {
            let original = params.denormalize(&adj.center);
            let warning = adj.out_of_cube.then(|| {
                format!(
                    "adjusted center of community {} cluster {k} lies outside the unit cube",
                    c.id
                )
            });
            if let Some(w) = &warning {
                warnings.push(w.clone());
            }
            hotspots.push(Hotspot {
                geo: geo_dims.map(|g| g.extract(&original)),
                center_original_units: original,
                adjusted: adj.center.as_slice() != run.model.centers.row(k),
                center_normalized: adj.center,
                community_id: CommunityTag::Id(c.id),
                cluster_size: run.model.sizes[k],
                out_of_cube: adj.out_of_cube,
                warning,
            });
        }
    }
    Ok(HotspotPrediction {
        method: Method::Ours,
        hotspots,
        diagnostics: Diagnostics {
            lambda: Some(config.lambda),
            center_adjust: Some(config.center_adjust),
            occupied_voxels: Some(parts.grid.len()),
            communities: Some(parts.communities.len()),
            plan: Some(plan),
            regularization,
            fuzzifier: None,
            warnings,
        },
        normalization: params.clone(),
        feature_names: cloud.feature_names().to_vec(),
        geo_dims,
    })
}
