//! Sparse quantization of the unit cube into occupied voxels.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_space::NormalizedCloud;
use crate::par;

/// Default per-dimension resolution.
pub const DEFAULT_BINS: u32 = 16;

/// Integer cell coordinates, one component per dimension, each in `0..bins`.
///
/// Ordering is lexicographic over components.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VoxelIndex(pub Vec<u32>);

impl VoxelIndex {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn components(&self) -> &[u32] {
        &self.0
    }
}

/// An occupied cell with its center, half-range and member point positions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Voxel {
    pub index: VoxelIndex,
    pub center: Vec<f64>,
    pub half_range: f64,
    /// Positions into the normalized cloud, ascending.
    pub members: Vec<usize>,
}

fn check_bins(bins: u32) -> Result<()> {
    if bins == 0 {
        return Err(Error::config("bins must be at least 1"));
    }
    Ok(())
}

/// Cell holding a normalized point. `1.0` falls in the top cell `bins - 1`.
pub fn locate(point: &[f64], bins: u32) -> Result<VoxelIndex> {
    check_bins(bins)?;
    point
        .iter()
        .map(|&f| {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::invariant(format!(
                    "normalized coordinate {f} outside [0, 1]"
                )));
            }
            Ok(((f * bins as f64).floor() as u32).min(bins - 1))
        })
        .collect::<Result<Vec<_>>>()
        .map(VoxelIndex)
}

/// Center `(idx_j + 0.5) / bins` of a cell.
pub fn voxel_center(index: &VoxelIndex, bins: u32) -> Vec<f64> {
    index
        .0
        .iter()
        .map(|&i| (i as f64 + 0.5) / bins as f64)
        .collect()
}

/// Half-range `0.5 / bins`, shared by every dimension.
pub fn half_range(bins: u32) -> f64 {
    0.5 / bins as f64
}

/// The set of occupied voxels of a normalized cloud.
#[derive(Debug, Clone)]
pub struct VoxelGrid {
    bins: u32,
    dim: usize,
    voxels: Vec<Voxel>,
    lookup: HashMap<VoxelIndex, usize>,
    total_points: usize,
}

impl VoxelGrid {
    pub fn bins(&self) -> u32 {
        self.bins
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn total_points(&self) -> usize {
        self.total_points
    }

    /// Occupied voxels, sorted by index.
    pub fn voxels(&self) -> &[Voxel] {
        &self.voxels
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    /// Position of an occupied voxel in `voxels()`.
    pub fn position(&self, index: &VoxelIndex) -> Option<usize> {
        self.lookup.get(index).copied()
    }

    pub fn get(&self, index: &VoxelIndex) -> Option<&Voxel> {
        self.position(index).map(|i| &self.voxels[i])
    }

    /// Builds a grid directly from occupied indices, for tests and diagnostics.
    /// Each index gets one synthetic member numbered by its position.
    pub fn from_indices(indices: Vec<VoxelIndex>, bins: u32) -> Result<Self> {
        check_bins(bins)?;
        let dim = indices.first().map(VoxelIndex::dim).unwrap_or(0);
        let mut pairs: Vec<(VoxelIndex, usize)> = Vec::with_capacity(indices.len());
        for (i, idx) in indices.into_iter().enumerate() {
            if idx.dim() != dim || idx.0.iter().any(|&c| c >= bins) {
                return Err(Error::config(format!("invalid voxel index {:?}", idx.0)));
            }
            pairs.push((idx, i));
        }
        Self::from_pairs(pairs, bins, dim)
    }

    fn from_pairs(mut pairs: Vec<(VoxelIndex, usize)>, bins: u32, dim: usize) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::data("cannot build a grid from zero points"));
        }
        let total_points = pairs.len();
        par::sort_unstable(&mut pairs);
        let mut voxels: Vec<Voxel> = Vec::new();
        for (index, pos) in pairs {
            match voxels.last_mut() {
                Some(v) if v.index == index => v.members.push(pos),
                _ => voxels.push(Voxel {
                    center: voxel_center(&index, bins),
                    half_range: half_range(bins),
                    index,
                    members: vec![pos],
                }),
            }
        }
        let lookup = voxels
            .iter()
            .enumerate()
            .map(|(i, v)| (v.index.clone(), i))
            .collect();
        Ok(Self {
            bins,
            dim,
            voxels,
            lookup,
            total_points,
        })
    }

    /// Occupied index → member count, in index order.
    pub fn occupancy(&self) -> Vec<(VoxelIndex, usize)> {
        self.voxels
            .iter()
            .map(|v| (v.index.clone(), v.members.len()))
            .collect()
    }
}

/// Assigns every point of the cloud to its voxel.
pub fn build_grid(cloud: &NormalizedCloud, bins: u32) -> Result<VoxelGrid> {
    check_bins(bins)?;
    if cloud.is_empty() {
        return Err(Error::data("cannot build a grid from an empty cloud"));
    }
    let points = &cloud.points;
    let located = par::map_indexed(points.len(), |i| {
        locate(points.row(i), bins).map(|v| (v, i))
    });
    let pairs = located.into_iter().collect::<Result<Vec<_>>>()?;
    VoxelGrid::from_pairs(pairs, bins, cloud.dim())
}
