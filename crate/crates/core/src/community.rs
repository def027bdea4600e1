//! Communities: connected groups of occupied voxels whose centers lie within
//! an L1 threshold of each other.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::feature_space::NormalizedCloud;
use crate::par;
use crate::voxel_grid::{VoxelGrid, VoxelIndex};

/// Threshold for linking two voxel centers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CommunityConfig {
    epsilon: f64,
}

impl CommunityConfig {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::config(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        Ok(Self { epsilon })
    }

    /// `1.5 / bins`: links face neighbours, not diagonal ones.
    pub fn for_bins(bins: u32) -> Self {
        Self {
            epsilon: 1.5 / bins as f64,
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Community {
    pub id: usize,
    pub voxel_indices: Vec<VoxelIndex>,
    /// Member positions into the normalized cloud, ascending.
    pub member_ids: Vec<usize>,
    pub centroid: Vec<f64>,
    /// Members over total points.
    pub density: f64,
}

impl Community {
    pub fn len(&self) -> usize {
        self.member_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.member_ids.is_empty()
    }

    pub fn summary(&self) -> CommunitySummary {
        CommunitySummary {
            id: self.id,
            voxel_count: self.voxel_indices.len(),
            member_count: self.member_ids.len(),
            centroid: self.centroid.clone(),
            density: self.density,
        }
    }
}

/// Compact per-community diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommunitySummary {
    pub id: usize,
    pub voxel_count: usize,
    pub member_count: usize,
    pub centroid: Vec<f64>,
    pub density: f64,
}

pub fn manhattan_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invariant(format!(
            "manhattan distance between {}- and {}-dimensional vectors",
            a.len(),
            b.len()
        )));
    }
    Ok(l1(a, b))
}

#[inline]
fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Union-find with path halving and union by size.
struct DisjointSet {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
    }
}

/// Number of integer vectors in `dim` dimensions with L1 norm at most `radius`.
fn l1_ball_size(dim: usize, radius: usize) -> u128 {
    let binom = |n: usize, k: usize| -> u128 {
        (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i as u128 + 1))
    };
    (0..=dim.min(radius))
        .map(|i| {
            (1u128 << i.min(127))
                .saturating_mul(binom(dim, i))
                .saturating_mul(binom(radius, i))
        })
        .fold(0u128, u128::saturating_add)
}

/// Offsets with L1 norm in `1..=radius` whose first nonzero component is positive,
/// with every component bounded by `max_abs`.
fn positive_offsets(dim: usize, radius: i64, max_abs: i64) -> Vec<Vec<i64>> {
    fn rec(
        dim: usize,
        budget: i64,
        max_abs: i64,
        leading: bool,
        cur: &mut Vec<i64>,
        out: &mut Vec<Vec<i64>>,
    ) {
        if cur.len() == dim {
            if !leading {
                out.push(cur.clone());
            }
            return;
        }
        let lim = budget.min(max_abs);
        let lo = if leading { 0 } else { -lim };
        for d in lo..=lim {
            cur.push(d);
            rec(dim, budget - d.abs(), max_abs, leading && d == 0, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(
        dim,
        radius,
        max_abs,
        true,
        &mut Vec::with_capacity(dim),
        &mut out,
    );
    out
}

fn offset_index(base: &VoxelIndex, offset: &[i64], bins: u32) -> Option<VoxelIndex> {
    base.0
        .iter()
        .zip(offset)
        .map(|(&c, &d)| {
            let v = c as i64 + d;
            (0..bins as i64).contains(&v).then_some(v as u32)
        })
        .collect::<Option<Vec<_>>>()
        .map(VoxelIndex)
}

/// Connected components of the voxel graph, as groups of positions into
/// `grid.voxels()`.
///
/// Two voxels are linked when the L1 distance between their centers is
/// strictly below epsilon. Groups are ordered by their smallest voxel index and
/// each group is sorted. Neighbours are found by probing index offsets in the
/// sparse map; when the offset ball is larger than the grid itself an
/// all-pairs scan is used instead.
pub fn voxel_components(grid: &VoxelGrid, config: CommunityConfig) -> Vec<Vec<usize>> {
    let voxels = grid.voxels();
    let n = voxels.len();
    let bins = grid.bins();
    let eps = config.epsilon();
    // Index offsets with L1 norm > eps*bins + 1 cannot link; the extra unit
    // absorbs rounding in the center arithmetic, the float test below is exact.
    let radius_f = (eps * bins as f64).floor() + 1.0;
    let max_radius = grid.dim() * (bins as usize - 1);
    let radius = if radius_f >= max_radius as f64 {
        max_radius
    } else {
        radius_f as usize
    };
    let ball = l1_ball_size(grid.dim(), radius);
    let links = |i: usize, j: usize| l1(&voxels[i].center, &voxels[j].center) < eps;

    let edges: Vec<Vec<usize>> = if ball / 2 >= n as u128 {
        par::map_indexed(n, |i| (i + 1..n).filter(|&j| links(i, j)).collect())
    } else {
        let offsets = positive_offsets(grid.dim(), radius as i64, bins as i64 - 1);
        par::map_indexed(n, |i| {
            offsets
                .iter()
                .filter_map(|off| offset_index(&voxels[i].index, off, bins))
                .filter_map(|idx| grid.position(&idx))
                .filter(|&j| links(i, j))
                .collect()
        })
    };

    let mut sets = DisjointSet::new(n);
    for (i, js) in edges.iter().enumerate() {
        for &j in js {
            sets.union(i, j);
        }
    }
    let mut slot_of_root = vec![usize::MAX; n];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    // Voxels are sorted, so the first time a root is seen is at its smallest index.
    for i in 0..n {
        let r = sets.find(i);
        if slot_of_root[r] == usize::MAX {
            slot_of_root[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot_of_root[r]].push(i);
    }
    groups
}

/// Unweighted mean of the member points.
pub fn community_centroid(members: &[usize], cloud: &NormalizedCloud) -> Vec<f64> {
    let dim = cloud.dim();
    let mut sum = vec![0.0; dim];
    for &m in members {
        for (s, &x) in sum.iter_mut().zip(cloud.points.row(m)) {
            *s += x;
        }
    }
    let n = members.len().max(1) as f64;
    sum.into_iter().map(|s| s / n).collect()
}

/// Partitions the occupied voxels into communities, numbered by their
/// smallest voxel index. Isolated voxels form singleton communities.
pub fn partition_communities(
    grid: &VoxelGrid,
    cloud: &NormalizedCloud,
    config: CommunityConfig,
) -> Result<Vec<Community>> {
    if grid.is_empty() {
        return Err(Error::data("cannot partition an empty grid"));
    }
    if grid.total_points() != cloud.len() {
        return Err(Error::invariant("grid and cloud sizes differ"));
    }
    let groups = voxel_components(grid, config);
    let total = grid.total_points() as f64;
    let communities = par::map_slice(&groups, |group| {
        let voxels: Vec<_> = group.iter().map(|&i| &grid.voxels()[i]).collect();
        let mut member_ids: Vec<usize> = voxels
            .iter()
            .flat_map(|v| v.members.iter().copied())
            .collect();
        member_ids.sort_unstable();
        let centroid = community_centroid(&member_ids, cloud);
        Community {
            id: 0,
            voxel_indices: voxels.iter().map(|v| v.index.clone()).collect(),
            density: member_ids.len() as f64 / total,
            member_ids,
            centroid,
        }
    });
    Ok(communities
        .into_iter()
        .enumerate()
        .map(|(id, c)| Community { id, ..c })
        .collect())
}
