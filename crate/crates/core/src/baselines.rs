//! Global k-means and fuzzy c-means comparators.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::feature_space::{normalize, NormalizedCloud, PointCloud, Points};
use crate::kmeans::{kmeans, kmeans_plus_plus, sq_dist, stream_rng, ClusterModel, KMeansParams};
use crate::par;
use crate::prediction::{CommunityTag, Diagnostics, Hotspot, HotspotPrediction, Method};

pub const DEFAULT_FUZZIFIER: f64 = 2.0;

/// k-means over the whole cloud on RNG stream 0.
pub fn global_kmeans(
    cloud: &NormalizedCloud,
    k: usize,
    seed: u64,
    params: &KMeansParams,
) -> Result<ClusterModel> {
    kmeans(&cloud.points, k, params, &mut stream_rng(seed, 0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FuzzyModel {
    #[serde(skip)]
    pub centers: Points,
    /// Row-major N x K membership degrees.
    #[serde(skip)]
    pub memberships: Vec<f64>,
    pub k: usize,
    pub fuzzifier: f64,
    pub objective: f64,
    pub history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl FuzzyModel {
    pub fn membership_row(&self, i: usize) -> &[f64] {
        &self.memberships[i * self.k..(i + 1) * self.k]
    }

    /// Index of the largest membership of each point (first on ties).
    pub fn hard_assignments(&self) -> Vec<usize> {
        self.memberships
            .chunks_exact(self.k)
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (c, &u)| {
                        if u > best.1 {
                            (c, u)
                        } else {
                            best
                        }
                    })
                    .0
            })
            .collect()
    }
}

/// Membership degrees of one point. A point on top of a center belongs to
/// the first such center entirely.
fn memberships_of(p: &[f64], centers: &Points, exponent: f64, out: &mut Vec<f64>) -> Vec<f64> {
    let d2: Vec<f64> = centers.rows().map(|c| sq_dist(p, c)).collect();
    let start = out.len();
    if let Some(hit) = d2.iter().position(|&d| d == 0.0) {
        out.extend((0..d2.len()).map(|c| if c == hit { 1.0 } else { 0.0 }));
    } else {
        // u_c = 1 / sum_j (d_c / d_j)^(2/(m-1)), evaluated relative to the
        // nearest center to stay finite for fuzzifiers close to 1.
        let dmin = d2.iter().copied().fold(f64::INFINITY, f64::min);
        let w: Vec<f64> = d2.iter().map(|&d| (dmin / d).powf(exponent)).collect();
        let total: f64 = w.iter().sum();
        out.extend(w.iter().map(|x| x / total));
    }
    debug_assert_eq!(out.len() - start, d2.len());
    d2
}

struct FuzzyPartial {
    memberships: Vec<f64>,
    numer: Vec<f64>,
    denom: Vec<f64>,
    objective: f64,
}

/// Standard fuzzy c-means: alternate membership and center updates until the
/// objective changes by less than `params.tol`. Centers start from k-means++
/// seeds on RNG stream 0.
pub fn fuzzy_cmeans(
    cloud: &NormalizedCloud,
    k: usize,
    m: f64,
    seed: u64,
    params: &KMeansParams,
) -> Result<FuzzyModel> {
    params.validate()?;
    if !(m.is_finite() && m > 1.0) {
        return Err(Error::config(format!("fuzzifier must be > 1, got {m}")));
    }
    let points = &cloud.points;
    let (n, dim) = (points.len(), points.dim());
    if k == 0 || k > n {
        return Err(Error::config(format!("k = {k} must be in 1..={n}")));
    }
    let exponent = 1.0 / (m - 1.0);
    let mut centers = points.gather(&kmeans_plus_plus(points, k, &mut stream_rng(seed, 0)));
    let mut history: Vec<f64> = Vec::new();
    let mut memberships = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < params.max_iter {
        iterations += 1;
        let parts = par::map_chunks(n, |range| {
            let mut part = FuzzyPartial {
                memberships: Vec::with_capacity(range.len() * k),
                numer: vec![0.0; k * dim],
                denom: vec![0.0; k],
                objective: 0.0,
            };
            for i in range {
                let p = points.row(i);
                let start = part.memberships.len();
                let d2 = memberships_of(p, &centers, exponent, &mut part.memberships);
                for (c, &dc) in d2.iter().enumerate() {
                    let w = part.memberships[start + c].powf(m);
                    part.denom[c] += w;
                    part.objective += w * dc;
                    for (s, &x) in part.numer[c * dim..(c + 1) * dim].iter_mut().zip(p) {
                        *s += w * x;
                    }
                }
            }
            part
        });
        let mut numer = vec![0.0; k * dim];
        let mut denom = vec![0.0; k];
        let mut objective = 0.0;
        memberships = Vec::with_capacity(n * k);
        for part in parts {
            memberships.extend(part.memberships);
            for (a, b) in numer.iter_mut().zip(part.numer) {
                *a += b;
            }
            for (a, b) in denom.iter_mut().zip(part.denom) {
                *a += b;
            }
            objective += part.objective;
        }
        let next: Vec<f64> = (0..k)
            .flat_map(|c| {
                let (numer, old, denom) = (&numer, &centers, denom[c]);
                (0..dim).map(move |j| {
                    if denom > 0.0 {
                        numer[c * dim + j] / denom
                    } else {
                        old.row(c)[j]
                    }
                })
            })
            .collect();
        centers = Points::new(next, dim);
        let change = history.last().map(|prev| (prev - objective).abs());
        history.push(objective);
        if change.is_some_and(|d| d < params.tol) {
            converged = true;
            break;
        }
    }
    Ok(FuzzyModel {
        centers,
        memberships,
        k,
        fuzzifier: m,
        objective: *history.last().unwrap_or(&0.0),
        history,
        iterations,
        converged,
    })
}

fn global_hotspots(
    cloud: &PointCloud,
    normalized: &NormalizedCloud,
    centers: &Points,
    sizes: &[usize],
) -> Vec<Hotspot> {
    let dims = cloud.geo_dims();
    centers
        .rows()
        .zip(sizes)
        .map(|(c, &size)| {
            let original = normalized.params.denormalize(c);
            Hotspot {
                center_normalized: c.to_vec(),
                geo: dims.map(|g| g.extract(&original)),
                center_original_units: original,
                community_id: CommunityTag::Global,
                cluster_size: size,
                adjusted: false,
                out_of_cube: false,
                warning: None,
            }
        })
        .collect()
}

fn envelope(
    method: Method,
    cloud: &PointCloud,
    normalized: &NormalizedCloud,
    hotspots: Vec<Hotspot>,
    fuzzifier: Option<f64>,
) -> HotspotPrediction {
    HotspotPrediction {
        method,
        hotspots,
        diagnostics: Diagnostics {
            fuzzifier,
            ..Diagnostics::default()
        },
        normalization: normalized.params.clone(),
        feature_names: cloud.feature_names().to_vec(),
        geo_dims: cloud.geo_dims(),
    }
}

/// Normalizes the cloud and reports global k-means centers as hotspots.
pub fn predict_kmeans(
    cloud: &PointCloud,
    k: usize,
    seed: u64,
    params: &KMeansParams,
) -> Result<HotspotPrediction> {
    let normalized = normalize(cloud)?;
    let model = global_kmeans(&normalized, k, seed, params)?;
    let hotspots = global_hotspots(cloud, &normalized, &model.centers, &model.sizes);
    Ok(envelope(Method::Kmeans, cloud, &normalized, hotspots, None))
}

/// Normalizes the cloud and reports fuzzy c-means centers as hotspots;
/// cluster sizes count points by their strongest membership.
pub fn predict_cmeans(
    cloud: &PointCloud,
    k: usize,
    m: f64,
    seed: u64,
    params: &KMeansParams,
) -> Result<HotspotPrediction> {
    let normalized = normalize(cloud)?;
    let model = fuzzy_cmeans(&normalized, k, m, seed, params)?;
    let mut sizes = vec![0; k];
    for c in model.hard_assignments() {
        sizes[c] += 1;
    }
    let hotspots = global_hotspots(cloud, &normalized, &model.centers, &sizes);
    Ok(envelope(
        Method::Cmeans,
        cloud,
        &normalized,
        hotspots,
        Some(m),
    ))
}
