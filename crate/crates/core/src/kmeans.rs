//! Lloyd's k-means with k-means++ seeding, shared by the community predictor
//! and the global baseline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_space::Points;
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansParams {
    pub max_iter: usize,
    /// Stop once no center moves farther than this (L2).
    pub tol: f64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-6,
        }
    }
}

impl KMeansParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::config("max_iter must be at least 1"));
        }
        if !(self.tol.is_finite() && self.tol >= 0.0) {
            return Err(Error::config(format!(
                "tol must be non-negative, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

/// RNG for one independent stream of a seeded run. Stream 0 is the
/// whole-dataset stream; community `c` uses stream `c`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub centers: Points,
    /// Cluster of each input point, by position.
    pub assignments: Vec<usize>,
    pub sizes: Vec<usize>,
    /// Sum of squared distances from each point to its cluster mean.
    pub inertia: f64,
    /// Inertia after each assignment step.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl ClusterModel {
    pub fn k(&self) -> usize {
        self.centers.len()
    }
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centers: &Points) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.rows().enumerate() {
        let d = sq_dist(p, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Sums chunk partials strictly left to right.
fn ordered_sum(parts: impl IntoIterator<Item = f64>) -> f64 {
    parts.into_iter().fold(0.0, |a, b| a + b)
}

/// k-means++ seeding: first center uniform, then each next center sampled
/// with probability proportional to squared distance to the closest chosen
/// center. If every remaining distance is zero, picks uniformly among the
/// points not yet chosen.
pub fn kmeans_plus_plus(points: &Points, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = points.len();
    let mut chosen = Vec::with_capacity(k);
    if k == 0 || n == 0 {
        return chosen;
    }
    chosen.push(rng.random_range(0..n));
    let mut d2 = vec![f64::INFINITY; n];
    while chosen.len() < k {
        let last = points.row(*chosen.last().unwrap());
        let updated = par::map_chunks(n, |r| {
            r.map(|i| d2[i].min(sq_dist(points.row(i), last)))
                .collect::<Vec<_>>()
        });
        d2 = updated.into_iter().flatten().collect();
        let total = ordered_sum(par::map_chunks(n, |r| d2[r].iter().sum::<f64>()));
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 {
                    acc += d;
                    pick = Some(i);
                    if acc > target {
                        break;
                    }
                }
            }
            pick.expect("positive total implies a positive weight")
        } else {
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
    }
    chosen
}

struct Partial {
    assign: Vec<usize>,
    dist: Vec<f64>,
    sums: Vec<f64>,
    counts: Vec<usize>,
    inertia: f64,
}

fn assign_step(points: &Points, centers: &Points) -> Partial {
    let (k, dim, n) = (centers.len(), points.dim(), points.len());
    let parts = par::map_chunks(n, |range| {
        let mut part = Partial {
            assign: Vec::with_capacity(range.len()),
            dist: Vec::with_capacity(range.len()),
            sums: vec![0.0; k * dim],
            counts: vec![0; k],
            inertia: 0.0,
        };
        for i in range {
            let p = points.row(i);
            let (c, d) = nearest(p, centers);
            part.assign.push(c);
            part.dist.push(d);
            part.counts[c] += 1;
            part.inertia += d;
            for (s, &x) in part.sums[c * dim..(c + 1) * dim].iter_mut().zip(p) {
                *s += x;
            }
        }
        part
    });
    let mut total = Partial {
        assign: Vec::with_capacity(n),
        dist: Vec::with_capacity(n),
        sums: vec![0.0; k * dim],
        counts: vec![0; k],
        inertia: 0.0,
    };
    for part in parts {
        total.assign.extend(part.assign);
        total.dist.extend(part.dist);
        for (s, x) in total.sums.iter_mut().zip(part.sums) {
            *s += x;
        }
        for (c, x) in total.counts.iter_mut().zip(part.counts) {
            *c += x;
        }
        total.inertia += part.inertia;
    }
    total
}

/// Moves, for each empty cluster, the point farthest from its center (taken
/// from a cluster with at least two points) into the empty cluster.
fn repair_empty(points: &Points, state: &mut Partial) {
    let dim = points.dim();
    let k = state.counts.len();
    for empty in 0..k {
        if state.counts[empty] > 0 {
            continue;
        }
        let mut far: Option<(usize, f64)> = None;
        for (i, (&c, &d)) in state.assign.iter().zip(&state.dist).enumerate() {
            if state.counts[c] > 1 && far.is_none_or(|(_, best)| d > best) {
                far = Some((i, d));
            }
        }
        let Some((i, d)) = far else { return };
        let from = state.assign[i];
        let p = points.row(i);
        for (j, &x) in p.iter().enumerate() {
            state.sums[from * dim + j] -= x;
            state.sums[empty * dim + j] += x;
        }
        state.counts[from] -= 1;
        state.counts[empty] += 1;
        state.assign[i] = empty;
        state.dist[i] = 0.0;
        state.inertia -= d;
    }
}

/// Runs Lloyd iterations from k-means++ seeds drawn from `rng`.
///
/// Deterministic for a given RNG state; the parallel and sequential builds
/// produce identical bits.
pub fn kmeans(
    points: &Points,
    k: usize,
    params: &KMeansParams,
    rng: &mut ChaCha8Rng,
) -> Result<ClusterModel> {
    params.validate()?;
    let n = points.len();
    if k == 0 {
        return Err(Error::config("k must be at least 1"));
    }
    if k > n {
        return Err(Error::config(format!(
            "k = {k} exceeds the {n} available points"
        )));
    }
    let dim = points.dim();
    let seeds = kmeans_plus_plus(points, k, rng);
    let mut centers = points.gather(&seeds);
    let mut history = Vec::new();
    let mut converged = false;
    let mut state;
    let mut iterations = 0;
    loop {
        iterations += 1;
        state = assign_step(points, &centers);
        repair_empty(points, &mut state);
        history.push(state.inertia.max(0.0));

        let mut next = Vec::with_capacity(k * dim);
        for c in 0..k {
            let cnt = state.counts[c] as f64;
            next.extend(state.sums[c * dim..(c + 1) * dim].iter().map(|s| s / cnt));
        }
        let next = Points::new(next, dim);
        let movement = centers
            .rows()
            .zip(next.rows())
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centers = next;
        if movement < params.tol {
            converged = true;
            break;
        }
        if iterations >= params.max_iter {
            break;
        }
    }
    let inertia = ordered_sum(par::map_chunks(n, |r| {
        r.map(|i| sq_dist(points.row(i), centers.row(state.assign[i])))
            .sum::<f64>()
    }));
    Ok(ClusterModel {
        centers,
        assignments: state.assign,
        sizes: state.counts,
        inertia,
        history,
        iterations,
        converged,
    })
}
