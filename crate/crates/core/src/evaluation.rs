//! Holdout recovery scoring, repeated-trial timing and the comparison report.

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::baselines::{predict_cmeans, predict_kmeans, DEFAULT_FUZZIFIER};
use crate::error::{Error, Result};
use crate::feature_space::{FeaturePoint, GeoCoord, GeoDims, PointCloud};
use crate::kmeans::stream_rng;
use crate::partition::{predict_hotspots, PredictConfig};
use crate::prediction::{HotspotPrediction, Method};

pub const DEFAULT_REGION_BINS: u32 = 16;
/// Trials kept after trimming.
pub const KEPT_TRIALS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoldoutSpec {
    pub removal_count: usize,
    pub seed: u64,
    pub region_bins: u32,
}

#[derive(Debug, Clone)]
pub struct Holdout {
    pub reduced: PointCloud,
    pub removed: Vec<FeaturePoint>,
    /// Positions of the removed points in the original cloud, ascending.
    pub removed_positions: Vec<usize>,
}

/// Removes `removal_count` points chosen uniformly at random; survivors keep
/// their original order.
pub fn make_holdout(cloud: &PointCloud, spec: &HoldoutSpec) -> Result<Holdout> {
    let n = cloud.len();
    if spec.removal_count == 0 {
        return Err(Error::config("holdout must remove at least one point"));
    }
    if spec.removal_count >= n {
        return Err(Error::config(format!(
            "cannot remove {} of {n} points",
            spec.removal_count
        )));
    }
    if spec.region_bins == 0 {
        return Err(Error::config("region bins must be at least 1"));
    }
    let mut rng = stream_rng(spec.seed, 0);
    let mut removed_positions = index::sample(&mut rng, n, spec.removal_count).into_vec();
    removed_positions.sort_unstable();
    let mut is_removed = vec![false; n];
    for &i in &removed_positions {
        is_removed[i] = true;
    }
    let kept: Vec<usize> = (0..n).filter(|&i| !is_removed[i]).collect();
    Ok(Holdout {
        reduced: cloud.subset(&kept)?,
        removed: removed_positions
            .iter()
            .map(|&i| cloud.points()[i].clone())
            .collect(),
        removed_positions,
    })
}

/// A `bins x bins` latitude/longitude grid over a bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegionGrid {
    pub lo: GeoCoord,
    pub hi: GeoCoord,
    pub bins: u32,
}

impl RegionGrid {
    pub fn new(lo: GeoCoord, hi: GeoCoord, bins: u32) -> Result<Self> {
        if bins == 0 {
            return Err(Error::config("region bins must be at least 1"));
        }
        if !(lo.lat <= hi.lat && lo.lon <= hi.lon) {
            return Err(Error::config("region bounding box is inverted"));
        }
        Ok(Self { lo, hi, bins })
    }

    /// Grid over the geographic bounding box of the cloud.
    pub fn from_cloud(cloud: &PointCloud, bins: u32) -> Result<Self> {
        let (lo, hi) = cloud
            .geo_bounds()
            .ok_or_else(|| Error::config("dataset has no geographic coordinates"))?;
        Self::new(lo, hi, bins)
    }

    fn axis(&self, v: f64, lo: f64, hi: f64) -> Option<u32> {
        if !(lo..=hi).contains(&v) {
            return None;
        }
        let span = hi - lo;
        if span == 0.0 {
            return Some(0);
        }
        Some((((v - lo) / span * self.bins as f64).floor() as u32).min(self.bins - 1))
    }

    /// Cell of a position, or `None` outside the bounding box.
    pub fn cell(&self, g: GeoCoord) -> Option<(u32, u32)> {
        Some((
            self.axis(g.lat, self.lo.lat, self.hi.lat)?,
            self.axis(g.lon, self.lo.lon, self.hi.lon)?,
        ))
    }
}

/// `recovered` of `removed` points, displayed as `r/m(p%)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recovery {
    pub recovered: usize,
    pub removed: usize,
}

impl Recovery {
    /// Percentage truncated to hundredths: `42/66` gives 63.63.
    pub fn percent(&self) -> f64 {
        self.basis_points() as f64 / 100.0
    }

    fn basis_points(&self) -> u64 {
        (self.recovered as u64 * 10_000) / self.removed.max(1) as u64
    }

    pub fn display(&self) -> String {
        let bp = self.basis_points();
        format!(
            "{}/{}({}.{:02}%)",
            self.recovered,
            self.removed,
            bp / 100,
            bp % 100
        )
    }
}

/// Counts removed points sharing a region cell with at least one hotspot.
pub fn score_recovery(
    hotspots: &[Option<GeoCoord>],
    removed: &[FeaturePoint],
    grid: &RegionGrid,
) -> Result<Recovery> {
    if removed.is_empty() {
        return Err(Error::config("no removed points to score against"));
    }
    let cells = hotspots
        .iter()
        .map(|h| {
            h.map(|g| grid.cell(g))
                .ok_or_else(|| Error::config("hotspots carry no geographic coordinates"))
        })
        .collect::<Result<std::collections::HashSet<_>>>()?;
    let mut recovered = 0;
    for p in removed {
        let g = p
            .geo
            .ok_or_else(|| Error::config(format!("removed point {:?} has no coordinates", p.id)))?;
        if let Some(cell) = grid.cell(g) {
            if cells.contains(&Some(cell)) {
                recovered += 1;
            }
        }
    }
    Ok(Recovery {
        recovered,
        removed: removed.len(),
    })
}

/// Scores a prediction's hotspots.
pub fn score_prediction(
    prediction: &HotspotPrediction,
    removed: &[FeaturePoint],
    grid: &RegionGrid,
) -> Result<Recovery> {
    score_recovery(&prediction.geo_points(), removed, grid)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingReport {
    pub method: String,
    pub raw_trials: Vec<f64>,
    pub kept_trials: Vec<f64>,
    pub mean_s: f64,
    pub trim_rule: String,
    pub lower_fence: f64,
    pub upper_fence: f64,
}

/// Quartile of sorted data by linear interpolation between order statistics.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Drops trials outside `[Q1 - 1.5 IQR, Q3 + 1.5 IQR]`, then samples exactly
/// 100 survivors uniformly (kept in trial order) and averages them.
pub fn summarize_trials(method: &str, raw: Vec<f64>, seed: u64) -> Result<TimingReport> {
    if raw.len() < KEPT_TRIALS {
        return Err(Error::config(format!(
            "timing needs at least {KEPT_TRIALS} trials, got {}",
            raw.len()
        )));
    }
    if raw.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::data("trial times must be finite and non-negative"));
    }
    let (survivors, lower_fence, upper_fence) = iqr_survivors(&raw);
    if survivors.len() < KEPT_TRIALS {
        return Err(Error::data(format!(
            "only {} of {} trials survived the IQR trim [{lower_fence:.6}, {upper_fence:.6}]; rerun with more trials",
            survivors.len(),
            raw.len()
        )));
    }
    let mut picks =
        index::sample(&mut stream_rng(seed, 0), survivors.len(), KEPT_TRIALS).into_vec();
    picks.sort_unstable();
    let kept_trials: Vec<f64> = picks.iter().map(|&i| survivors[i]).collect();
    let mean_s = kept_trials.iter().sum::<f64>() / KEPT_TRIALS as f64;
    Ok(TimingReport {
        method: method.to_string(),
        raw_trials: raw,
        kept_trials,
        mean_s,
        trim_rule: "1.5*IQR fence".to_string(),
        lower_fence,
        upper_fence,
    })
}

/// Surviving trials under the 1.5*IQR fence, with the fence itself.
fn iqr_survivors(raw: &[f64]) -> (Vec<f64>, f64, f64) {
    let mut sorted = raw.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (q1, q3) = (quantile(&sorted, 0.25), quantile(&sorted, 0.75));
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    (
        raw.iter()
            .copied()
            .filter(|t| (lo..=hi).contains(t))
            .collect(),
        lo,
        hi,
    )
}

/// Times `trials` sequential runs of `run` after one untimed warm-up, and
/// summarizes them. When the trim leaves fewer than 100 survivors, further
/// batches of 10 are timed, up to ten times the requested count.
pub fn benchmark<F>(method: &str, trials: usize, seed: u64, mut run: F) -> Result<TimingReport>
where
    F: FnMut() -> Result<()>,
{
    if trials < KEPT_TRIALS {
        return Err(Error::config(format!(
            "benchmark needs at least {KEPT_TRIALS} trials, got {trials}"
        )));
    }
    let mut time = |raw: &mut Vec<f64>, count: usize| -> Result<()> {
        for _ in 0..count {
            let start = Instant::now();
            run()?;
            raw.push(start.elapsed().as_secs_f64());
        }
        Ok(())
    };
    time(&mut Vec::new(), 1)?;
    let mut raw = Vec::with_capacity(trials);
    time(&mut raw, trials)?;
    while iqr_survivors(&raw).0.len() < KEPT_TRIALS && raw.len() < 10 * trials {
        time(&mut raw, 10)?;
    }
    summarize_trials(method, raw, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Headline {
    pub speedup_pct: f64,
    pub accuracy_loss_pts: f64,
}

/// Speedup against the mean baseline runtime, and accuracy loss against the
/// best baseline.
pub fn derive_headline(
    ours_mean: f64,
    baseline_means: &[f64],
    ours_acc: f64,
    baseline_accs: &[f64],
) -> Result<Headline> {
    if baseline_means.is_empty() || baseline_accs.is_empty() {
        return Err(Error::config("headline needs at least one baseline"));
    }
    let all = std::iter::once(ours_mean)
        .chain(baseline_means.iter().copied())
        .chain(std::iter::once(ours_acc))
        .chain(baseline_accs.iter().copied());
    if all.into_iter().any(|v| !(v.is_finite() && v > 0.0)) {
        return Err(Error::config("headline inputs must be positive"));
    }
    let base = baseline_means.iter().sum::<f64>() / baseline_means.len() as f64;
    let best = baseline_accs
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(Headline {
        speedup_pct: 100.0 * (base - ours_mean) / base,
        accuracy_loss_pts: best - ours_acc,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_points: usize,
    pub dims: usize,
    pub n_hotspots: usize,
    /// Blob standard deviation in unit-cube units.
    pub spread_sigma: f64,
    pub noise_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_points: 10_000,
            dims: 3,
            n_hotspots: 10,
            spread_sigma: 0.02,
            noise_fraction: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub cloud: PointCloud,
    /// Blob centers in original units.
    pub truth: Vec<Vec<f64>>,
}

const LAT_RANGE: (f64, f64) = (36.0, 42.0);
const LON_RANGE: (f64, f64) = (26.0, 45.0);

/// Maps a unit-cube coordinate into output units: the first two dimensions
/// become latitude and longitude over a Turkey-sized box, the rest stay unitless.
fn to_units(j: usize, u: f64) -> f64 {
    match j {
        0 => LAT_RANGE.0 + u * (LAT_RANGE.1 - LAT_RANGE.0),
        1 => LON_RANGE.0 + u * (LON_RANGE.1 - LON_RANGE.0),
        _ => u,
    }
}

/// Isotropic Gaussian blobs at uniform centers plus uniform background noise.
/// Columns are `lat`, `lon`, `f2`, ... with ids `s000000`, ...
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    if spec.n_hotspots == 0 {
        return Err(Error::config("need at least one hotspot"));
    }
    if !(spec.spread_sigma.is_finite() && spec.spread_sigma > 0.0) {
        return Err(Error::config("spread sigma must be positive"));
    }
    if !(0.0..=1.0).contains(&spec.noise_fraction) {
        return Err(Error::config("noise fraction must be in [0, 1]"));
    }
    if spec.dims < 2 {
        return Err(Error::config("synthetic data needs at least 2 dimensions"));
    }
    if spec.n_points < spec.n_hotspots {
        return Err(Error::config("fewer points than hotspots"));
    }
    let mut rng = stream_rng(spec.seed, 0);
    let normal = Normal::new(0.0, spec.spread_sigma).expect("sigma checked");
    let centers: Vec<Vec<f64>> = (0..spec.n_hotspots)
        .map(|_| {
            (0..spec.dims)
                .map(|_| rng.random_range(0.15..0.85))
                .collect()
        })
        .collect();
    let n_noise = (spec.n_points as f64 * spec.noise_fraction).round() as usize;
    let n_blob = spec.n_points - n_noise;
    let mut points = Vec::with_capacity(spec.n_points);
    let mut push = |unit: Vec<f64>| {
        let features: Vec<f64> = unit
            .iter()
            .enumerate()
            .map(|(j, &u)| to_units(j, u))
            .collect();
        points.push(FeaturePoint {
            id: format!("s{:06}", points.len()),
            geo: Some(GeoCoord {
                lat: features[0],
                lon: features[1],
            }),
            features,
        });
    };
    for i in 0..n_blob {
        let c = &centers[i % spec.n_hotspots];
        push(
            c.iter()
                .map(|&x| (x + normal.sample(&mut rng)).clamp(0.0, 1.0))
                .collect(),
        );
    }
    for _ in 0..n_noise {
        push((0..spec.dims).map(|_| rng.random::<f64>()).collect());
    }
    let mut names = vec!["lat".to_string(), "lon".to_string()];
    names.extend((2..spec.dims).map(|j| format!("f{j}")));
    let cloud = PointCloud::new(points, names, Some(GeoDims { lat: 0, lon: 1 }))?;
    let truth = centers
        .iter()
        .map(|c| c.iter().enumerate().map(|(j, &u)| to_units(j, u)).collect())
        .collect();
    Ok(SyntheticData { cloud, truth })
}

/// Runs one method on a cloud with a total hotspot count `k`.
pub fn predict_with(
    method: Method,
    cloud: &PointCloud,
    config: &PredictConfig,
    fuzzifier: f64,
    k: usize,
) -> Result<HotspotPrediction> {
    match method {
        Method::Ours => predict_hotspots(
            cloud,
            &PredictConfig {
                k_global: k,
                ..*config
            },
        ),
        Method::Kmeans => predict_kmeans(cloud, k, config.seed, &config.kmeans),
        Method::Cmeans => predict_cmeans(cloud, k, fuzzifier, config.seed, &config.kmeans),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub predict: PredictConfig,
    pub fuzzifier: f64,
    pub holdout: HoldoutSpec,
    /// Timed runs per method; 100 or more switches to the trimmed protocol.
    pub timing_trials: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            predict: PredictConfig::default(),
            fuzzifier: DEFAULT_FUZZIFIER,
            holdout: HoldoutSpec {
                removal_count: 66,
                seed: 0,
                region_bins: DEFAULT_REGION_BINS,
            },
            timing_trials: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodRow {
    pub method: Method,
    pub label: String,
    pub avg_time_s: f64,
    pub hotspots: usize,
    pub accuracy: Recovery,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub config: EvalConfig,
    pub removed: usize,
    pub region: RegionGrid,
    pub rows: Vec<MethodRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub headline: Option<Headline>,
}

/// Holdout evaluation across methods on one shared holdout.
///
/// The proposed method runs first; baselines then get the same total number
/// of hotspots it produced, or `k_global` when it is not among `methods`.
pub fn evaluate(cloud: &PointCloud, methods: &[Method], config: &EvalConfig) -> Result<EvalReport> {
    if methods.is_empty() {
        return Err(Error::config("no methods selected"));
    }
    let holdout = make_holdout(cloud, &config.holdout)?;
    let region = RegionGrid::from_cloud(cloud, config.holdout.region_bins)?;
    let trials = config.timing_trials.max(1);

    let run = |method: Method, k: usize| -> Result<(HotspotPrediction, f64)> {
        let mut times = Vec::with_capacity(trials);
        let mut last = None;
        for _ in 0..trials {
            let start = Instant::now();
            let p = predict_with(
                method,
                &holdout.reduced,
                &config.predict,
                config.fuzzifier,
                k,
            )?;
            times.push(start.elapsed().as_secs_f64());
            last = Some(p);
        }
        let mean = if trials >= KEPT_TRIALS {
            summarize_trials(&method.to_string(), times, config.predict.seed)?.mean_s
        } else {
            times.iter().sum::<f64>() / trials as f64
        };
        Ok((last.expect("at least one trial"), mean))
    };

    let mut k_total = config.predict.k_global;
    let mut results: Vec<(Method, HotspotPrediction, f64)> = Vec::new();
    if methods.contains(&Method::Ours) {
        let (p, t) = run(Method::Ours, config.predict.k_global)?;
        k_total = p.hotspots.len();
        results.push((Method::Ours, p, t));
    }
    for &m in methods.iter().filter(|&&m| m != Method::Ours) {
        if results.iter().any(|(done, _, _)| *done == m) {
            continue;
        }
        let (p, t) = run(m, k_total.min(holdout.reduced.len()))?;
        results.push((m, p, t));
    }

    let mut rows = Vec::with_capacity(methods.len());
    for &m in methods {
        let Some((_, p, t)) = results.iter().find(|(done, _, _)| *done == m) else {
            continue;
        };
        if rows.iter().any(|r: &MethodRow| r.method == m) {
            continue;
        }
        rows.push(MethodRow {
            method: m,
            label: m.label().to_string(),
            avg_time_s: *t,
            hotspots: p.hotspots.len(),
            accuracy: score_prediction(p, &holdout.removed, &region)?,
        });
    }
    let headline = headline_for(&rows);
    Ok(EvalReport {
        config: *config,
        removed: holdout.removed.len(),
        region,
        rows,
        headline,
    })
}

fn headline_for(rows: &[MethodRow]) -> Option<Headline> {
    let ours = rows.iter().find(|r| r.method == Method::Ours)?;
    let base: Vec<&MethodRow> = rows.iter().filter(|r| r.method != Method::Ours).collect();
    derive_headline(
        ours.avg_time_s,
        &base.iter().map(|r| r.avg_time_s).collect::<Vec<_>>(),
        ours.accuracy.percent(),
        &base
            .iter()
            .map(|r| r.accuracy.percent())
            .collect::<Vec<_>>(),
    )
    .ok()
}

/// Uniformly random hotspots inside the region box, as an accuracy control.
pub fn random_hotspots(region: &RegionGrid, count: usize, seed: u64) -> Vec<Option<GeoCoord>> {
    let mut rng = stream_rng(seed, 1);
    (0..count)
        .map(|_| {
            Some(GeoCoord {
                lat: region.lo.lat + rng.random::<f64>() * (region.hi.lat - region.lo.lat),
                lon: region.lo.lon + rng.random::<f64>() * (region.hi.lon - region.lo.lon),
            })
        })
        .collect()
}

/// One line of the comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub label: String,
    pub avg_time_s: f64,
    pub accuracy: Recovery,
}

impl From<&MethodRow> for TableRow {
    fn from(r: &MethodRow) -> Self {
        TableRow {
            label: r.label.clone(),
            avg_time_s: r.avg_time_s,
            accuracy: r.accuracy,
        }
    }
}

/// Plain-text table with columns `Method | Average Time Spent(s) | Accuracy`.
pub fn format_table(rows: &[TableRow]) -> String {
    const HEADERS: [&str; 3] = ["Method", "Average Time Spent(s)", "Accuracy"];
    let cells: Vec<[String; 3]> = rows
        .iter()
        .map(|r| {
            [
                r.label.clone(),
                format!("{:.2}", r.avg_time_s),
                r.accuracy.display(),
            ]
        })
        .collect();
    let mut widths = HEADERS.map(str::len);
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cols: [&str; 3]| {
        let _ = writeln!(
            out,
            "{:<w0$}  {:>w1$}  {:>w2$}",
            cols[0],
            cols[1],
            cols[2],
            w0 = widths[0],
            w1 = widths[1],
            w2 = widths[2]
        );
    };
    line(&mut out, HEADERS);
    let _ = writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 4));
    for row in &cells {
        line(&mut out, [&row[0], &row[1], &row[2]]);
    }
    out
}
