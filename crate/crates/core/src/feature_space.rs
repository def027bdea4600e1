//! Mapping tabular records into a normalized M-dimensional feature space.

use std::collections::HashSet;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geographic position of a record, in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoCoord {
    pub lat: f64,
    pub lon: f64,
}

/// Positions of the latitude and longitude columns inside the feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeoDims {
    pub lat: usize,
    pub lon: usize,
}

impl GeoDims {
    pub fn extract(&self, features: &[f64]) -> GeoCoord {
        GeoCoord {
            lat: features[self.lat],
            lon: features[self.lon],
        }
    }
}

/// One record mapped into feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePoint {
    pub id: String,
    pub features: Vec<f64>,
    pub geo: Option<GeoCoord>,
}

/// A non-empty set of feature points sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<FeaturePoint>,
    feature_names: Vec<String>,
    geo_dims: Option<GeoDims>,
}

impl PointCloud {
    /// Builds a cloud, checking that it is non-empty, that every point has
    /// `feature_names.len()` finite features, that M >= 2 and that ids are unique.
    pub fn new(
        points: Vec<FeaturePoint>,
        feature_names: Vec<String>,
        geo_dims: Option<GeoDims>,
    ) -> Result<Self> {
        let dim = feature_names.len();
        if dim < 2 {
            return Err(Error::config(format!(
                "feature space needs at least 2 dimensions, got {dim}"
            )));
        }
        if points.is_empty() {
            return Err(Error::data("point cloud is empty"));
        }
        if let Some(g) = geo_dims {
            if g.lat >= dim || g.lon >= dim || g.lat == g.lon {
                return Err(Error::config("geographic dimensions out of range"));
            }
        }
        let mut seen = HashSet::with_capacity(points.len());
        for p in &points {
            if p.features.len() != dim {
                return Err(Error::data(format!(
                    "point {:?} has {} features, expected {dim}",
                    p.id,
                    p.features.len()
                )));
            }
            if p.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::data(format!(
                    "point {:?} has a non-finite feature",
                    p.id
                )));
            }
            if !seen.insert(p.id.as_str()) {
                return Err(Error::data(format!("duplicate record id {:?}", p.id)));
            }
        }
        Ok(Self {
            points,
            feature_names,
            geo_dims,
        })
    }

    pub fn points(&self) -> &[FeaturePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn geo_dims(&self) -> Option<GeoDims> {
        self.geo_dims
    }

    /// Keeps the points at the given (ascending) positions.
    pub fn subset(&self, positions: &[usize]) -> Result<Self> {
        let points = positions.iter().map(|&i| self.points[i].clone()).collect();
        Self::new(points, self.feature_names.clone(), self.geo_dims)
    }

    /// Latitude/longitude bounding box over points carrying a geographic position.
    pub fn geo_bounds(&self) -> Option<(GeoCoord, GeoCoord)> {
        let mut iter = self.points.iter().filter_map(|p| p.geo);
        let first = iter.next()?;
        Some(iter.fold((first, first), |(lo, hi), g| {
            (
                GeoCoord {
                    lat: lo.lat.min(g.lat),
                    lon: lo.lon.min(g.lon),
                },
                GeoCoord {
                    lat: hi.lat.max(g.lat),
                    lon: hi.lon.max(g.lon),
                },
            )
        }))
    }
}

/// Raw tabular records: a header and string cells.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }
}

/// Which columns become features and which carry identity and position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub columns: Vec<String>,
    pub id_column: Option<String>,
    pub lat_column: String,
    pub lon_column: String,
}

impl FeatureSpec {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            id_column: Some("id".to_string()),
            lat_column: "lat".to_string(),
            lon_column: "lon".to_string(),
        }
    }
}

fn parse_cell(table: &Table, row: usize, col: usize) -> Result<f64> {
    let raw = table.rows[row].get(col).map(|s| s.trim()).unwrap_or("");
    let fail = |reason: &str| Error::Cell {
        row: row + 1,
        column: table.headers[col].clone(),
        reason: reason.to_string(),
    };
    if raw.is_empty() {
        return Err(fail("missing value"));
    }
    let value: f64 = raw
        .parse()
        .map_err(|_| fail(&format!("cannot parse {raw:?} as a number")))?;
    if !value.is_finite() {
        return Err(fail("value is not finite"));
    }
    Ok(value)
}

/// Maps each row of `records` to a feature point, in row order.
///
/// Rows are numbered from 1 (the header is not counted) in error messages.
/// Latitude/longitude columns, when present in the table, are carried into
/// `FeaturePoint::geo`; if the id column is absent the row number is used.
pub fn map_to_feature_space(records: &Table, spec: &FeatureSpec) -> Result<PointCloud> {
    if spec.columns.is_empty() {
        return Err(Error::config("feature selection is empty"));
    }
    let feature_cols = spec
        .columns
        .iter()
        .map(|name| {
            records
                .column(name)
                .ok_or_else(|| Error::config(format!("column {name:?} not found in input")))
        })
        .collect::<Result<Vec<_>>>()?;
    let id_col = spec.id_column.as_deref().and_then(|c| records.column(c));
    let geo_cols = records
        .column(&spec.lat_column)
        .zip(records.column(&spec.lon_column));
    let geo_dims = spec
        .columns
        .iter()
        .position(|c| *c == spec.lat_column)
        .zip(spec.columns.iter().position(|c| *c == spec.lon_column))
        .map(|(lat, lon)| GeoDims { lat, lon });

    let mut points = Vec::with_capacity(records.rows.len());
    for row in 0..records.rows.len() {
        let features = feature_cols
            .iter()
            .map(|&c| parse_cell(records, row, c))
            .collect::<Result<Vec<_>>>()?;
        let geo = match geo_cols {
            Some((lat, lon)) => Some(GeoCoord {
                lat: parse_cell(records, row, lat)?,
                lon: parse_cell(records, row, lon)?,
            }),
            None => None,
        };
        let id = match id_col {
            Some(c) => records.rows[row].get(c).cloned().unwrap_or_default(),
            None => (row + 1).to_string(),
        };
        points.push(FeaturePoint { id, features, geo });
    }
    PointCloud::new(points, spec.columns.clone(), geo_dims)
}

/// Per-dimension minima (`alpha`) and maxima (`beta`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl NormalizationParams {
    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    /// Dimensions where every value was identical.
    pub fn degenerate_dims(&self) -> Vec<usize> {
        (0..self.dim())
            .filter(|&j| self.beta[j] == self.alpha[j])
            .collect()
    }

    /// Inverse of the unit-cube mapping: `alpha + x * (beta - alpha)`.
    pub fn denormalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(j, &v)| self.alpha[j] + v * (self.beta[j] - self.alpha[j]))
            .collect()
    }

    /// Maps one raw feature vector into `[0,1]^M`, clamping values that fall
    /// outside the fitted range and sending degenerate dimensions to 0.
    pub fn normalize_into(&self, p: &[f64], out: &mut Vec<f64>) {
        for (j, &v) in p.iter().enumerate() {
            let span = self.beta[j] - self.alpha[j];
            let f = if span > 0.0 {
                ((v - self.alpha[j]) / span).clamp(0.0, 1.0)
            } else {
                0.0
            };
            out.push(f);
        }
    }
}

/// Per-column minimum and maximum of the cloud.
pub fn fit_normalization(cloud: &PointCloud) -> NormalizationParams {
    let dim = cloud.dim();
    let mut alpha = vec![f64::INFINITY; dim];
    let mut beta = vec![f64::NEG_INFINITY; dim];
    for p in cloud.points() {
        for (j, &v) in p.features.iter().enumerate() {
            alpha[j] = alpha[j].min(v);
            beta[j] = beta[j].max(v);
        }
    }
    NormalizationParams { alpha, beta }
}

/// Dense row-major storage for points of a common dimension.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Points {
    data: Vec<f64>,
    dim: usize,
}

impl Points {
    pub fn new(data: Vec<f64>, dim: usize) -> Self {
        assert!(dim > 0, "points need a positive dimension");
        assert_eq!(data.len() % dim, 0, "data length must be a multiple of dim");
        Self { data, dim }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(1);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            assert_eq!(r.as_ref().len(), dim, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Self::new(data, dim)
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Copies the rows at `positions`, in that order.
    pub fn gather(&self, positions: &[usize]) -> Points {
        let mut data = Vec::with_capacity(positions.len() * self.dim);
        for &i in positions {
            data.extend_from_slice(self.row(i));
        }
        Points {
            data,
            dim: self.dim,
        }
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }
}

/// A cloud mapped into the unit cube, positionally aligned with its source.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedCloud {
    pub points: Points,
    pub source_ids: Vec<String>,
    pub params: NormalizationParams,
}

impl NormalizedCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }
}

pub fn apply_normalization(
    cloud: &PointCloud,
    params: &NormalizationParams,
) -> Result<NormalizedCloud> {
    if params.alpha.len() != cloud.dim() || params.beta.len() != cloud.dim() {
        return Err(Error::config(format!(
            "normalization has {} dimensions, cloud has {}",
            params.alpha.len(),
            cloud.dim()
        )));
    }
    if let Some(j) = (0..params.dim()).find(|&j| params.alpha[j] > params.beta[j]) {
        return Err(Error::config(format!(
            "normalization bounds inverted in dimension {j}"
        )));
    }
    for j in params.degenerate_dims() {
        warn!(
            "feature {:?} is constant; it is mapped to 0",
            cloud.feature_names()[j]
        );
    }
    let mut data = Vec::with_capacity(cloud.len() * cloud.dim());
    for p in cloud.points() {
        params.normalize_into(&p.features, &mut data);
    }
    Ok(NormalizedCloud {
        points: Points::new(data, cloud.dim()),
        source_ids: cloud.points().iter().map(|p| p.id.clone()).collect(),
        params: params.clone(),
    })
}

/// Fits normalization on `cloud` and applies it.
pub fn normalize(cloud: &PointCloud) -> Result<NormalizedCloud> {
    apply_normalization(cloud, &fit_normalization(cloud))
}
