//! Output envelope shared by the community predictor and the baselines.

use std::fmt;

use serde::{Deserialize, Serialize, Serializer};

use crate::feature_space::{GeoCoord, GeoDims, NormalizationParams};
use crate::partition::{CenterAdjust, PartitionPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ours,
    Kmeans,
    Cmeans,
}

impl Method {
    /// Row label in comparison tables.
    pub fn label(self) -> &'static str {
        match self {
            Method::Ours => "OURS",
            Method::Kmeans => "K-MEANS",
            Method::Cmeans => "C-MEANS (standard)",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Ours => "ours",
            Method::Kmeans => "kmeans",
            Method::Cmeans => "cmeans",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ours" => Ok(Method::Ours),
            "kmeans" | "k-means" => Ok(Method::Kmeans),
            "cmeans" | "c-means" | "fcm" => Ok(Method::Cmeans),
            other => Err(crate::Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

/// Which community produced a hotspot; baselines report `"global"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CommunityTag {
    Id(usize),
    Global,
}

impl Serialize for CommunityTag {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            CommunityTag::Id(id) => s.serialize_u64(*id as u64),
            CommunityTag::Global => s.serialize_str("global"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hotspot {
    pub center_normalized: Vec<f64>,
    pub center_original_units: Vec<f64>,
    pub geo: Option<GeoCoord>,
    pub community_id: CommunityTag,
    pub cluster_size: usize,
    /// The center was moved by the community adjustment.
    pub adjusted: bool,
    /// The adjusted center left the unit cube.
    pub out_of_cube: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommunityRegularization {
    pub community_id: usize,
    pub regularization: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct Diagnostics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center_adjust: Option<CenterAdjust>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plan: Option<PartitionPlan>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub regularization: Vec<CommunityRegularization>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub occupied_voxels: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub communities: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fuzzifier: Option<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HotspotPrediction {
    pub method: Method,
    pub hotspots: Vec<Hotspot>,
    pub diagnostics: Diagnostics,
    pub normalization: NormalizationParams,
    pub feature_names: Vec<String>,
    pub geo_dims: Option<GeoDims>,
}

impl HotspotPrediction {
    pub fn geo_points(&self) -> Vec<Option<GeoCoord>> {
        self.hotspots.iter().map(|h| h.geo).collect()
    }
}
