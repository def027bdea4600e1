//! CSV ingestion and result serialization.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::evaluation::{format_table, EvalReport, TableRow};
use crate::feature_space::{map_to_feature_space, FeatureSpec, PointCloud, Table};
use crate::prediction::HotspotPrediction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LoadOptions {
    /// Drop rows with unusable cells instead of failing.
    pub lenient: bool,
}

#[derive(Debug, Clone)]
pub struct LoadReport {
    pub cloud: PointCloud,
    pub rows_read: usize,
    /// 1-based data row numbers that were skipped in lenient mode.
    pub dropped_rows: Vec<usize>,
}

/// Reads a comma-delimited table with a header row.
pub fn read_table<R: Read>(reader: R) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.iter().map(str::to_string).collect();
    let rows = rdr
        .records()
        .map(|r| r.map(|rec| rec.iter().map(str::to_string).collect()))
        .collect::<std::result::Result<Vec<Vec<String>>, _>>()?;
    Ok(Table { headers, rows })
}

fn usable(table: &Table, row: usize, cols: &[usize]) -> bool {
    let cells = &table.rows[row];
    cells.len() == table.headers.len()
        && cols.iter().all(|&c| {
            cells
                .get(c)
                .and_then(|s| s.parse::<f64>().ok())
                .is_some_and(f64::is_finite)
        })
}

/// Loads a table and maps it into feature space.
pub fn load_table(table: Table, spec: &FeatureSpec, opts: LoadOptions) -> Result<LoadReport> {
    for name in &spec.columns {
        if table.column(name).is_none() {
            return Err(Error::config(format!("column {name:?} not found in input")));
        }
    }
    let rows_read = table.rows.len();
    if rows_read == 0 {
        return Err(Error::data("input has no data rows"));
    }
    let mut needed: Vec<usize> = spec
        .columns
        .iter()
        .filter_map(|c| table.column(c))
        .collect();
    needed.extend(table.column(&spec.lat_column));
    needed.extend(table.column(&spec.lon_column));
    let mut dropped_rows = Vec::new();
    let table = if opts.lenient {
        let Table { headers, rows } = table;
        let probe = Table {
            headers,
            rows: Vec::new(),
        };
        let mut kept = Vec::with_capacity(rows.len());
        for (i, row) in rows.into_iter().enumerate() {
            let single = Table {
                headers: probe.headers.clone(),
                rows: vec![row],
            };
            if usable(&single, 0, &needed) {
                kept.extend(single.rows);
            } else {
                dropped_rows.push(i + 1);
            }
        }
        if kept.is_empty() {
            return Err(Error::data("no usable rows in input"));
        }
        Table {
            headers: probe.headers,
            rows: kept,
        }
    } else {
        let first_bad = (0..rows_read).find(|&i| !usable(&table, i, &needed));
        if let Some(i) = first_bad.filter(|&i| table.rows[i].len() != table.headers.len()) {
            return Err(Error::Cell {
                row: i + 1,
                column: String::new(),
                reason: format!(
                    "expected {} fields, found {}",
                    table.headers.len(),
                    table.rows[i].len()
                ),
            });
        }
        table
    };
    if !dropped_rows.is_empty() {
        log::warn!(
            "dropped {} malformed rows: {:?}",
            dropped_rows.len(),
            dropped_rows
        );
    }
    let cloud = map_to_feature_space(&table, spec)?;
    Ok(LoadReport {
        cloud,
        rows_read,
        dropped_rows,
    })
}

pub fn load_csv(
    path: impl AsRef<Path>,
    spec: &FeatureSpec,
    opts: LoadOptions,
) -> Result<LoadReport> {
    let file = File::open(path.as_ref())
        .map_err(|e| Error::data(format!("cannot open {}: {e}", path.as_ref().display())))?;
    load_table(read_table(file)?, spec, opts)
}

/// Writes `id`, the feature columns and any geographic columns not already
/// among the features. Floats use the shortest exact representation.
pub fn write_cloud_csv<W: Write>(cloud: &PointCloud, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let names = cloud.feature_names();
    let extra_geo = cloud.geo_dims().is_none() && cloud.points().iter().any(|p| p.geo.is_some());
    let mut header = vec!["id".to_string()];
    header.extend(names.iter().cloned());
    if extra_geo {
        header.extend(["lat".to_string(), "lon".to_string()]);
    }
    w.write_record(&header)?;
    for p in cloud.points() {
        let mut rec = vec![p.id.clone()];
        rec.extend(p.features.iter().map(|v| v.to_string()));
        if extra_geo {
            let g = p
                .geo
                .ok_or_else(|| Error::data(format!("point {:?} lacks coordinates", p.id)))?;
            rec.extend([g.lat.to_string(), g.lon.to_string()]);
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Json,
    GeoJson,
    Table,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(OutputFormat::Json),
            "geojson" => Ok(OutputFormat::GeoJson),
            "table" => Ok(OutputFormat::Table),
            other => Err(Error::config(format!("unknown output format {other:?}"))),
        }
    }
}

#[derive(Serialize)]
struct PredictionDocument<'a> {
    config: &'a Value,
    prediction: &'a HotspotPrediction,
}

/// Full prediction with diagnostics and the echoed run configuration.
pub fn prediction_json(prediction: &HotspotPrediction, config: &Value) -> Result<String> {
    Ok(serde_json::to_string_pretty(&PredictionDocument {
        config,
        prediction,
    })?)
}

/// GeoJSON FeatureCollection of hotspots as `[lon, lat]` points.
pub fn prediction_geojson(prediction: &HotspotPrediction, config: &Value) -> Result<Value> {
    let features = prediction
        .hotspots
        .iter()
        .map(|h| {
            let g = h
                .geo
                .ok_or_else(|| Error::config("GeoJSON output needs lat/lon among the features"))?;
            if !(g.lat.is_finite() && g.lon.is_finite()) {
                return Err(Error::invariant("non-finite hotspot coordinate"));
            }
            let mut props = json!({
                "method": prediction.method,
                "community_id": h.community_id,
                "cluster_size": h.cluster_size,
                "adjusted": h.adjusted,
                "out_of_cube": h.out_of_cube,
                "center": h.center_original_units,
            });
            if let Some(w) = &h.warning {
                props["warning"] = json!(w);
            }
            Ok(json!({
                "type": "Feature",
                "geometry": { "type": "Point", "coordinates": [g.lon, g.lat] },
                "properties": props,
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(json!({
        "type": "FeatureCollection",
        "features": features,
        "config": config,
    }))
}

/// Serializes a prediction in the requested format. The table format lists
/// one row per hotspot and needs no evaluation data.
pub fn emit_results(
    prediction: &HotspotPrediction,
    format: OutputFormat,
    config: &Value,
) -> Result<String> {
    match format {
        OutputFormat::Json => prediction_json(prediction, config),
        OutputFormat::GeoJson => Ok(serde_json::to_string_pretty(&prediction_geojson(
            prediction, config,
        )?)?),
        OutputFormat::Table => {
            let mut out = String::new();
            out.push_str(&format!(
                "{:<12} {:>6} {:>8}  center\n",
                "community", "size", "adjusted"
            ));
            for h in &prediction.hotspots {
                let tag = serde_json::to_string(&h.community_id)?;
                let center: Vec<String> = h
                    .center_original_units
                    .iter()
                    .map(|v| format!("{v:.6}"))
                    .collect();
                out.push_str(&format!(
                    "{:<12} {:>6} {:>8}  {}\n",
                    tag.trim_matches('"'),
                    h.cluster_size,
                    h.adjusted,
                    center.join(", ")
                ));
            }
            out.push_str(&format!("# config: {config}\n"));
            Ok(out)
        }
    }
}

/// Comparison table for an evaluation run, with config and headline footers.
pub fn eval_table(report: &EvalReport, config: &Value) -> String {
    let rows: Vec<TableRow> = report.rows.iter().map(TableRow::from).collect();
    let mut out = format_table(&rows);
    if let Some(h) = report.headline {
        out.push_str(&format!(
            "\nspeedup vs mean baseline time: {:.2}%; accuracy loss vs best baseline: {:.2} pts\n",
            h.speedup_pct, h.accuracy_loss_pts
        ));
    }
    out.push_str(&format!("# config: {config}\n"));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::{generate_synthetic, SyntheticSpec};
    use crate::partition::{predict_hotspots, PredictConfig};

    #[test]
    fn ten_row_fixture() {
        let mut csv = String::from("id,lat,lon,period\n");
        for i in 0..10 {
            csv.push_str(&format!(
                "r{i},{},{},{}\n",
                37.0 + i as f64 * 0.3,
                28.5 + i as f64,
                i % 3
            ));
        }
        let t = read_table(csv.as_bytes()).unwrap();
        let r = load_table(t, &FeatureSpec::new(["lat", "lon"]), LoadOptions::default()).unwrap();
        assert_eq!((r.cloud.len(), r.cloud.dim(), r.rows_read), (10, 2, 10));
        assert_eq!(r.cloud.points()[3].features, vec![37.0 + 0.9, 31.5]);
    }

    #[test]
    fn strict_rejects_malformed_row_lenient_drops_it() {
        let csv = "id,lat,lon\na,1.5,2\nb,x,3\nc,2.5,4\nd,3\n";
        let spec = FeatureSpec::new(["lat", "lon"]);
        let err = load_table(
            read_table(csv.as_bytes()).unwrap(),
            &spec,
            LoadOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Cell { row: 2, .. }), "{err:?}");
        let r = load_table(
            read_table(csv.as_bytes()).unwrap(),
            &spec,
            LoadOptions { lenient: true },
        )
        .unwrap();
        assert_eq!(r.cloud.len(), 2);
        assert_eq!(r.dropped_rows, vec![2, 4]);
        let bad = "id,lat,lon\na,x,y\n";
        assert!(matches!(
            load_table(
                read_table(bad.as_bytes()).unwrap(),
                &spec,
                LoadOptions { lenient: true }
            ),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn missing_column_named() {
        let csv = "id,lat,lon\na,1,2\n";
        let err = load_table(
            read_table(csv.as_bytes()).unwrap(),
            &FeatureSpec::new(["lat", "depth"]),
            LoadOptions::default(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("depth"));
    }

    #[test]
    fn decimal_point_is_locale_independent() {
        let csv = "id,lat,lon\na,\"1,5\",2\n";
        assert!(load_table(
            read_table(csv.as_bytes()).unwrap(),
            &FeatureSpec::new(["lat", "lon"]),
            LoadOptions::default()
        )
        .is_err());
    }

    #[test]
    fn synthetic_round_trip() {
        let d = generate_synthetic(&SyntheticSpec {
            n_points: 300,
            seed: 12,
            ..SyntheticSpec::default()
        })
        .unwrap();
        let mut buf = Vec::new();
        write_cloud_csv(&d.cloud, &mut buf).unwrap();
        let spec = FeatureSpec::new(d.cloud.feature_names().to_vec());
        let back = load_table(
            read_table(buf.as_slice()).unwrap(),
            &spec,
            LoadOptions::default(),
        )
        .unwrap();
        assert_eq!(back.cloud.len(), d.cloud.len());
        for (a, b) in back.cloud.points().iter().zip(d.cloud.points()) {
            assert_eq!(a.id, b.id);
            for (x, y) in a.features.iter().zip(&b.features) {
                assert!((x - y).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn geojson_structure_and_flags() {
        let d = generate_synthetic(&SyntheticSpec {
            n_points: 400,
            dims: 2,
            n_hotspots: 2,
            seed: 3,
            ..SyntheticSpec::default()
        })
        .unwrap();
        let cfg = PredictConfig {
            k_global: 2,
            lambda: 5.0,
            bins: 4,
            epsilon: Some(3.0),
            ..PredictConfig::default()
        };
        let p = predict_hotspots(&d.cloud, &cfg).unwrap();
        assert_eq!(p.hotspots.len(), 2);
        let v = prediction_geojson(&p, &json!({"k": 2})).unwrap();
        assert_eq!(v["type"], "FeatureCollection");
        let feats = v["features"].as_array().unwrap();
        assert_eq!(feats.len(), 2);
        for (f, h) in feats.iter().zip(&p.hotspots) {
            assert_eq!(f["type"], "Feature");
            assert_eq!(f["geometry"]["type"], "Point");
            let c = f["geometry"]["coordinates"].as_array().unwrap();
            assert_eq!(c[0].as_f64().unwrap(), h.geo.unwrap().lon);
            assert_eq!(c[1].as_f64().unwrap(), h.geo.unwrap().lat);
            assert_eq!(f["properties"]["adjusted"], true);
            // lambda 5 with a mid-cube centroid pushes every center out of the cube.
            assert_eq!(f["properties"]["out_of_cube"], true);
            assert!(f["properties"]["warning"].is_string());
        }
        assert_eq!(v["config"]["k"], 2);
    }

    #[test]
    fn geojson_needs_geo_dims() {
        let csv = "id,lat,lon,a,b\np,1,2,0.1,0.5\nq,1,2,0.9,0.7\nr,1,2,0.3,0.2\n";
        let r = load_table(
            read_table(csv.as_bytes()).unwrap(),
            &FeatureSpec::new(["a", "b"]),
            LoadOptions::default(),
        )
        .unwrap();
        let p = predict_hotspots(
            &r.cloud,
            &PredictConfig {
                k_global: 1,
                ..PredictConfig::default()
            },
        )
        .unwrap();
        assert!(matches!(
            emit_results(&p, OutputFormat::GeoJson, &Value::Null),
            Err(Error::Config(_))
        ));
        assert!(emit_results(&p, OutputFormat::Json, &Value::Null).is_ok());
    }
}
