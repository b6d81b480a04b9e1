//! Conversion of fitted velocities to m/s and matching against wind-profiler
//! observations.

use std::path::Path;

use ndarray::Axis;
use serde::Deserialize;

use crate::helmholtz::VelocityField;
use crate::volgrid::GridMeta;
use crate::{Error, Result};

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Horizontal displacement `(disp_y, disp_x)` in cells per frame to `(u, v)`
/// in m/s at latitude `lat`.
pub fn cells_to_ms(disp_y: f64, disp_x: f64, lat: f64, meta: &GridMeta) -> Result<(f64, f64)> {
    if !(lat.abs() < 90.0) {
        return Err(Error::Input(format!("latitude {lat} is at or beyond a pole")));
    }
    let per_degree = EARTH_RADIUS_M * std::f64::consts::PI / 180.0 / meta.frame_interval;
    let v = disp_y * meta.dlat * per_degree;
    let u = disp_x * meta.dlon * per_degree * lat.to_radians().cos();
    Ok((u, v))
}

/// Great-circle distance in meters.
pub fn haversine(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * a.sqrt().min(1.0).asin()
}

/// Meteorological direction the wind blows from, in `[0, 360)` degrees.
pub fn direction_from(u: f64, v: f64) -> f64 {
    (-u).atan2(-v).to_degrees().rem_euclid(360.0)
}

/// Absolute angular difference wrapped to `[0, 180]`.
pub fn direction_error(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct StationObservation {
    pub station_id: String,
    pub lat: f64,
    pub lon: f64,
    #[serde(rename = "height_m")]
    pub height: f64,
    #[serde(rename = "time_s")]
    pub time: f64,
    #[serde(rename = "u_ms")]
    pub u: f64,
    #[serde(rename = "v_ms")]
    pub v: f64,
}

impl StationObservation {
    pub fn validate(&self) -> std::result::Result<(), String> {
        let vals = [self.lat, self.lon, self.height, self.time, self.u, self.v];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err("non-finite value".into());
        }
        if !(0.0..=20_000.0).contains(&self.height) {
            return Err(format!("height {} outside [0, 20000] m", self.height));
        }
        if self.lat.abs() >= 90.0 {
            return Err(format!("latitude {} at or beyond a pole", self.lat));
        }
        Ok(())
    }
}

const STATION_HEADER: [&str; 7] = ["station_id", "lat", "lon", "height_m", "time_s", "u_ms", "v_ms"];

/// Parse station observations from CSV text.
pub fn parse_stations(reader: impl std::io::Read) -> Result<Vec<StationObservation>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().map(str::trim).ne(STATION_HEADER) {
        return Err(Error::StationCsv { line: 1, msg: format!("expected header {}", STATION_HEADER.join(",")) });
    }
    let mut out = Vec::new();
    for row in rdr.deserialize::<StationObservation>() {
        let obs = row.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::StationCsv { line, msg: e.to_string() }
        })?;
        // header is line 1
        obs.validate().map_err(|msg| Error::StationCsv { line: out.len() + 2, msg })?;
        out.push(obs);
    }
    Ok(out)
}

pub fn read_stations(path: &Path) -> Result<Vec<StationObservation>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_stations(std::io::BufReader::new(file))
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindRecord {
    pub station_id: String,
    pub time: f64,
    pub height: f64,
    pub observed: (f64, f64),
    /// Averaged prediction, `None` for a no-match.
    pub predicted: Option<(f64, f64)>,
    pub frame: Option<usize>,
    pub points: usize,
}

impl WindRecord {
    pub fn observed_speed(&self) -> f64 {
        self.observed.0.hypot(self.observed.1)
    }

    pub fn predicted_speed(&self) -> Option<f64> {
        self.predicted.map(|(u, v)| u.hypot(v))
    }

    pub fn direction_error(&self) -> Option<f64> {
        let (u, v) = self.predicted?;
        Some(direction_error(direction_from(u, v), direction_from(self.observed.0, self.observed.1)))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WindMatch {
    pub records: Vec<WindRecord>,
    /// Pearson correlation of matched speeds; `None` with fewer than two
    /// matches or zero variance.
    pub speed_r: Option<f64>,
    pub direction_mae: Option<f64>,
}

impl WindMatch {
    pub fn matched(&self) -> usize {
        self.records.iter().filter(|r| r.predicted.is_some()).count()
    }
}

fn pearson(pairs: &[(f64, f64)]) -> Option<f64> {
    if pairs.len() < 2 {
        return None;
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    let den = (sxx * syy).sqrt();
    (den > 0.0).then(|| sxy / den)
}

/// Match each observation against grid points inside a cylinder of
/// horizontal radius `radius_m` and height `vtol_m` at the nearest frame.
pub fn wind_match(
    velocity: &VelocityField,
    meta: &GridMeta,
    obs: &[StationObservation],
    radius_m: f64,
    vtol_m: f64,
) -> Result<WindMatch> {
    if !(radius_m > 0.0 && vtol_m > 0.0) {
        return Err(Error::Input("radius and vertical tolerance must be positive".into()));
    }
    meta.validate()?;
    let shape = velocity.v.shape();
    let (frames, depth, height, width) = (shape[0], shape[2], shape[3], shape[4]);
    if depth != meta.depth() {
        return Err(Error::Shape(format!("velocity has {depth} levels, metadata {}", meta.depth())));
    }
    let mut out = WindMatch::default();
    for o in obs {
        o.validate().map_err(Error::Input)?;
        let mut rec = WindRecord {
            station_id: o.station_id.clone(),
            time: o.time,
            height: o.height,
            observed: (o.u, o.v),
            predicted: None,
            frame: None,
            points: 0,
        };
        let ft = (o.time / meta.frame_interval).round();
        let in_time = ft >= 0.0 && (ft as usize) < frames && (o.time - ft * meta.frame_interval).abs() <= meta.frame_interval / 2.0;
        if in_time {
            let t = ft as usize;
            let frame = velocity.v.index_axis(Axis(0), t);
            // Bounding box in cells, padded by one against rounding.
            let dlat_box = (radius_m / EARTH_RADIUS_M).to_degrees();
            let coslat = o.lat.to_radians().cos().max(1e-6);
            let dlon_box = dlat_box / coslat;
            let row = |lat: f64| (lat - meta.lat0) / meta.dlat;
            let col = |lon: f64| (lon - meta.lon0) / meta.dlon;
            let y0 = (row(o.lat - dlat_box).floor() - 1.0).max(0.0) as usize;
            let y1 = (row(o.lat + dlat_box).ceil() + 1.0).min(height as f64 - 1.0);
            let x0 = (col(o.lon - dlon_box).floor() - 1.0).max(0.0) as usize;
            let x1 = (col(o.lon + dlon_box).ceil() + 1.0).min(width as f64 - 1.0);
            let (mut su, mut sv, mut n) = (0.0, 0.0, 0usize);
            if y1 >= 0.0 && x1 >= 0.0 {
                for (d, &z) in meta.z_levels.iter().enumerate() {
                    if (f64::from(z) - o.height).abs() > vtol_m / 2.0 {
                        continue;
                    }
                    for y in y0..=y1 as usize {
                        let lat = meta.lat_of_row(y as f64);
                        for x in x0..=x1 as usize {
                            if haversine(o.lat, o.lon, lat, meta.lon_of_col(x as f64)) > radius_m {
                                continue;
                            }
                            let (u, v) = cells_to_ms(frame[[1, d, y, x]], frame[[2, d, y, x]], lat, meta)?;
                            su += u;
                            sv += v;
                            n += 1;
                        }
                    }
                }
            }
            rec.frame = Some(t);
            if n > 0 {
                rec.predicted = Some((su / n as f64, sv / n as f64));
                rec.points = n;
            }
        }
        out.records.push(rec);
    }
    let speeds: Vec<(f64, f64)> =
        out.records.iter().filter_map(|r| Some((r.predicted_speed()?, r.observed_speed()))).collect();
    out.speed_r = pearson(&speeds);
    let errs: Vec<f64> = out.records.iter().filter_map(WindRecord::direction_error).collect();
    if !errs.is_empty() {
        out.direction_mae = Some(errs.iter().sum::<f64>() / errs.len() as f64);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn meta(depth: usize) -> GridMeta {
        GridMeta { lat0: 0.0, ..GridMeta::default_for_depth(depth) }
    }

    fn obs(lat: f64, lon: f64, h: f64, t: f64, u: f64, v: f64) -> StationObservation {
        StationObservation { station_id: "S".into(), lat, lon, height: h, time: t, u, v }
    }

    #[test]
    fn conversion_oracles() {
        let m = meta(1);
        let (u0, _) = cells_to_ms(0.0, 1.0, 0.0, &m).unwrap();
        assert!((u0 - 3.0887).abs() < 1e-3, "{u0}");
        let (u60, _) = cells_to_ms(0.0, 1.0, 60.0, &m).unwrap();
        assert!((u60 - 1.5443).abs() < 1e-3, "{u60}");
        assert_eq!(cells_to_ms(0.0, 0.0, 30.0, &m).unwrap(), (0.0, 0.0));
        assert!(cells_to_ms(1.0, 1.0, 90.0, &m).is_err());
    }

    #[test]
    fn direction_wraps() {
        assert!((direction_error(359.0, 1.0) - 2.0).abs() < 1e-12);
        assert!((direction_error(1.0, 359.0) - 2.0).abs() < 1e-12);
        assert_eq!(direction_error(90.0, 270.0), 180.0);
        // Westerly wind blows from 270.
        assert!((direction_from(5.0, 0.0) - 270.0).abs() < 1e-12);
        assert!((direction_from(0.0, -3.0) - 0.0).abs() < 1e-12);
    }

    fn field(depth: usize, h: usize, w: usize, frames: usize, f: impl Fn(usize, usize, usize) -> (f64, f64)) -> VelocityField {
        let mut vf = VelocityField::zeros(frames, depth, h, w);
        for t in 0..frames {
            for d in 0..depth {
                for y in 0..h {
                    for x in 0..w {
                        let (vy, vx) = f(d, y, x);
                        vf.v[[t, 1, d, y, x]] = vy;
                        vf.v[[t, 2, d, y, x]] = vx;
                    }
                }
            }
        }
        vf
    }

    #[test]
    fn on_grid_point_returns_its_value() {
        let m = meta(2);
        let vf = field(2, 5, 5, 1, |d, y, x| (0.1 * y as f64 + d as f64, 0.2 * x as f64));
        let o = obs(m.lat_of_row(2.0), m.lon_of_col(3.0), m.z_levels[1] as f64, 0.0, 1.0, 1.0);
        let r = wind_match(&vf, &m, std::slice::from_ref(&o), 1.0, 10.0).unwrap();
        let want = cells_to_ms(1.2, 0.6, o.lat, &m).unwrap();
        let got = r.records[0].predicted.unwrap();
        assert_eq!(r.records[0].points, 1);
        assert!((got.0 - want.0).abs() < 1e-12 && (got.1 - want.1).abs() < 1e-12);
    }

    #[test]
    fn two_points_average() {
        // Points at columns 2 and 3 carry meridional speeds 2 and 4 m/s.
        let m = meta(1);
        let per_cell = cells_to_ms(1.0, 0.0, 0.0, &m).unwrap().1;
        let vf = field(1, 1, 6, 1, |_, _, x| match x {
            2 => (2.0 / per_cell, 0.0),
            3 => (4.0 / per_cell, 0.0),
            _ => (100.0, 0.0),
        });
        let o = obs(0.0, m.lon_of_col(2.5), m.z_levels[0] as f64, 0.0, 0.0, 3.0);
        let r = wind_match(&vf, &m, &[o], 700.0, 10.0).unwrap();
        let rec = &r.records[0];
        assert_eq!(rec.points, 2);
        assert!((rec.predicted_speed().unwrap() - 3.0).abs() < 1e-9);
        assert!(rec.direction_error().unwrap() < 1e-9);
    }

    #[test]
    fn misses_are_kept() {
        let m = meta(1);
        let vf = field(1, 4, 4, 2, |_, _, _| (1.0, 1.0));
        let far = obs(10.0, 10.0, 500.0, 0.0, 1.0, 1.0);
        let high = obs(0.0, m.lon0, 9000.0, 0.0, 1.0, 1.0);
        let late = obs(0.0, m.lon0, 500.0, 900.0, 1.0, 1.0);
        let hit = obs(0.0, m.lon0, 500.0, 500.0, 1.0, 1.0);
        let r = wind_match(&vf, &m, &[far, high, late, hit], 2000.0, 100.0).unwrap();
        assert_eq!(r.records.len(), 4);
        assert_eq!(r.matched(), 1);
        assert_eq!(r.records[2].frame, None);
        assert_eq!(r.records[3].frame, Some(1));
        assert!(wind_match(&vf, &m, &[], 2000.0, 100.0).unwrap().records.is_empty());
        assert!(wind_match(&vf, &m, &[], 0.0, 100.0).is_err());
    }

    #[test]
    fn pearson_of_perfect_line() {
        assert!((pearson(&[(1.0, 2.0), (2.0, 4.0), (3.0, 6.0)]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(pearson(&[(1.0, 2.0)]), None);
    }

    #[test]
    fn csv_parsing() {
        let ok = "station_id,lat,lon,height_m,time_s,u_ms,v_ms\nA,30.0,110.0,1500,0,3.5,-1\nB,30.1,110.2,2500,360,0,2\n";
        let s = parse_stations(ok.as_bytes()).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[1].station_id, "B");
        assert_eq!(s[0].v, -1.0);
        let bad = "station_id,lat,lon,height_m,time_s,u_ms,v_ms\nA,30.0,110.0,1500,0,3.5,-1\nB,30.1,110.2,2500,360,NaN,2\n";
        match parse_stations(bad.as_bytes()) {
            Err(Error::StationCsv { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let high = "station_id,lat,lon,height_m,time_s,u_ms,v_ms\nA,30.0,110.0,25000,0,3.5,-1\n";
        assert!(matches!(parse_stations(high.as_bytes()), Err(Error::StationCsv { line: 2, .. })));
        assert!(parse_stations("id,lat\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn conversion_is_linear_and_symmetric(a in -5.0f64..5.0, b in -5.0f64..5.0, lat in -80.0f64..80.0) {
            let m = meta(1);
            let (u1, v1) = cells_to_ms(a, b, lat, &m).unwrap();
            let (u2, v2) = cells_to_ms(2.0 * a, 2.0 * b, lat, &m).unwrap();
            prop_assert!((u2 - 2.0 * u1).abs() < 1e-9 && (v2 - 2.0 * v1).abs() < 1e-9);
            let (u3, v3) = cells_to_ms(a, b, -lat, &m).unwrap();
            prop_assert!((u3 - u1).abs() < 1e-9 && v3 == v1);
        }

        #[test]
        fn direction_error_in_range(a in -720.0f64..720.0, b in -720.0f64..720.0) {
            let e = direction_error(a, b);
            prop_assert!((0.0..=180.0).contains(&e));
        }
    }
}
