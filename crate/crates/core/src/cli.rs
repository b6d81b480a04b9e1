//! Command-line front end. Every subcommand writes its outputs plus the fully
//! resolved `config.toml` into `--out`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ndarray::{Array2, Array4, Array5, Axis};

use crate::config::RunConfig;
use crate::ensemble::build_ensemble;
use crate::fitting::{fit_fields, forecast_with_fields, FitResult};
use crate::helmholtz::VelocityField;
use crate::solver::PhysicalFields;
use crate::verify::{self, crps, mae_by_level, neighborhood_csi, psd_radial, wind_match};
use crate::volgrid::{GridMeta, VolumeSequence};
use crate::{nv3d, synth, Error, Result, MAX_DBZ, NO_ECHO_DBZ};

#[derive(Debug, Parser)]
#[command(name = "volcast", version, about = "Volumetric radar nowcasting")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration; flags below override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "VOLCAST_THREADS")]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub m_samples: Option<usize>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    /// CSI thresholds in dBZ, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    pub thresholds: Option<Vec<f64>>,
    /// Neighborhood radii in cells, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    pub radii: Option<Vec<usize>>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true)]
    pub k_members: Option<usize>,
    /// Forecast length in frames.
    #[arg(long, global = true)]
    pub horizon: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic case.
    Synth {
        /// translation, rotation, growth or diffusion
        #[arg(long)]
        case: String,
        /// Grid size as depth,height,width.
        #[arg(long, value_delimiter = ',', default_value = "4,32,32")]
        dims: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        frames: usize,
        /// Case parameter (speed, rotation rate, growth rate or diffusivity).
        #[arg(long)]
        param: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit physical fields to a sequence.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit on the past window and extrapolate.
    Forecast {
        #[arg(long)]
        input: PathBuf,
        /// Frames used for fitting (default: all but the horizon).
        #[arg(long)]
        past: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Deterministic forecast plus the 3K-member ensemble.
    Ensemble {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        past: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a forecast (and optionally an ensemble) against observations.
    Verify {
        #[arg(long)]
        forecast: PathBuf,
        /// Observed sequence; its last frames are aligned with the forecast
        /// unless `--past` gives the index of the last fitted frame plus one.
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        past: Option<usize>,
        /// Directory written by `ensemble`.
        #[arg(long)]
        members: Option<PathBuf>,
        /// Label for the `case` column (default: truth file stem).
        #[arg(long)]
        case: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Match fitted winds against station observations.
    WindEval {
        /// Directory written by `fit`.
        #[arg(long)]
        fields: PathBuf,
        #[arg(long)]
        stations: PathBuf,
        #[arg(long)]
        radius_m: Option<f64>,
        #[arg(long)]
        vtol_m: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Column-maximum graymaps of every frame.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

impl Common {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.m_samples {
            cfg.m_samples = v;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = &self.thresholds {
            cfg.thresholds = v.clone();
        }
        if let Some(v) = &self.radii {
            cfg.radii = v.clone();
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.k_members {
            cfg.k_members = v;
        }
        if let Some(v) = self.horizon {
            cfg.horizon = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parse `args` and run; returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = cli.common.resolve()?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.common.threads {
        if n == 0 {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(&cli.command, &cfg))
}

fn dispatch(cmd: &Command, cfg: &RunConfig) -> Result<()> {
    match cmd {
        Command::Synth { case, dims, frames, param, out } => {
            let dims = match dims.as_slice() {
                &[d, h, w] => (d, h, w),
                _ => return Err(Error::Input("--dims needs three values".into())),
            };
            let c = synth::make_named(case, dims, *frames, *param, cfg.seed)?;
            prepare(out, cfg)?;
            if c.leaves_domain {
                eprintln!("warning: the {case} echo comes within three sigma of the lateral boundary");
            }
            nv3d::write(&out.join(format!("{case}.nv3d")), &c.sequence)?;
            write_fields(out, &c.truth_fields, c.sequence.meta(), "truth_")
        }
        Command::Fit { input, out } => {
            let seq = nv3d::read(input)?;
            prepare(out, cfg)?;
            let fit = fit_fields(&seq, &cfg.fit())?;
            write_fit(out, &fit, seq.meta())
        }
        Command::Forecast { input, past, out } => {
            let seq = nv3d::read(input)?;
            prepare(out, cfg)?;
            let (past_seq, fit) = fit_past(&seq, *past, cfg)?;
            write_fit(out, &fit, seq.meta())?;
            let r_det = deterministic(&past_seq, &fit, cfg)?;
            nv3d::write(&out.join("forecast.nv3d"), &to_sequence(&r_det, seq.meta())?)
        }
        Command::Ensemble { input, past, out } => {
            let seq = nv3d::read(input)?;
            prepare(out, cfg)?;
            let (past_seq, fit) = fit_past(&seq, *past, cfg)?;
            write_fit(out, &fit, seq.meta())?;
            let r_det = deterministic(&past_seq, &fit, cfg)?;
            nv3d::write(&out.join("forecast.nv3d"), &to_sequence(&r_det, seq.meta())?)?;
            let last = past_seq.frame_filled(past_seq.frames() - 1)?;
            let held = fit.fields.persist(fit.fields.frames() - 1, cfg.horizon);
            let ens = build_ensemble(last.view(), r_det.view(), &held, fit.residual_std.view(), &cfg.ensemble(), &cfg.solver())?;
            let mut index = String::from("member,provenance,file\n");
            for (i, (m, p)) in ens.members.iter().zip(&ens.provenance).enumerate() {
                let name = format!("member_{i:03}.nv3d");
                nv3d::write(&out.join(&name), &to_sequence(m, seq.meta())?)?;
                writeln!(index, "{i},{},{name}", p.tag()).expect("string write");
            }
            write_text(&out.join("members.csv"), &index)
        }
        Command::Verify { forecast, truth, past, members, case, out } => {
            let fc = nv3d::read(forecast)?;
            let obs = nv3d::read(truth)?;
            let ens = match members {
                Some(dir) => read_members(dir)?,
                None => Vec::new(),
            };
            prepare(out, cfg)?;
            let label = case.clone().unwrap_or_else(|| file_stem(truth));
            let csv = metrics_csv(&label, &fc, &obs, *past, &ens, cfg)?;
            write_text(&out.join("metrics.csv"), &csv)
        }
        Command::WindEval { fields, stations, radius_m, vtol_m, out } => {
            let (velocity, meta) = read_velocity(fields)?;
            let obs = verify::read_stations(stations)?;
            prepare(out, cfg)?;
            let radius = radius_m.unwrap_or(cfg.wind_radius_m);
            let vtol = vtol_m.unwrap_or(cfg.wind_vtol_m);
            let m = wind_match(&velocity, &meta, &obs, radius, vtol)?;
            write_wind(out, &m)
        }
        Command::Report { input, out } => {
            let seq = nv3d::read(input)?;
            prepare(out, cfg)?;
            for t in 0..seq.frames() {
                let img = pgm(&seq.column_max(t)?);
                fs::write(out.join(format!("frame_{t:03}.pgm")), img).map_err(|e| Error::io(out, e))?;
            }
            Ok(())
        }
    }
}

fn prepare(out: &Path, cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_text(&out.join("config.toml"), &cfg.to_toml())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn file_stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// f64 volume frames as a fully valid f32 sequence.
pub fn to_sequence(frames: &Array4<f64>, meta: &GridMeta) -> Result<VolumeSequence> {
    let data = frames.mapv(|v| v as f32);
    let mask = Array4::from_elem(data.raw_dim(), true);
    VolumeSequence::from_raw(data, mask, meta.clone())
}

const COMPONENTS: [&str; 3] = ["z", "y", "x"];

fn write_fields(out: &Path, fields: &PhysicalFields, meta: &GridMeta, prefix: &str) -> Result<()> {
    for (name, arr) in [("velocity", &fields.velocity.v), ("kappa", &fields.kappa)] {
        for (a, comp) in COMPONENTS.iter().enumerate() {
            let part = arr.index_axis(Axis(1), a).to_owned();
            nv3d::write(&out.join(format!("{prefix}{name}_{comp}.nv3d")), &to_sequence(&part, meta)?)?;
        }
    }
    nv3d::write(&out.join(format!("{prefix}source.nv3d")), &to_sequence(&fields.source, meta)?)
}

fn write_fit(out: &Path, fit: &FitResult, meta: &GridMeta) -> Result<()> {
    write_fields(out, &fit.fields, meta, "")?;
    let std = fit.residual_std.clone().insert_axis(Axis(0));
    nv3d::write(&out.join("residual_std.nv3d"), &to_sequence(&std, meta)?)?;
    let mut csv = String::from("epoch,total,adv,diff,pred,best\n");
    for (i, (l, b)) in fit.trace.iter().zip(&fit.best_trace).enumerate() {
        writeln!(csv, "{i},{},{},{},{},{b}", l.total, l.adv, l.diff, l.pred).expect("string write");
    }
    write_text(&out.join("loss_trace.csv"), &csv)
}

fn read_velocity(dir: &Path) -> Result<(VelocityField, GridMeta)> {
    let parts: Vec<VolumeSequence> =
        COMPONENTS.iter().map(|c| nv3d::read(&dir.join(format!("velocity_{c}.nv3d")))).collect::<Result<_>>()?;
    let (t, d, h, w) = parts[0].dims();
    if parts.iter().any(|p| p.dims() != (t, d, h, w)) {
        return Err(Error::Shape("velocity components differ in shape".into()));
    }
    let mut v = Array5::zeros((t, 3, d, h, w));
    for (a, p) in parts.iter().enumerate() {
        v.index_axis_mut(Axis(1), a).assign(&p.data().mapv(f64::from));
    }
    Ok((VelocityField { v }, parts[0].meta().clone()))
}

fn fit_past(seq: &VolumeSequence, past: Option<usize>, cfg: &RunConfig) -> Result<(VolumeSequence, FitResult)> {
    let frames = seq.frames();
    let past = match past {
        Some(p) => p,
        None => frames.checked_sub(cfg.horizon).ok_or_else(|| {
            Error::Input(format!("sequence has {frames} frames, fewer than the horizon {}", cfg.horizon))
        })?,
    };
    if past < 2 || past > frames {
        return Err(Error::Input(format!("past window {past} must lie in [2, {frames}]")));
    }
    let past_seq = seq.slice_frames(0, past)?;
    let fit = fit_fields(&past_seq, &cfg.fit())?;
    Ok((past_seq, fit))
}

fn deterministic(past: &VolumeSequence, fit: &FitResult, cfg: &RunConfig) -> Result<Array4<f64>> {
    let last = past.frame_filled(past.frames() - 1)?;
    forecast_with_fields(last.view(), &fit.fields, cfg.horizon, &cfg.solver())
}

fn read_members(dir: &Path) -> Result<Vec<VolumeSequence>> {
    let path = dir.join("members.csv");
    let mut rdr = csv::Reader::from_path(&path)?;
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let file = row.get(2).ok_or_else(|| Error::Input(format!("{}: missing file column", path.display())))?;
        out.push(nv3d::read(&dir.join(file))?);
    }
    Ok(out)
}

fn column_max_f64(seq: &VolumeSequence, t: usize) -> Result<Array2<f64>> {
    Ok(seq.column_max(t)?.mapv(f64::from))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Long-format metrics: `case,lead_frame,metric,threshold,radius,value`.
pub fn metrics_csv(
    case: &str,
    forecast: &VolumeSequence,
    truth: &VolumeSequence,
    past: Option<usize>,
    members: &[VolumeSequence],
    cfg: &RunConfig,
) -> Result<String> {
    let leads = forecast.frames();
    let start = match past {
        Some(p) => p,
        None => truth.frames().checked_sub(leads).ok_or_else(|| {
            Error::Input(format!("truth has {} frames for {leads} forecast frames", truth.frames()))
        })?,
    };
    if start + leads > truth.frames() {
        return Err(Error::Input(format!("truth has no frame for lead {leads} after offset {start}")));
    }
    if forecast.spatial_dims() != truth.spatial_dims() {
        return Err(Error::Shape(format!("forecast {:?} vs truth {:?}", forecast.spatial_dims(), truth.spatial_dims())));
    }
    if let Some(m) = members.iter().find(|m| m.dims() != forecast.dims()) {
        return Err(Error::Shape(format!("member {:?} vs forecast {:?}", m.dims(), forecast.dims())));
    }
    let aligned = truth.slice_frames(start, start + leads)?;
    let mut csv = String::from("case,lead_frame,metric,threshold,radius,value\n");
    let mut row = |lead: usize, metric: &str, thr: Option<f64>, radius: Option<usize>, value: String| {
        let r = radius.map(|r| r.to_string()).unwrap_or_default();
        writeln!(csv, "{case},{lead},{metric},{},{r},{value}", fmt_opt(thr)).expect("string write");
    };
    for t in 0..leads {
        let lead = t + 1;
        let f2 = column_max_f64(forecast, t)?;
        let o2 = column_max_f64(&aligned, t)?;
        for &thr in &cfg.thresholds {
            for &r in &cfg.radii {
                let c = neighborhood_csi(f2.view(), o2.view(), thr, r)?;
                row(lead, "csi", Some(thr), Some(r), c.score.to_string());
            }
        }
        let (h, w) = f2.dim();
        if h >= 8 && w >= 8 {
            for (name, field) in [("forecast", &f2), ("truth", &o2)] {
                let s = psd_radial(field.view())?;
                row(lead, &format!("psd_slope_{name}"), None, None, fmt_opt(s.slope));
                row(lead, &format!("psd_peak_wavelength_{name}"), None, None, fmt_opt(s.dominant_wavelength()));
            }
        }
        let one = |s: &VolumeSequence| s.slice_frames(t, t + 1);
        for stat in mae_by_level(&one(forecast)?, &one(&aligned)?)? {
            row(lead, &format!("mae_z{}", stat.level), None, None, fmt_opt(stat.mae));
        }
        if !members.is_empty() {
            let m2: Vec<Array2<f64>> = members.iter().map(|m| column_max_f64(m, t)).collect::<Result<_>>()?;
            let views: Vec<_> = m2.iter().map(|m| m.view()).collect();
            for pooling in cfg.poolings() {
                let v = crps(&views, o2.view(), pooling)?;
                row(lead, &format!("crps_{}", pooling.label()), None, None, v.to_string());
            }
        }
    }
    Ok(csv)
}

fn write_wind(out: &Path, m: &verify::WindMatch) -> Result<()> {
    let mut csv = String::from(
        "station_id,time_s,height_m,frame,points,u_obs,v_obs,u_pred,v_pred,speed_obs,speed_pred,direction_error_deg\n",
    );
    for r in &m.records {
        let (up, vp) = match r.predicted {
            Some((u, v)) => (u.to_string(), v.to_string()),
            None => (String::new(), String::new()),
        };
        let frame = r.frame.map(|f| f.to_string()).unwrap_or_default();
        writeln!(
            csv,
            "{},{},{},{frame},{},{},{},{up},{vp},{},{},{}",
            r.station_id,
            r.time,
            r.height,
            r.points,
            r.observed.0,
            r.observed.1,
            r.observed_speed(),
            fmt_opt(r.predicted_speed()),
            fmt_opt(r.direction_error())
        )
        .expect("string write");
    }
    write_text(&out.join("wind_pairs.csv"), &csv)?;
    let summary = format!(
        "metric,value\nobservations,{}\nmatched,{}\nspeed_r,{}\ndirection_mae_deg,{}\n",
        m.records.len(),
        m.matched(),
        fmt_opt(m.speed_r),
        fmt_opt(m.direction_mae)
    );
    write_text(&out.join("wind_summary.csv"), &summary)
}

/// Binary graymap with −10 dBZ black and 75 dBZ white.
pub fn pgm(field: &Array2<f32>) -> Vec<u8> {
    let (h, w) = field.dim();
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    let span = MAX_DBZ - NO_ECHO_DBZ;
    for &v in field.iter() {
        let g = ((v - NO_ECHO_DBZ) / span * 255.0).round().clamp(0.0, 255.0);
        out.push(g as u8);
    }
    out
}
