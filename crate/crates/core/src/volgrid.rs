//! Volumetric reflectivity sequences and their geographic metadata.
//!
//! Arrays are laid out T-major, then D (altitude), H (latitude, increasing
//! northward) and W (longitude, increasing eastward).

use ndarray::{s, Array2, Array3, Array4, ArrayView3, Axis, Zip};

use crate::{Error, Result, MAX_DBZ, NO_ECHO_DBZ};

/// Default frame spacing of the operational product (6 minutes).
pub const DEFAULT_FRAME_INTERVAL_S: f64 = 360.0;

#[derive(Debug, Clone, PartialEq)]
pub struct GridMeta {
    /// Latitude of the south-west corner cell (degrees).
    pub lat0: f64,
    /// Longitude of the south-west corner cell (degrees).
    pub lon0: f64,
    pub dlat: f64,
    pub dlon: f64,
    /// Altitude of each vertical level in meters, strictly increasing.
    pub z_levels: Vec<f32>,
    /// Seconds between consecutive frames.
    pub frame_interval: f64,
}

impl GridMeta {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.lat0, self.lon0, self.dlat, self.dlon, self.frame_interval]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Meta("non-finite coordinate".into()));
        }
        if self.dlat <= 0.0 || self.dlon <= 0.0 {
            return Err(Error::Meta("dlat and dlon must be positive".into()));
        }
        if self.frame_interval <= 0.0 {
            return Err(Error::Meta("frame_interval must be positive".into()));
        }
        if self.z_levels.is_empty() {
            return Err(Error::Meta("at least one vertical level required".into()));
        }
        if self.z_levels.iter().any(|z| !z.is_finite())
            || self.z_levels.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::Meta("z_levels must be finite and strictly increasing".into()));
        }
        Ok(())
    }

    /// Evenly spaced levels between 0.5 and 16 km, the layout of the national
    /// 3D mosaic at 24 levels.
    pub fn default_levels(depth: usize) -> Vec<f32> {
        match depth {
            0 => Vec::new(),
            1 => vec![500.0],
            _ => (0..depth)
                .map(|k| (500.0 + 15_500.0 * k as f64 / (depth - 1) as f64) as f32)
                .collect(),
        }
    }

    /// 0.01 degree grid anchored in southern China with `depth` levels.
    pub fn default_for_depth(depth: usize) -> Self {
        GridMeta {
            lat0: 23.97,
            lon0: 110.0,
            dlat: 0.01,
            dlon: 0.01,
            z_levels: Self::default_levels(depth),
            frame_interval: DEFAULT_FRAME_INTERVAL_S,
        }
    }

    pub fn depth(&self) -> usize {
        self.z_levels.len()
    }

    pub fn lat_of_row(&self, h: f64) -> f64 {
        self.lat0 + h * self.dlat
    }

    pub fn lon_of_col(&self, w: f64) -> f64 {
        self.lon0 + w * self.dlon
    }
}

/// A T×D×H×W reflectivity sequence in dBZ with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeSequence {
    data: Array4<f32>,
    mask: Array4<bool>,
    meta: GridMeta,
}

impl VolumeSequence {
    /// Ingest reflectivity: validates shapes and metadata and clips valid
    /// voxels to the radar range.
    pub fn new(data: Array4<f32>, mask: Array4<bool>, meta: GridMeta) -> Result<Self> {
        let mut vol = Self::from_raw(data, mask, meta)?;
        vol.data.mapv_inplace(|v| if v.is_finite() { v.clamp(NO_ECHO_DBZ, MAX_DBZ) } else { v });
        Ok(vol)
    }

    /// Fully valid sequence.
    pub fn from_data(data: Array4<f32>, meta: GridMeta) -> Result<Self> {
        let mask = Array4::from_elem(data.raw_dim(), true);
        Self::new(data, mask, meta)
    }

    /// Build without clipping. Used for non-reflectivity payloads (fitted
    /// field components) and lossless file round trips.
    pub fn from_raw(data: Array4<f32>, mask: Array4<bool>, meta: GridMeta) -> Result<Self> {
        if data.shape() != mask.shape() {
            return Err(Error::Shape(format!(
                "data {:?} and mask {:?} differ",
                data.shape(),
                mask.shape()
            )));
        }
        if data.shape().iter().skip(1).any(|&n| n == 0) {
            return Err(Error::Shape(format!("empty spatial dimension in {:?}", data.shape())));
        }
        meta.validate()?;
        if meta.depth() != data.shape()[1] {
            return Err(Error::Shape(format!(
                "{} z_levels for depth {}",
                meta.depth(),
                data.shape()[1]
            )));
        }
        let data = data.as_standard_layout().into_owned();
        let mask = mask.as_standard_layout().into_owned();
        if let Some(index) = data
            .iter()
            .zip(mask.iter())
            .position(|(v, &valid)| valid && !v.is_finite())
        {
            return Err(Error::NonFinite { tensor: "data".into(), index });
        }
        Ok(VolumeSequence { data, mask, meta })
    }

    pub fn data(&self) -> &Array4<f32> {
        &self.data
    }

    pub fn mask(&self) -> &Array4<bool> {
        &self.mask
    }

    pub fn meta(&self) -> &GridMeta {
        &self.meta
    }

    pub fn into_parts(self) -> (Array4<f32>, Array4<bool>, GridMeta) {
        (self.data, self.mask, self.meta)
    }

    /// (T, D, H, W)
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        self.data.dim()
    }

    pub fn frames(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn spatial_dims(&self) -> (usize, usize, usize) {
        let (_, d, h, w) = self.dims();
        (d, h, w)
    }

    fn check_frame(&self, t: usize) -> Result<()> {
        if t >= self.frames() {
            return Err(Error::Index { index: t, len: self.frames() });
        }
        Ok(())
    }

    /// Frame `t` in f64 with invalid voxels replaced by the no-echo value.
    pub fn frame_filled(&self, t: usize) -> Result<Array3<f64>> {
        self.check_frame(t)?;
        let mut out = Array3::zeros(self.spatial_dims());
        Zip::from(&mut out)
            .and(self.data.index_axis(Axis(0), t))
            .and(self.mask.index_axis(Axis(0), t))
            .for_each(|o, &v, &m| *o = if m { v as f64 } else { NO_ECHO_DBZ as f64 });
        Ok(out)
    }

    pub fn frame(&self, t: usize) -> Result<ArrayView3<'_, f32>> {
        self.check_frame(t)?;
        Ok(self.data.index_axis(Axis(0), t))
    }

    /// Frames `start..end` as a new sequence sharing the metadata.
    pub fn slice_frames(&self, start: usize, end: usize) -> Result<Self> {
        if start > end || end > self.frames() {
            return Err(Error::Index { index: end, len: self.frames() });
        }
        Ok(VolumeSequence {
            data: self.data.slice(s![start..end, .., .., ..]).to_owned(),
            mask: self.mask.slice(s![start..end, .., .., ..]).to_owned(),
            meta: self.meta.clone(),
        })
    }

    /// Vertical maximum reflectivity of frame `t`, invalid voxels counted as
    /// no echo.
    pub fn column_max(&self, t: usize) -> Result<Array2<f32>> {
        self.check_frame(t)?;
        let (_, d, h, w) = self.dims();
        let data = self.data.index_axis(Axis(0), t);
        let mask = self.mask.index_axis(Axis(0), t);
        let mut out = Array2::from_elem((h, w), NO_ECHO_DBZ);
        for k in 0..d {
            Zip::from(&mut out)
                .and(data.index_axis(Axis(0), k))
                .and(mask.index_axis(Axis(0), k))
                .for_each(|o, &v, &m| {
                    if m && v > *o {
                        *o = v;
                    }
                });
        }
        Ok(out)
    }

    /// Horizontal sub-window with metadata re-anchored at the patch origin.
    pub fn extract_patch(&self, origin: (usize, usize), size: (usize, usize)) -> Result<Self> {
        let (_, _, h, w) = self.dims();
        let (oh, ow) = origin;
        let (ph, pw) = size;
        let fits = ph > 0
            && pw > 0
            && oh.checked_add(ph).is_some_and(|e| e <= h)
            && ow.checked_add(pw).is_some_and(|e| e <= w);
        if !fits {
            return Err(Error::Bounds { origin, size, grid: (h, w) });
        }
        let view = s![.., .., oh..oh + ph, ow..ow + pw];
        let mut meta = self.meta.clone();
        meta.lat0 = self.meta.lat_of_row(oh as f64);
        meta.lon0 = self.meta.lon_of_col(ow as f64);
        Ok(VolumeSequence {
            data: self.data.slice(view).to_owned(),
            mask: self.mask.slice(view).to_owned(),
            meta,
        })
    }
}
