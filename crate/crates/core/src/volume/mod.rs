//! Voxel grids and the preprocessing operations applied to them.
//!
//! Data is stored x-fastest: the voxel at `(i, j, k)` lives at
//! `i + nx * (j + ny * k)`. Voxel centres sit at
//! `origin + (index + 0.5) * spacing` in physical millimetres.

mod io;
mod ops;

pub use io::{load_bounding_boxes, load_volume, raw_payload_path, save_volume, VolumeFormat};
pub use ops::{
    clip_intensities, crop_to_box, ensemble_mean, resample_trilinear, threshold_map,
    zscore_normalize, DEFAULT_CT_PRESCALE,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid extent and physical placement shared by every voxel container.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
}

impl Geometry {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidParameter(format!(
                "dims must be positive, got {dims:?}"
            )));
        }
        if spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "spacing must be positive and finite, got {spacing:?}"
            )));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "origin must be finite, got {origin:?}"
            )));
        }
        Ok(Self {
            dims,
            spacing,
            origin,
        })
    }

    /// Unit spacing, zero origin.
    pub fn unit(dims: [usize; 3]) -> Result<Self> {
        Self::new(dims, [1.0; 3], [0.0; 3])
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let rest = idx / self.dims[0];
        [i, rest % self.dims[1], rest / self.dims[1]]
    }

    /// Physical position of a voxel centre.
    pub fn position(&self, c: [usize; 3]) -> [f64; 3] {
        [0, 1, 2].map(|a| self.origin[a] + (c[a] as f64 + 0.5) * self.spacing[a])
    }

    /// Same grid extent and spacing (origin may differ by rounding).
    pub fn same_grid(&self, other: &Geometry) -> bool {
        self.dims == other.dims
            && self
                .spacing
                .iter()
                .zip(other.spacing.iter())
                .all(|(a, b)| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()))
    }
}

/// Voxel value types with a per-value validity rule.
pub trait Voxel: Copy + Send + Sync + 'static {
    fn is_valid(&self) -> bool;
}

impl Voxel for f64 {
    fn is_valid(&self) -> bool {
        self.is_finite()
    }
}

impl Voxel for bool {
    fn is_valid(&self) -> bool {
        true
    }
}

/// A dense 3D array with geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    geom: Geometry,
    data: Vec<T>,
}

/// Scalar image, CT in HU or PET in SUV.
pub type Volume3D = Grid<f64>;

/// Binary label grid.
pub type Mask3D = Grid<bool>;

impl<T: Voxel> Grid<T> {
    pub fn new(geom: Geometry, data: Vec<T>) -> Result<Self> {
        let expected = geom.len();
        if data.len() != expected {
            return Err(Error::LengthMismatch {
                dims: geom.dims,
                expected,
                found: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_valid()) {
            return Err(Error::InvalidParameter(format!(
                "invalid voxel value at index {pos}"
            )));
        }
        Ok(Self { geom, data })
    }

    pub fn filled(geom: Geometry, value: T) -> Self {
        Self {
            data: vec![value; geom.len()],
            geom,
        }
    }

    pub fn from_fn(geom: Geometry, mut f: impl FnMut([usize; 3]) -> T) -> Self {
        let data = (0..geom.len()).map(|idx| f(geom.coords(idx))).collect();
        Self { geom, data }
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geom
    }

    pub fn dims(&self) -> [usize; 3] {
        self.geom.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.geom.spacing
    }

    pub fn origin(&self) -> [f64; 3] {
        self.geom.origin
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> T {
        self.data[self.geom.index(i, j, k)]
    }

    pub fn with_spacing(mut self, spacing: [f64; 3]) -> Result<Self> {
        self.geom = Geometry::new(self.geom.dims, spacing, self.geom.origin)?;
        Ok(self)
    }

    pub fn map<U: Voxel>(&self, f: impl Fn(T) -> U) -> Grid<U> {
        Grid {
            geom: self.geom,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

impl Mask3D {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn to_volume(&self) -> Volume3D {
        self.map(|b| if b { 1.0 } else { 0.0 })
    }

    /// Reads a 0/1 volume back as a mask; any other value is rejected.
    pub fn from_volume(vol: &Volume3D) -> Result<Self> {
        if let Some(v) = vol.data.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidParameter(format!(
                "mask volume contains non-binary value {v}"
            )));
        }
        Ok(vol.map(|v| v == 1.0))
    }
}

/// Per-voxel foreground probability in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap3D(Grid<f64>);

impl ProbMap3D {
    pub fn new(geom: Geometry, data: Vec<f64>) -> Result<Self> {
        Self::from_volume(Grid::new(geom, data)?)
    }

    pub fn from_volume(vol: Volume3D) -> Result<Self> {
        if let Some(v) = vol.data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidParameter(format!(
                "probability {v} outside [0, 1]"
            )));
        }
        Ok(Self(vol))
    }

    pub fn as_volume(&self) -> &Volume3D {
        &self.0
    }

    pub fn into_volume(self) -> Volume3D {
        self.0
    }

    pub fn geometry(&self) -> &Geometry {
        &self.0.geom
    }

    pub fn dims(&self) -> [usize; 3] {
        self.0.dims()
    }

    pub fn data(&self) -> &[f64] {
        &self.0.data
    }
}

/// Voxel-space crop region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub start: [usize; 3],
    pub size: [usize; 3],
}

impl BoundingBox {
    pub fn new(start: [usize; 3], size: [usize; 3]) -> Result<Self> {
        if size.contains(&0) {
            return Err(Error::InvalidParameter(format!(
                "bounding box size must be positive, got {size:?}"
            )));
        }
        Ok(Self { start, size })
    }

    pub fn full(dims: [usize; 3]) -> Self {
        Self {
            start: [0; 3],
            size: dims,
        }
    }

    pub fn fits(&self, dims: [usize; 3]) -> bool {
        (0..3).all(|a| self.start[a] + self.size[a] <= dims[a])
    }
}
