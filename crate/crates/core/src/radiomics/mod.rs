//! Intensity, shape and texture features of a tumour region.
//!
//! Per modality the extractor produces 14 values: 5 first-order statistics,
//! 3 shape descriptors and 2 each from the GLCM, GLRLM and GLSZM. Texture
//! matrices are built on fixed-bin-count discretised levels and merged over
//! the 13 unique 3D directions before features are computed.

mod first_order;
mod shape;
mod texture;

pub use first_order::{intensity_features, intensity_stats, IntensityStats, ENTROPY_BINS};
pub use shape::{shape_features, ShapeStats};
pub use texture::{
    discretize, glcm, glcm_features, glcm_features_with, glrlm, glrlm_features,
    glrlm_features_with, glszm, glszm_features, DiscretizedRoi, RunLengthMatrix,
    SizeZoneMatrix, DIRECTIONS_13,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Mask3D, Volume3D};

/// Ordered named feature values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    entries: Vec<(String, f64)>,
}

impl FeatureVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: f64) -> Result<()> {
        let name = name.into();
        if !value.is_finite() {
            return Err(Error::Degenerate(format!("feature {name} is not finite ({value})")));
        }
        if self.get(&name).is_some() {
            return Err(Error::InvalidParameter(format!("duplicate feature name {name}")));
        }
        self.entries.push((name, value));
        Ok(())
    }

    pub fn extend_prefixed(&mut self, prefix: &str, other: FeatureVector) -> Result<()> {
        for (n, v) in other.entries {
            self.push(format!("{prefix}{n}"), v)?;
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|&(_, v)| v)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.entries.iter().map(|(n, v)| (n.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadiomicsConfig {
    pub ct: bool,
    pub pet: bool,
    /// Gray levels used for texture matrices.
    pub bins: usize,
}

impl Default for RadiomicsConfig {
    fn default() -> Self {
        Self {
            ct: true,
            pet: true,
            bins: 32,
        }
    }
}

/// The 14 features of one modality, unprefixed.
pub fn modality_features(vol: &Volume3D, mask: &Mask3D, bins: usize) -> Result<FeatureVector> {
    let mut out = FeatureVector::new();
    out.extend_prefixed("", intensity_features(vol, mask)?)?;
    out.extend_prefixed("", shape_features(mask)?)?;
    let roi = discretize(vol, mask, bins)?;
    out.extend_prefixed("glcm_", glcm_features(&roi)?)?;
    out.extend_prefixed("glrlm_", glrlm_features(&roi)?)?;
    out.extend_prefixed("glszm_", glszm_features(&roi)?)?;
    Ok(out)
}

/// Features for the selected modalities, prefixed `ct_` / `pet_`.
pub fn extract_all(
    ct: &Volume3D,
    pet: &Volume3D,
    mask: &Mask3D,
    config: &RadiomicsConfig,
) -> Result<FeatureVector> {
    if mask.count() == 0 {
        return Err(Error::EmptyMask("tumour mask for radiomics".into()));
    }
    for (name, v) in [("ct", ct), ("pet", pet)] {
        if v.dims() != mask.dims() {
            return Err(Error::ShapeMismatch(format!(
                "{name} dims {:?} differ from mask dims {:?}",
                v.dims(),
                mask.dims()
            )));
        }
    }
    let mut out = FeatureVector::new();
    for (enabled, prefix, vol) in [(config.ct, "ct_", ct), (config.pet, "pet_", pet)] {
        if enabled {
            let f = modality_features(vol, mask, config.bins)
                .map_err(|e| e.context(format!("{prefix} features")))?;
            out.extend_prefixed(prefix, f)?;
        }
    }
    Ok(out)
}
