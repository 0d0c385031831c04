//! Volume ingestion, preprocessing, augmentation and synthetic phantoms.

mod augment;
mod native;
mod nifti;
mod phantom;
mod preprocess;
mod split;

pub use augment::{apply_affine, augment, AffineConfig, AffineParams, AugmentConfig, ElasticConfig, SharpenConfig};
pub use native::{list_cases, read_case, read_dataset, write_case, write_dataset, CaseMeta};
pub use nifti::{parse_nifti, write_nifti, Datatype, Endian, NiftiVolume};
pub use phantom::{generate_phantom, PhantomConfig, PhantomTruth};
pub use preprocess::{
    center_crop_pad, prepare_slices, resample_to_spacing, restore_labels, zscore, CropOffsets, TARGET_SPACING_MM,
};
pub use split::{epoch_order, make_batch, split_train_val, Batch};

use std::path::PathBuf;

use thiserror::Error;

use crate::volume::{Phase, Volume};

pub const NUM_LABELS: u8 = 4;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("bad magic: {0}")]
    BadMagic(String),
    #[error("unsupported NIfTI datatype code {0}")]
    UnsupportedDatatype(i16),
    #[error("truncated payload: need {needed} bytes, have {available}")]
    TruncatedPayload { needed: usize, available: usize },
    #[error("invalid header: {0}")]
    InvalidHeader(String),
    #[error("invalid case: {0}")]
    InvalidCase(String),
    #[error("invalid phantom geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid augmentation config: {0}")]
    InvalidAugment(String),
    #[error("need at least 2 cases to split, got {0}")]
    TooFewCases(usize),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl DataError {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| Self::Io { path, source }
    }
}

/// One cardiac phase of one patient: intensities, labels and voxel spacing.
#[derive(Clone, Debug, PartialEq)]
pub struct Case {
    pub case_id: String,
    pub phase: Phase,
    pub image: Volume<f32>,
    /// 0 background, 1 right-ventricle cavity, 2 myocardium, 3 left-ventricle cavity.
    pub label: Volume<u8>,
    /// `(slice, row, col)` in mm.
    pub spacing: [f64; 3],
}

impl Case {
    pub fn new(
        case_id: impl Into<String>,
        phase: Phase,
        image: Volume<f32>,
        label: Volume<u8>,
        spacing: [f64; 3],
    ) -> Result<Self, DataError> {
        let case = Self { case_id: case_id.into(), phase, image, label, spacing };
        case.validate()?;
        Ok(case)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.image.dims() != self.label.dims() {
            return Err(DataError::InvalidCase(format!(
                "{}: image {:?} and label {:?} shapes differ",
                self.case_id,
                self.image.dims(),
                self.label.dims()
            )));
        }
        if self.spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(DataError::InvalidCase(format!("{}: spacing {:?} not positive", self.case_id, self.spacing)));
        }
        if let Some(v) = self.label.data().iter().find(|&&v| v >= NUM_LABELS) {
            return Err(DataError::InvalidCase(format!("{}: label value {v} out of range", self.case_id)));
        }
        Ok(())
    }

    /// Directory name in the native dataset layout.
    pub fn key(&self) -> String {
        format!("{}_{}", self.case_id, self.phase)
    }
}

/// A preprocessed 2-D training sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Slice {
    pub case_id: String,
    pub phase: Phase,
    pub z: usize,
    pub h: usize,
    pub w: usize,
    pub image: Vec<f32>,
    pub label: Vec<u8>,
}
