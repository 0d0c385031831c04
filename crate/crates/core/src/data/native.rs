//! Native dataset layout: one directory per case and phase holding
//! `meta.json`, `image.f32` and `label.u8` (raw little-endian, row-major).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Case, DataError};
use crate::volume::{Phase, Volume};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseMeta {
    pub case_id: String,
    pub phase: Phase,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub dtype: String,
}

pub fn write_case(dir: &Path, case: &Case) -> Result<PathBuf, DataError> {
    case.validate()?;
    let path = dir.join(case.key());
    fs::create_dir_all(&path).map_err(DataError::io(&path))?;
    let meta = CaseMeta {
        case_id: case.case_id.clone(),
        phase: case.phase,
        dims: case.image.dims(),
        spacing: case.spacing,
        dtype: "f32".into(),
    };
    let meta_path = path.join("meta.json");
    let json = serde_json::to_string_pretty(&meta).expect("meta serializes");
    fs::write(&meta_path, json).map_err(DataError::io(&meta_path))?;
    let image: Vec<u8> = case.image.data().iter().flat_map(|v| v.to_le_bytes()).collect();
    let image_path = path.join("image.f32");
    fs::write(&image_path, image).map_err(DataError::io(&image_path))?;
    let label_path = path.join("label.u8");
    fs::write(&label_path, case.label.data()).map_err(DataError::io(&label_path))?;
    Ok(path)
}

pub fn read_case(path: &Path) -> Result<Case, DataError> {
    let meta_path = path.join("meta.json");
    let text = fs::read_to_string(&meta_path).map_err(DataError::io(&meta_path))?;
    let meta: CaseMeta = serde_json::from_str(&text).map_err(|source| DataError::Json { path: meta_path, source })?;
    if meta.dtype != "f32" {
        return Err(DataError::InvalidCase(format!("{}: unsupported image dtype {}", path.display(), meta.dtype)));
    }
    let n = meta.dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
    let n = n.ok_or_else(|| DataError::InvalidCase(format!("{}: dims overflow", path.display())))?;

    let image_path = path.join("image.f32");
    let raw = fs::read(&image_path).map_err(DataError::io(&image_path))?;
    if raw.len() != 4 * n {
        return Err(DataError::TruncatedPayload { needed: 4 * n, available: raw.len() });
    }
    let image = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4"))).collect();

    let label_path = path.join("label.u8");
    let label = fs::read(&label_path).map_err(DataError::io(&label_path))?;
    if label.len() != n {
        return Err(DataError::TruncatedPayload { needed: n, available: label.len() });
    }
    let image = Volume::new(meta.dims, image).expect("length checked");
    let label = Volume::new(meta.dims, label).expect("length checked");
    Case::new(meta.case_id, meta.phase, image, label, meta.spacing)
}

/// Case directories under `root` (those holding a `meta.json`), sorted.
pub fn list_cases(root: &Path) -> Result<Vec<PathBuf>, DataError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(root).map_err(DataError::io(root))? {
        let entry = entry.map_err(DataError::io(root))?;
        let p = entry.path();
        if p.join("meta.json").is_file() {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

pub fn read_dataset(root: &Path) -> Result<Vec<Case>, DataError> {
    list_cases(root)?.iter().map(|p| read_case(p)).collect()
}

pub fn write_dataset(root: &Path, cases: &[Case]) -> Result<(), DataError> {
    fs::create_dir_all(root).map_err(DataError::io(root))?;
    for c in cases {
        write_case(root, c)?;
    }
    Ok(())
}
