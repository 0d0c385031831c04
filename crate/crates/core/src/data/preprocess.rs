//! Resampling, center cropping and intensity normalization.

use super::{Case, Slice};
use crate::loss::nearest_resize_labels;
use crate::nn::resize_bilinear;
use crate::volume::Volume;

/// In-plane spacing every case is resampled to, mm.
pub const TARGET_SPACING_MM: f64 = 1.25;

/// Resamples the in-plane axes to `target` mm: bilinear for intensities,
/// nearest neighbor for labels. The slice axis is left untouched.
pub fn resample_to_spacing(case: &Case, target: f64) -> Case {
    let [d, h, w] = case.image.dims();
    let [sz, sy, sx] = case.spacing;
    if sy == target && sx == target {
        return case.clone();
    }
    let oh = ((h as f64 * sy / target).round() as usize).max(1);
    let ow = ((w as f64 * sx / target).round() as usize).max(1);
    let mut image = Vec::with_capacity(d * oh * ow);
    let mut label = Vec::with_capacity(d * oh * ow);
    for z in 0..d {
        image.extend(resize_bilinear(case.image.slice(z), h, w, oh, ow));
        label.extend(nearest_resize_labels(case.label.slice(z), 1, h, w, oh, ow));
    }
    Case {
        case_id: case.case_id.clone(),
        phase: case.phase,
        image: Volume::new([d, oh, ow], image).expect("sized"),
        label: Volume::new([d, oh, ow], label).expect("sized"),
        spacing: [sz, target, target],
    }
}

/// Source coordinate of output pixel `(0, 0)`: output `(y, x)` reads input
/// `(y + row, x + col)`. Negative values mean padding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CropOffsets {
    pub row: isize,
    pub col: isize,
}

fn offset(input: usize, output: usize) -> isize {
    if input >= output {
        ((input - output) / 2) as isize
    } else {
        -(((output - input) / 2) as isize)
    }
}

/// Center crop or zero/background pad an `h × w` plane to `size`.
pub fn center_crop_pad(
    image: &[f32],
    label: &[u8],
    h: usize,
    w: usize,
    size: (usize, usize),
) -> (Vec<f32>, Vec<u8>, CropOffsets) {
    let (oh, ow) = size;
    let off = CropOffsets { row: offset(h, oh), col: offset(w, ow) };
    let mut img = vec![0.0f32; oh * ow];
    let mut lbl = vec![0u8; oh * ow];
    for y in 0..oh {
        let sy = y as isize + off.row;
        if sy < 0 || sy >= h as isize {
            continue;
        }
        for x in 0..ow {
            let sx = x as isize + off.col;
            if sx < 0 || sx >= w as isize {
                continue;
            }
            let src = sy as usize * w + sx as usize;
            img[y * ow + x] = image[src];
            lbl[y * ow + x] = label[src];
        }
    }
    (img, lbl, off)
}

/// In-place `(x − mean) / std`; constant planes are only centered.
pub fn zscore(plane: &mut [f32]) {
    if plane.is_empty() {
        return;
    }
    let n = plane.len() as f64;
    let mean = plane.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let var = plane.iter().map(|&v| (f64::from(v) - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for v in plane.iter_mut() {
        let c = f64::from(*v) - mean;
        *v = if std > 0.0 { (c / std) as f32 } else { c as f32 };
    }
}

/// Resample, center crop/pad each slice to `size`, and z-score intensities.
pub fn prepare_slices(case: &Case, size: (usize, usize)) -> Vec<Slice> {
    let resampled = resample_to_spacing(case, TARGET_SPACING_MM);
    let [d, h, w] = resampled.image.dims();
    (0..d)
        .map(|z| {
            let (mut image, label, _) = center_crop_pad(resampled.image.slice(z), resampled.label.slice(z), h, w, size);
            zscore(&mut image);
            Slice { case_id: case.case_id.clone(), phase: case.phase, z, h: size.0, w: size.1, image, label }
        })
        .collect()
}

/// Inverse of [`prepare_slices`] for a label plane: undoes the crop/pad and
/// resamples back to the case's own `h × w` grid. Pixels outside the
/// network's field of view are background.
pub fn restore_labels(plane: &[u8], size: (usize, usize), case: &Case) -> Vec<u8> {
    let [_, h, w] = case.image.dims();
    let [_, sy, sx] = case.spacing;
    let (rh, rw) = if sy == TARGET_SPACING_MM && sx == TARGET_SPACING_MM {
        (h, w)
    } else {
        (
            ((h as f64 * sy / TARGET_SPACING_MM).round() as usize).max(1),
            ((w as f64 * sx / TARGET_SPACING_MM).round() as usize).max(1),
        )
    };
    let off = CropOffsets { row: offset(rh, size.0), col: offset(rw, size.1) };
    let mut grid = vec![0u8; rh * rw];
    for y in 0..size.0 {
        let ty = y as isize + off.row;
        if ty < 0 || ty >= rh as isize {
            continue;
        }
        for x in 0..size.1 {
            let tx = x as isize + off.col;
            if tx < 0 || tx >= rw as isize {
                continue;
            }
            grid[ty as usize * rw + tx as usize] = plane[y * size.1 + x];
        }
    }
    if (rh, rw) == (h, w) {
        grid
    } else {
        nearest_resize_labels(&grid, 1, rh, rw, h, w)
    }
}
