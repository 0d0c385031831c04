//! Geometric and clinical evaluation of segmentations.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::volume::{Phase, Volume};

/// Myocardial tissue density in g/ml.
pub const MYOCARDIUM_DENSITY: f64 = 1.05;

pub const CLASS_NAMES: [&str; 4] = ["background", "RVC", "LVM", "LVC"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("end-diastolic volume is zero")]
    ZeroEdv,
    #[error("length mismatch: {0} predicted vs {1} reference values")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("mask shapes differ: {0:?} vs {1:?}")]
    ShapeMismatch([usize; 3], [usize; 3]),
}

/// `2|a ∩ b| / (|a| + |b|)`, or 1 when both masks are empty.
pub fn dice(a: &[bool], b: &[bool]) -> f64 {
    assert_eq!(a.len(), b.len(), "dice of masks with different sizes");
    let (mut inter, mut na, mut nb) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.iter().zip(b) {
        inter += usize::from(x && y);
        na += usize::from(x);
        nb += usize::from(y);
    }
    if na + nb == 0 {
        1.0
    } else {
        2.0 * inter as f64 / (na + nb) as f64
    }
}

/// Foreground voxels with a six-connected background neighbor or lying on
/// the volume edge.
pub fn boundary(mask: &Volume<bool>) -> Volume<bool> {
    let [d, h, w] = mask.dims();
    let mut out = Volume::filled([d, h, w], false);
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                if !mask.get(z, y, x) {
                    continue;
                }
                let edge = z == 0 || y == 0 || x == 0 || z + 1 == d || y + 1 == h || x + 1 == w;
                let open = edge
                    || !mask.get(z - 1, y, x)
                    || !mask.get(z + 1, y, x)
                    || !mask.get(z, y - 1, x)
                    || !mask.get(z, y + 1, x)
                    || !mask.get(z, y, x - 1)
                    || !mask.get(z, y, x + 1);
                out.set(z, y, x, open);
            }
        }
    }
    out
}

/// Exact 1-D squared distance transform of sampled function `f` on a grid
/// with spacing `s` (lower envelope of parabolas). Infinite entries are
/// treated as absent sites.
fn edt_1d(f: &[f64], s: f64, out: &mut [f64], sites: &mut Vec<usize>, bounds: &mut Vec<f64>) {
    sites.clear();
    bounds.clear();
    let pos = |q: usize| q as f64 * s;
    for (q, &fq) in f.iter().enumerate() {
        if !fq.is_finite() {
            continue;
        }
        let mut start = f64::NEG_INFINITY;
        while let Some(&r) = sites.last() {
            let x = ((fq + pos(q) * pos(q)) - (f[r] + pos(r) * pos(r))) / (2.0 * (pos(q) - pos(r)));
            if x <= *bounds.last().expect("paired with sites") {
                sites.pop();
                bounds.pop();
            } else {
                start = x;
                break;
            }
        }
        sites.push(q);
        bounds.push(start);
    }
    if sites.is_empty() {
        out.fill(f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (p, o) in out.iter_mut().enumerate() {
        while k + 1 < sites.len() && bounds[k + 1] < pos(p) {
            k += 1;
        }
        let dx = pos(p) - pos(sites[k]);
        *o = dx * dx + f[sites[k]];
    }
}

/// Squared Euclidean distance (mm²) from every voxel to the nearest site.
pub fn squared_distance_transform(sites: &Volume<bool>, spacing: [f64; 3]) -> Volume<f64> {
    let [d, h, w] = sites.dims();
    let mut dist = sites.map(|s| if s { 0.0 } else { f64::INFINITY });
    let (mut sv, mut bv) = (Vec::new(), Vec::new());
    let lens = [d, h, w];
    let strides = [h * w, w, 1];
    for axis in [2, 1, 0] {
        let n = lens[axis];
        let mut line = vec![0.0; n];
        let mut out = vec![0.0; n];
        let data = dist.data_mut();
        for start in 0..d * h * w {
            // Visit each line once, from its first element.
            if (start / strides[axis]) % n != 0 {
                continue;
            }
            for (i, l) in line.iter_mut().enumerate() {
                *l = data[start + i * strides[axis]];
            }
            edt_1d(&line, spacing[axis], &mut out, &mut sv, &mut bv);
            for (i, &o) in out.iter().enumerate() {
                data[start + i * strides[axis]] = o;
            }
        }
    }
    dist
}

fn directed_hausdorff(from: &Volume<bool>, to_dist: &Volume<f64>) -> f64 {
    from.data().iter().zip(to_dist.data()).filter(|(&b, _)| b).map(|(_, &d2)| d2).fold(0.0, f64::max).sqrt()
}

/// Symmetric Hausdorff distance in mm between the boundary voxel centers of
/// two masks. `None` when either mask is empty.
pub fn hausdorff_mm(a: &Volume<bool>, b: &Volume<bool>, spacing: [f64; 3]) -> Result<Option<f64>, MetricsError> {
    if a.dims() != b.dims() {
        return Err(MetricsError::ShapeMismatch(a.dims(), b.dims()));
    }
    if !a.data().contains(&true) || !b.data().contains(&true) {
        return Ok(None);
    }
    let (ba, bb) = (boundary(a), boundary(b));
    let da = squared_distance_transform(&ba, spacing);
    let db = squared_distance_transform(&bb, spacing);
    Ok(Some(directed_hausdorff(&ba, &db).max(directed_hausdorff(&bb, &da))))
}

pub fn voxel_volume_ml(spacing: [f64; 3]) -> f64 {
    spacing.iter().product::<f64>() / 1000.0
}

pub fn volume_ml(mask: &Volume<bool>, spacing: [f64; 3]) -> f64 {
    mask.data().iter().filter(|&&v| v).count() as f64 * voxel_volume_ml(spacing)
}

/// `100 · (EDV − ESV) / EDV`.
pub fn ef_percent(edv: f64, esv: f64) -> Result<f64, MetricsError> {
    if edv == 0.0 {
        return Err(MetricsError::ZeroEdv);
    }
    Ok(100.0 * (edv - esv) / edv)
}

pub fn mass_g(myo_volume_ml: f64) -> f64 {
    MYOCARDIUM_DENSITY * myo_volume_ml
}

/// Agreement of predicted with reference values across a cohort.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CohortStats {
    /// Pearson correlation; `None` when either side has zero variance.
    pub corr: Option<f64>,
    /// `mean(pred − true)`.
    pub bias: f64,
}

pub fn cohort_stats(pred: &[f64], truth: &[f64]) -> Result<CohortStats, MetricsError> {
    if pred.len() != truth.len() {
        return Err(MetricsError::LengthMismatch(pred.len(), truth.len()));
    }
    let n = pred.len();
    if n < 2 {
        return Err(MetricsError::TooFewSamples(n));
    }
    let nf = n as f64;
    let (mut sp, mut st, mut sd) = (0.0, 0.0, 0.0);
    for (&p, &t) in pred.iter().zip(truth) {
        sp += p;
        st += t;
        sd += p - t;
    }
    let (mp, mt) = (sp / nf, st / nf);
    let (mut cov, mut vp, mut vt) = (0.0, 0.0, 0.0);
    for (&p, &t) in pred.iter().zip(truth) {
        cov += (p - mp) * (t - mt);
        vp += (p - mp) * (p - mp);
        vt += (t - mt) * (t - mt);
    }
    let corr = (vp > 0.0 && vt > 0.0).then(|| (cov / (vp.sqrt() * vt.sqrt())).clamp(-1.0, 1.0));
    Ok(CohortStats { corr, bias: sd / nf })
}

/// Predicted and reference label volumes of one case and phase.
#[derive(Clone, Copy, Debug)]
pub struct EvalCase<'a> {
    pub case_id: &'a str,
    pub phase: Phase,
    pub pred: &'a Volume<u8>,
    pub truth: &'a Volume<u8>,
    pub spacing: [f64; 3],
}

/// Scores of one foreground class in one case and phase.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassRow {
    pub case_id: String,
    pub phase: Phase,
    pub class: u8,
    pub dice: f64,
    pub hausdorff_mm: Option<f64>,
    pub volume_pred_ml: f64,
    pub volume_true_ml: f64,
}

/// Cohort-level agreement for one foreground class.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ClassCohort {
    pub vol_ed: Option<CohortStats>,
    pub vol_es: Option<CohortStats>,
    /// Cavities only.
    pub ef: Option<CohortStats>,
    /// Myocardium only, at end diastole.
    pub mass: Option<CohortStats>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsReport {
    pub rows: Vec<ClassRow>,
    pub cohort: BTreeMap<u8, ClassCohort>,
}

impl MetricsReport {
    pub fn compute(cases: &[EvalCase<'_>]) -> Result<Self, MetricsError> {
        let mut rows = Vec::new();
        for c in cases {
            if c.pred.dims() != c.truth.dims() {
                return Err(MetricsError::ShapeMismatch(c.pred.dims(), c.truth.dims()));
            }
            for class in 1..=3u8 {
                let (p, t) = (c.pred.mask(class), c.truth.mask(class));
                rows.push(ClassRow {
                    case_id: c.case_id.to_string(),
                    phase: c.phase,
                    class,
                    dice: dice(p.data(), t.data()),
                    hausdorff_mm: hausdorff_mm(&p, &t, c.spacing)?,
                    volume_pred_ml: volume_ml(&p, c.spacing),
                    volume_true_ml: volume_ml(&t, c.spacing),
                });
            }
        }
        let mut report = Self { rows, cohort: BTreeMap::new() };
        for class in 1..=3u8 {
            report.cohort.insert(class, report.class_cohort(class));
        }
        Ok(report)
    }

    fn volumes(&self, class: u8, phase: Phase) -> BTreeMap<&str, (f64, f64)> {
        self.rows
            .iter()
            .filter(|r| r.class == class && r.phase == phase)
            .map(|r| (r.case_id.as_str(), (r.volume_pred_ml, r.volume_true_ml)))
            .collect()
    }

    fn class_cohort(&self, class: u8) -> ClassCohort {
        let ed = self.volumes(class, Phase::Ed);
        let es = self.volumes(class, Phase::Es);
        let stats = |pairs: Vec<(f64, f64)>| {
            let (p, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            cohort_stats(&p, &t).ok()
        };
        let mut out = ClassCohort {
            vol_ed: stats(ed.values().copied().collect()),
            vol_es: stats(es.values().copied().collect()),
            ..Default::default()
        };
        if class == 2 {
            out.mass = stats(ed.values().map(|&(p, t)| (mass_g(p), mass_g(t))).collect());
        } else {
            let efs = ed
                .iter()
                .filter_map(|(id, &(ped, ted))| {
                    let &(pes, tes) = es.get(id)?;
                    Some((ef_percent(ped, pes).ok()?, ef_percent(ted, tes).ok()?))
                })
                .collect();
            out.ef = stats(efs);
        }
        out
    }

    pub fn mean_dice(&self, class: u8, phase: Option<Phase>) -> Option<f64> {
        mean(self.rows.iter().filter(|r| r.class == class && phase.is_none_or(|p| r.phase == p)).map(|r| r.dice))
    }

    pub fn mean_hausdorff(&self, class: u8, phase: Option<Phase>) -> Option<f64> {
        mean(
            self.rows
                .iter()
                .filter(|r| r.class == class && phase.is_none_or(|p| r.phase == p))
                .filter_map(|r| r.hausdorff_mm),
        )
    }

    /// Mean Dice over all foreground rows.
    pub fn mean_foreground_dice(&self) -> Option<f64> {
        mean(self.rows.iter().map(|r| r.dice))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("case_id,phase,class,dice,hausdorff_mm,volume_pred_ml,volume_true_ml\n");
        for r in &self.rows {
            let hd = r.hausdorff_mm.map_or(String::new(), |v| v.to_string());
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.case_id, r.phase, CLASS_NAMES[r.class as usize], r.dice, hd, r.volume_pred_ml, r.volume_true_ml
            );
        }
        s
    }

    /// One line per structure: Dice and Hausdorff per phase, then the
    /// clinical index agreement.
    pub fn summary_table(&self) -> String {
        let fmt = |v: Option<f64>, prec: usize| v.map_or("-".to_string(), |x| format!("{x:.prec$}"));
        let pair = |c: Option<CohortStats>| match c {
            Some(c) => format!("{} / {:+.2}", fmt(c.corr, 3), c.bias),
            None => "-".to_string(),
        };
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<5} {:>8} {:>8} {:>9} {:>9} {:>18} {:>18} {:>18}",
            "class",
            "Dice ED",
            "Dice ES",
            "HD ED mm",
            "HD ES mm",
            "EF/mass corr/bias",
            "vol ED corr/bias",
            "vol ES corr/bias"
        );
        for class in [3u8, 1, 2] {
            let c = self.cohort.get(&class).cloned().unwrap_or_default();
            let _ = writeln!(
                s,
                "{:<5} {:>8} {:>8} {:>9} {:>9} {:>18} {:>18} {:>18}",
                CLASS_NAMES[class as usize],
                fmt(self.mean_dice(class, Some(Phase::Ed)), 3),
                fmt(self.mean_dice(class, Some(Phase::Es)), 3),
                fmt(self.mean_hausdorff(class, Some(Phase::Ed)), 2),
                fmt(self.mean_hausdorff(class, Some(Phase::Es)), 2),
                pair(if class == 2 { c.mass } else { c.ef }),
                pair(c.vol_ed),
                pair(c.vol_es),
            );
        }
        s
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(dims: [usize; 3], at: [usize; 3]) -> Volume<bool> {
        let mut v = Volume::filled(dims, false);
        v.set(at[0], at[1], at[2], true);
        v
    }

    #[test]
    fn dice_cases() {
        let a = [true, true, true, true, false, false];
        let b = [false, false, true, true, true, true];
        assert_eq!(dice(&a, &b), 0.5);
        assert_eq!(dice(&a, &a), 1.0);
        assert_eq!(dice(&[false; 4], &[false; 4]), 1.0);
        assert_eq!(dice(&[true, false], &[false, true]), 0.0);
    }

    #[test]
    fn hausdorff_pythagorean() {
        let a = single([1, 8, 8], [0, 0, 0]);
        let b = single([1, 8, 8], [0, 3, 4]);
        assert_eq!(hausdorff_mm(&a, &b, [1.0; 3]).unwrap(), Some(5.0));
        assert_eq!(hausdorff_mm(&a, &a, [1.0; 3]).unwrap(), Some(0.0));
        let empty = Volume::filled([1, 8, 8], false);
        assert_eq!(hausdorff_mm(&a, &empty, [1.0; 3]).unwrap(), None);
    }

    #[test]
    fn hausdorff_uses_spacing() {
        let a = single([4, 4, 4], [0, 0, 0]);
        let b = single([4, 4, 4], [2, 1, 0]);
        let d = hausdorff_mm(&a, &b, [10.0, 1.25, 1.25]).unwrap().unwrap();
        assert!((d - (400.0f64 + 1.5625).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn interior_is_not_boundary() {
        let v = Volume::filled([3, 3, 3], true);
        let b = boundary(&v);
        assert!(!b.get(1, 1, 1));
        assert_eq!(b.data().iter().filter(|&&x| x).count(), 26);
    }

    #[test]
    fn clinical_arithmetic() {
        let mut m = Volume::filled([1, 10, 10], true);
        assert_eq!(volume_ml(&m, [10.0, 1.25, 1.25]), 1.5625);
        m.set(0, 0, 0, false);
        assert_eq!(ef_percent(100.0, 40.0).unwrap(), 60.0);
        assert_eq!(ef_percent(80.0, 80.0).unwrap(), 0.0);
        assert_eq!(ef_percent(0.0, 1.0), Err(MetricsError::ZeroEdv));
        assert_eq!(mass_g(100.0), 105.0);
    }

    #[test]
    fn cohort_shift() {
        let t = [1.0, 2.0, 4.0, 8.0];
        let p: Vec<f64> = t.iter().map(|x| x + 2.0).collect();
        let s = cohort_stats(&p, &t).unwrap();
        assert!((s.corr.unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(s.bias, 2.0);
        assert_eq!(cohort_stats(&[1.0, 1.0], &[1.0, 2.0]).unwrap().corr, None);
        assert_eq!(cohort_stats(&[1.0], &[1.0]), Err(MetricsError::TooFewSamples(1)));
    }

    #[test]
    fn perfect_report() {
        let mut label = Volume::filled([2, 8, 8], 0u8);
        for (i, v) in label.data_mut().iter_mut().enumerate() {
            *v = (i % 7 % 4) as u8;
        }
        let mut es = label.clone();
        es.data_mut()[9] = 0;
        let cases = [
            EvalCase { case_id: "a", phase: Phase::Ed, pred: &label, truth: &label, spacing: [1.0; 3] },
            EvalCase { case_id: "a", phase: Phase::Es, pred: &es, truth: &es, spacing: [1.0; 3] },
        ];
        let r = MetricsReport::compute(&cases).unwrap();
        assert!(r.rows.iter().all(|r| r.dice == 1.0 && r.hausdorff_mm == Some(0.0)));
        assert_eq!(r.mean_foreground_dice(), Some(1.0));
        assert_eq!(r.to_csv().lines().count(), 7);
        assert!(r.summary_table().contains("LVC"));
    }
}
