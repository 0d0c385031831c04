//! Synthetic short-axis phantoms with analytically known ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Case, DataError};
use crate::metrics::{ef_percent, volume_ml};
use crate::volume::{Phase, Volume};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomConfig {
    /// Image height and width in pixels.
    pub size: usize,
    pub slices: usize,
    /// `(slice, row, col)` in mm.
    pub spacing: [f64; 3],
    /// End-diastolic left-ventricle cavity radius range, pixels.
    pub lvc_radius: (f64, f64),
    /// Myocardium thickness range at end diastole, pixels.
    pub lvm_thickness: (f64, f64),
    /// Right-ventricle disk radius range, pixels.
    pub rvc_radius: (f64, f64),
    /// Fraction of the right-ventricle disk radius hidden behind the left ventricle.
    pub rvc_overlap: (f64, f64),
    /// Maximum offset of the heart from the image center, pixels.
    pub center_jitter: f64,
    /// Ejection fraction range in percent, for both ventricles.
    pub ef_range: (f64, f64),
    /// Mean intensity of background, RVC, LVM, LVC.
    pub intensity: [f64; 4],
    /// Mean intensity of the body region surrounding the heart.
    pub body_intensity: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self::with_size(128)
    }
}

impl PhantomConfig {
    /// Geometry scaled to a `size × size` image.
    pub fn with_size(size: usize) -> Self {
        let k = size as f64 / 128.0;
        Self {
            size,
            slices: 1,
            spacing: [10.0, 1.25, 1.25],
            lvc_radius: (9.0 * k, 15.0 * k),
            lvm_thickness: (3.5 * k, 6.0 * k),
            rvc_radius: (10.0 * k, 15.0 * k),
            rvc_overlap: (0.3, 0.6),
            center_jitter: 8.0 * k,
            ef_range: (40.0, 70.0),
            intensity: [0.05, 0.8, 0.35, 0.9],
            body_intensity: 0.25,
            noise_sigma: 0.08,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::InvalidGeometry(m));
        let ranges =
            [("lvc_radius", self.lvc_radius), ("lvm_thickness", self.lvm_thickness), ("rvc_radius", self.rvc_radius)];
        for (name, (lo, hi)) in ranges {
            if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
                return bad(format!("{name} range ({lo}, {hi}) must be positive and ordered"));
            }
        }
        let (olo, ohi) = self.rvc_overlap;
        if !(0.0..1.0).contains(&olo) || !(olo..1.0).contains(&ohi) {
            return bad(format!("rvc_overlap ({olo}, {ohi}) must lie in [0, 1)"));
        }
        let (elo, ehi) = self.ef_range;
        if !(elo > 0.0 && elo <= ehi && ehi < 100.0) {
            return bad(format!("ef_range ({elo}, {ehi}) must lie in (0, 100)"));
        }
        if self.size == 0 || self.slices == 0 {
            return bad("size and slices must be positive".into());
        }
        if self.spacing.iter().any(|s| !(s.is_finite() && *s > 0.0))
            || self.noise_sigma.is_nan()
            || self.noise_sigma < 0.0
        {
            return bad("spacing must be positive and noise non-negative".into());
        }
        let reach = self.center_jitter + self.lvc_radius.1 + self.lvm_thickness.1 + 2.0 * self.rvc_radius.1;
        if reach + 1.0 > self.size as f64 / 2.0 {
            return bad(format!(
                "structures reach {reach:.1} px from the center; image half-size is {}",
                self.size / 2
            ));
        }
        Ok(())
    }
}

/// Generator-side ground truth of one phantom patient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomTruth {
    pub case_id: String,
    /// Target ejection fractions in percent, before discretization.
    pub lv_ef_target: f64,
    pub rv_ef_target: f64,
    /// Volumes counted from the generated label maps, ml.
    pub lvc_ed_ml: f64,
    pub lvc_es_ml: f64,
    pub rvc_ed_ml: f64,
    pub rvc_es_ml: f64,
    pub lvm_ed_ml: f64,
    pub lv_ef: f64,
    pub rv_ef: f64,
}

struct Heart {
    cy: f64,
    cx: f64,
    /// Cavity radius, outer myocardium radius, RV radius, RV center offset.
    lvc: f64,
    lvm: f64,
    rv: f64,
    rv_dist: f64,
    angle: f64,
}

impl Heart {
    fn label(&self, y: f64, x: f64) -> u8 {
        let d = ((y - self.cy).powi(2) + (x - self.cx).powi(2)).sqrt();
        if d < self.lvc {
            return 3;
        }
        if d < self.lvm {
            return 2;
        }
        let (ry, rx) = (self.cy + self.rv_dist * self.angle.sin(), self.cx + self.rv_dist * self.angle.cos());
        if (y - ry).powi(2) + (x - rx).powi(2) < self.rv * self.rv {
            1
        } else {
            0
        }
    }
}

/// `n` patients, each yielding an end-diastolic and an end-systolic case that
/// share position and shape. End-systolic cavity radii are scaled by
/// `sqrt(1 − EF)` with the myocardial area held fixed.
pub fn generate_phantom(cfg: &PhantomConfig, n: usize) -> Result<(Vec<Case>, Vec<PhantomTruth>), DataError> {
    cfg.validate()?;
    let mut cases = Vec::with_capacity(2 * n);
    let mut truth = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(i as u64);
        let case_id = format!("phantom_{i:04}");
        let center = cfg.size as f64 / 2.0;
        let uniform = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| if lo == hi { lo } else { rng.gen_range(lo..hi) };
        let j = cfg.center_jitter;
        let cy = center + uniform(&mut rng, (-j, j));
        let cx = center + uniform(&mut rng, (-j, j));
        let lvc = uniform(&mut rng, cfg.lvc_radius);
        let thick = uniform(&mut rng, cfg.lvm_thickness);
        let rv = uniform(&mut rng, cfg.rvc_radius);
        let overlap = uniform(&mut rng, cfg.rvc_overlap);
        let angle = uniform(&mut rng, (0.75 * std::f64::consts::PI, 1.25 * std::f64::consts::PI));
        let lv_ef = uniform(&mut rng, cfg.ef_range);
        let rv_ef = uniform(&mut rng, cfg.ef_range);

        let mut volumes = Vec::with_capacity(2);
        for (phase, lv_scale, rv_scale) in
            [(Phase::Ed, 1.0, 1.0), (Phase::Es, (1.0 - lv_ef / 100.0).sqrt(), (1.0 - rv_ef / 100.0).sqrt())]
        {
            let mut labels = Vec::with_capacity(cfg.slices);
            for z in 0..cfg.slices {
                let taper = 1.0 - 0.25 * z as f64 / cfg.slices as f64;
                let r_ed = lvc * taper;
                let outer_ed = r_ed + thick;
                let r = r_ed * lv_scale;
                let outer = (outer_ed * outer_ed - r_ed * r_ed + r * r).sqrt();
                let rv_r = rv * taper * rv_scale;
                let heart =
                    Heart { cy, cx, lvc: r, lvm: outer, rv: rv_r, rv_dist: outer + rv_r * (1.0 - overlap), angle };
                let plane: Vec<u8> = (0..cfg.size * cfg.size)
                    .map(|p| heart.label((p / cfg.size) as f64, (p % cfg.size) as f64))
                    .collect();
                labels.push(plane);
            }
            let label = Volume::from_slices(cfg.size, cfg.size, &labels).expect("equal planes");
            let image = render(cfg, &label, &mut rng);
            volumes.push(Case::new(case_id.clone(), phase, image, label, cfg.spacing)?);
        }
        let ml = |c: &Case, class| volume_ml(&c.label.mask(class), cfg.spacing);
        let (ed, es) = (&volumes[0], &volumes[1]);
        let (lvc_ed_ml, lvc_es_ml) = (ml(ed, 3), ml(es, 3));
        let (rvc_ed_ml, rvc_es_ml) = (ml(ed, 1), ml(es, 1));
        truth.push(PhantomTruth {
            case_id,
            lv_ef_target: lv_ef,
            rv_ef_target: rv_ef,
            lvc_ed_ml,
            lvc_es_ml,
            rvc_ed_ml,
            rvc_es_ml,
            lvm_ed_ml: ml(ed, 2),
            lv_ef: ef_percent(lvc_ed_ml, lvc_es_ml).map_err(|e| DataError::InvalidGeometry(e.to_string()))?,
            rv_ef: ef_percent(rvc_ed_ml, rvc_es_ml).map_err(|e| DataError::InvalidGeometry(e.to_string()))?,
        });
        cases.append(&mut volumes);
    }
    Ok((cases, truth))
}

/// Structure intensities over an elliptical body region, plus Gaussian noise.
fn render(cfg: &PhantomConfig, label: &Volume<u8>, rng: &mut ChaCha8Rng) -> Volume<f32> {
    let noise = Normal::new(0.0, cfg.noise_sigma).expect("finite sigma");
    let s = cfg.size as f64;
    let (ay, ax) = (0.42 * s, 0.46 * s);
    let plane = cfg.size * cfg.size;
    let mut data = Vec::with_capacity(label.data().len());
    for (i, &l) in label.data().iter().enumerate() {
        let p = i % plane;
        let y = (p / cfg.size) as f64 - s / 2.0;
        let x = (p % cfg.size) as f64 - s / 2.0;
        let base = if l > 0 {
            cfg.intensity[l as usize]
        } else if (y / ay).powi(2) + (x / ax).powi(2) < 1.0 {
            cfg.body_intensity
        } else {
            cfg.intensity[0]
        };
        data.push((base + noise.sample(rng)) as f32);
    }
    Volume::new(label.dims(), data).expect("same size")
}
