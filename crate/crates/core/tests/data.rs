use csegnet::data::{
    augment, center_crop_pad, generate_phantom, parse_nifti, prepare_slices, read_case, read_dataset, split_train_val,
    write_case, write_dataset, write_nifti, AugmentConfig, Case, DataError, Datatype, Endian, PhantomConfig,
};
use csegnet::metrics::{ef_percent, volume_ml};
use csegnet::{Phase, Volume};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sample_volume(rng: &mut ChaCha8Rng) -> Volume<f32> {
    let dims = [rng.gen_range(1..4), rng.gen_range(1..9), rng.gen_range(1..9)];
    let n = dims.iter().product();
    Volume::new(dims, (0..n).map(|_| rng.gen_range(-500.0..500.0)).collect()).unwrap()
}

#[test]
fn nifti_round_trip_both_byte_orders() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let v = sample_volume(&mut rng);
        let spacing = [rng.gen_range(1.0..10.0f32) as f64, 1.25, 0.75];
        for endian in [Endian::Little, Endian::Big] {
            let bytes = write_nifti(&v, spacing, Datatype::F32, endian);
            let parsed = parse_nifti(&bytes).unwrap();
            assert_eq!(parsed.volume.dims(), v.dims());
            assert!(parsed.volume.data().iter().zip(v.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
            assert_eq!(parsed.spacing, spacing);
            assert_eq!(parsed.datatype, Datatype::F32);
        }
        let le = write_nifti(&v, spacing, Datatype::F32, Endian::Little);
        let be = write_nifti(&v, spacing, Datatype::F32, Endian::Big);
        assert_ne!(le, be);
        assert_eq!(i32::from_le_bytes(le[0..4].try_into().unwrap()), 348);
        assert_eq!(i32::from_be_bytes(be[0..4].try_into().unwrap()), 348);
    }
}

#[test]
fn nifti_typed_errors() {
    let v = Volume::new([1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let good = write_nifti(&v, [1.0; 3], Datatype::F32, Endian::Little);
    assert!(matches!(parse_nifti(&[]), Err(DataError::TruncatedPayload { available: 0, .. })));
    assert!(matches!(parse_nifti(&good[..347]), Err(DataError::TruncatedPayload { .. })));
    assert!(matches!(parse_nifti(&good[..good.len() - 3]), Err(DataError::TruncatedPayload { .. })));
    let mut bad = good.clone();
    bad[0..4].copy_from_slice(&[1, 2, 3, 4]);
    assert!(matches!(parse_nifti(&bad), Err(DataError::BadMagic(_))));
    let mut bad = good.clone();
    bad[344..348].copy_from_slice(b"abc\0");
    assert!(matches!(parse_nifti(&bad), Err(DataError::BadMagic(_))));
    let mut bad = good.clone();
    bad[70..72].copy_from_slice(&8i16.to_le_bytes());
    assert!(matches!(parse_nifti(&bad), Err(DataError::UnsupportedDatatype(8))));
    let mut bad = good;
    bad[40..42].copy_from_slice(&9i16.to_le_bytes());
    assert!(matches!(parse_nifti(&bad), Err(DataError::InvalidHeader(_))));
}

#[test]
fn nifti_fuzz_never_panics() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let v = Volume::new([2, 3, 3], (0..18).map(|i| i as f32).collect()).unwrap();
    let templates = [
        write_nifti(&v, [1.0; 3], Datatype::F32, Endian::Little),
        write_nifti(&v, [1.0; 3], Datatype::I16, Endian::Big),
    ];
    for i in 0..1000 {
        let bytes: Vec<u8> = if i % 2 == 0 {
            let len = rng.gen_range(0..800);
            (0..len).map(|_| rng.gen()).collect()
        } else {
            // Valid file with a few random bytes overwritten.
            let mut b = templates[i % 4 / 2].clone();
            for _ in 0..rng.gen_range(1..8) {
                let at = rng.gen_range(0..b.len());
                b[at] = rng.gen();
            }
            b.truncate(rng.gen_range(300..b.len() + 1));
            b
        };
        let _ = parse_nifti(&bytes);
    }
}

#[test]
fn native_round_trip_is_bit_exact() {
    let (cases, _) = generate_phantom(&PhantomConfig { slices: 3, ..PhantomConfig::with_size(32) }, 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &cases).unwrap();
    let back = read_dataset(dir.path()).unwrap();
    let mut expected = cases.clone();
    expected.sort_by_key(Case::key);
    assert_eq!(back.len(), expected.len());
    for (a, b) in back.iter().zip(&expected) {
        assert_eq!(a.key(), b.key());
        assert_eq!(a.spacing, b.spacing);
        assert_eq!(a.label, b.label);
        assert!(a.image.data().iter().zip(b.image.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
    let path = write_case(dir.path(), &cases[0]).unwrap();
    std::fs::write(path.join("label.u8"), [0u8; 3]).unwrap();
    assert!(matches!(read_case(&path), Err(DataError::TruncatedPayload { .. })));
}

#[test]
fn invalid_cases_are_rejected() {
    let img = Volume::filled([1, 2, 2], 0.0f32);
    let lab = Volume::filled([1, 2, 2], 0u8);
    assert!(Case::new("a", Phase::Ed, img.clone(), lab.clone(), [1.0; 3]).is_ok());
    assert!(matches!(
        Case::new("a", Phase::Ed, img.clone(), Volume::filled([1, 2, 3], 0), [1.0; 3]),
        Err(DataError::InvalidCase(_))
    ));
    assert!(matches!(Case::new("a", Phase::Ed, img.clone(), lab, [0.0, 1.0, 1.0]), Err(DataError::InvalidCase(_))));
    assert!(matches!(
        Case::new("a", Phase::Ed, img, Volume::filled([1, 2, 2], 4), [1.0; 3]),
        Err(DataError::InvalidCase(_))
    ));
}

#[test]
fn phantom_ejection_fraction_follows_target() {
    let cfg = PhantomConfig::default();
    let (cases, truth) = generate_phantom(&cfg, 40).unwrap();
    assert_eq!(cases.len(), 80);
    for (t, pair) in truth.iter().zip(cases.chunks(2)) {
        let (ed, es) = (&pair[0], &pair[1]);
        assert_eq!((ed.phase, es.phase), (Phase::Ed, Phase::Es));
        let edv = volume_ml(&ed.label.mask(3), ed.spacing);
        let esv = volume_ml(&es.label.mask(3), es.spacing);
        assert_eq!(edv, t.lvc_ed_ml);
        assert_eq!(ef_percent(edv, esv).unwrap(), t.lv_ef);
        assert!((t.lv_ef - t.lv_ef_target).abs() < 3.0, "{} vs {}", t.lv_ef, t.lv_ef_target);
        assert!((t.rv_ef - t.rv_ef_target).abs() < 3.0, "{} vs {}", t.rv_ef, t.rv_ef_target);
        assert!((cfg.ef_range.0 - 3.0..cfg.ef_range.1 + 3.0).contains(&t.lv_ef));
        for class in 1..=3 {
            assert!(ed.label.data().contains(&class) && es.label.data().contains(&class));
        }
    }
    let (again, _) = generate_phantom(&cfg, 40).unwrap();
    assert_eq!(again, cases);
}

#[test]
fn phantom_rejects_bad_geometry() {
    let cfg = PhantomConfig { lvc_radius: (20.0, 10.0), ..PhantomConfig::default() };
    assert!(matches!(generate_phantom(&cfg, 2), Err(DataError::InvalidGeometry(_))));
}

#[test]
fn prepared_slices_are_normalized_and_sized() {
    let (cases, _) = generate_phantom(&PhantomConfig { slices: 2, ..PhantomConfig::with_size(96) }, 2).unwrap();
    for case in &cases {
        let slices = prepare_slices(case, (128, 128));
        assert_eq!(slices.len(), 2);
        for s in &slices {
            assert_eq!((s.h, s.w, s.image.len(), s.label.len()), (128, 128, 128 * 128, 128 * 128));
            let n = s.image.len() as f64;
            let mean = s.image.iter().map(|&v| v as f64).sum::<f64>() / n;
            let var = s.image.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-4 && (var - 1.0).abs() < 1e-3);
        }
    }
}

#[test]
fn crop_then_pad_restores_center() {
    let plane: Vec<f32> = (0..36).map(|i| i as f32).collect();
    let labels: Vec<u8> = (0..36).map(|i| (i % 4) as u8).collect();
    let (cropped, cl, off) = center_crop_pad(&plane, &labels, 6, 6, (4, 4));
    assert_eq!((off.row, off.col), (1, 1));
    assert_eq!(&cropped[..4], &[7.0, 8.0, 9.0, 10.0]);
    assert_eq!(&cl[..4], &[3, 0, 1, 2]);
    let (padded, pl, off) = center_crop_pad(&cropped, &cl, 4, 4, (6, 6));
    assert_eq!((off.row, off.col), (-1, -1));
    assert_eq!(padded[7], 7.0);
    assert_eq!((padded[0], pl[0]), (0.0, 0));
    let (odd, _, off) = center_crop_pad(&plane, &labels, 6, 6, (9, 9));
    assert_eq!(off.row, -1);
    assert_eq!(odd[9 + 1], 0.0);
    assert_eq!(odd[9 * 6 + 6], 35.0);
    assert_eq!(odd[9 * 7 + 7], 0.0);
}

#[test]
fn augmentation_is_seeded_and_keeps_labels_valid() {
    let (cases, _) = generate_phantom(&PhantomConfig::default(), 1).unwrap();
    let slice = &prepare_slices(&cases[0], (128, 128))[0];
    let always = {
        let mut c = AugmentConfig::default();
        c.affine.probability = 1.0;
        c.elastic.probability = 1.0;
        c.sharpen.probability = 1.0;
        c.contrast_probability = 1.0;
        c
    };
    let a = augment(slice, &always, 7);
    assert_eq!(a, augment(slice, &always, 7));
    assert_ne!(a, augment(slice, &always, 8));
    assert!(a.label.iter().all(|&l| l < 4));
    assert!(a.image.iter().all(|v| v.is_finite() && v.abs() <= 4.0 + 1e-4));
    assert_eq!(&augment(slice, &AugmentConfig::none(), 7), slice);
}

#[test]
fn split_is_patient_level() {
    let ids: Vec<String> = (0..250).map(|i| format!("phantom_{i:04}")).collect();
    let mut with_phases = ids.clone();
    with_phases.extend(ids.iter().cloned());
    let (train, val) = split_train_val(&with_phases, 0.8, 0).unwrap();
    assert_eq!((train.len(), val.len()), (200, 50));
    assert!(train.iter().all(|t| !val.contains(t)));
}
