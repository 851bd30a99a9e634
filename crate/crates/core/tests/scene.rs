mod common;

use corgs::raster::render;
use corgs::scene::*;
use corgs::Exec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn field_file_round_trip_is_bit_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let f = common::random_field(&mut rng, 37);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.bin");
    save_field(&f, &path).unwrap();
    let g = load_field(&path).unwrap();
    assert_eq!(f, g);
    assert_eq!(write_field(&g).unwrap(), std::fs::read(&path).unwrap());
}

#[test]
fn truncated_field_reports_offset() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let bytes = write_field(&common::random_field(&mut rng, 5)).unwrap();
    let cut = &bytes[..bytes.len() - 3];
    match read_field(cut) {
        Err(corgs::Error::Format { offset, .. }) => assert!(offset > 0),
        other => panic!("{other:?}"),
    }
    assert!(read_field(b"not a header").is_err());
}

#[test]
fn dataset_round_trip() {
    let ds = generate_synthetic_scene(&SynthOptions::new(9, 12, 3, 2, (20, 16))).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&ds, dir.path()).unwrap();
    let back = load_dataset(dir.path()).unwrap();
    assert_eq!(ds, back);
    assert!(dir.path().join("images/train_000.png").exists());
    assert!(dir.path().join("depths/test_001_alpha.raw").exists());
}

#[test]
fn synthetic_scene_is_deterministic() {
    let opts = SynthOptions::new(21, 15, 3, 2, (16, 16));
    let a = generate_synthetic_scene(&opts).unwrap();
    let b = generate_synthetic_scene(&opts).unwrap();
    assert_eq!(a, b);
    let c = generate_synthetic_scene(&SynthOptions { seed: 22, ..opts }).unwrap();
    assert_ne!(a.ground_truth, c.ground_truth);
}

#[test]
fn synthetic_images_are_renders_of_ground_truth() {
    let ds = generate_synthetic_scene(&SynthOptions::new(5, 10, 3, 2, (16, 16))).unwrap();
    let gt = ds.ground_truth.as_ref().unwrap();
    for (cam, img) in ds.train_cameras.iter().zip(&ds.train_images) {
        let r = render(gt, cam, ds.background, Exec::Sequential).unwrap();
        assert_eq!(&r.color, img);
    }
    let b = ds.scene_bounds;
    for p in &gt.positions {
        for k in 0..3 {
            assert!(p[k] >= b.min[k] && p[k] <= b.max[k]);
        }
    }
}

#[test]
fn camera_center_round_trip() {
    let cam = common::orbit_camera(16, 16, 37.0);
    let c = cam.center();
    let moved = cam.with_center([c[0] + 0.5, c[1], c[2]]);
    approx::assert_abs_diff_eq!(moved.center()[0], c[0] + 0.5, epsilon = 1e-12);
    assert_eq!(moved.rotation, cam.rotation);
}

#[test]
fn raw_image_round_trip() {
    let img = ImageBuffer::from_vec(3, 2, 1, vec![0.0, 0.25, 0.5, 1.0, 1e-300, 7.5]).unwrap();
    assert_eq!(read_raw_image(&write_raw_image(&img).unwrap()).unwrap(), img);
}
