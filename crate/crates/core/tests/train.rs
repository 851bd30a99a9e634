mod common;

use corgs::coreg::co_prune_masks;
use corgs::metrics::psnr;
use corgs::raster::{render, render_backward, Upstream};
use corgs::scene::{generate_synthetic_scene, logit, Gaussian, GaussianField, Intrinsics, SynthOptions};
use corgs::train::*;
use corgs::{Camera, Error, Exec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_config(iterations: usize) -> TrainConfig {
    TrainConfig {
        iterations,
        densify_from: 20,
        densify_every: 20,
        densify_grad_threshold: 1e-3,
        init_points: 60,
        ..TrainConfig::default()
    }
}

#[test]
fn fits_constant_color() {
    // Geometry is fixed and only the color of one Gaussian is free, so the
    // squared error against a render with the target color goes to zero.
    let cam = Camera::new(Intrinsics::from_fov(16, 16, 50.0), [1.0, 0.0, 0.0, 0.0], [0.0; 3]).unwrap();
    let blob = |c: f64| Gaussian {
        position: [0.0, 0.0, 3.0],
        log_scale: [0.8f64.ln(); 3],
        rotation: [1.0, 0.0, 0.0, 0.0],
        opacity_logit: logit(0.95),
        color_logit: [logit(c); 3],
    };
    let mut gt = GaussianField::new();
    gt.push(blob(0.8));
    let target = render(&gt, &cam, [0.0; 3], Exec::Sequential).unwrap().color;
    let mut field = GaussianField::new();
    field.push(blob(0.3));
    let mut state = OptimizerState::new(1);
    let rates = StepRates {
        position: 0.0,
        scale: 0.0,
        rotation: 0.0,
        opacity: 0.0,
        color: 0.02,
    };
    let mut losses = Vec::new();
    for _ in 0..400 {
        let out = render(&field, &cam, [0.0; 3], Exec::Sequential).unwrap();
        let n = out.color.data.len() as f64;
        let mut grad = out.color.clone();
        let mut loss = 0.0;
        for (g, t) in grad.data.iter_mut().zip(&target.data) {
            let r = *g - t;
            loss += r * r / n;
            *g = 2.0 * r / n;
        }
        losses.push(loss);
        let up = Upstream {
            color: &grad,
            depth: None,
        };
        let g = render_backward(&field, &cam, &out, &up, Exec::Sequential).unwrap();
        optimize_step(&mut field, &mut state, &g.grads, &rates).unwrap();
    }
    let last = *losses.last().unwrap();
    assert!(last < 1e-3 && last < losses[0] * 1e-2, "{} -> {last}", losses[0]);
}

#[test]
fn split_children_follow_parent_covariance() {
    let mut f = GaussianField::new();
    f.push(Gaussian {
        position: [0.3, -0.2, 1.0],
        log_scale: [0.2f64.ln(), 0.05f64.ln(), 0.1f64.ln()],
        rotation: corgs::scene::normalize_quat([0.8, 0.3, -0.4, 0.2]),
        opacity_logit: 0.0,
        color_logit: [0.0; 3],
    });
    let sigma = f.covariance(0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut samples = Vec::new();
    for _ in 0..5000 {
        for c in split_children(&f, 0, &mut rng) {
            samples.push(c.position);
        }
    }
    let n = samples.len() as f64;
    let mean: [f64; 3] = std::array::from_fn(|k| samples.iter().map(|s| s[k]).sum::<f64>() / n);
    let mut cov = [[0.0; 3]; 3];
    for s in &samples {
        for a in 0..3 {
            for b in 0..3 {
                cov[a][b] += (s[a] - mean[a]) * (s[b] - mean[b]) / (n - 1.0);
            }
        }
    }
    let diff: f64 = (0..3)
        .flat_map(|a| (0..3).map(move |b| (a, b)))
        .map(|(a, b)| (cov[a][b] - sigma[(a, b)]).powi(2))
        .sum::<f64>()
        .sqrt();
    assert!(diff / sigma.norm() < 0.05, "relative error {}", diff / sigma.norm());

    // Same seed, same children.
    let a = split_children(&f, 0, &mut ChaCha8Rng::seed_from_u64(1));
    let b = split_children(&f, 0, &mut ChaCha8Rng::seed_from_u64(1));
    assert_eq!(a, b);
}

#[test]
fn shared_randomness_keeps_fields_identical() {
    let ds = generate_synthetic_scene(&SynthOptions::new(3, 20, 3, 2, (16, 16))).unwrap();
    let cfg = TrainConfig {
        shared_field_rng: true,
        ..small_config(120)
    };
    let out = train(&ds, &cfg, Mode::CorGs.hooks(), Exec::Parallel).unwrap();
    assert_eq!(out.fields[0], out.fields[1]);
    for r in &out.log.rows {
        assert_eq!(r.losses[0].to_bits(), r.losses[1].to_bits());
        assert_eq!(r.co_pruned, 0);
    }
    assert!(out.coprune_reports.iter().all(|(_, r)| r.n_pruned.iter().all(|&n| n == 0)));
    let masks = co_prune_masks(&out.fields, 1e-9, Exec::Sequential);
    assert!(masks.iter().flatten().all(|&m| !m));
}

#[test]
fn independent_streams_disagree_after_first_split() {
    let ds = generate_synthetic_scene(&SynthOptions::new(4, 20, 3, 2, (16, 16))).unwrap();
    let out = train(&ds, &small_config(60), Mode::Baseline.hooks(), Exec::Parallel).unwrap();
    let pre = out.log.first(Phase::PreDensify).unwrap();
    assert_eq!(pre.rmse, 0.0);
    assert!(out.densify_reports[0].iter().any(|r| r.n_split > 0));
    let post = out.log.rows.iter().find(|r| r.phase == Phase::Densify).unwrap();
    assert!(post.fitness < 1.0 || post.rmse > 0.0);
}

#[test]
fn training_is_deterministic() {
    let ds = generate_synthetic_scene(&SynthOptions::new(5, 20, 3, 2, (16, 16))).unwrap();
    let cfg = small_config(100);
    let a = train(&ds, &cfg, Mode::CorGs.hooks(), Exec::Parallel).unwrap();
    let b = train(&ds, &cfg, Mode::CorGs.hooks(), Exec::Sequential).unwrap();
    assert_eq!(a.log.to_csv(), b.log.to_csv());
    assert_eq!(a.fields, b.fields);
}

#[test]
fn optimizer_rows_track_field_size() {
    let ds = generate_synthetic_scene(&SynthOptions::new(6, 20, 3, 2, (16, 16))).unwrap();
    let cfg = TrainConfig {
        coprune_every: 1,
        ..small_config(100)
    };
    let out = train(&ds, &cfg, Mode::CorGs.hooks(), Exec::Parallel).unwrap();
    assert!(!out.coprune_reports.is_empty());
    let last = out.log.last(Phase::Final).unwrap();
    assert_eq!(last.counts, out.fields.iter().map(|f| f.len()).collect::<Vec<_>>());
}

#[test]
fn baseline_fits_training_views() {
    let ds = generate_synthetic_scene(&SynthOptions::new(11, 50, 8, 2, (32, 32))).unwrap();
    let cfg = TrainConfig {
        iterations: 1000,
        n_fields: 1,
        densify_grad_threshold: 1e-3,
        ..TrainConfig::default()
    };
    let out = train(&ds, &cfg, Mode::Baseline.hooks(), Exec::Parallel).unwrap();
    let mut mean = 0.0;
    for (cam, img) in ds.train_cameras.iter().zip(&ds.train_images) {
        let r = render(&out.fields[0], cam, ds.background, Exec::Parallel).unwrap();
        mean += psnr(&r.color, img).unwrap() / ds.train_cameras.len() as f64;
    }
    assert!(mean > 30.0, "train PSNR {mean}");
}

#[test]
fn divergence_names_iteration_and_field() {
    let ds = generate_synthetic_scene(&SynthOptions::new(8, 10, 3, 2, (16, 16))).unwrap();
    let mut cfg = small_config(50);
    // Finite but absurd step sizes push log-scales past the f64 range.
    cfg.lr.scale = f64::MAX;
    cfg.lr.position = f64::MAX;
    match train(&ds, &cfg, Mode::Baseline.hooks(), Exec::Parallel) {
        Err(Error::Diverged { iteration, field, .. }) => {
            assert!(iteration >= 1);
            assert!(field < 2);
        }
        other => panic!("expected divergence, got {:?}", other.map(|o| o.log.rows.len())),
    }
}

#[test]
fn coreg_requires_two_fields() {
    let ds = generate_synthetic_scene(&SynthOptions::new(8, 10, 3, 2, (16, 16))).unwrap();
    let cfg = TrainConfig {
        n_fields: 1,
        ..small_config(10)
    };
    assert!(matches!(
        train(&ds, &cfg, Mode::CorGs.hooks(), Exec::Parallel),
        Err(Error::InvalidArgument(_))
    ));
}
