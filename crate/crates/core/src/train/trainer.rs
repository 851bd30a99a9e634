use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{CoRegHooks, TrainConfig};
use super::densify::{densify_and_prune, init_field, reset_opacity, DensifyReport};
use super::log::{LogRow, Phase, TrainingLog};
use super::optim::{optimize_step, OptimizerState};
use crate::coreg::{co_prune, midpoint_views, pearson_depth_coreg, sample_pseudo_view, total_loss, CoPruneReport, LossWeights};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::metrics::{depth_valid_mask, disagreement};
use crate::raster::{render, render_backward, FieldGradients, RenderOutput, Upstream};
use crate::scene::{Camera, GaussianField, ImageBuffer, SceneDataset};

const INIT_STREAM: u64 = 0;
const PSEUDO_STREAM: u64 = 1 << 32;
const VIEW_STREAM: u64 = 1 << 33;

/// Trained fields (field 0 is the one kept for inference) plus telemetry.
#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub fields: Vec<GaussianField>,
    pub log: TrainingLog,
    /// Per densification event, one report per field.
    pub densify_reports: Vec<Vec<DensifyReport>>,
    /// `(iteration, report)` for every co-pruning event.
    pub coprune_reports: Vec<(usize, CoPruneReport)>,
}

/// Per-field backward result: gradients, per-primitive screen-space
/// gradient norms and visibility.
type FieldBackward = (FieldGradients, Vec<f64>, Vec<bool>);

fn stream(seed: u64, s: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(s);
    rng
}

struct Telemetry<'a> {
    views: Vec<Camera>,
    tau: f64,
    background: [f64; 3],
    exec: Exec,
    log: &'a mut TrainingLog,
}

impl Telemetry<'_> {
    fn record(
        &mut self,
        iteration: usize,
        phase: Phase,
        fields: &[GaussianField],
        losses: &[f64],
        co_pruned: usize,
    ) -> Result<()> {
        let (mut fitness, mut rmse, mut psnr_between, mut depth) = (f64::NAN, f64::NAN, f64::NAN, f64::NAN);
        if fields.len() >= 2 {
            let d = disagreement(&fields[0], &fields[1], &self.views, self.tau, self.background, self.exec)?;
            fitness = d.fitness;
            rmse = d.rmse;
            psnr_between = d.mean_psnr_between();
            depth = d.mean_depth_abs_error_rel();
        }
        self.log.rows.push(LogRow {
            iteration,
            phase,
            losses: losses.to_vec(),
            counts: fields.iter().map(|f| f.len()).collect(),
            fitness,
            rmse,
            psnr_between,
            depth_abs_error_rel_between: depth,
            co_pruned,
        });
        Ok(())
    }
}

fn add_grads(into: &mut FieldGradients, other: &FieldGradients) {
    into.add_assign(other);
}

/// Co-train `config.n_fields` fields on the dataset's training views.
pub fn train(dataset: &SceneDataset, config: &TrainConfig, hooks: CoRegHooks, exec: Exec) -> Result<TrainOutput> {
    config.validate()?;
    dataset.validate()?;
    let n_fields = config.n_fields;
    let n_train = dataset.train_cameras.len();
    if n_train == 0 {
        return Err(Error::invalid("dataset has no training views"));
    }
    if hooks.any() && n_fields < 2 {
        return Err(Error::invalid("co-regularization needs at least two fields"));
    }
    let pseudo_enabled = hooks.pseudo_view || hooks.depth_pearson > 0.0;
    if pseudo_enabled && n_train < 2 {
        return Err(Error::invalid("pseudo views need at least two training views"));
    }
    let extent = dataset.scene_bounds.diagonal();
    let tau = config.tau.resolve(extent);
    let background = config.background.unwrap_or(dataset.background);
    let densify_until = config.densify_until();
    let weights = LossWeights {
        lambda_dssim: config.lambda_dssim,
        lambda_pseudo: if hooks.pseudo_view { config.lambda_pseudo } else { 0.0 },
    };

    let base = init_field(
        &dataset.scene_bounds,
        config.init_points,
        config.init_opacity,
        &mut stream(config.seed, INIT_STREAM),
    );
    let mut fields = vec![base.clone(); n_fields];
    let mut states = vec![OptimizerState::new(base.len()); n_fields];
    let mut field_rngs: Vec<ChaCha8Rng> = (0..n_fields)
        .map(|k| stream(config.seed, if config.shared_field_rng { 1 } else { k as u64 + 1 }))
        .collect();
    let mut pseudo_rng = stream(config.seed, PSEUDO_STREAM);
    let mut view_rngs: Vec<ChaCha8Rng> = (0..n_fields)
        .map(|k| stream(config.seed, VIEW_STREAM + if config.shared_field_rng { 0 } else { k as u64 }))
        .collect();
    let mut view_orders: Vec<Vec<usize>> = vec![(0..n_train).collect(); n_fields];
    let mut grad_accum = vec![vec![0.0; base.len()]; n_fields];
    let mut grad_count = vec![vec![0u32; base.len()]; n_fields];

    let mut log = TrainingLog::new(n_fields);
    let mut densify_reports = Vec::new();
    let mut coprune_reports = Vec::new();
    let mut telemetry = Telemetry {
        views: midpoint_views(&dataset.train_cameras).into_iter().map(|v| v.camera).collect(),
        tau,
        background,
        exec,
        log: &mut log,
    };
    if telemetry.views.is_empty() {
        telemetry.views = dataset.train_cameras.clone();
    }
    let mut losses = vec![f64::NAN; n_fields];
    telemetry.record(0, Phase::Init, &fields, &losses, 0)?;

    let mut pseudo_active = false;
    let mut events = 0usize;
    for it in 1..=config.iterations {
        let slot = (it - 1) % n_train;
        if config.shuffle_views && slot == 0 {
            for (order, rng) in view_orders.iter_mut().zip(&mut view_rngs) {
                order.shuffle(rng);
            }
        }
        let views: Vec<usize> = view_orders.iter().map(|o| o[slot]).collect();
        let gts: Vec<&ImageBuffer> = views.iter().map(|&v| &dataset.train_images[v]).collect();
        let pseudo = if pseudo_enabled && pseudo_active {
            Some(sample_pseudo_view(&dataset.train_cameras, &mut pseudo_rng, config.pseudo_noise_scale)?)
        } else {
            None
        };

        let renders: Vec<Result<(RenderOutput, Option<RenderOutput>)>> = exec.map(n_fields, |k| {
            let r = render(&fields[k], &dataset.train_cameras[views[k]], background, exec)?;
            let p = match &pseudo {
                Some(pv) => Some(render(&fields[k], &pv.camera, background, exec)?),
                None => None,
            };
            Ok((r, p))
        });
        let renders = renders.into_iter().collect::<Result<Vec<_>>>()?;
        let train_colors: Vec<&ImageBuffer> = renders.iter().map(|r| &r.0.color).collect();
        let pseudo_colors: Vec<&ImageBuffer> = if hooks.pseudo_view {
            renders.iter().filter_map(|r| r.1.as_ref().map(|p| &p.color)).collect()
        } else {
            Vec::new()
        };
        let loss = total_loss(&train_colors, &gts, &pseudo_colors, weights)?;
        losses.clone_from(&loss.per_field);

        // Optional Pearson depth term on the pseudo view, pairwise like the
        // color term.
        let mut pseudo_depth_grads: Vec<Option<ImageBuffer>> = vec![None; n_fields];
        if hooks.depth_pearson > 0.0 && pseudo.is_some() {
            let w = hooks.depth_pearson / (n_fields - 1) as f64;
            let p: Vec<&RenderOutput> = renders.iter().map(|r| r.1.as_ref().unwrap()).collect();
            for i in 0..n_fields {
                for j in i + 1..n_fields {
                    let valid = depth_valid_mask(&[&p[i].accum_alpha, &p[j].accum_alpha]);
                    if valid.iter().filter(|&&v| v).count() < 2 {
                        continue;
                    }
                    let l = pearson_depth_coreg(&p[i].depth, &p[j].depth, &valid)?;
                    losses[i] += w * l.value;
                    losses[j] += w * l.value;
                    for (k, g) in [(i, &l.grad_a), (j, &l.grad_b)] {
                        let slot = pseudo_depth_grads[k].get_or_insert_with(|| ImageBuffer::zeros(g.width, g.height, 1));
                        for (a, b) in slot.data.iter_mut().zip(&g.data) {
                            *a += w * b;
                        }
                    }
                }
            }
        }
        if let Some(k) = losses.iter().position(|l| !l.is_finite()) {
            return Err(Error::Diverged {
                iteration: it,
                field: k,
                message: format!("loss {}", losses[k]),
            });
        }

        let grads: Vec<Result<FieldBackward>> = exec.map(n_fields, |k| {
            let (r, p) = &renders[k];
            let up = Upstream {
                color: &loss.train_grads[k],
                depth: None,
            };
            let mut g = render_backward(&fields[k], &dataset.train_cameras[views[k]], r, &up, exec)?;
            if let (Some(pv), Some(pr)) = (&pseudo, p) {
                let zero;
                let color = match loss.pseudo_grads.get(k) {
                    Some(c) => c,
                    None => {
                        zero = ImageBuffer::zeros(pr.color.width, pr.color.height, 3);
                        &zero
                    }
                };
                let up = Upstream {
                    color,
                    depth: pseudo_depth_grads[k].as_ref(),
                };
                let gp = render_backward(&fields[k], &pv.camera, pr, &up, exec)?;
                add_grads(&mut g.grads, &gp.grads);
            }
            Ok((g.grads, g.mean2d_grad_norm, g.visible))
        });
        let grads = grads.into_iter().collect::<Result<Vec<_>>>()?;
        for (k, (g, _, _)) in grads.iter().enumerate() {
            if !g.all_finite() {
                return Err(Error::Diverged {
                    iteration: it,
                    field: k,
                    message: "non-finite gradient".into(),
                });
            }
        }

        let rates = config.lr.at(it, config.iterations, extent);
        for (k, (g, norms, visible)) in grads.into_iter().enumerate() {
            if it <= densify_until {
                for i in 0..norms.len() {
                    if visible[i] {
                        grad_accum[k][i] += norms[i];
                        grad_count[k][i] += 1;
                    }
                }
            }
            optimize_step(&mut fields[k], &mut states[k], &g, &rates)?;
            if let Err(e) = fields[k].validate() {
                return Err(Error::Diverged {
                    iteration: it,
                    field: k,
                    message: format!("parameters left the finite range: {e}"),
                });
            }
        }

        if config.is_densify_step(it) {
            if events == 0 {
                telemetry.record(it, Phase::PreDensify, &fields, &losses, 0)?;
            }
            let mut reports = Vec::with_capacity(n_fields);
            for k in 0..n_fields {
                let avg: Vec<f64> = grad_accum[k]
                    .iter()
                    .zip(&grad_count[k])
                    .map(|(&s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
                    .collect();
                reports.push(densify_and_prune(
                    &mut fields[k],
                    &mut states[k],
                    &avg,
                    config,
                    extent,
                    &mut field_rngs[k],
                )?);
            }
            densify_reports.push(reports);
            events += 1;
            pseudo_active = true;
            let mut phase = Phase::Densify;
            let mut co_pruned = 0;
            if hooks.co_prune && events.is_multiple_of(config.coprune_every) {
                let r = co_prune(&mut fields, &mut states, tau, exec)?;
                co_pruned = r.n_pruned.iter().sum();
                coprune_reports.push((it, r));
                phase = Phase::CoPrune;
            }
            for k in 0..n_fields {
                assert_eq!(fields[k].len(), states[k].len(), "optimizer rows out of sync");
                grad_accum[k] = vec![0.0; fields[k].len()];
                grad_count[k] = vec![0; fields[k].len()];
            }
            telemetry.record(it, phase, &fields, &losses, co_pruned)?;
        }
        if config.opacity_reset_every > 0 && it % config.opacity_reset_every == 0 && it <= densify_until {
            for k in 0..n_fields {
                reset_opacity(&mut fields[k], &mut states[k]);
            }
        }
        if config.log_every > 0 && it % config.log_every == 0 && it != config.iterations {
            telemetry.record(it, Phase::Periodic, &fields, &losses, 0)?;
        }
    }
    telemetry.record(config.iterations, Phase::Final, &fields, &losses, 0)?;
    Ok(TrainOutput {
        fields,
        log,
        densify_reports,
        coprune_reports,
    })
}
