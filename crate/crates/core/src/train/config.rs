use serde::Serialize;

use crate::error::{Error, Result};

/// Base learning rates per parameter class. The position rate decays
/// exponentially from `position` to `position_final` over the run and is
/// multiplied by the scene extent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LearningRates {
    pub position: f64,
    pub position_final: f64,
    pub scale: f64,
    pub rotation: f64,
    pub opacity: f64,
    pub color: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            position: 1.6e-4,
            position_final: 1.6e-6,
            scale: 5e-3,
            rotation: 1e-3,
            opacity: 5e-2,
            color: 2.5e-3,
        }
    }
}

/// Learning rates in effect at one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRates {
    pub position: f64,
    pub scale: f64,
    pub rotation: f64,
    pub opacity: f64,
    pub color: f64,
}

impl LearningRates {
    /// Rates for 1-based iteration `it` of `total`.
    pub fn at(&self, it: usize, total: usize, extent: f64) -> StepRates {
        let t = if total <= 1 {
            0.0
        } else {
            ((it.saturating_sub(1)) as f64 / (total - 1) as f64).clamp(0.0, 1.0)
        };
        let pos = if self.position > 0.0 && self.position_final > 0.0 {
            (self.position.ln() * (1.0 - t) + self.position_final.ln() * t).exp()
        } else {
            self.position * (1.0 - t) + self.position_final * t
        };
        StepRates {
            position: pos * extent,
            scale: self.scale,
            rotation: self.rotation,
            opacity: self.opacity,
            color: self.color,
        }
    }
}

/// Co-pruning distance threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Tau {
    /// Fraction of the scene bounding-box diagonal.
    Relative(f64),
    /// Scene units.
    Absolute(f64),
}

impl Tau {
    pub fn resolve(self, diagonal: f64) -> f64 {
        match self {
            Tau::Relative(r) => r * diagonal,
            Tau::Absolute(a) => a,
        }
    }
}

/// Which co-regularization mechanisms are active.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct CoRegHooks {
    pub co_prune: bool,
    pub pseudo_view: bool,
    /// Weight of the optional Pearson depth term on pseudo views; 0 disables it.
    pub depth_pearson: f64,
}

impl CoRegHooks {
    pub fn any(&self) -> bool {
        self.co_prune || self.pseudo_view || self.depth_pearson > 0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Mode {
    Baseline,
    CoPruning,
    PseudoView,
    CorGs,
}

impl Mode {
    pub fn hooks(self) -> CoRegHooks {
        let (co_prune, pseudo_view) = match self {
            Mode::Baseline => (false, false),
            Mode::CoPruning => (true, false),
            Mode::PseudoView => (false, true),
            Mode::CorGs => (true, true),
        };
        CoRegHooks {
            co_prune,
            pseudo_view,
            depth_pearson: 0.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::CoPruning => "copruning",
            Mode::PseudoView => "pseudoview",
            Mode::CorGs => "corgs",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Mode::Baseline),
            "copruning" => Ok(Mode::CoPruning),
            "pseudoview" => Ok(Mode::PseudoView),
            "corgs" => Ok(Mode::CorGs),
            _ => Err(Error::invalid(format!("unknown mode '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainConfig {
    pub iterations: usize,
    pub lr: LearningRates,
    pub densify_from: usize,
    /// Defaults to 60% of `iterations` when unset.
    pub densify_until: Option<usize>,
    pub densify_every: usize,
    pub densify_grad_threshold: f64,
    /// Clone/split boundary as a fraction of the scene extent.
    pub percent_dense: f64,
    pub opacity_reset_every: usize,
    pub prune_opacity_threshold: f64,
    pub coprune_every: usize,
    pub tau: Tau,
    pub lambda_dssim: f64,
    pub lambda_pseudo: f64,
    pub pseudo_noise_scale: f64,
    pub n_fields: usize,
    pub seed: u64,
    /// Overrides the dataset background when set.
    pub background: Option<[f64; 3]>,
    pub init_points: usize,
    pub init_opacity: f64,
    /// Extra telemetry rows every this many iterations; 0 disables them.
    pub log_every: usize,
    /// Draw every field's densification randomness from one stream. Together
    /// with the shared initialization this keeps the fields identical.
    pub shared_field_rng: bool,
    /// Give every field its own shuffled view order per epoch instead of the
    /// shared round-robin.
    pub shuffle_views: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 3000,
            lr: LearningRates::default(),
            densify_from: 100,
            densify_until: None,
            densify_every: 100,
            densify_grad_threshold: 2e-4,
            percent_dense: 0.01,
            opacity_reset_every: 1000,
            prune_opacity_threshold: 0.005,
            coprune_every: 5,
            tau: Tau::Relative(0.05),
            lambda_dssim: 0.2,
            lambda_pseudo: 1.0,
            pseudo_noise_scale: 0.05,
            n_fields: 2,
            seed: 0,
            background: None,
            init_points: 200,
            init_opacity: 0.1,
            log_every: 0,
            shared_field_rng: false,
            shuffle_views: false,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::invalid(format!("bad value for {key}: '{value}'")))
}

impl TrainConfig {
    pub fn densify_until(&self) -> usize {
        self.densify_until
            .unwrap_or((self.iterations as f64 * 0.6).round() as usize)
    }

    /// `true` when iteration `it` (1-based) triggers densification.
    pub fn is_densify_step(&self, it: usize) -> bool {
        it >= self.densify_from && it <= self.densify_until() && it.is_multiple_of(self.densify_every)
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::invalid("iterations must be at least 1"));
        }
        if self.densify_every == 0 || self.coprune_every == 0 {
            return Err(Error::invalid("cadences must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.lambda_dssim) {
            return Err(Error::invalid("lambda_dssim must lie in [0, 1]"));
        }
        let tau = match self.tau {
            Tau::Relative(v) | Tau::Absolute(v) => v,
        };
        if !(tau > 0.0) {
            return Err(Error::invalid("tau must be positive"));
        }
        let lr = &self.lr;
        let rates = [lr.position, lr.position_final, lr.scale, lr.rotation, lr.opacity, lr.color];
        if rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::invalid("learning rates must be finite and non-negative"));
        }
        if self.n_fields == 0 {
            return Err(Error::invalid("n_fields must be at least 1"));
        }
        if !(self.init_opacity > 0.0 && self.init_opacity < 1.0) {
            return Err(Error::invalid("init_opacity must lie in (0, 1)"));
        }
        if self.init_points == 0 {
            return Err(Error::invalid("init_points must be at least 1"));
        }
        if !(self.lambda_pseudo >= 0.0) || !(self.pseudo_noise_scale >= 0.0) {
            return Err(Error::invalid("lambda_pseudo and pseudo_noise_scale must be non-negative"));
        }
        Ok(())
    }

    /// Apply one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let k = key.trim();
        match k {
            "iterations" => self.iterations = parse(k, value)?,
            "lr_position" => self.lr.position = parse(k, value)?,
            "lr_position_final" => self.lr.position_final = parse(k, value)?,
            "lr_scale" => self.lr.scale = parse(k, value)?,
            "lr_rotation" => self.lr.rotation = parse(k, value)?,
            "lr_opacity" => self.lr.opacity = parse(k, value)?,
            "lr_color" => self.lr.color = parse(k, value)?,
            "densify_from" => self.densify_from = parse(k, value)?,
            "densify_until" => self.densify_until = Some(parse(k, value)?),
            "densify_every" => self.densify_every = parse(k, value)?,
            "densify_grad_threshold" => self.densify_grad_threshold = parse(k, value)?,
            "percent_dense" => self.percent_dense = parse(k, value)?,
            "opacity_reset_every" => self.opacity_reset_every = parse(k, value)?,
            "prune_opacity_threshold" => self.prune_opacity_threshold = parse(k, value)?,
            "coprune_every" => self.coprune_every = parse(k, value)?,
            "tau_rel" => self.tau = Tau::Relative(parse(k, value)?),
            "tau_abs" => self.tau = Tau::Absolute(parse(k, value)?),
            "lambda_dssim" => self.lambda_dssim = parse(k, value)?,
            "lambda_pseudo" => self.lambda_pseudo = parse(k, value)?,
            "pseudo_noise_scale" => self.pseudo_noise_scale = parse(k, value)?,
            "n_fields" => self.n_fields = parse(k, value)?,
            "seed" => self.seed = parse(k, value)?,
            "background" => {
                let v: Vec<f64> = value.split(',').map(|s| parse(k, s)).collect::<Result<_>>()?;
                let bg: [f64; 3] = v
                    .try_into()
                    .map_err(|_| Error::invalid("background needs three comma-separated values"))?;
                self.background = Some(bg);
            }
            "init_points" => self.init_points = parse(k, value)?,
            "init_opacity" => self.init_opacity = parse(k, value)?,
            "log_every" => self.log_every = parse(k, value)?,
            "shared_field_rng" => self.shared_field_rng = parse(k, value)?,
            "shuffle_views" => self.shuffle_views = parse(k, value)?,
            _ => return Err(Error::invalid(format!("unknown config key '{k}'"))),
        }
        Ok(())
    }

    /// Apply a flat `key = value` text; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("config line {}: expected key = value", n + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }
}
