use crate::error::{Error, Result};
use crate::raster::FieldGradients;
use crate::scene::GaussianField;

use super::config::StepRates;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-15;

/// Adam moments with one row per primitive.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub first: FieldGradients,
    pub second: FieldGradients,
    pub step: u64,
}

fn retain<T: Copy>(v: &mut Vec<T>, keep: &[bool]) {
    let mut it = keep.iter();
    v.retain(|_| *it.next().unwrap());
}

impl OptimizerState {
    pub fn new(n: usize) -> Self {
        Self {
            first: FieldGradients::zeros(n),
            second: FieldGradients::zeros(n),
            step: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.first.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first.is_empty()
    }

    pub fn retain_rows(&mut self, keep: &[bool]) {
        assert_eq!(keep.len(), self.len());
        for g in [&mut self.first, &mut self.second] {
            retain(&mut g.positions, keep);
            retain(&mut g.log_scales, keep);
            retain(&mut g.rotations, keep);
            retain(&mut g.opacity_logits, keep);
            retain(&mut g.color_logits, keep);
        }
    }

    /// Append `k` zero-initialized rows.
    pub fn push_zero_rows(&mut self, k: usize) {
        for g in [&mut self.first, &mut self.second] {
            g.add_rows(k);
        }
    }

    pub fn reset_opacity_moments(&mut self) {
        self.first.opacity_logits.iter_mut().for_each(|v| *v = 0.0);
        self.second.opacity_logits.iter_mut().for_each(|v| *v = 0.0);
    }
}

impl FieldGradients {
    pub(crate) fn add_rows(&mut self, k: usize) {
        let n = self.len() + k;
        self.positions.resize(n, [0.0; 3]);
        self.log_scales.resize(n, [0.0; 3]);
        self.rotations.resize(n, [0.0; 4]);
        self.opacity_logits.resize(n, 0.0);
        self.color_logits.resize(n, [0.0; 3]);
    }
}

#[inline]
fn adam(p: &mut f64, m: &mut f64, v: &mut f64, g: f64, lr: f64, c1: f64, c2: f64) {
    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
    let m_hat = *m / c1;
    let v_hat = *v / c2;
    *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
}

fn adam_rows<const W: usize>(
    p: &mut [[f64; W]],
    m: &mut [[f64; W]],
    v: &mut [[f64; W]],
    g: &[[f64; W]],
    lr: f64,
    c1: f64,
    c2: f64,
) {
    for i in 0..p.len() {
        for k in 0..W {
            adam(&mut p[i][k], &mut m[i][k], &mut v[i][k], g[i][k], lr, c1, c2);
        }
    }
}

/// One bias-corrected Adam step in pre-activation space, followed by
/// quaternion renormalization.
pub fn optimize_step(
    field: &mut GaussianField,
    state: &mut OptimizerState,
    grads: &FieldGradients,
    rates: &StepRates,
) -> Result<()> {
    let n = field.len();
    if grads.len() != n
        || grads.log_scales.len() != n
        || grads.rotations.len() != n
        || grads.opacity_logits.len() != n
        || grads.color_logits.len() != n
    {
        return Err(Error::invalid(format!(
            "gradient rows {} do not match field size {n}",
            grads.len()
        )));
    }
    if state.len() != n {
        return Err(Error::invalid(format!(
            "optimizer rows {} do not match field size {n}",
            state.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    let (m, v) = (&mut state.first, &mut state.second);
    adam_rows(&mut field.positions, &mut m.positions, &mut v.positions, &grads.positions, rates.position, c1, c2);
    adam_rows(&mut field.log_scales, &mut m.log_scales, &mut v.log_scales, &grads.log_scales, rates.scale, c1, c2);
    adam_rows(&mut field.rotations, &mut m.rotations, &mut v.rotations, &grads.rotations, rates.rotation, c1, c2);
    adam_rows(
        &mut field.color_logits,
        &mut m.color_logits,
        &mut v.color_logits,
        &grads.color_logits,
        rates.color,
        c1,
        c2,
    );
    for i in 0..n {
        adam(
            &mut field.opacity_logits[i],
            &mut m.opacity_logits[i],
            &mut v.opacity_logits[i],
            grads.opacity_logits[i],
            rates.opacity,
            c1,
            c2,
        );
    }
    field.normalize_rotations();
    Ok(())
}
