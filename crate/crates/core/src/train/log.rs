use std::fmt::Write as _;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Init,
    /// Just before the first densification event.
    PreDensify,
    /// After a densification event without co-pruning.
    Densify,
    /// After a densification event followed by co-pruning.
    CoPrune,
    Periodic,
    Final,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Init => "init",
            Phase::PreDensify => "pre_densify",
            Phase::Densify => "densify",
            Phase::CoPrune => "coprune",
            Phase::Periodic => "periodic",
            Phase::Final => "final",
        }
    }
}

/// One telemetry checkpoint. Between-field columns compare field 0 with
/// field 1 and are `NaN` for single-field runs.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub iteration: usize,
    pub phase: Phase,
    pub losses: Vec<f64>,
    pub counts: Vec<usize>,
    pub fitness: f64,
    pub rmse: f64,
    pub psnr_between: f64,
    pub depth_abs_error_rel_between: f64,
    /// Primitives removed by co-pruning at this checkpoint, all fields.
    pub co_pruned: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    pub n_fields: usize,
    pub rows: Vec<LogRow>,
}

pub const LOG_CSV_MAGIC: &str = "# corgs-trainlog v1";

impl TrainingLog {
    pub fn new(n_fields: usize) -> Self {
        Self {
            n_fields,
            rows: Vec::new(),
        }
    }

    pub fn last(&self, phase: Phase) -> Option<&LogRow> {
        self.rows.iter().rev().find(|r| r.phase == phase)
    }

    pub fn first(&self, phase: Phase) -> Option<&LogRow> {
        self.rows.iter().find(|r| r.phase == phase)
    }

    /// Last row written by a densification event, co-pruning or not.
    pub fn last_densify(&self) -> Option<&LogRow> {
        self.rows
            .iter()
            .rev()
            .find(|r| matches!(r.phase, Phase::Densify | Phase::CoPrune))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(LOG_CSV_MAGIC);
        s.push_str("\niteration,phase");
        for k in 0..self.n_fields {
            let _ = write!(s, ",loss_{k}");
        }
        for k in 0..self.n_fields {
            let _ = write!(s, ",count_{k}");
        }
        s.push_str(",fitness,rmse,psnr_between,depth_abs_error_rel_between,co_pruned\n");
        for r in &self.rows {
            let _ = write!(s, "{},{}", r.iteration, r.phase.as_str());
            for l in &r.losses {
                let _ = write!(s, ",{l}");
            }
            for c in &r.counts {
                let _ = write!(s, ",{c}");
            }
            let _ = writeln!(
                s,
                ",{},{},{},{},{}",
                r.fitness, r.rmse, r.psnr_between, r.depth_abs_error_rel_between, r.co_pruned
            );
        }
        s
    }
}
