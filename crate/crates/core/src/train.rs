//! Inner-loop machinery shared by the gradient-based methods: Adam,
//! reduce-on-plateau scheduling, loss histories and threshold-based
//! checkpoint selection.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::network::Mlp;
use crate::problems::{pde_loss, PinnSetup, Point, Problem};

/// Reduce-on-plateau settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchedulerConfig {
    pub enabled: bool,
    pub factor: f64,
    /// Consecutive non-improving checks before the rate is reduced.
    pub patience: usize,
    pub min_lr: f64,
    /// Relative decrease that counts as an improvement.
    pub rel_tol: f64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            factor: 0.5,
            patience: 1000,
            min_lr: 1e-6,
            rel_tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    pub scheduler: SchedulerConfig,
    /// Threshold τ of the stopping rule on (validation − physics).
    pub stop_threshold: f64,
    pub checkpoint_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.003,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            epochs: 50_000,
            scheduler: SchedulerConfig::default(),
            stop_threshold: 0.1,
            checkpoint_every: 100,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.lr > 0.0) {
            return bad(format!("learning rate must be > 0, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad(format!("betas must lie in [0, 1), got {} and {}", self.beta1, self.beta2));
        }
        if !(self.eps > 0.0) {
            return bad(format!("eps must be > 0, got {}", self.eps));
        }
        if !(self.stop_threshold >= 0.0) {
            return bad(format!("stop threshold must be >= 0, got {}", self.stop_threshold));
        }
        if self.checkpoint_every == 0 {
            return bad("checkpoint_every must be >= 1".into());
        }
        let s = &self.scheduler;
        if !(s.factor > 0.0 && s.factor < 1.0) {
            return bad(format!("scheduler factor must lie in (0, 1), got {}", s.factor));
        }
        if !(s.min_lr >= 0.0) || !(s.rel_tol >= 0.0) {
            return bad("scheduler min_lr and rel_tol must be >= 0".into());
        }
        Ok(())
    }
}

/// Adam optimizer state (first/second moments and step count).
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    pub fn new(n: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    pub fn from_config(n: usize, cfg: &TrainConfig) -> Self {
        Self::new(n, cfg.beta1, cfg.beta2, cfg.eps)
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    /// One bias-corrected update `θ ← θ − lr·m̂/(√v̂ + ε)`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
        check_dim("adam gradient", self.m.len(), grad.len())?;
        check_dim("adam parameters", self.m.len(), params.len())?;
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient coordinate {i} is {}", grad[i])));
        }
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for i in 0..grad.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Multiplies the learning rate by `factor` once the monitored loss has not
/// improved for `patience` consecutive checks.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauScheduler {
    cfg: SchedulerConfig,
    lr: f64,
    best: f64,
    bad_checks: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, cfg: SchedulerConfig) -> Self {
        Self {
            cfg,
            lr,
            best: f64::INFINITY,
            bad_checks: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn step(&mut self, loss: f64) -> f64 {
        if !self.cfg.enabled {
            return self.lr;
        }
        if !self.best.is_finite() || loss < self.best - self.cfg.rel_tol * self.best.abs() {
            self.best = loss;
            self.bad_checks = 0;
        } else {
            self.bad_checks += 1;
            if self.bad_checks >= self.cfg.patience {
                self.lr = (self.lr * self.cfg.factor).max(self.cfg.min_lr);
                self.bad_checks = 0;
            }
        }
        self.lr
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub epoch: usize,
    pub loss_data: f64,
    pub loss_physics: f64,
    /// Residual loss at the validation midpoints; absent for problems without one.
    pub loss_validation: Option<f64>,
    pub lr: f64,
}

impl HistoryRecord {
    /// validation − physics, or `None` without a validation loss.
    pub fn generalization_gap(&self) -> Option<f64> {
        self.loss_validation.map(|v| v - self.loss_physics)
    }
}

/// Loss history of one run, recorded at every checkpoint epoch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub records: Vec<HistoryRecord>,
}

impl History {
    pub fn push(&mut self, rec: HistoryRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if rec.epoch <= last.epoch {
                return Err(Error::Usage(format!(
                    "history epochs must increase: {} after {}",
                    rec.epoch, last.epoch
                )));
            }
        }
        self.records.push(rec);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&HistoryRecord> {
        self.records.last()
    }

    pub fn get(&self, epoch: usize) -> Option<&HistoryRecord> {
        self.records
            .binary_search_by_key(&epoch, |r| r.epoch)
            .ok()
            .map(|i| &self.records[i])
    }

    /// CSV with columns `epoch,loss_data,loss_physics,loss_validation,lr`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["epoch", "loss_data", "loss_physics", "loss_validation", "lr"])?;
        for r in &self.records {
            wr.write_record([
                r.epoch.to_string(),
                r.loss_data.to_string(),
                r.loss_physics.to_string(),
                r.loss_validation.map(|v| v.to_string()).unwrap_or_default(),
                r.lr.to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Residual-only loss at the validation points.
pub fn record_validation(net: &Mlp, problem: &Problem, validation: &[Point]) -> Result<f64> {
    pde_loss(net, problem, validation)
}

/// The latest recorded epoch whose validation loss exceeds the physics loss
/// by more than `tau`, or the final epoch if that never happens. `None` only
/// for an empty history.
pub fn select_checkpoint_threshold(history: &History, tau: f64) -> Option<usize> {
    history
        .records
        .iter()
        .rev()
        .find(|r| r.generalization_gap().is_some_and(|gap| gap > tau))
        .or(history.last())
        .map(|r| r.epoch)
}

/// Loss values of both objectives and, on request, their gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct BiEval {
    /// `[L_DATA, L_PHYSICS]`.
    pub losses: [f64; 2],
    pub grads: Option<[Vec<f64>; 2]>,
}

/// A two-objective problem over a flat parameter vector.
pub trait BiObjective: Sync {
    fn param_count(&self) -> usize;

    /// Deterministic starting point for a run seeded with `seed`.
    fn initial_params(&self, seed: u64) -> Result<Vec<f64>>;

    fn evaluate(&self, params: &[f64], with_grad: bool) -> Result<BiEval>;

    /// Validation loss used by the stopping rule, if the problem has one.
    fn validation_loss(&self, _params: &[f64]) -> Result<Option<f64>> {
        Ok(None)
    }
}

/// A PINN setup seen as (L_DATA, L_PHYSICS) over the parameters of a fixed architecture.
#[derive(Debug, Clone)]
pub struct PinnObjective {
    pub setup: PinnSetup,
    template: Mlp,
}

impl PinnObjective {
    pub fn new(setup: PinnSetup, layer_sizes: &[usize]) -> Result<Self> {
        let template = Mlp::init(layer_sizes, 0)?;
        check_dim(
            "network input width for problem",
            setup.problem.input_dim(),
            template.input_dim(),
        )?;
        check_dim("network output width", 1, template.output_dim())?;
        Ok(Self { setup, template })
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        self.template.layer_sizes()
    }

    pub fn network(&self, params: &[f64]) -> Result<Mlp> {
        self.template.with_params(params)
    }
}

impl BiObjective for PinnObjective {
    fn param_count(&self) -> usize {
        self.template.param_count()
    }

    fn initial_params(&self, seed: u64) -> Result<Vec<f64>> {
        Ok(Mlp::init_with(&self.template.layer_sizes(), self.template.hidden_activation(), seed)?.flatten())
    }

    fn evaluate(&self, params: &[f64], with_grad: bool) -> Result<BiEval> {
        let net = self.network(params)?;
        let e = self.setup.evaluate(&net, with_grad)?;
        let grads = match (e.grad_data, e.grad_physics) {
            (Some(d), Some(p)) => Some([d, p]),
            _ => None,
        };
        Ok(BiEval {
            losses: [e.data, e.physics],
            grads,
        })
    }

    fn validation_loss(&self, params: &[f64]) -> Result<Option<f64>> {
        let net = self.network(params)?;
        Ok(Some(self.setup.validation_loss(&net)?))
    }
}

/// Update direction chosen for one epoch.
#[derive(Debug, Clone)]
pub struct Step {
    /// Vector handed to Adam in place of a gradient.
    pub gradient: Vec<f64>,
    /// Scalar monitored by the plateau scheduler.
    pub monitored: f64,
}

/// Outcome of a training run after checkpoint selection.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub history: History,
    pub selected_epoch: usize,
    pub selected_params: Vec<f64>,
    pub final_params: Vec<f64>,
}

/// Full-batch Adam loop. `direction` maps the current evaluation to the
/// update direction; losses are recorded every `checkpoint_every` epochs and
/// at the last epoch, and the stopping rule picks the reported checkpoint.
pub fn run_adam<O, F>(objective: &O, init: Vec<f64>, cfg: &TrainConfig, mut direction: F) -> Result<RunOutcome>
where
    O: BiObjective + ?Sized,
    F: FnMut(&BiEval) -> Result<Step>,
{
    cfg.validate()?;
    check_dim("initial parameters", objective.param_count(), init.len())?;
    let mut params = init;
    let mut adam = Adam::from_config(params.len(), cfg);
    let mut sched = PlateauScheduler::new(cfg.lr, cfg.scheduler);
    let mut history = History::default();
    let mut last_violation: Option<(usize, Vec<f64>)> = None;

    for epoch in 0..=cfg.epochs {
        let eval = objective.evaluate(&params, epoch < cfg.epochs)?;
        if let Some(i) = eval.losses.iter().position(|l| !l.is_finite()) {
            return Err(Error::NonFinite(format!("objective {i} at epoch {epoch}")));
        }
        if epoch % cfg.checkpoint_every == 0 || epoch == cfg.epochs {
            let validation = objective.validation_loss(&params)?;
            let rec = HistoryRecord {
                epoch,
                loss_data: eval.losses[0],
                loss_physics: eval.losses[1],
                loss_validation: validation,
                lr: sched.lr(),
            };
            if rec.generalization_gap().is_some_and(|g| g > cfg.stop_threshold) {
                last_violation = Some((epoch, params.clone()));
            }
            history.push(rec)?;
        }
        if epoch == cfg.epochs {
            break;
        }
        let step = direction(&eval)?;
        adam.step(&mut params, &step.gradient, sched.lr())?;
        sched.step(step.monitored);
    }

    let selected_epoch = select_checkpoint_threshold(&history, cfg.stop_threshold)
        .ok_or_else(|| Error::Usage("empty history".into()))?;
    let selected_params = match last_violation {
        Some((e, p)) if e == selected_epoch => p,
        _ => params.clone(),
    };
    Ok(RunOutcome {
        history,
        selected_epoch,
        selected_params,
        final_params: params,
    })
}
