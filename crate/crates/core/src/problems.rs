//! Logistic and heat benchmark problems, collocation grids, noisy datasets and
//! the loss terms L_PDE, L_IC, L_BC, L_PHYSICS, L_DATA.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::{Read, Write};

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Channel, Jet2, NodeId, Tape};
use crate::error::{check_dim, Error, Result};
use crate::network::Mlp;

/// A space-time location `(x, t)`. The logistic problem uses `x = 0`.
pub type Point = (f64, f64);

/// du/dt = r·u·(1 − u/K) with K = 1 and u(0) = 1/2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogisticParams {
    /// Intrinsic growth rate.
    pub r: f64,
    /// Time horizon.
    pub t_max: f64,
}

impl LogisticParams {
    pub const CAPACITY: f64 = 1.0;
    pub const U0: f64 = 0.5;
}

impl Default for LogisticParams {
    fn default() -> Self {
        Self { r: 1.0, t_max: 10.0 }
    }
}

/// u_t = κ·u_xx on (0, L) with u(x, 0) = sin(πx/L) and u(0, t) = u(L, t) = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeatParams {
    /// Rod length L.
    pub length: f64,
    /// Thermal diffusivity κ.
    pub kappa: f64,
    pub t_max: f64,
}

impl Default for HeatParams {
    fn default() -> Self {
        Self {
            length: 1.0,
            kappa: 1.0,
            t_max: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Problem {
    Logistic(LogisticParams),
    Heat(HeatParams),
}

pub fn exact_logistic(t: f64, r: f64) -> f64 {
    1.0 / (1.0 + (-r * t).exp())
}

pub fn exact_heat(x: f64, t: f64, length: f64, kappa: f64) -> f64 {
    (PI * x / length).sin() * (-kappa * PI * PI * t / (length * length)).exp()
}

impl Problem {
    pub fn logistic() -> Self {
        Problem::Logistic(LogisticParams::default())
    }

    pub fn heat(length: f64, kappa: f64) -> Self {
        Problem::Heat(HeatParams {
            length,
            kappa,
            ..HeatParams::default()
        })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Problem::Logistic(p) => {
                if !(p.r > 0.0) || !(p.t_max > 0.0) {
                    return Err(Error::Config(format!(
                        "logistic needs r > 0 and t_max > 0, got {p:?}"
                    )));
                }
            }
            Problem::Heat(p) => {
                if !(p.length > 0.0) || !(p.kappa > 0.0) || !(p.t_max > 0.0) {
                    return Err(Error::Config(format!(
                        "heat needs L > 0, kappa > 0 and t_max > 0, got {p:?}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Network input width: 1 (t) for logistic, 2 (x, t) for heat.
    pub fn input_dim(&self) -> usize {
        match self {
            Problem::Logistic(_) => 1,
            Problem::Heat(_) => 2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Problem::Logistic(_) => "logistic",
            Problem::Heat(_) => "heat",
        }
    }

    pub fn t_max(&self) -> f64 {
        match self {
            Problem::Logistic(p) => p.t_max,
            Problem::Heat(p) => p.t_max,
        }
    }

    pub fn exact(&self, x: f64, t: f64) -> f64 {
        match self {
            Problem::Logistic(p) => exact_logistic(t, p.r),
            Problem::Heat(p) => exact_heat(x, t, p.length, p.kappa),
        }
    }

    /// Initial condition g0.
    pub fn initial(&self, x: f64) -> f64 {
        match self {
            Problem::Logistic(_) => LogisticParams::U0,
            Problem::Heat(p) => (PI * x / p.length).sin(),
        }
    }

    /// Dirichlet boundary value.
    pub fn boundary(&self, _x: f64, _t: f64) -> f64 {
        0.0
    }

    /// PDE residual `N[u] + u_t` evaluated from a jet of the candidate solution.
    pub fn residual(&self, jet: &Jet2) -> f64 {
        match self {
            Problem::Logistic(p) => {
                jet.dt - p.r * jet.v * (1.0 - jet.v / LogisticParams::CAPACITY)
            }
            Problem::Heat(p) => jet.dt - p.kappa * jet.dxx,
        }
    }

    /// Records the residual on a tape given the value, u_t and (heat) u_xx nodes.
    fn record_residual(
        &self,
        tape: &mut Tape<'_>,
        v: NodeId,
        dt: NodeId,
        dxx: NodeId,
    ) -> Result<NodeId> {
        match self {
            Problem::Logistic(p) => {
                // u_t − r·u + (r/K)·u²
                let vv = tape.mul(v, v)?;
                let lin = tape.scale(v, -p.r)?;
                let quad = tape.scale(vv, p.r / LogisticParams::CAPACITY)?;
                let s = tape.add(dt, lin)?;
                tape.add(s, quad)
            }
            Problem::Heat(p) => {
                let diff = tape.scale(dxx, p.kappa)?;
                tape.sub(dt, diff)
            }
        }
    }

    /// Collocation grid with `n_x` spatial (heat only) and `n_t` temporal points.
    pub fn grid(&self, n_x: usize, n_t: usize) -> Result<Collocation> {
        self.validate()?;
        match self {
            Problem::Logistic(p) => make_grid_1d(n_t, (0.0, p.t_max)),
            Problem::Heat(p) => make_grid_2d(n_x, n_t, (0.0, p.length), (0.0, p.t_max)),
        }
    }
}

/// `n` equally spaced points on `[a, b]` including both endpoints.
pub fn linspace(n: usize, (a, b): (f64, f64)) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::Config(format!("a grid needs at least 2 points, got {n}")));
    }
    if !(b > a) {
        return Err(Error::Config(format!("degenerate interval [{a}, {b}]")));
    }
    let h = (b - a) / (n - 1) as f64;
    Ok((0..n)
        .map(|i| if i == n - 1 { b } else { a + i as f64 * h })
        .collect())
}

/// Collocation points split by role. `points()` lists every point in grid
/// order (t outer, x inner).
#[derive(Debug, Clone, PartialEq)]
pub struct Collocation {
    pub x_axis: Vec<f64>,
    pub t_axis: Vec<f64>,
    pub interior: Vec<Point>,
    pub ic: Vec<Point>,
    pub bc: Vec<Point>,
}

impl Collocation {
    pub fn len(&self) -> usize {
        self.x_axis.len() * self.t_axis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn points(&self) -> Vec<Point> {
        self.t_axis
            .iter()
            .flat_map(|&t| self.x_axis.iter().map(move |&x| (x, t)))
            .collect()
    }
}

/// 1-D time grid for the logistic ODE: the `t = 0` point carries the initial
/// condition and the remaining points the residual.
pub fn make_grid_1d(n: usize, interval: (f64, f64)) -> Result<Collocation> {
    let t_axis = linspace(n, interval)?;
    let ic = vec![(0.0, t_axis[0])];
    let interior = t_axis[1..].iter().map(|&t| (0.0, t)).collect();
    Ok(Collocation {
        x_axis: vec![0.0],
        t_axis,
        interior,
        ic,
        bc: Vec::new(),
    })
}

/// 2-D space-time grid. Points with `x ∈ {x_min, x_max}` (corners included)
/// form the boundary set, the remaining `t = t_min` points the initial set.
pub fn make_grid_2d(
    nx: usize,
    nt: usize,
    x_interval: (f64, f64),
    t_interval: (f64, f64),
) -> Result<Collocation> {
    let x_axis = linspace(nx, x_interval)?;
    let t_axis = linspace(nt, t_interval)?;
    let (mut interior, mut ic, mut bc) = (Vec::new(), Vec::new(), Vec::new());
    for (it, &t) in t_axis.iter().enumerate() {
        for (ix, &x) in x_axis.iter().enumerate() {
            if ix == 0 || ix == nx - 1 {
                bc.push((x, t));
            } else if it == 0 {
                ic.push((x, t));
            } else {
                interior.push((x, t));
            }
        }
    }
    Ok(Collocation {
        x_axis,
        t_axis,
        interior,
        ic,
        bc,
    })
}

/// Midpoints of adjacent axis values.
pub fn midpoints(axis: &[f64]) -> Result<Vec<f64>> {
    if axis.len() < 2 {
        return Err(Error::Config(format!(
            "need at least 2 points per axis for midpoints, got {}",
            axis.len()
        )));
    }
    Ok(axis.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect())
}

/// Validation points half-way between training points along every active axis.
pub fn validation_points(grid: &Collocation) -> Result<Vec<Point>> {
    let ts = midpoints(&grid.t_axis)?;
    if grid.x_axis.len() == 1 {
        let x = grid.x_axis[0];
        return Ok(ts.into_iter().map(|t| (x, t)).collect());
    }
    let xs = midpoints(&grid.x_axis)?;
    Ok(ts
        .iter()
        .flat_map(|&t| xs.iter().map(move |&x| (x, t)))
        .collect())
}

/// Non-negative weights of the physics-loss components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub pde: f64,
    pub ic: f64,
    pub bc: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            pde: 1.0,
            ic: 1.0,
            bc: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("pde", self.pde), ("ic", self.ic), ("bc", self.bc)] {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::Config(format!("loss weight {name} must be >= 0, got {w}")));
            }
        }
        Ok(())
    }
}

/// Labelled samples of the exact solution corrupted with Gaussian noise.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub points: Vec<Point>,
    pub labels: Vec<f64>,
    /// The noise added to each label, kept for test oracles and export.
    pub noise: Vec<f64>,
    pub sigma: f64,
    pub seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetRow {
    x: f64,
    t: f64,
    label: f64,
    noise_draw: f64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// CSV with columns `x,t,label,noise_draw`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for (i, &(x, t)) in self.points.iter().enumerate() {
            wr.serialize(DatasetRow {
                x,
                t,
                label: self.labels[i],
                noise_draw: self.noise[i],
            })?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, sigma: f64, seed: u64) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let mut ds = Dataset {
            points: Vec::new(),
            labels: Vec::new(),
            noise: Vec::new(),
            sigma,
            seed,
        };
        for row in rd.deserialize() {
            let row: DatasetRow = row?;
            ds.points.push((row.x, row.t));
            ds.labels.push(row.label);
            ds.noise.push(row.noise_draw);
        }
        Ok(ds)
    }
}

/// Samples `exact(point) + N(0, σ²)` at every point.
pub fn make_dataset(problem: &Problem, points: &[Point], sigma: f64, seed: u64) -> Result<Dataset> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::Config(format!("noise sigma must be >= 0, got {sigma}")));
    }
    let noise: Vec<f64> = if sigma == 0.0 {
        vec![0.0; points.len()]
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
        points.iter().map(|_| normal.sample(&mut rng)).collect()
    };
    let labels = points
        .iter()
        .zip(&noise)
        .map(|(&(x, t), &n)| {
            let u = problem.exact(x, t);
            if sigma == 0.0 {
                u
            } else {
                u + n
            }
        })
        .collect();
    Ok(Dataset {
        points: points.to_vec(),
        labels,
        noise,
        sigma,
        seed,
    })
}

fn record_pde(tape: &mut Tape<'_>, problem: &Problem, out: NodeId, idx: &[usize]) -> Result<NodeId> {
    let v = tape.channel(out, Channel::Value, 0)?;
    let dt = tape.channel(out, Channel::Dt, 0)?;
    let dxx = tape.channel(out, Channel::Dxx, 0)?;
    let (v, dt, dxx) = (tape.gather(v, idx)?, tape.gather(dt, idx)?, tape.gather(dxx, idx)?);
    let r = problem.record_residual(tape, v, dt, dxx)?;
    tape.mean_square(r)
}

fn record_mismatch(tape: &mut Tape<'_>, out: NodeId, idx: &[usize], targets: &[f64]) -> Result<NodeId> {
    let v = tape.channel(out, Channel::Value, 0)?;
    let v = tape.gather(v, idx)?;
    let neg: Vec<f64> = targets.iter().map(|y| -y).collect();
    let d = tape.offset(v, &neg)?;
    tape.mean_square(d)
}

fn check_net(net: &Mlp, problem: &Problem) -> Result<()> {
    check_dim("network input width for problem", problem.input_dim(), net.input_dim())
}

/// Mean squared residual over `points`.
pub fn pde_loss(net: &Mlp, problem: &Problem, points: &[Point]) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::Config("pde loss needs at least one collocation point".into()));
    }
    check_net(net, problem)?;
    let mut tape = Tape::new(net);
    let out = tape.forward(points)?;
    let idx: Vec<usize> = (0..points.len()).collect();
    let l = record_pde(&mut tape, problem, out, &idx)?;
    tape.scalar(l)
}

fn mismatch_loss(net: &Mlp, points: &[Point], targets: &[f64]) -> Result<f64> {
    let mut tape = Tape::new(net);
    let out = tape.forward(points)?;
    let idx: Vec<usize> = (0..points.len()).collect();
    let l = record_mismatch(&mut tape, out, &idx, targets)?;
    tape.scalar(l)
}

/// Mean squared mismatch to the initial condition. Empty sets give 0 with a warning.
pub fn ic_loss(net: &Mlp, problem: &Problem, points: &[Point]) -> Result<f64> {
    check_net(net, problem)?;
    if points.is_empty() {
        warn!("initial-condition point set is empty; L_IC taken as 0");
        return Ok(0.0);
    }
    let targets: Vec<f64> = points.iter().map(|&(x, _)| problem.initial(x)).collect();
    mismatch_loss(net, points, &targets)
}

/// Mean squared mismatch to the boundary condition. Empty sets give 0 with a warning.
pub fn bc_loss(net: &Mlp, problem: &Problem, points: &[Point]) -> Result<f64> {
    check_net(net, problem)?;
    if points.is_empty() {
        warn!("boundary point set is empty; L_BC taken as 0");
        return Ok(0.0);
    }
    let targets: Vec<f64> = points.iter().map(|&(x, t)| problem.boundary(x, t)).collect();
    mismatch_loss(net, points, &targets)
}

/// α_PDE·L_PDE + α_IC·L_IC + α_BC·L_BC.
pub fn physics_loss(net: &Mlp, problem: &Problem, grid: &Collocation, weights: &LossWeights) -> Result<f64> {
    weights.validate()?;
    let pde = pde_loss(net, problem, &grid.interior)?;
    let ic = ic_loss(net, problem, &grid.ic)?;
    let bc = bc_loss(net, problem, &grid.bc)?;
    Ok(weights.pde * pde + weights.ic * ic + weights.bc * bc)
}

/// Mean squared error against the dataset labels.
pub fn data_loss(net: &Mlp, dataset: &Dataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::Config("data loss needs a non-empty dataset".into()));
    }
    mismatch_loss(net, &dataset.points, &dataset.labels)
}

/// α·L_DATA + (1 − α)·L_PHYSICS.
pub fn total_loss(net: &Mlp, setup: &PinnSetup, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let e = setup.evaluate(net, false)?;
    Ok(alpha * e.data + (1.0 - alpha) * e.physics)
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    Ok(())
}

/// Root-mean-square error against the analytic solution.
pub fn l2_error(net: &Mlp, problem: &Problem, points: &[Point]) -> Result<f64> {
    if points.is_empty() {
        return Ok(0.0);
    }
    let mut s = 0.0;
    for &(x, t) in points {
        let d = net.eval_at(x, t)? - problem.exact(x, t);
        s += d * d;
    }
    Ok((s / points.len() as f64).sqrt())
}

/// Loss values (and optionally gradients) for both objectives.
#[derive(Debug, Clone, PartialEq)]
pub struct LossEval {
    pub data: f64,
    pub physics: f64,
    pub pde: f64,
    pub ic: f64,
    pub bc: f64,
    pub grad_data: Option<Vec<f64>>,
    pub grad_physics: Option<Vec<f64>>,
}

/// A fully specified PINN training problem: equation, collocation grid,
/// dataset and physics weights. All loss terms are assembled on one tape over
/// the union of the grid and dataset points.
#[derive(Debug, Clone)]
pub struct PinnSetup {
    pub problem: Problem,
    pub grid: Collocation,
    pub dataset: Dataset,
    pub weights: LossWeights,
    points: Vec<Point>,
    interior_idx: Vec<usize>,
    ic_idx: Vec<usize>,
    bc_idx: Vec<usize>,
    data_idx: Vec<usize>,
    ic_targets: Vec<f64>,
    bc_targets: Vec<f64>,
    validation: Vec<Point>,
}

impl PinnSetup {
    pub fn new(problem: Problem, grid: Collocation, dataset: Dataset, weights: LossWeights) -> Result<Self> {
        problem.validate()?;
        weights.validate()?;
        if grid.interior.is_empty() {
            return Err(Error::Config("grid has no interior collocation points".into()));
        }
        if dataset.is_empty() {
            return Err(Error::Config("dataset is empty".into()));
        }
        let mut points = Vec::new();
        let mut seen: HashMap<(u64, u64), usize> = HashMap::new();
        let mut index_of = |p: Point| -> usize {
            *seen.entry((p.0.to_bits(), p.1.to_bits())).or_insert_with(|| {
                points.push(p);
                points.len() - 1
            })
        };
        let interior_idx = grid.interior.iter().map(|&p| index_of(p)).collect();
        let ic_idx = grid.ic.iter().map(|&p| index_of(p)).collect();
        let bc_idx = grid.bc.iter().map(|&p| index_of(p)).collect();
        let data_idx = dataset.points.iter().map(|&p| index_of(p)).collect();
        if grid.ic.is_empty() {
            warn!("initial-condition point set is empty; L_IC taken as 0");
        }
        if grid.bc.is_empty() && matches!(problem, Problem::Heat(_)) {
            warn!("boundary point set is empty; L_BC taken as 0");
        }
        let ic_targets = grid.ic.iter().map(|&(x, _)| problem.initial(x)).collect();
        let bc_targets = grid.bc.iter().map(|&(x, t)| problem.boundary(x, t)).collect();
        let validation = validation_points(&grid)?;
        Ok(Self {
            problem,
            grid,
            dataset,
            weights,
            points,
            interior_idx,
            ic_idx,
            bc_idx,
            data_idx,
            ic_targets,
            bc_targets,
            validation,
        })
    }

    /// Standard setup: grid of `n_x × n_t` points, data labels on every grid
    /// point with noise level `sigma`.
    pub fn standard(problem: Problem, n_x: usize, n_t: usize, sigma: f64, data_seed: u64) -> Result<Self> {
        let grid = problem.grid(n_x, n_t)?;
        let dataset = make_dataset(&problem, &grid.points(), sigma, data_seed)?;
        Self::new(problem, grid, dataset, LossWeights::default())
    }

    pub fn validation_points(&self) -> &[Point] {
        &self.validation
    }

    /// Evaluates every loss term; with `with_grad` also the parameter
    /// gradients of L_DATA and L_PHYSICS.
    pub fn evaluate(&self, net: &Mlp, with_grad: bool) -> Result<LossEval> {
        check_net(net, &self.problem)?;
        let mut tape = Tape::new(net);
        let out = tape.forward(&self.points)?;
        let pde = record_pde(&mut tape, &self.problem, out, &self.interior_idx)?;
        let mut physics = tape.scale(pde, self.weights.pde)?;
        let mut ic = None;
        let mut bc = None;
        if !self.ic_idx.is_empty() {
            let l = record_mismatch(&mut tape, out, &self.ic_idx, &self.ic_targets)?;
            let w = tape.scale(l, self.weights.ic)?;
            physics = tape.add(physics, w)?;
            ic = Some(l);
        }
        if !self.bc_idx.is_empty() {
            let l = record_mismatch(&mut tape, out, &self.bc_idx, &self.bc_targets)?;
            let w = tape.scale(l, self.weights.bc)?;
            physics = tape.add(physics, w)?;
            bc = Some(l);
        }
        let data = record_mismatch(&mut tape, out, &self.data_idx, &self.dataset.labels)?;
        let (grad_data, grad_physics) = if with_grad {
            (Some(tape.grad_params(data)?), Some(tape.grad_params(physics)?))
        } else {
            (None, None)
        };
        Ok(LossEval {
            data: tape.scalar(data)?,
            physics: tape.scalar(physics)?,
            pde: tape.scalar(pde)?,
            ic: ic.map(|n| tape.scalar(n)).transpose()?.unwrap_or(0.0),
            bc: bc.map(|n| tape.scalar(n)).transpose()?.unwrap_or(0.0),
            grad_data,
            grad_physics,
        })
    }

    /// Residual-only loss at the validation midpoints.
    pub fn validation_loss(&self, net: &Mlp) -> Result<f64> {
        pde_loss(net, &self.problem, &self.validation)
    }
}
