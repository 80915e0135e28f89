//! Multiobjective core: dominance, non-dominance filtering, weighted-sum
//! sweeps, the MGDA common descent direction and Pareto criticality.

use std::fmt;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::problems::check_alpha;
use crate::train::{run_adam, BiEval, BiObjective, RunOutcome, Step, TrainConfig};

/// Tolerance below which a (scaled) criticality measure counts as Pareto critical.
pub const CRITICALITY_TOL: f64 = 1e-6;

const FRANK_WOLFE_MAX_ITER: usize = 10_000;
const FRANK_WOLFE_TOL: f64 = 1e-10;

/// `a` dominates `b` when it is no worse everywhere and strictly better somewhere.
pub fn dominates(a: &[f64], b: &[f64]) -> Result<bool> {
    check_dim("dominance operands", a.len(), b.len())?;
    Ok(dominates_unchecked(a, b))
}

pub(crate) fn dominates_unchecked(a: &[f64], b: &[f64]) -> bool {
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strict = true;
        }
    }
    strict
}

/// Indices (ascending) of the points not dominated by any other point.
/// Duplicates do not dominate each other and are all kept.
pub fn nondominated_indices<P: AsRef<[f64]>>(points: &[P]) -> Vec<usize> {
    if points.iter().all(|p| p.as_ref().len() == 2) {
        return nondominated_indices_2d(points);
    }
    (0..points.len())
        .filter(|&i| {
            !points
                .iter()
                .any(|q| dominates_unchecked(q.as_ref(), points[i].as_ref()))
        })
        .collect()
}

// Sweep in (f1, f2) order: a point is dominated iff some point with smaller
// f1 has f2 <= its f2, or a point with equal f1 has strictly smaller f2.
fn nondominated_indices_2d<P: AsRef<[f64]>>(points: &[P]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    let key = |i: usize| (points[i].as_ref()[0], points[i].as_ref()[1]);
    order.sort_by(|&i, &j| {
        let (a, b) = (key(i), key(j));
        a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1))
    });
    let mut keep = vec![false; points.len()];
    let mut best_before = f64::INFINITY;
    let mut g = 0;
    while g < order.len() {
        let f1 = key(order[g]).0;
        let mut end = g;
        while end < order.len() && key(order[end]).0 == f1 {
            end += 1;
        }
        let group_min = key(order[g]).1;
        for &i in &order[g..end] {
            let f2 = key(i).1;
            keep[i] = !(best_before <= f2 || group_min < f2);
        }
        best_before = best_before.min(group_min);
        g = end;
    }
    (0..points.len()).filter(|&i| keep[i]).collect()
}

/// The non-dominated subset of `points`, in input order.
pub fn nondominated_filter<P: AsRef<[f64]> + Clone>(points: &[P]) -> Vec<P> {
    nondominated_indices(points)
        .into_iter()
        .map(|i| points[i].clone())
        .collect()
}

/// Weighted-sum α values `(base^{j/n} − 1)/(base − 1)` for `j = 0..n`:
/// starts at 0, stays below 1 and clusters near 0.
pub fn ws_alpha_grid(n: usize, base: f64) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::Config(format!("alpha grid needs n >= 2, got {n}")));
    }
    if !(base > 1.0) || !base.is_finite() {
        return Err(Error::Config(format!("alpha grid base must be > 1, got {base}")));
    }
    Ok((0..n)
        .map(|j| (base.powf(j as f64 / n as f64) - 1.0) / (base - 1.0))
        .collect())
}

/// Convex weights γ on the probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexWeights(Vec<f64>);

impl SimplexWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if weights.is_empty() || weights.iter().any(|&w| !(w >= 0.0)) || (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("not a point of the simplex: {weights:?}")));
        }
        Ok(Self(weights))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_gradients(grads: &[Vec<f64>]) -> Result<()> {
    let Some(first) = grads.first() else {
        return Err(Error::Config("need at least one gradient".into()));
    };
    for g in grads {
        check_dim("gradient length", first.len(), g.len())?;
    }
    Ok(())
}

/// Simplex weights minimizing ‖Σ γ_i g_i‖.
fn min_norm_weights(grads: &[Vec<f64>]) -> Vec<f64> {
    match grads.len() {
        1 => vec![1.0],
        2 => {
            let (g1, g2) = (&grads[0], &grads[1]);
            let diff: Vec<f64> = g2.iter().zip(g1).map(|(b, a)| b - a).collect();
            let denom = dot(&diff, &diff);
            let gamma = if denom == 0.0 {
                0.5
            } else {
                (dot(&diff, g2) / denom).clamp(0.0, 1.0)
            };
            vec![gamma, 1.0 - gamma]
        }
        m => frank_wolfe(grads, m),
    }
}

// Frank-Wolfe with away steps on min γᵀMγ over the simplex, M the Gram matrix.
// Away steps give linear convergence when the optimum lies on a face.
fn frank_wolfe(grads: &[Vec<f64>], m: usize) -> Vec<f64> {
    let gram: Vec<Vec<f64>> = (0..m)
        .map(|i| (0..m).map(|j| dot(&grads[i], &grads[j])).collect())
        .collect();
    let mut gamma = vec![1.0 / m as f64; m];
    for _ in 0..FRANK_WOLFE_MAX_ITER {
        let mg: Vec<f64> = (0..m).map(|i| dot(&gram[i], &gamma)).collect();
        let quad = dot(&gamma, &mg);
        let t = (0..m).min_by(|&i, &j| mg[i].total_cmp(&mg[j])).expect("m >= 3");
        let s = (0..m)
            .filter(|&i| gamma[i] > 0.0)
            .max_by(|&i, &j| mg[i].total_cmp(&mg[j]))
            .expect("γ has support");
        let fw_gap = quad - mg[t];
        if fw_gap < FRANK_WOLFE_TOL {
            break;
        }
        let away_gap = mg[s] - quad;
        // Direction d is e_t − γ (toward) or γ − e_s (away); exact line search.
        let (slope, curvature, max_step, toward) = if fw_gap >= away_gap {
            (-fw_gap, gram[t][t] - 2.0 * mg[t] + quad, 1.0, true)
        } else {
            (-away_gap, quad - 2.0 * mg[s] + gram[s][s], gamma[s] / (1.0 - gamma[s]), false)
        };
        let step = if curvature <= 0.0 {
            max_step
        } else {
            (-slope / curvature).clamp(0.0, max_step)
        };
        if toward {
            for g in gamma.iter_mut() {
                *g *= 1.0 - step;
            }
            gamma[t] += step;
        } else {
            for g in gamma.iter_mut() {
                *g *= 1.0 + step;
            }
            gamma[s] -= step;
            if step == max_step {
                gamma[s] = 0.0;
            }
        }
    }
    let total: f64 = gamma.iter().sum();
    gamma.iter().map(|g| (g / total).max(0.0)).collect()
}

fn combine(grads: &[Vec<f64>], gamma: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; grads[0].len()];
    for (g, &w) in grads.iter().zip(gamma) {
        for (o, x) in out.iter_mut().zip(g) {
            *o += w * x;
        }
    }
    out
}

/// Common descent direction `v = −Σ γ_i g_i` with γ minimizing the norm of
/// the convex combination (the dual of the steepest-descent subproblem).
/// With `normalize`, non-zero gradients are first scaled to unit length.
pub fn mgda_direction(grads: &[Vec<f64>], normalize: bool) -> Result<(Vec<f64>, SimplexWeights)> {
    check_gradients(grads)?;
    if grads.len() < 2 {
        return Err(Error::Config("MGDA needs at least two gradients".into()));
    }
    let scaled: Vec<Vec<f64>>;
    let used = if normalize {
        scaled = grads
            .iter()
            .map(|g| {
                let n = norm(g);
                if n > 0.0 {
                    g.iter().map(|x| x / n).collect()
                } else {
                    g.clone()
                }
            })
            .collect();
        &scaled
    } else {
        grads
    };
    let gamma = min_norm_weights(used);
    let v = combine(used, &gamma).into_iter().map(|x| -x).collect();
    Ok((v, SimplexWeights(gamma)))
}

/// `min_γ ‖Σ γ_i g_i‖` over the simplex; zero exactly at Pareto-critical points.
pub fn pareto_critical_measure(grads: &[Vec<f64>]) -> Result<f64> {
    check_gradients(grads)?;
    let gamma = min_norm_weights(grads);
    Ok(norm(&combine(grads, &gamma)))
}

/// Criticality test with the measure scaled by the largest gradient norm.
pub fn is_pareto_critical(grads: &[Vec<f64>]) -> Result<bool> {
    let measure = pareto_critical_measure(grads)?;
    let scale = grads.iter().map(|g| norm(g)).fold(0.0, f64::max);
    let scaled = if scale > 0.0 { measure / scale } else { measure };
    Ok(scaled < CRITICALITY_TOL)
}

/// Which optimizer produced a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ws,
    Mgda,
    Nsga2,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Ws => "ws",
            Method::Mgda => "mgda",
            Method::Nsga2 => "nsga2",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ws" => Ok(Method::Ws),
            "mgda" => Ok(Method::Mgda),
            "nsga2" => Ok(Method::Nsga2),
            other => Err(Error::Parse(format!("unknown method {other:?}"))),
        }
    }
}

/// Sweep coordinate of a run: the WS weight or the initialization seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepTag {
    Alpha(f64),
    Seed(u64),
}

impl fmt::Display for SweepTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SweepTag::Alpha(a) => write!(f, "{a}"),
            SweepTag::Seed(s) => write!(f, "{s}"),
        }
    }
}

/// One point in objective space with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectivePoint {
    /// `[L_DATA, L_PHYSICS]`.
    pub losses: [f64; 2],
    pub method: Method,
    pub tag: SweepTag,
    pub epoch: usize,
    pub critical_measure: f64,
    /// Where the parameter snapshot was written, if anywhere.
    pub snapshot: Option<String>,
}

impl AsRef<[f64]> for ObjectivePoint {
    fn as_ref(&self) -> &[f64] {
        &self.losses
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct FrontRow {
    method: String,
    alpha_or_seed: String,
    epoch: usize,
    loss_data: f64,
    loss_physics: f64,
    critical_measure: f64,
}

/// CSV `method,alpha_or_seed,epoch,loss_data,loss_physics,critical_measure`.
pub fn write_front_csv<W: Write>(w: W, points: &[ObjectivePoint]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for p in points {
        wr.serialize(FrontRow {
            method: p.method.to_string(),
            alpha_or_seed: p.tag.to_string(),
            epoch: p.epoch,
            loss_data: p.losses[0],
            loss_physics: p.losses[1],
            critical_measure: p.critical_measure,
        })?;
    }
    // Header only for an empty front.
    if points.is_empty() {
        wr.write_record(["method", "alpha_or_seed", "epoch", "loss_data", "loss_physics", "critical_measure"])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_front_csv<R: Read>(r: R) -> Result<Vec<ObjectivePoint>> {
    let mut rd = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for row in rd.deserialize() {
        let row: FrontRow = row?;
        let method: Method = row.method.parse()?;
        let tag = match method {
            Method::Ws => SweepTag::Alpha(
                row.alpha_or_seed
                    .parse()
                    .map_err(|e| Error::Parse(format!("alpha {:?}: {e}", row.alpha_or_seed)))?,
            ),
            _ => SweepTag::Seed(
                row.alpha_or_seed
                    .parse()
                    .map_err(|e| Error::Parse(format!("seed {:?}: {e}", row.alpha_or_seed)))?,
            ),
        };
        out.push(ObjectivePoint {
            losses: [row.loss_data, row.loss_physics],
            method,
            tag,
            epoch: row.epoch,
            critical_measure: row.critical_measure,
            snapshot: None,
        });
    }
    Ok(out)
}

/// A finished gradient-based run and its reported point.
#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub outcome: RunOutcome,
    pub point: ObjectivePoint,
}

fn report_point<O: BiObjective + ?Sized>(
    objective: &O,
    outcome: &RunOutcome,
    method: Method,
    tag: SweepTag,
) -> Result<ObjectivePoint> {
    let eval = objective.evaluate(&outcome.selected_params, true)?;
    let grads = eval.grads.expect("gradients requested");
    Ok(ObjectivePoint {
        losses: eval.losses,
        method,
        tag,
        epoch: outcome.selected_epoch,
        critical_measure: pareto_critical_measure(&grads)?,
        snapshot: None,
    })
}

fn gradients(eval: &BiEval) -> Result<&[Vec<f64>; 2]> {
    eval.grads
        .as_ref()
        .ok_or_else(|| Error::Usage("training step evaluated without gradients".into()))
}

/// Adam on α·L_DATA + (1 − α)·L_PHYSICS from the initialization `seed`.
pub fn weighted_sum_train<O: BiObjective + ?Sized>(
    objective: &O,
    alpha: f64,
    seed: u64,
    cfg: &TrainConfig,
) -> Result<TrainedRun> {
    check_alpha(alpha)?;
    let init = objective.initial_params(seed)?;
    let outcome = run_adam(objective, init, cfg, |eval| {
        let [gd, gp] = gradients(eval)?;
        let gradient = gd.iter().zip(gp).map(|(d, p)| alpha * d + (1.0 - alpha) * p).collect();
        Ok(Step {
            gradient,
            monitored: alpha * eval.losses[0] + (1.0 - alpha) * eval.losses[1],
        })
    })?;
    let point = report_point(objective, &outcome, Method::Ws, SweepTag::Alpha(alpha))?;
    Ok(TrainedRun { outcome, point })
}

/// Adam driven by the MGDA common descent direction instead of a gradient.
pub fn mgda_train<O: BiObjective + ?Sized>(
    objective: &O,
    seed: u64,
    normalize: bool,
    cfg: &TrainConfig,
) -> Result<TrainedRun> {
    let init = objective.initial_params(seed)?;
    let outcome = run_adam(objective, init, cfg, |eval| {
        let [gd, gp] = gradients(eval)?;
        let (v, _) = mgda_direction(&[gd.clone(), gp.clone()], normalize)?;
        Ok(Step {
            gradient: v.into_iter().map(|x| -x).collect(),
            monitored: eval.losses[0] + eval.losses[1],
        })
    })?;
    let point = report_point(objective, &outcome, Method::Mgda, SweepTag::Seed(seed))?;
    Ok(TrainedRun { outcome, point })
}

/// Toy problem `L1 = ‖θ − a‖²`, `L2 = ‖θ − b‖²` whose Pareto set is the segment `[a, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiQuadratic {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// Initial points are drawn uniformly from `[-init_radius, init_radius]^n`.
    pub init_radius: f64,
}

impl BiQuadratic {
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        check_dim("bi-quadratic anchors", a.len(), b.len())?;
        Ok(Self { a, b, init_radius: 2.0 })
    }

    /// Distance from `theta` to the segment `[a, b]`.
    pub fn distance_to_pareto_set(&self, theta: &[f64]) -> f64 {
        let ab: Vec<f64> = self.b.iter().zip(&self.a).map(|(b, a)| b - a).collect();
        let at: Vec<f64> = theta.iter().zip(&self.a).map(|(t, a)| t - a).collect();
        let len2 = dot(&ab, &ab);
        let s = if len2 == 0.0 { 0.0 } else { (dot(&at, &ab) / len2).clamp(0.0, 1.0) };
        let diff: Vec<f64> = at.iter().zip(&ab).map(|(x, d)| x - s * d).collect();
        norm(&diff)
    }

    /// Minimizer `α·a + (1 − α)·b` of the weighted sum.
    pub fn ws_minimizer(&self, alpha: f64) -> Vec<f64> {
        self.a.iter().zip(&self.b).map(|(a, b)| alpha * a + (1.0 - alpha) * b).collect()
    }

    /// `‖a − b‖`; the front is `{(s²d², (1−s)²d²) : s ∈ [0, 1]}`.
    pub fn anchor_distance(&self) -> f64 {
        let d: Vec<f64> = self.a.iter().zip(&self.b).map(|(a, b)| a - b).collect();
        norm(&d)
    }

    /// Exact hypervolume of the analytic front `f2 = (d − √f1)²`, `f1 ∈ [0, d²]`,
    /// with respect to `reference`.
    pub fn front_hypervolume(&self, reference: [f64; 2]) -> f64 {
        let d = self.anchor_distance();
        let d2 = d * d;
        let [r1, r2] = reference;
        if r1 <= 0.0 || r2 <= 0.0 {
            return 0.0;
        }
        // ∫ (d − √x)² dx = d²x − (4/3)d·x^{3/2} + x²/2
        let integral = |x: f64| d2 * x - 4.0 / 3.0 * d * x.powf(1.5) + 0.5 * x * x;
        let lo = (d - r2.sqrt()).max(0.0).powi(2);
        let hi = r1.min(d2);
        let curved = if hi > lo {
            r2 * (hi - lo) - (integral(hi) - integral(lo))
        } else {
            0.0
        };
        curved + (r1 - d2).max(0.0) * r2
    }
}

impl BiObjective for BiQuadratic {
    fn param_count(&self) -> usize {
        self.a.len()
    }

    fn initial_params(&self, seed: u64) -> Result<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = self.init_radius;
        Ok((0..self.a.len()).map(|_| rng.random_range(-r..=r)).collect())
    }

    fn evaluate(&self, params: &[f64], with_grad: bool) -> Result<BiEval> {
        check_dim("bi-quadratic parameters", self.a.len(), params.len())?;
        let da: Vec<f64> = params.iter().zip(&self.a).map(|(t, a)| t - a).collect();
        let db: Vec<f64> = params.iter().zip(&self.b).map(|(t, b)| t - b).collect();
        let losses = [dot(&da, &da), dot(&db, &db)];
        let grads = with_grad.then(|| {
            [
                da.iter().map(|x| 2.0 * x).collect(),
                db.iter().map(|x| 2.0 * x).collect(),
            ]
        });
        Ok(BiEval { losses, grads })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::SchedulerConfig;
    use proptest::prelude::*;
    use rand::Rng;

    fn brute_force_front(points: &[[f64; 2]]) -> Vec<usize> {
        (0..points.len())
            .filter(|&i| (0..points.len()).all(|j| !dominates(&points[j], &points[i]).unwrap()))
            .collect()
    }

    #[test]
    fn dominance_examples() {
        assert!(dominates(&[1.0, 2.0], &[2.0, 3.0]).unwrap());
        assert!(!dominates(&[1.0, 2.0], &[1.0, 2.0]).unwrap());
        assert!(!dominates(&[1.0, 3.0], &[3.0, 1.0]).unwrap());
        assert!(!dominates(&[3.0, 1.0], &[1.0, 3.0]).unwrap());
        assert!(matches!(dominates(&[1.0], &[1.0, 2.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn filter_examples() {
        let pts = vec![[1.0, 2.0], [2.0, 1.0], [2.0, 2.0]];
        assert_eq!(nondominated_filter(&pts), vec![[1.0, 2.0], [2.0, 1.0]]);
        assert_eq!(nondominated_filter(&[[3.0, 4.0]]), vec![[3.0, 4.0]]);
        let dup = vec![[1.0, 1.0], [2.0, 0.5], [1.0, 1.0]];
        assert_eq!(nondominated_indices(&dup), vec![0, 1, 2]);
        let empty: Vec<[f64; 2]> = Vec::new();
        assert!(nondominated_filter(&empty).is_empty());
    }

    #[test]
    fn filter_matches_brute_force_on_500_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<[f64; 2]> = (0..500)
            .map(|_| {
                let x: f64 = rng.random();
                [x, (1.0 - x).max(0.0) + 0.3 * rng.random::<f64>()]
            })
            .collect();
        assert_eq!(nondominated_indices(&pts), brute_force_front(&pts));
    }

    #[test]
    fn filter_general_dimension() {
        let pts = vec![vec![1.0, 2.0, 3.0], vec![0.0, 2.0, 3.0], vec![3.0, 0.0, 0.0]];
        assert_eq!(nondominated_indices(&pts), vec![1, 2]);
    }

    #[test]
    fn alpha_grid_examples() {
        let g = ws_alpha_grid(3, 80.0).unwrap();
        assert_eq!(g[0], 0.0);
        let oracle = (80f64.cbrt() - 1.0) / 79.0;
        assert!((g[1] - oracle).abs() < 1e-15);
        assert!((g[1] - 0.04188).abs() < 1e-5);
        for n in 4..40 {
            let g = ws_alpha_grid(n, 80.0).unwrap();
            let mut sorted = g.clone();
            sorted.sort_by(f64::total_cmp);
            assert!(sorted[n / 2] < 0.5);
            assert!(g.windows(2).all(|w| w[0] < w[1]));
            assert!(g.iter().all(|&a| (0.0..1.0).contains(&a)));
        }
        assert!(ws_alpha_grid(1, 80.0).is_err());
        assert!(ws_alpha_grid(5, 1.0).is_err());
        assert!(ws_alpha_grid(5, f64::NAN).is_err());
    }

    #[test]
    fn mgda_examples() {
        let g = vec![0.3, -1.2, 2.0];
        let (v, gamma) = mgda_direction(&[g.clone(), g.clone()], false).unwrap();
        assert_eq!(gamma.as_slice(), &[0.5, 0.5]);
        assert_eq!(v, g.iter().map(|x| -x).collect::<Vec<_>>());

        let (v, _) = mgda_direction(&[vec![1.0, 0.0], vec![-1.0, 0.0]], false).unwrap();
        assert!(v.iter().all(|x| x.abs() < 1e-15));

        let (v, gamma) = mgda_direction(&[vec![1.0, 0.0], vec![0.0, 1.0]], false).unwrap();
        // Brute force over a dense grid of γ.
        let best = (0..=1_000_000)
            .map(|k| k as f64 / 1e6)
            .min_by(|a, b| {
                let f = |g: f64| g * g + (1.0 - g) * (1.0 - g);
                f(*a).total_cmp(&f(*b))
            })
            .unwrap();
        assert!((gamma.as_slice()[0] - best).abs() < 1e-6);
        assert!((v[0] + 0.5).abs() < 1e-12 && (v[1] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn mgda_errors_and_normalization() {
        assert!(mgda_direction(&[], false).is_err());
        assert!(mgda_direction(&[vec![1.0]], false).is_err());
        assert!(mgda_direction(&[vec![1.0], vec![1.0, 2.0]], false).is_err());
        // A zero gradient stays zero: the min-norm combination is then zero.
        let (v, _) = mgda_direction(&[vec![0.0, 0.0], vec![3.0, 4.0]], true).unwrap();
        assert_eq!(v, vec![0.0, 0.0]);
        // Normalization equalizes scales: (10, 0) and (0, 1) give the bisector.
        let (v, gamma) = mgda_direction(&[vec![10.0, 0.0], vec![0.0, 1.0]], true).unwrap();
        assert!((gamma.as_slice()[0] - 0.5).abs() < 1e-12);
        assert!((v[0] - v[1]).abs() < 1e-12);
    }

    #[test]
    fn frank_wolfe_matches_closed_form_and_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let g: Vec<Vec<f64>> = (0..3)
                .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let fw = min_norm_weights(&g);
            let value = |w: &[f64]| norm(&combine(&g, w));
            let mut best = f64::INFINITY;
            let steps = 200;
            for i in 0..=steps {
                for j in 0..=(steps - i) {
                    let w = [i as f64 / steps as f64, j as f64 / steps as f64, (steps - i - j) as f64 / steps as f64];
                    best = best.min(value(&w));
                }
            }
            assert!(value(&fw) <= best + 1e-6, "{} vs {}", value(&fw), best);
            assert!((fw.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn criticality_examples() {
        assert_eq!(pareto_critical_measure(&[vec![0.0, 0.0]]).unwrap(), 0.0);
        assert_eq!(pareto_critical_measure(&[vec![1.0, -2.0], vec![-1.0, 2.0]]).unwrap(), 0.0);
        let m = pareto_critical_measure(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!((m - 0.5f64.sqrt()).abs() < 1e-12);
        assert!(is_pareto_critical(&[vec![1e3, 0.0], vec![-1e3, 1e-7]]).unwrap());
        assert!(!is_pareto_critical(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap());
        assert!(is_pareto_critical(&[vec![0.0], vec![0.0]]).unwrap());
    }

    #[test]
    fn simplex_weights_validation() {
        assert!(SimplexWeights::new(vec![0.25, 0.75]).is_ok());
        assert!(SimplexWeights::new(vec![0.5, 0.6]).is_err());
        assert!(SimplexWeights::new(vec![-0.1, 1.1]).is_err());
        assert!(SimplexWeights::new(vec![]).is_err());
    }

    #[test]
    fn front_csv_round_trip() {
        let pts = vec![
            ObjectivePoint {
                losses: [0.25, 1e-7],
                method: Method::Ws,
                tag: SweepTag::Alpha(0.041),
                epoch: 300,
                critical_measure: 1.5e-3,
                snapshot: None,
            },
            ObjectivePoint {
                losses: [0.5, 0.0],
                method: Method::Mgda,
                tag: SweepTag::Seed(77),
                epoch: 0,
                critical_measure: 0.0,
                snapshot: None,
            },
        ];
        let mut buf = Vec::new();
        write_front_csv(&mut buf, &pts).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("method,alpha_or_seed,epoch,loss_data,loss_physics,critical_measure\nws,0.041,300,"));
        assert_eq!(read_front_csv(buf.as_slice()).unwrap(), pts);

        let mut empty = Vec::new();
        write_front_csv(&mut empty, &[]).unwrap();
        assert_eq!(
            String::from_utf8(empty).unwrap(),
            "method,alpha_or_seed,epoch,loss_data,loss_physics,critical_measure\n"
        );
    }

    pub(crate) fn toy() -> BiQuadratic {
        BiQuadratic::new(vec![0.5, -0.25], vec![-0.3, 0.6]).unwrap()
    }

    pub(crate) fn toy_config() -> TrainConfig {
        TrainConfig {
            lr: 0.01,
            epochs: 4000,
            scheduler: SchedulerConfig {
                patience: 100,
                min_lr: 1e-9,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn weighted_sum_recovers_analytic_minimizers() {
        let toy = toy();
        for alpha in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let run = weighted_sum_train(&toy, alpha, 1, &toy_config()).unwrap();
            let target = toy.ws_minimizer(alpha);
            let err = norm(&run.outcome.selected_params.iter().zip(&target).map(|(a, b)| a - b).collect::<Vec<_>>());
            assert!(err < 1e-3, "alpha {alpha}: err {err}");
            assert!(toy.distance_to_pareto_set(&run.outcome.selected_params) < 1e-3);
        }
        assert!(weighted_sum_train(&toy, 1.5, 1, &toy_config()).is_err());
    }

    #[test]
    fn mgda_reaches_pareto_set() {
        let toy = toy();
        for seed in 0..5 {
            let run = mgda_train(&toy, seed, false, &toy_config()).unwrap();
            assert!(run.point.critical_measure < 1e-6, "seed {seed}: {}", run.point.critical_measure);
            assert!(toy.distance_to_pareto_set(&run.outcome.final_params) < 1e-3);
        }
    }

    #[test]
    fn mgda_started_at_endpoint_stays_on_segment() {
        struct AtA(BiQuadratic);
        impl BiObjective for AtA {
            fn param_count(&self) -> usize {
                self.0.param_count()
            }
            fn initial_params(&self, _seed: u64) -> Result<Vec<f64>> {
                Ok(self.0.a.clone())
            }
            fn evaluate(&self, p: &[f64], g: bool) -> Result<BiEval> {
                self.0.evaluate(p, g)
            }
        }
        let obj = AtA(toy());
        let first = obj.evaluate(&obj.0.a, true).unwrap();
        let (v, _) = mgda_direction(first.grads.as_ref().unwrap(), false).unwrap();
        assert!(v.iter().all(|x| *x == 0.0));
        let run = mgda_train(&obj, 0, false, &toy_config()).unwrap();
        assert!(obj.0.distance_to_pareto_set(&run.outcome.final_params) < 1e-3);
    }

    #[test]
    fn mgda_is_deterministic() {
        let toy = toy();
        let cfg = TrainConfig { epochs: 300, ..toy_config() };
        let a = mgda_train(&toy, 9, true, &cfg).unwrap();
        let b = mgda_train(&toy, 9, true, &cfg).unwrap();
        assert_eq!(a.point, b.point);
        assert_eq!(a.outcome.final_params, b.outcome.final_params);
    }

    #[test]
    fn toy_hypervolume_integral() {
        // Numerical integration of the dominated area as an oracle.
        let toy = toy();
        let d = toy.anchor_distance();
        let r = [2.0, 3.0];
        // Substituting f1 = s² removes the square-root singularity.
        let n = 200_000;
        let h = d / n as f64;
        let under: f64 = (0..n)
            .map(|k| {
                let s = (k as f64 + 0.5) * h;
                (d - s).powi(2) * 2.0 * s * h
            })
            .sum();
        assert!((toy.front_hypervolume(r) - (r[0] * r[1] - under)).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn filter_output_is_mutually_nondominated(pts in prop::collection::vec((0u8..20, 0u8..20), 0..80)) {
            let pts: Vec<[f64; 2]> = pts.into_iter().map(|(a, b)| [a as f64, b as f64]).collect();
            let idx = nondominated_indices(&pts);
            prop_assert_eq!(&idx, &brute_force_front(&pts));
            for &i in &idx {
                for &j in &idx {
                    prop_assert!(!dominates(&pts[i], &pts[j]).unwrap());
                }
            }
        }

        #[test]
        fn mgda_common_descent(g1 in prop::collection::vec(-5.0f64..5.0, 3), g2 in prop::collection::vec(-5.0f64..5.0, 3)) {
            let (v, gamma) = mgda_direction(&[g1.clone(), g2.clone()], false).unwrap();
            let vv = dot(&v, &v);
            prop_assert!(dot(&g1, &v) <= -vv + 1e-9);
            prop_assert!(dot(&g2, &v) <= -vv + 1e-9);
            let s: f64 = gamma.as_slice().iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-12);
            prop_assert!(gamma.as_slice().iter().all(|&w| w >= 0.0));
        }

        #[test]
        fn ws_points_are_on_the_segment(alpha in 0.0f64..=1.0) {
            let toy = toy();
            let m = toy.ws_minimizer(alpha);
            prop_assert!(toy.distance_to_pareto_set(&m) < 1e-12);
            let g = toy.evaluate(&m, true).unwrap().grads.unwrap();
            prop_assert!(pareto_critical_measure(&g).unwrap() < 1e-12);
        }
    }
}
