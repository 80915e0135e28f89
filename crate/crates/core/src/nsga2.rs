//! NSGA-II over flattened parameter vectors.

use log::{debug, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::moo::{dominates_unchecked, nondominated_indices, Method, ObjectivePoint, SweepTag};
use crate::train::BiObjective;

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub genome: Vec<f64>,
    /// `(L_DATA, L_PHYSICS)`; `None` until evaluated.
    pub objectives: Option<[f64; 2]>,
    pub rank: usize,
    pub crowding: f64,
}

impl Individual {
    pub fn new(genome: Vec<f64>) -> Self {
        Self {
            genome,
            objectives: None,
            rank: 0,
            crowding: 0.0,
        }
    }

    pub fn evaluated(genome: Vec<f64>, objectives: [f64; 2]) -> Self {
        Self {
            objectives: Some(objectives),
            ..Self::new(genome)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NSGAConfig {
    pub population: usize,
    pub generations: usize,
    pub crossover_prob: f64,
    pub eta_crossover: f64,
    /// Per-gene mutation probability; `None` means 1/genome length.
    pub mutation_prob: Option<f64>,
    pub eta_mutation: f64,
    /// Genes are kept in `[-bound, bound]`.
    pub bound: f64,
    pub seed: u64,
}

impl Default for NSGAConfig {
    fn default() -> Self {
        Self {
            population: 100,
            generations: 100,
            crossover_prob: 0.9,
            eta_crossover: 15.0,
            mutation_prob: None,
            eta_mutation: 20.0,
            bound: 5.0,
            seed: 0,
        }
    }
}

impl NSGAConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 || self.population % 2 != 0 {
            return Err(Error::Config(format!(
                "population must be even and >= 2, got {}",
                self.population
            )));
        }
        let probs = [Some(self.crossover_prob), self.mutation_prob];
        if probs.iter().flatten().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config("probabilities must lie in [0, 1]".into()));
        }
        if !(self.eta_crossover >= 0.0 && self.eta_mutation >= 0.0) {
            return Err(Error::Config("distribution indices must be >= 0".into()));
        }
        if !(self.bound > 0.0 && self.bound.is_finite()) {
            return Err(Error::Config(format!("bound must be positive, got {}", self.bound)));
        }
        Ok(())
    }
}

fn objectives_of(pop: &[Individual]) -> Result<Vec<[f64; 2]>> {
    pop.iter()
        .enumerate()
        .map(|(i, ind)| {
            ind.objectives
                .ok_or_else(|| Error::Usage(format!("individual {i} has not been evaluated")))
        })
        .collect()
}

/// Fronts of indices: front 0 is non-dominated, front k is non-dominated once
/// fronts before it are removed.
pub fn fast_nondominated_sort(population: &[Individual]) -> Result<Vec<Vec<usize>>> {
    Ok(sort_points(&objectives_of(population)?))
}

pub(crate) fn sort_points(objs: &[[f64; 2]]) -> Vec<Vec<usize>> {
    let n = objs.len();
    let mut dominated_by = vec![0usize; n];
    let mut dominates_list: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            if dominates_unchecked(&objs[i], &objs[j]) {
                dominates_list[i].push(j);
                dominated_by[j] += 1;
            } else if dominates_unchecked(&objs[j], &objs[i]) {
                dominates_list[j].push(i);
                dominated_by[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| dominated_by[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominates_list[i] {
                dominated_by[j] -= 1;
                if dominated_by[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(std::mem::replace(&mut current, next));
    }
    fronts
}

/// Crowding distance of each point of a front. Distances are computed over
/// the distinct objective vectors, with +∞ at the extremes of each objective;
/// repeated copies of a vector after its first occurrence get 0.
pub fn crowding_distance(front: &[[f64; 2]]) -> Vec<f64> {
    let key = |p: &[f64; 2]| (p[0].to_bits(), p[1].to_bits());
    let mut seen = std::collections::HashSet::new();
    let first: Vec<bool> = front.iter().map(|p| seen.insert(key(p))).collect();
    let distinct: Vec<[f64; 2]> = front.iter().zip(&first).filter(|(_, &f)| f).map(|(p, _)| *p).collect();
    let mut dist = vec![0.0; distinct.len()];
    if distinct.len() <= 2 {
        dist.fill(f64::INFINITY);
    } else {
        for m in 0..2 {
            let mut order: Vec<usize> = (0..distinct.len()).collect();
            order.sort_by(|&i, &j| distinct[i][m].total_cmp(&distinct[j][m]).then(distinct[i][1 - m].total_cmp(&distinct[j][1 - m])));
            let lo = distinct[order[0]][m];
            let hi = distinct[order[order.len() - 1]][m];
            let range = hi - lo;
            dist[order[0]] = f64::INFINITY;
            dist[order[order.len() - 1]] = f64::INFINITY;
            for w in order.windows(3) {
                dist[w[1]] += if range > 0.0 && range.is_finite() {
                    (distinct[w[2]][m] - distinct[w[0]][m]) / range
                } else {
                    f64::INFINITY
                };
            }
        }
    }
    let mut it = dist.into_iter();
    first.iter().map(|&f| if f { it.next().expect("one per distinct point") } else { 0.0 }).collect()
}

/// Area dominated by `front` and bounded by `reference`. Points not weakly
/// dominating the reference are dropped with a warning.
pub fn hypervolume_2d(front: &[[f64; 2]], reference: [f64; 2]) -> f64 {
    let inside: Vec<[f64; 2]> = front
        .iter()
        .copied()
        .filter(|p| p[0] <= reference[0] && p[1] <= reference[1])
        .collect();
    if inside.len() < front.len() {
        warn!(
            "hypervolume: {} point(s) beyond the reference point excluded",
            front.len() - inside.len()
        );
    }
    let mut pts: Vec<[f64; 2]> = nondominated_indices(&inside).into_iter().map(|i| inside[i]).collect();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let mut area = 0.0;
    for (i, p) in pts.iter().enumerate() {
        let next_x = pts.get(i + 1).map_or(reference[0], |q| q[0]);
        area += (next_x - p[0]) * (reference[1] - p[1]);
    }
    area
}

fn sbx_pair(rng: &mut ChaCha8Rng, x1: f64, x2: f64, eta: f64, lo: f64, hi: f64) -> (f64, f64) {
    if rng.random::<f64>() > 0.5 || (x1 - x2).abs() <= 1e-14 {
        return (x1, x2);
    }
    let (y1, y2) = if x1 < x2 { (x1, x2) } else { (x2, x1) };
    let r: f64 = rng.random();
    let spread = |beta: f64| {
        let alpha = 2.0 - beta.powf(-(eta + 1.0));
        if r <= 1.0 / alpha {
            (r * alpha).powf(1.0 / (eta + 1.0))
        } else {
            (1.0 / (2.0 - r * alpha)).powf(1.0 / (eta + 1.0))
        }
    };
    let bq1 = spread(1.0 + 2.0 * (y1 - lo) / (y2 - y1));
    let bq2 = spread(1.0 + 2.0 * (hi - y2) / (y2 - y1));
    let c1 = (0.5 * ((y1 + y2) - bq1 * (y2 - y1))).clamp(lo, hi);
    let c2 = (0.5 * ((y1 + y2) + bq2 * (y2 - y1))).clamp(lo, hi);
    if rng.random::<f64>() < 0.5 {
        (c2, c1)
    } else {
        (c1, c2)
    }
}

/// Simulated binary crossover with bounds.
pub fn sbx_crossover(
    rng: &mut ChaCha8Rng,
    a: &[f64],
    b: &[f64],
    prob: f64,
    eta: f64,
    bound: f64,
) -> (Vec<f64>, Vec<f64>) {
    let (mut c1, mut c2) = (a.to_vec(), b.to_vec());
    if rng.random::<f64>() < prob {
        for i in 0..a.len() {
            let (u, v) = sbx_pair(rng, a[i], b[i], eta, -bound, bound);
            c1[i] = u;
            c2[i] = v;
        }
    }
    (c1, c2)
}

/// Bounded polynomial mutation, in place.
pub fn polynomial_mutation(rng: &mut ChaCha8Rng, genome: &mut [f64], prob: f64, eta: f64, bound: f64) {
    let (lo, hi) = (-bound, bound);
    let pow = 1.0 / (eta + 1.0);
    for y in genome.iter_mut() {
        if rng.random::<f64>() >= prob {
            continue;
        }
        let d1 = (*y - lo) / (hi - lo);
        let d2 = (hi - *y) / (hi - lo);
        let r: f64 = rng.random();
        let dq = if r < 0.5 {
            let val = 2.0 * r + (1.0 - 2.0 * r) * (1.0 - d1).powf(eta + 1.0);
            val.powf(pow) - 1.0
        } else {
            let val = 2.0 * (1.0 - r) + 2.0 * (r - 0.5) * (1.0 - d2).powf(eta + 1.0);
            1.0 - val.powf(pow)
        };
        *y = (*y + dq * (hi - lo)).clamp(lo, hi);
    }
}

fn better(a: &Individual, b: &Individual) -> bool {
    a.rank < b.rank || (a.rank == b.rank && a.crowding > b.crowding)
}

fn tournament<'p>(rng: &mut ChaCha8Rng, pop: &'p [Individual]) -> &'p Individual {
    let a = &pop[rng.random_range(0..pop.len())];
    let b = &pop[rng.random_range(0..pop.len())];
    if better(b, a) {
        b
    } else {
        a
    }
}

fn evaluate_all<O: BiObjective + ?Sized>(objective: &O, genomes: Vec<Vec<f64>>) -> Result<Vec<Individual>> {
    genomes
        .into_par_iter()
        .map(|g| {
            let losses = match objective.evaluate(&g, false) {
                Ok(e) if e.losses.iter().all(|l| l.is_finite()) => e.losses,
                Ok(_) | Err(Error::NonFinite(_)) => [f64::INFINITY; 2],
                Err(e) => return Err(e),
            };
            Ok(Individual::evaluated(g, losses))
        })
        .collect()
}

/// Ranks and crowding distances for the whole population.
fn assign_rank_and_crowding(pop: &mut [Individual]) -> Result<Vec<Vec<usize>>> {
    let fronts = fast_nondominated_sort(pop)?;
    for (rank, front) in fronts.iter().enumerate() {
        let objs: Vec<[f64; 2]> = front.iter().map(|&i| pop[i].objectives.expect("evaluated")).collect();
        for (&i, d) in front.iter().zip(crowding_distance(&objs)) {
            pop[i].rank = rank;
            pop[i].crowding = d;
        }
    }
    Ok(fronts)
}

/// Elitist survival: whole fronts while they fit, then the most crowded-apart
/// members of the first front that does not.
fn survivors(mut pool: Vec<Individual>, size: usize) -> Result<Vec<Individual>> {
    let fronts = assign_rank_and_crowding(&mut pool)?;
    let mut keep = Vec::with_capacity(size);
    for front in fronts {
        if keep.len() + front.len() <= size {
            keep.extend(front);
            continue;
        }
        let mut last = front;
        last.sort_by(|&a, &b| pool[b].crowding.total_cmp(&pool[a].crowding).then(a.cmp(&b)));
        last.truncate(size - keep.len());
        keep.extend(last);
        break;
    }
    keep.sort_unstable();
    let mut slots: Vec<Option<Individual>> = pool.into_iter().map(Some).collect();
    Ok(keep.into_iter().map(|i| slots[i].take().expect("unique index")).collect())
}

#[derive(Debug, Clone)]
pub struct Evolution {
    pub population: Vec<Individual>,
    /// Rank-0 members of the final population.
    pub front: Vec<Individual>,
    /// Rank-0 objectives after each generation; entry 0 is the initial population.
    pub snapshots: Vec<Vec<[f64; 2]>>,
    pub seed: u64,
}

impl Evolution {
    /// Snapshot `generation` in the front CSV row format. Criticality is not
    /// computed for snapshots and is reported as NaN.
    pub fn snapshot_points(&self, generation: usize) -> Option<Vec<ObjectivePoint>> {
        self.snapshots.get(generation).map(|front| {
            front
                .iter()
                .map(|&losses| ObjectivePoint {
                    losses,
                    method: Method::Nsga2,
                    tag: SweepTag::Seed(self.seed),
                    epoch: generation,
                    critical_measure: f64::NAN,
                    snapshot: None,
                })
                .collect()
        })
    }
}

fn rank0(pop: &[Individual]) -> Vec<[f64; 2]> {
    pop.iter()
        .filter(|i| i.rank == 0)
        .map(|i| i.objectives.expect("evaluated"))
        .collect()
}

/// Runs NSGA-II for `cfg.generations` generations from an initial population
/// drawn by `objective.initial_params`, clamped to the genome bounds.
pub fn evolve<O: BiObjective + ?Sized>(objective: &O, cfg: &NSGAConfig) -> Result<Evolution> {
    cfg.validate()?;
    let n = objective.param_count();
    let p_mut = cfg.mutation_prob.unwrap_or(1.0 / n.max(1) as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut genomes = Vec::with_capacity(cfg.population);
    for _ in 0..cfg.population {
        let mut g = objective.initial_params(rng.random())?;
        check_dim("genome length", n, g.len())?;
        for x in g.iter_mut() {
            *x = x.clamp(-cfg.bound, cfg.bound);
        }
        genomes.push(g);
    }
    let mut pop = evaluate_all(objective, genomes)?;
    assign_rank_and_crowding(&mut pop)?;
    let mut snapshots = vec![rank0(&pop)];

    for generation in 1..=cfg.generations {
        let mut children = Vec::with_capacity(cfg.population);
        while children.len() < cfg.population {
            let a = tournament(&mut rng, &pop);
            let b = tournament(&mut rng, &pop);
            let (mut c1, mut c2) =
                sbx_crossover(&mut rng, &a.genome, &b.genome, cfg.crossover_prob, cfg.eta_crossover, cfg.bound);
            polynomial_mutation(&mut rng, &mut c1, p_mut, cfg.eta_mutation, cfg.bound);
            polynomial_mutation(&mut rng, &mut c2, p_mut, cfg.eta_mutation, cfg.bound);
            children.push(c1);
            children.push(c2);
        }
        let mut pool = pop;
        pool.extend(evaluate_all(objective, children)?);
        pop = survivors(pool, cfg.population)?;
        let front = rank0(&pop);
        debug!("generation {generation}: {} non-dominated", front.len());
        snapshots.push(front);
    }

    let front = pop.iter().filter(|i| i.rank == 0).cloned().collect();
    Ok(Evolution {
        population: pop,
        front,
        snapshots,
        seed: cfg.seed,
    })
}
