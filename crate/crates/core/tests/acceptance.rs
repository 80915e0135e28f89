//! End-to-end acceptance checks. Runs every criterion, prints one PASS/FAIL
//! line each and exits non-zero if any failed.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pinn_moo::autodiff::{forward_jet, Jet2};
use pinn_moo::harness::{run_experiment, selftest_train_config, ExperimentConfig};
use pinn_moo::moo::{
    mgda_direction, mgda_train, nondominated_indices, weighted_sum_train, BiQuadratic, ObjectivePoint, SweepTag,
};
use pinn_moo::network::Mlp;
use pinn_moo::nsga2::{evolve, fast_nondominated_sort, hypervolume_2d, Individual, NSGAConfig};
use pinn_moo::problems::{exact_heat, exact_logistic, total_loss, PinnSetup, Problem};
use pinn_moo::train::{select_checkpoint_threshold, History, HistoryRecord};

type Outcome = Result<String, String>;

const GRAD_RTOL: f64 = 1e-5;
const JET_RTOL: f64 = 1e-4;
// Denominator floor of the relative error, for coordinates that vanish.
const REL_FLOOR: f64 = 1e-8;
const RESIDUAL_ATOL: f64 = 1e-10;
const TOY_DIST_TOL: f64 = 1e-3;
const CRITICAL_TOL: f64 = 1e-6;
const COLLAPSE_TOL: f64 = 1e-2;
const CONVEX_TOL: f64 = 0.02;
const DESCENT_SLACK: f64 = 1e-9;
const GAMMA_TOL: f64 = 1e-6;
const STOP_TAU: f64 = 0.1;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

/// Richardson-extrapolated central difference, O(h⁴).
fn richardson(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    let d = |h: f64| (f(h) - f(-h)) / (2.0 * h);
    (4.0 * d(h / 2.0) - d(h)) / 3.0
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gradient_exactness() -> Outcome {
    let logistic = PinnSetup::standard(Problem::logistic(), 20, 20, 0.1, 1).map_err(|e| e.to_string())?;
    let heat = PinnSetup::standard(Problem::heat(1.0, 1.0), 20, 20, 0.1, 2).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    let mut coords = 0usize;
    for (sizes, setup) in [(&[1usize, 9, 9, 9, 1][..], &logistic), (&[2, 20, 20, 1][..], &heat)] {
        for _ in 0..50 {
            let net = Mlp::init(sizes, rng.random()).map_err(|e| e.to_string())?;
            let alpha: f64 = rng.random();
            let eval = setup.evaluate(&net, true).map_err(|e| e.to_string())?;
            let (gd, gp) = (eval.grad_data.unwrap(), eval.grad_physics.unwrap());
            let p0 = net.flatten();
            for i in 0..p0.len() {
                let g = alpha * gd[i] + (1.0 - alpha) * gp[i];
                let fd = richardson(
                    |h| {
                        let mut p = p0.clone();
                        p[i] += h;
                        total_loss(&net.with_params(&p).unwrap(), setup, alpha).unwrap()
                    },
                    1e-3,
                );
                worst = worst.max(rel_err(g, fd));
                coords += 1;
            }
        }
    }
    check(worst <= GRAD_RTOL, format!("{coords} coordinates, max rel err {worst:.2e} (tol {GRAD_RTOL:.0e})"))
}

fn jet_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = [0.0f64; 3];
    for _ in 0..100 {
        let sizes = [2, rng.random_range(2..16), rng.random_range(2..16), 1];
        let net = Mlp::init(&sizes, rng.random()).map_err(|e| e.to_string())?;
        let (x, t): (f64, f64) = (rng.random(), rng.random());
        let jet = forward_jet(&net, x, t).map_err(|e| e.to_string())?;
        let u = |x: f64, t: f64| net.forward(&[x, t]).unwrap();
        let h = 1e-3;
        let ux = richardson(|d| u(x + d, t), h);
        let ut = richardson(|d| u(x, t + d), h);
        let second = |h: f64| (u(x + h, t) - 2.0 * u(x, t) + u(x - h, t)) / (h * h);
        let uxx = (4.0 * second(h / 2.0) - second(h)) / 3.0;
        for (k, (a, b)) in [(jet.dx, ux), (jet.dt, ut), (jet.dxx, uxx)].into_iter().enumerate() {
            worst[k] = worst[k].max(rel_err(a, b));
        }
    }
    let max = worst.iter().cloned().fold(0.0, f64::max);
    check(
        max <= JET_RTOL,
        format!("100 nets, max rel err u_x {:.1e}, u_t {:.1e}, u_xx {:.1e} (tol {JET_RTOL:.0e})", worst[0], worst[1], worst[2]),
    )
}

fn exact_residuals() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let logistic = Problem::logistic();
    let (length, kappa) = (1.5, 0.7);
    let heat = Problem::heat(length, kappa);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        // Logistic: u = 1/(1 + e^{-t}), u_t = e^{-t}/(1 + e^{-t})².
        let t = rng.random_range(0.0..logistic.t_max());
        let e = (-t).exp();
        let jet = Jet2::new(exact_logistic(t, 1.0), 0.0, e / ((1.0 + e) * (1.0 + e)), 0.0);
        worst = worst.max(logistic.residual(&jet).abs());
        // Heat: u_t = −κ(π/L)²u, u_xx = −(π/L)²u.
        let (x, t) = (rng.random_range(0.0..length), rng.random_range(0.0..heat.t_max()));
        let u = exact_heat(x, t, length, kappa);
        let k2 = (std::f64::consts::PI / length).powi(2);
        let jet = Jet2::new(u, 0.0, -kappa * k2 * u, -k2 * u);
        worst = worst.max(heat.residual(&jet).abs());
    }
    check(worst <= RESIDUAL_ATOL, format!("max |r| {worst:.2e} over 200 points (tol {RESIDUAL_ATOL:.0e})"))
}

fn toy_oracles() -> Outcome {
    let toy = BiQuadratic::new(vec![0.5, -0.25, 0.1], vec![-0.3, 0.6, -0.2]).map_err(|e| e.to_string())?;
    let cfg = selftest_train_config();
    let mut ws_worst: f64 = 0.0;
    for alpha in [0.0, 0.25, 0.5, 0.75] {
        let target = toy.ws_minimizer(alpha);
        for seed in 0..20 {
            let run = weighted_sum_train(&toy, alpha, seed, &cfg).map_err(|e| e.to_string())?;
            let p = &run.outcome.selected_params;
            let d = p.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            ws_worst = ws_worst.max(d);
        }
    }
    let (mut crit, mut dist) = (0.0f64, 0.0f64);
    for seed in 0..20 {
        let run = mgda_train(&toy, 1000 + seed, true, &cfg).map_err(|e| e.to_string())?;
        crit = crit.max(run.point.critical_measure);
        dist = dist.max(toy.distance_to_pareto_set(&run.outcome.selected_params));
    }
    check(
        ws_worst < TOY_DIST_TOL && crit < CRITICAL_TOL && dist < TOY_DIST_TOL,
        format!("ws max distance {ws_worst:.1e}; mgda max criticality {crit:.1e}, max segment distance {dist:.1e}"),
    )
}

fn noise_sweep_config() -> ExperimentConfig {
    ExperimentConfig::from_toml_str(
        r#"
layers = [1, 9, 9, 9, 1]
sigmas = [0.0, 0.1, 0.2]
seed = 7

[problem]
kind = "logistic"

[grid]
n_t = 20

[method]
kind = "ws"
n_alpha = 5

[train]
epochs = 20000
"#,
    )
    .expect("valid config")
}

struct NoiseSweep {
    report: pinn_moo::harness::ExperimentReport,
}

fn alpha_of(p: &ObjectivePoint) -> f64 {
    match p.tag {
        SweepTag::Alpha(a) => a,
        SweepTag::Seed(_) => f64::INFINITY,
    }
}

fn no_conflict_collapse(sweep: &NoiseSweep) -> Outcome {
    let s0 = &sweep.report.sigmas[0];
    let worst = s0.front.filtered.iter().map(|p| p.losses[0].max(p.losses[1])).fold(0.0, f64::max);
    let diam = s0.front.diameter();
    check(
        worst < COLLAPSE_TOL && diam < COLLAPSE_TOL && !s0.front.filtered.is_empty(),
        format!(
            "sigma=0: {} filtered points, max loss {worst:.2e}, diameter {diam:.2e} (tol {COLLAPSE_TOL:.0e})",
            s0.front.filtered.len()
        ),
    )
}

fn conflict_grows_with_noise(sweep: &NoiseSweep) -> Outcome {
    let cfg = &sweep.report.config;
    let mut ok = true;
    let mut parts = Vec::new();
    for s in &sweep.report.sigmas {
        let diam = s.front.diameter();
        if s.sigma > 0.0 {
            // The smallest α of the grid is 0: the physics-only end.
            let end = s
                .front
                .raw
                .iter()
                .min_by(|a, b| alpha_of(a).total_cmp(&alpha_of(b)))
                .ok_or("empty sigma front")?;
            let noise = cfg.setup(s.sigma).map_err(|e| e.to_string())?.dataset.noise;
            let empirical = noise.iter().map(|n| n * n).sum::<f64>() / noise.len() as f64;
            let var = s.sigma * s.sigma;
            let l = end.losses[0];
            ok &= (0.5 * var..=2.0 * var).contains(&l);
            parts.push(format!(
                "sigma={}: L_DATA at smallest alpha {l:.3e} in [{:.3e}, {:.3e}] (empirical noise var {empirical:.3e}), diameter {diam:.3e}",
                s.sigma,
                0.5 * var,
                2.0 * var
            ));
        } else {
            parts.push(format!("sigma=0: diameter {diam:.3e}"));
        }
    }
    let diams: Vec<f64> = sweep.report.sigmas.iter().map(|s| s.front.diameter()).collect();
    let monotone = diams.windows(2).all(|w| w[1] > w[0]);
    ok &= monotone;
    parts.push(format!("diameter increasing: {monotone}"));
    check(ok, parts.join("; "))
}

fn ws_front_convexity(sweep: &NoiseSweep) -> Outcome {
    let s = sweep
        .report
        .sigmas
        .iter()
        .find(|s| s.sigma == 0.1)
        .ok_or("no sigma=0.1 front")?;
    let lin = &s.front.linear;
    let convex = lin.is_convex(CONVEX_TOL);
    check(
        convex == Some(true),
        format!("{lin} (tol {:.0}%); {} (reported only)", 100.0 * CONVEX_TOL, s.front.loglog),
    )
}

fn mgda_invariant() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let f = |g1: &[f64], g2: &[f64], w: f64| -> f64 { g1.iter().zip(g2).map(|(a, b)| (w * a + (1.0 - w) * b).powi(2)).sum() };
    let grid_min = |g1: &[f64], g2: &[f64], lo: f64, hi: f64, n: usize| -> f64 {
        (0..=n)
            .map(|k| lo + (hi - lo) * k as f64 / n as f64)
            .min_by(|a, b| f(g1, g2, *a).total_cmp(&f(g1, g2, *b)))
            .unwrap()
    };
    let (mut slack, mut gamma_err) = (f64::NEG_INFINITY, 0.0f64);
    for _ in 0..1000 {
        let n = rng.random_range(1..=20);
        let mut draw = || -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
        let (g1, g2) = (draw(), draw());
        let (v, gamma) = mgda_direction(&[g1.clone(), g2.clone()], false).map_err(|e| e.to_string())?;
        let vv: f64 = v.iter().map(|x| x * x).sum();
        for g in [&g1, &g2] {
            let gv: f64 = g.iter().zip(&v).map(|(a, b)| a * b).sum();
            slack = slack.max(gv + vv);
        }
        // Two-stage brute force over the weight of g1 (the objective is convex in it).
        let coarse = grid_min(&g1, &g2, 0.0, 1.0, 1000);
        let fine = grid_min(&g1, &g2, (coarse - 2e-3).max(0.0), (coarse + 2e-3).min(1.0), 40_000);
        gamma_err = gamma_err.max((gamma.as_slice()[0] - fine).abs());
    }
    check(
        slack <= DESCENT_SLACK && gamma_err <= GAMMA_TOL,
        format!("max <g_i,v> + |v|^2 = {slack:.1e} (tol {DESCENT_SLACK:.0e}), max gamma error {gamma_err:.1e} (tol {GAMMA_TOL:.0e})"),
    )
}

fn random_points(rng: &mut ChaCha8Rng, n: usize, discrete: bool) -> Vec<[f64; 2]> {
    (0..n)
        .map(|_| {
            if discrete {
                [rng.random_range(0..12) as f64, rng.random_range(0..12) as f64]
            } else {
                [rng.random(), rng.random()]
            }
        })
        .collect()
}

fn dominated_by(a: &[f64; 2], b: &[f64; 2]) -> bool {
    b[0] <= a[0] && b[1] <= a[1] && (b[0] < a[0] || b[1] < a[1])
}

fn nondominance_filter() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut total = 0;
    for set in 0..200 {
        let n = rng.random_range(1..=500);
        let pts = random_points(&mut rng, n, set % 2 == 0);
        let got = nondominated_indices(&pts);
        let brute: Vec<usize> = (0..n).filter(|&i| !pts.iter().any(|q| dominated_by(&pts[i], q))).collect();
        if got != brute {
            return Err(format!("set {set} (n={n}): filter kept {} points, brute force {}", got.len(), brute.len()));
        }
        total += n;
    }
    Ok(format!("200 sets, {total} points, identical to brute force"))
}

fn nsga2_structure() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    for case in 0..100 {
        let n = rng.random_range(1..=200);
        let pts = random_points(&mut rng, n, case % 2 == 0);
        let pop: Vec<Individual> = pts.iter().map(|&p| Individual::evaluated(vec![], p)).collect();
        let mut fronts = fast_nondominated_sort(&pop).map_err(|e| e.to_string())?;
        for f in fronts.iter_mut() {
            f.sort_unstable();
        }
        let mut remaining: Vec<usize> = (0..n).collect();
        let mut peeled = Vec::new();
        while !remaining.is_empty() {
            let front: Vec<usize> = remaining
                .iter()
                .copied()
                .filter(|&i| !remaining.iter().any(|&j| dominated_by(&pts[i], &pts[j])))
                .collect();
            remaining.retain(|i| !front.contains(i));
            peeled.push(front);
        }
        if fronts != peeled {
            return Err(format!("population {case}: sort disagrees with peeling"));
        }
    }

    let toy = BiQuadratic::new(vec![0.5, -0.25], vec![-0.3, 0.6]).map_err(|e| e.to_string())?;
    let evo = evolve(
        &toy,
        &NSGAConfig {
            population: 100,
            generations: 100,
            seed: 11,
            ..Default::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let reference = [4.0, 4.0];
    let hv: Vec<f64> = evo.snapshots.iter().map(|f| hypervolume_2d(f, reference)).collect();
    let drops: Vec<(usize, f64)> = hv
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[1] < w[0])
        .map(|(g, w)| (g + 1, w[0] - w[1]))
        .collect();
    let exact = toy.front_hypervolume(reference);
    let summary = format!(
        "sorting equals peeling on 100 populations; hypervolume {:.6} -> {:.6} (analytic {exact:.6})",
        hv[0],
        hv[hv.len() - 1]
    );
    if drops.is_empty() {
        Ok(format!("{summary}, non-decreasing over {} generations", hv.len() - 1))
    } else {
        let worst = drops.iter().map(|d| d.1).fold(0.0, f64::max);
        Err(format!(
            "{summary}; hypervolume decreased in {} of {} generations (first at generation {}, largest drop {worst:.2e})",
            drops.len(),
            hv.len() - 1,
            drops[0].0
        ))
    }
}

fn history(rows: &[(usize, Option<f64>)]) -> History {
    let mut h = History::default();
    for &(epoch, val) in rows {
        h.push(HistoryRecord {
            epoch,
            loss_data: 0.5,
            loss_physics: 0.2,
            loss_validation: val,
            lr: 1e-3,
        })
        .unwrap();
    }
    h
}

fn stopping_rule() -> Outcome {
    // Gaps (validation − physics) against τ = 0.1, with the expected epoch.
    let cases = [
        // Never above τ: the final epoch.
        (history(&[(0, Some(0.25)), (100, Some(0.29)), (200, Some(0.21))]), 200),
        // Above τ once in the middle.
        (history(&[(0, Some(0.25)), (100, Some(0.35)), (200, Some(0.28)), (300, Some(0.2))]), 100),
        // Above τ several times, gaps lost at some epochs; the last violation wins.
        (
            history(&[(0, Some(0.9)), (50, None), (100, Some(0.31)), (150, Some(0.4)), (200, None), (250, Some(0.3))]),
            150,
        ),
    ];
    let mut got = Vec::new();
    for (h, expected) in &cases {
        let e = select_checkpoint_threshold(h, STOP_TAU);
        if e != Some(*expected) {
            return Err(format!("expected epoch {expected}, got {e:?}"));
        }
        got.push(expected.to_string());
    }
    Ok(format!("selected epochs {} as defined", got.join(", ")))
}

fn files_under(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn reproducibility() -> Outcome {
    let base = r#"
layers = [1, 6, 6, 1]
sigmas = [0.1]
seed = 5

[problem]
kind = "logistic"

[train]
epochs = 300
checkpoint_every = 50
"#;
    let methods = [
        "[method]\nkind = \"ws\"\nn_alpha = 4\n",
        "[method]\nkind = \"mgda\"\nstarts = 4\n",
        "[method]\nkind = \"nsga2\"\npopulation = 20\ngenerations = 10\n",
    ];
    let mut checked = 0;
    for m in methods {
        let cfg = ExperimentConfig::from_toml_str(&format!("{base}{m}")).map_err(|e| e.to_string())?;
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        run_experiment(&cfg, a.path(), 4).map_err(|e| e.to_string())?;
        run_experiment(&cfg, b.path(), 1).map_err(|e| e.to_string())?;
        let (fa, fb) = (files_under(a.path()), files_under(b.path()));
        for name in ["front.csv", "front_linear.svg", "front_loglog.svg"] {
            if !fa.contains_key(name) {
                return Err(format!("{}: {name} missing", cfg.method.method()));
            }
        }
        if fa != fb {
            let differing: Vec<&String> = fa.keys().filter(|k| fa.get(*k) != fb.get(*k)).collect();
            return Err(format!("{}: outputs differ: {differing:?}", cfg.method.method()));
        }
        checked += fa.len();
    }
    Ok(format!("ws, mgda, nsga2: {checked} files byte-identical across two runs (4 and 1 workers)"))
}

fn main() {
    let _ = env_logger::builder().is_test(true).try_init();
    let mut failed = 0;
    let mut report = |id: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {id:>2} PASS [{name}] {d} ({secs:.1}s)"),
            Err(d) => {
                failed += 1;
                println!("criterion {id:>2} FAIL [{name}] {d} ({secs:.1}s)");
            }
        }
    };
    report(1, "gradient exactness", &mut gradient_exactness);
    report(2, "jet exactness", &mut jet_exactness);
    report(3, "exact-solution residuals", &mut exact_residuals);
    report(4, "toy oracles", &mut toy_oracles);

    let start = Instant::now();
    let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let out = tempfile::tempdir().unwrap();
    let sweep = run_experiment(&noise_sweep_config(), out.path(), workers).map(|report| NoiseSweep { report });
    println!("(noise sweep: 3 sigmas x 5 alphas x 20000 epochs in {:.1}s)", start.elapsed().as_secs_f64());
    match &sweep {
        Ok(s) => {
            report(5, "no-conflict collapse", &mut || no_conflict_collapse(s));
            report(6, "conflict grows with noise", &mut || conflict_grows_with_noise(s));
            report(7, "linear-scale convexity", &mut || ws_front_convexity(s));
        }
        Err(e) => {
            for (id, name) in [(5, "no-conflict collapse"), (6, "conflict grows with noise"), (7, "linear-scale convexity")] {
                report(id, name, &mut || Err(format!("noise sweep failed: {e}")));
            }
        }
    }

    report(8, "mgda direction", &mut mgda_invariant);
    report(9, "non-dominance filter", &mut nondominance_filter);
    report(10, "nsga-ii structure", &mut nsga2_structure);
    report(11, "stopping rule", &mut stopping_rule);
    report(12, "reproducibility", &mut reproducibility);

    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
