//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Run a subset by number: `cargo test --test acceptance -- 1 4 5`.
//! Set `FLARE_ACCEPTANCE_OUT=<dir>` to keep the end-to-end run outputs.

mod common;

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use flare_core::channel::{achievable_rate, effective_power, los_probability, received_power, EnvConstants};
use flare_core::clustering::{mean_silhouette, select_k, Point};
use flare_core::harness::benchmark::{run_benchmark, BenchmarkSettings};
use flare_core::harness::cli::run_with;
use flare_core::harness::config::ExperimentConfig;
use flare_core::harness::experiment::{run_evaluation, run_experiment, run_simulation, RunSummary};
use flare_core::learn::{Head, Method, Mlp};
use flare_core::mobility::{init_positions, step_frame, GridPos, GridWorld, UeState};
use flare_core::rng::{SeedTree, Stream};
use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn relative(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

// 1. channel math against 50-digit reference values

fn channel_oracle() -> Outcome {
    let text = include_str!("data/channel_reference.csv");
    let env = EnvConstants::default();
    let mut worst = [0.0f64; 4];
    let mut rows = 0;
    for line in text.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        let got = [
            los_probability(v[0], &env).unwrap(),
            received_power(v[2], v[3], v[4], v[5]).unwrap(),
            effective_power(v[7], v[8], v[9]),
            achievable_rate(v[11], v[12], v[13], v[14]),
        ];
        for (w, (g, want)) in worst.iter_mut().zip(got.iter().zip([v[1], v[6], v[10], v[15]])) {
            *w = w.max(relative(*g, want));
        }
        rows += 1;
    }
    let max = worst.iter().copied().fold(0.0, f64::max);
    Outcome::new(
        rows == 1000 && max <= 1e-9,
        format!(
            "{rows} inputs; worst relative error p_los {:.1e}, received {:.1e}, effective {:.1e}, rate {:.1e}",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

// 2. backprop against central differences

fn loss(net: &Mlp, x: &Array2<f64>, w: &Array2<f64>) -> f64 {
    (&net.predict_batch(x.view()).unwrap() * w).sum()
}

fn gradient_check() -> Outcome {
    let seeds = SeedTree::new(2);
    let (eps, tol) = (1e-6, 1e-4);
    let (mut checked, mut worst, mut failures) = (0usize, 0.0f64, 0usize);
    for n in 0..20u64 {
        let mut rng = seeds.rng(Stream::Init, &[n]);
        let inputs = rng.random_range(1..=6);
        let hidden: Vec<usize> = (0..rng.random_range(1..=3)).map(|_| rng.random_range(2..=8)).collect();
        let mut heads = Vec::new();
        for _ in 0..rng.random_range(1..=3) {
            let width = rng.random_range(1..=3);
            heads.push(if rng.random::<bool>() {
                Head::Tanh(width)
            } else {
                Head::Identity(width)
            });
        }
        let mut net = Mlp::new(inputs, &hidden, heads, &mut rng).unwrap();
        let batch = rng.random_range(1..=4);
        let outputs = net.output_dim();
        let x = Array2::from_shape_fn((batch, inputs), |_| StandardNormal.sample(&mut rng));
        let w = Array2::from_shape_fn((batch, outputs), |_| StandardNormal.sample(&mut rng));
        net.forward_batch(x.view()).unwrap();
        let (grads, g_in) = net.backward(w.view()).unwrap();
        let analytic: Vec<f64> = grads.tensors().flat_map(|t| t.to_vec()).collect();

        let mut compare = |a: f64, numeric: f64| {
            checked += 1;
            // both sides below the difference noise floor count as equal
            if a.abs().max(numeric.abs()) < 1e-7 {
                return;
            }
            let r = relative(a, numeric);
            worst = worst.max(r);
            if r > tol {
                failures += 1;
            }
        };

        let mut idx = 0;
        let lens: Vec<usize> = net.tensors().map(<[f64]>::len).collect();
        for (t, &len) in lens.iter().enumerate() {
            for j in 0..len {
                let orig = net.tensors().nth(t).unwrap()[j];
                net.tensors_mut().nth(t).unwrap()[j] = orig + eps;
                let up = loss(&net, &x, &w);
                net.tensors_mut().nth(t).unwrap()[j] = orig - eps;
                let down = loss(&net, &x, &w);
                net.tensors_mut().nth(t).unwrap()[j] = orig;
                compare(analytic[idx], (up - down) / (2.0 * eps));
                idx += 1;
            }
        }
        for r in 0..batch {
            for c in 0..inputs {
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp[[r, c]] += eps;
                xm[[r, c]] -= eps;
                compare(g_in[[r, c]], (loss(&net, &xp, &w) - loss(&net, &xm, &w)) / (2.0 * eps));
            }
        }
    }
    Outcome::new(
        failures == 0,
        format!("20 networks, {checked} partials, {failures} over 1e-4, worst relative {worst:.1e}"),
    )
}

// 3. block search against the oracle

fn bandwidth_search() -> Outcome {
    let settings = BenchmarkSettings::default();
    let report = run_benchmark(100, 5e6, &settings, 3).unwrap();
    let matches = report.oracle_matches();
    let (first, last) = report.search_trend(10);
    Outcome::new(
        matches >= 95 && last <= 0.5 * first,
        format!("{matches}/100 frozen counts equal the oracle; mean search steps first 10 episodes {first:.1}, last 10 {last:.1}"),
    )
}

// 4. silhouette model selection on three blobs

fn brute_silhouette(points: &[Point], assignment: &[usize]) -> f64 {
    let k = assignment.iter().max().map_or(0, |m| m + 1);
    let dist = |a: Point, b: Point| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    let mut total = 0.0;
    for i in 0..points.len() {
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for j in 0..points.len() {
            if i != j {
                sums[assignment[j]] += dist(points[i], points[j]);
                counts[assignment[j]] += 1;
            }
        }
        let own = assignment[i];
        if counts[own] == 0 {
            continue;
        }
        let a = sums[own] / counts[own] as f64;
        let b = (0..k)
            .filter(|&c| c != own && counts[c] > 0)
            .map(|c| sums[c] / counts[c] as f64)
            .fold(f64::INFINITY, f64::min);
        total += (b - a) / a.max(b);
    }
    total / points.len() as f64
}

fn clustering() -> Outcome {
    let spacing = 1000.0;
    let centers = [[0.0, 0.0], [spacing, 0.0], [spacing / 2.0, spacing * 3f64.sqrt() / 2.0]];
    let (mut hits, mut worst) = (0, 0.0f64);
    for seed in 0..10u64 {
        let tree = SeedTree::new(seed);
        let mut rng = tree.rng(Stream::Benchmark, &[4]);
        let points: Vec<Point> = (0..30)
            .map(|i| {
                let c = centers[i % 3];
                let dx: f64 = StandardNormal.sample(&mut rng);
                let dy: f64 = StandardNormal.sample(&mut rng);
                [c[0] + 0.05 * spacing * dx, c[1] + 0.05 * spacing * dy]
            })
            .collect();
        let plan = select_k(&points, 5, 5, &mut tree.rng(Stream::Clustering, &[0])).unwrap();
        if plan.k_star == 3 {
            hits += 1;
        }
        let brute = brute_silhouette(&points, &plan.assignment);
        worst = worst
            .max((mean_silhouette(&plan.assignment, &points).unwrap() - brute).abs())
            .max((plan.silhouette_mean - brute).abs());
    }
    Outcome::new(
        hits >= 9 && worst <= 1e-9,
        format!("k*=3 on {hits}/10 seeds; worst silhouette gap to brute force {worst:.1e}"),
    )
}

// 5. mobility invariants

fn table_grid(points: Vec<GridPos>) -> GridWorld {
    let c = ExperimentConfig::resolve("default").unwrap();
    GridWorld {
        attraction_points: points,
        ..c.scenario.grid
    }
}

fn mobility() -> Outcome {
    let (mut collisions, mut bad_moves, mut outside) = (0, 0, 0);
    let c = ExperimentConfig::resolve("default").unwrap();
    let n = c.scenario.env.n_ues;
    for seed in 0..20u64 {
        let tree = SeedTree::new(seed);
        let base = table_grid(Vec::new());
        let points = GridWorld::random_attractions(base.width, base.height, 3, &mut tree.rng(Stream::Attraction, &[]));
        let grid = table_grid(points);
        let mut ues = init_positions(n, &grid, &mut tree.rng(Stream::Mobility, &[u64::MAX])).unwrap();
        for frame in 0..100u64 {
            let next = step_frame(&ues, &grid, &mut tree.rng(Stream::Mobility, &[frame])).unwrap();
            let mut cells: Vec<GridPos> = next.positions.clone();
            cells.sort_by_key(|p| (p.x, p.y));
            cells.dedup();
            collisions += next.len() - cells.len();
            for (a, b) in ues.positions.iter().zip(&next.positions) {
                if (a.x - b.x).abs() + (a.y - b.y).abs() > 1 {
                    bad_moves += 1;
                }
                if !grid.contains(*b) {
                    outside += 1;
                }
            }
            ues = next;
        }
    }

    let target = GridPos::new(50, 50);
    let grid = GridWorld {
        attraction_prob: 0.4,
        ..table_grid(vec![target])
    };
    let mut curve = [0.0; 21];
    for seed in 0..20u64 {
        let tree = SeedTree::new(seed);
        let mut ues: UeState = init_positions(n, &grid, &mut tree.rng(Stream::Mobility, &[u64::MAX])).unwrap();
        for (frame, slot) in curve.iter_mut().enumerate() {
            if frame > 0 {
                ues = step_frame(&ues, &grid, &mut tree.rng(Stream::Mobility, &[frame as u64])).unwrap();
            }
            let mean: f64 = ues
                .positions
                .iter()
                .map(|p| (p.dist2(target) as f64).sqrt())
                .sum::<f64>()
                / ues.len() as f64;
            *slot += mean / 20.0;
        }
    }
    let decreasing = curve.windows(2).all(|w| w[1] < w[0]);
    Outcome::new(
        collisions == 0 && bad_moves == 0 && outside == 0 && decreasing,
        format!(
            "2000 frames: {collisions} collisions, {bad_moves} non-adjacent moves, {outside} out of bounds; \
             mean distance to attractor {:.2} -> {:.2} cells, strictly decreasing: {decreasing}",
            curve[0], curve[20]
        ),
    )
}

// 6, 7, 9. desk-scale comparison

struct Comparison {
    flare: RunSummary,
    maddpg_only: RunSummary,
    fixed: RunSummary,
    elapsed: Duration,
}

fn desk_comparison(out: &Path) -> Comparison {
    let mut c = ExperimentConfig::resolve("desk").unwrap();
    c.seeds = vec![1, 2, 3];
    c.out_dir = out.to_path_buf();
    let started = Instant::now();
    let mut runs = run_evaluation(&c, &[Method::Flare, Method::MaddpgOnly, Method::Static], &[5e6]).unwrap();
    let fixed = runs.pop().unwrap();
    let maddpg_only = runs.pop().unwrap();
    let flare = runs.pop().unwrap();
    Comparison {
        flare,
        maddpg_only,
        fixed,
        elapsed: started.elapsed(),
    }
}

fn per_seed(s: &RunSummary) -> String {
    s.seeds
        .iter()
        .map(|x| format!("{:.1}", x.mean_served))
        .collect::<Vec<_>>()
        .join("/")
}

fn served_comparison(c: &Comparison) -> Outcome {
    let (f, m, s) = (c.flare.mean_served, c.maddpg_only.mean_served, c.fixed.mean_served);
    Outcome::new(
        f > m && m >= s && f >= 1.2 * m && c.elapsed < Duration::from_secs(3600),
        format!(
            "mean served FLARE {f:.3} ({}), MADDPG-only {m:.3} ({}), static {s:.3} ({}); ratio {:.2}; {:.0} s",
            per_seed(&c.flare),
            per_seed(&c.maddpg_only),
            per_seed(&c.fixed),
            if m > 0.0 { f / m } else { f64::INFINITY },
            c.elapsed.as_secs_f64()
        ),
    )
}

/// Mean reward per episode index, averaged over the frames of one seed.
fn reward_curve(s: &RunSummary, seed: usize) -> Vec<f64> {
    let frames = &s.seeds[seed].frames;
    let episodes = frames.first().map_or(0, |f| f.episodes.len());
    (0..episodes)
        .map(|e| frames.iter().map(|f| f.episodes[e].mean_reward).sum::<f64>() / frames.len() as f64)
        .collect()
}

fn convergence(c: &Comparison) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, seed) in c.flare.seeds.iter().enumerate() {
        let curve = reward_curve(&c.flare, i);
        let tenth = (curve.len() / 10).max(1);
        let first = curve[..tenth].iter().sum::<f64>() / tenth as f64;
        let last = curve[curve.len() - tenth..].iter().sum::<f64>() / tenth as f64;
        pass &= last >= first;
        parts.push(format!("seed {} {first:.2} -> {last:.2}", seed.seed));
    }
    Outcome::new(
        pass,
        format!("mean episode reward, first vs last 10%: {}", parts.join(", ")),
    )
}

fn audit(c: &Comparison) -> Outcome {
    let runs = [&c.flare, &c.maddpg_only, &c.fixed];
    let steps: u64 = runs.iter().map(|r| r.audited_steps()).sum();
    let violations: u64 = runs.iter().map(|r| r.violations()).sum();
    let examples: Vec<String> = runs
        .iter()
        .flat_map(|r| r.seeds.iter().flat_map(|s| s.audit.examples.iter().cloned()))
        .take(3)
        .collect();
    Outcome::new(
        violations == 0 && steps > 0,
        format!("{violations} violations over {steps} audited steps {examples:?}"),
    )
}

// 8. reproducibility

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("tiny.conf");
    std::fs::write(&cfg, common::TINY).unwrap();
    let mut differing = Vec::new();
    let mut runs = 0;

    let base = common::tiny(&tmp.path().join("api"));
    let mut configs = Vec::new();
    for method in Method::ALL {
        configs.push(ExperimentConfig {
            method,
            out_dir: tmp.path().join(method.name()),
            ..base.clone()
        });
    }
    for c in &configs {
        run_experiment(c).unwrap();
        let first = common::snapshot(&c.out_dir);
        run_experiment(c).unwrap();
        runs += 1;
        if first != common::snapshot(&c.out_dir) {
            differing.push(c.method.name().to_string());
        }
    }
    run_simulation(&base).unwrap();
    let first = common::snapshot(&base.out_dir);
    run_simulation(&base).unwrap();
    runs += 1;
    if first != common::snapshot(&base.out_dir) {
        differing.push("simulate".into());
    }

    let out = tmp.path().join("cli");
    let cfg = cfg.to_str().unwrap();
    let out_s = out.to_str().unwrap();
    let commands: [&[&str]; 3] = [
        &["flare", "evaluate", "--config", cfg, "--out", out_s],
        &[
            "flare",
            "train",
            "--config",
            cfg,
            "--method",
            "maddpg_only",
            "--seed",
            "4",
            "--out",
            out_s,
        ],
        &["flare", "simulate", "--config", cfg, "--frames", "5", "--out", out_s],
    ];
    for args in commands {
        let mut stdout = Vec::new();
        assert_eq!(run_with(args, &mut stdout, &mut Vec::new()), 0, "{args:?}");
        let first = common::snapshot(&out);
        run_with(args, &mut Vec::new(), &mut Vec::new());
        runs += 1;
        if first != common::snapshot(&out) {
            differing.push(args[1].to_string());
        }
    }
    let oracle = ["flare", "oracle", "--config", "desk"];
    let (mut a, mut b) = (Vec::new(), Vec::new());
    run_with(oracle, &mut a, &mut Vec::new());
    run_with(oracle, &mut b, &mut Vec::new());
    runs += 1;
    if a != b || a.is_empty() {
        differing.push("oracle".into());
    }
    Outcome::new(
        differing.is_empty(),
        format!("{runs} commands run twice; differing outputs: {differing:?}"),
    )
}

/// Wall-clock budget per criterion, seconds. The comparison run checks its
/// own budget since criteria 7 and 9 reuse it.
const LIMITS: [Option<u64>; 9] = [Some(1), Some(30), Some(600), Some(30), Some(30), None, None, None, None];

fn main() {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let on = |n: u32| wanted.is_empty() || wanted.contains(&n);

    let kept = std::env::var_os("FLARE_ACCEPTANCE_OUT").map(PathBuf::from);
    let tmp = tempfile::tempdir().unwrap();
    let out = kept.clone().unwrap_or_else(|| tmp.path().join("desk"));
    let mut comparison: Option<Comparison> = None;

    let names = [
        "channel math matches high-precision reference",
        "network gradients match finite differences",
        "block search matches the oracle and speeds up",
        "silhouette selects three blobs",
        "mobility invariants and attraction drift",
        "FLARE > MADDPG-only >= static, FLARE >= 1.2x MADDPG-only",
        "FLARE reward does not decrease",
        "repeated runs are byte-identical",
        "no constraint violations in the comparison runs",
    ];
    let mut failed = Vec::new();
    for n in 1..=9u32 {
        if !on(n) {
            continue;
        }
        let started = Instant::now();
        let outcome = match n {
            1 => channel_oracle(),
            2 => gradient_check(),
            3 => bandwidth_search(),
            4 => clustering(),
            5 => mobility(),
            6 => served_comparison(comparison.get_or_insert_with(|| desk_comparison(&out))),
            7 => convergence(comparison.get_or_insert_with(|| desk_comparison(&out))),
            8 => determinism(),
            _ => audit(comparison.get_or_insert_with(|| desk_comparison(&out))),
        };
        let mut outcome = outcome;
        if let Some(limit) = LIMITS[n as usize - 1] {
            if started.elapsed() > Duration::from_secs(limit) {
                outcome.pass = false;
                outcome.detail += &format!("; over the {limit} s budget");
            }
        }
        let verdict = if outcome.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {n} {verdict}: {} | {} | {:.1} s",
            names[n as usize - 1],
            outcome.detail,
            started.elapsed().as_secs_f64()
        );
        if !outcome.pass {
            failed.push(n);
        }
    }
    if let Some(dir) = kept {
        println!("end-to-end outputs kept in {}", dir.display());
    }
    if failed.is_empty() {
        println!("acceptance: all selected criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
