// Temporary diagnostics; removed before release.
use kp_core::*;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mode = args.get(1).map(|s| s.as_str()).unwrap_or("toy");
    match mode {
        "toy" => probe_toy(),
        "small" => probe_small(),
        "family" => probe_family(&args[2..]),
        "sweep" => probe_sweep(&args[2..]),
        _ => eprintln!("unknown mode"),
    }
}

fn probe_sweep(args: &[String]) {
    let n: usize = args.first().map(|s| s.parse().unwrap()).unwrap_or(100);
    let count: u64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(20);
    for spec0 in instance::benchmark_suite(n, 1000, 0.5, 0) {
        let mut ratios = Vec::new();
        let mut greedy_ratios = Vec::new();
        let mut epochs = 0usize;
        let start = std::time::Instant::now();
        for seed in 0..count {
            let mut spec = spec0.clone();
            spec.seed = seed;
            let inst = instance::generate(&spec).unwrap();
            let opt = dp_exact(&inst).unwrap().objective;
            let g = greedy(&inst).objective;
            let problem = ConstrainedProblem::knapsack(inst);
            let config = SolverConfig {
                seed,
                ..SolverConfig::default()
            };
            let s = solve(&problem, &config);
            assert!(s.feasible);
            ratios.push(s.objective / opt);
            greedy_ratios.push(g / opt);
            epochs += s.epochs_run;
        }
        let mean: f64 = ratios.iter().sum::<f64>() / ratios.len() as f64;
        let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let gmean: f64 = greedy_ratios.iter().sum::<f64>() / greedy_ratios.len() as f64;
        println!(
            "{:<38} mean {:.4} min {:.4} | greedy mean {:.4} | avg epochs {} | {:.1}s",
            spec0.label(),
            mean,
            min,
            gmean,
            epochs / count as usize,
            start.elapsed().as_secs_f64()
        );
    }
}

fn probe_toy() {
    let toy = ConstrainedProblem::toy();
    let config = SolverConfig {
        learning_rate: 0.01,
        minibatch_fraction: 1.0,
        init: InitScheme::Constant(0.3),
        ..SolverConfig::default()
    };
    let (solution, trace) = solve_traced(&toy, &config);
    println!(
        "toy: x = ({:.6}, {:.6}), o = {:.6}, b = {:.3e}, feasible {}, epochs {}",
        solution.x[0], solution.x[1], solution.objective, solution.cost, solution.feasible,
        solution.epochs_run
    );
    for rec in trace.iter().take(12) {
        println!("{rec:?}");
    }
    println!("...");
    for rec in trace.iter().rev().take(12).collect::<Vec<_>>().iter().rev() {
        println!("{rec:?}");
    }
}

fn probe_small() {
    let inst = KnapsackInstance::new(vec![6.0, 10.0, 12.0], vec![1.0, 2.0, 3.0], 5.0).unwrap();
    for seed in 0..12u64 {
        let problem = ConstrainedProblem::knapsack(inst.clone());
        let config = SolverConfig {
            seed,
            ..SolverConfig::default()
        };
        let s = solve(&problem, &config);
        println!(
            "seed {seed}: objective {} cost {} epochs {} sel {:?}",
            s.objective, s.cost, s.epochs_run, s.selection()
        );
    }
    // Full batch variant
    for seed in 0..3u64 {
        let problem = ConstrainedProblem::knapsack(inst.clone());
        let config = SolverConfig {
            seed,
            minibatch_fraction: 1.0,
            ..SolverConfig::default()
        };
        let s = solve(&problem, &config);
        println!(
            "xi=1 seed {seed}: objective {} cost {} epochs {}",
            s.objective, s.cost, s.epochs_run
        );
    }
}

fn probe_family(args: &[String]) {
    let n: usize = args.first().map(|s| s.parse().unwrap()).unwrap_or(1000);
    let family = args
        .get(1)
        .map(|s| Family::parse(s).unwrap())
        .unwrap_or(Family::Uncorrelated);
    let max_epochs: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(100_000);
    let seed: u64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(7);
    let spanner: bool = args.get(4).map(|s| s == "span").unwrap_or(false);
    let mut spec = GeneratorSpec::new(family, n, 1000, seed);
    if spanner {
        spec = spec.with_spanner(2, 10);
    }
    let inst = instance::generate(&spec).unwrap();
    let bound = dantzig_bound(&inst);
    let g = greedy(&inst);
    let start = std::time::Instant::now();
    let problem = ConstrainedProblem::knapsack(inst.clone());
    let config = SolverConfig {
        seed: 7,
        max_epochs,
        ..SolverConfig::default()
    };
    let (s, trace) = solve_traced(&problem, &config);
    println!(
        "{} n={n}: solver {} ({:.6} of bound) cost {}/{} epochs {} esc {} stalls {} wall {:.2}s | greedy {} ({:.6})",
        family,
        s.objective,
        s.objective / bound,
        s.cost,
        inst.budget(),
        s.epochs_run,
        s.escalations,
        s.stall_events,
        start.elapsed().as_secs_f64(),
        g.objective,
        g.objective / bound,
    );
    if inst.n() <= 200 {
        let dp = dp_exact(&inst).unwrap();
        println!("dp {} solver/dp {:.6} greedy/dp {:.6}", dp.objective, s.objective/dp.objective, g.objective/dp.objective);
    }
    // Snapshot of trace every ~10%:
    let k = (trace.len() / 12).max(1);
    for rec in trace.iter().step_by(k) {
        println!(
            "  ep {:>7} o {:>14.1} b {:>14.1} beta {:.3e} feas {}",
            rec.epoch, rec.objective, rec.constraint, rec.beta, rec.feasible
        );
    }
}
