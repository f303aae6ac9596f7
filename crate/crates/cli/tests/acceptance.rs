//! End-to-end acceptance checks. Runs as a plain binary and prints one
//! PASS/FAIL line per criterion; exits non-zero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use affloc_core::controller::{build_integrator, gamma_from_p, riccati_residual, solve_riccati, PhiSchedule};
use affloc_core::framework::{
    build_laplacian, compute_layers, desired_config, localize_followers, verify_affine_localizability, NodeId,
    NominalFramework,
};
use affloc_core::geometry::{displacements, homogeneous_matrix, solve_unit_weights, weighted_displacement_norm};
use affloc_core::lcc::{DeliveryOrder, LccEvent, LccNetwork};
use affloc_core::reconfig::{fia_add, foa_remove, random_attachment, random_euc, AttachmentSpec, RandomEucOptions, TieBreak};
use affloc_core::simulator::{interval_fits, reference_scenario, run, scenario_gains, SimResult};
use affloc_core::{linalg, Point, PointSet, Tolerances};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what())
    }
}

fn within(started: Instant, limit: Duration) -> Result<(), String> {
    let took = started.elapsed();
    check(took < limit, || format!("took {took:.1?}, limit {limit:?}"))
}

fn random_unit(rng: &mut ChaCha8Rng) -> (PointSet, Vec<f64>) {
    let dim = rng.gen_range(2..=3);
    loop {
        let m = rng.gen_range(2..=dim + 1);
        let pts: Vec<Point> = (0..m).map(|_| (0..dim).map(|_| rng.gen_range(-5.0..5.0)).collect()).collect();
        let (lo, hi) = linalg::singular_extremes(&homogeneous_matrix(&pts, dim));
        if lo < 0.05 * hi {
            continue;
        }
        let mut lambda: Vec<f64> =
            (0..m).map(|_| rng.gen_range(0.1..1.0) * if rng.gen_bool(0.2) { -1.0 } else { 1.0 }).collect();
        let s: f64 = lambda.iter().sum();
        if s.abs() < 0.3 {
            continue;
        }
        lambda.iter_mut().for_each(|l| *l /= s);
        let apex: Point = (0..dim).map(|c| lambda.iter().zip(&pts).map(|(l, p)| l * p[c]).sum()).collect();
        let mut all = vec![apex];
        all.extend(pts);
        return (PointSet::new(dim, all).unwrap(), lambda);
    }
}

fn unit_suite() -> Outcome {
    let started = Instant::now();
    let tol = Tolerances::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_res, mut worst_sum, mut smallest) = (0.0f64, 0.0f64, f64::INFINITY);
    for k in 0..500 {
        let (ps, lambda) = random_unit(&mut rng);
        let h = solve_unit_weights(&ps, &tol).map_err(|e| format!("unit {k}: {e}"))?;
        let res = weighted_displacement_norm(&h.weights, &displacements(&ps).unwrap());
        worst_res = worst_res.max(res);
        worst_sum = worst_sum.max((h.weights.iter().sum::<f64>() - 1.0).abs());
        smallest = smallest.min(h.weights.iter().fold(f64::INFINITY, |a, w| a.min(w.abs())));
        let off = h.weights.iter().zip(&lambda).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        check(off <= 1e-8, || format!("unit {k}: weights differ from barycentric coordinates by {off:e}"))?;
    }
    check(worst_res <= 1e-9, || format!("residual {worst_res:e}"))?;
    check(smallest > 1e-10, || format!("smallest weight {smallest:e}"))?;
    check(worst_sum <= 1e-12, || format!("weight sum off by {worst_sum:e}"))?;
    within(started, Duration::from_secs(5))?;
    Ok(format!("500 units, residual {worst_res:.1e}, min |h| {smallest:.2e}, {:.2?}", started.elapsed()))
}

fn euc_frameworks() -> Vec<NominalFramework> {
    let tol = Tolerances::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    (0..500)
        .map(|_| {
            let dim = rng.gen_range(2..=3);
            let total = rng.gen_range(dim + 2..=50);
            random_euc(&mut rng, dim, total, &RandomEucOptions::default(), &tol).unwrap().0
        })
        .collect()
}

fn layer_permuted(fw: &NominalFramework) -> Option<DMatrix<f64>> {
    let ff = build_laplacian(fw).ff;
    let index: BTreeMap<NodeId, usize> = fw.followers().iter().enumerate().map(|(k, &id)| (id, k)).collect();
    let order: Vec<usize> = compute_layers(fw).ok()?.order().iter().filter_map(|id| index.get(id).copied()).collect();
    Some(DMatrix::from_fn(order.len(), order.len(), |r, c| ff[(order[r], order[c])]))
}

fn euc_soundness(fws: &[NominalFramework], build_time: Duration) -> Outcome {
    let started = Instant::now();
    let tol = Tolerances::default();
    let mut worst = 0.0f64;
    for (k, fw) in fws.iter().enumerate() {
        let report = verify_affine_localizability(fw, &tol);
        check(report.pass, || format!("framework {k}: {}", report.notes.join("; ")))?;
        let m = layer_permuted(fw).ok_or_else(|| format!("framework {k} is not layerable"))?;
        for r in 0..m.nrows() {
            worst = worst.max((m[(r, r)] - 1.0).abs());
            for c in r + 1..m.ncols() {
                worst = worst.max(m[(r, c)].abs());
            }
        }
    }
    check(worst <= 1e-12, || format!("layer-permuted block off by {worst:e}"))?;
    let total = build_time + started.elapsed();
    check(total < Duration::from_secs(30), || format!("took {total:.1?}"))?;
    let biggest = fws.iter().map(NominalFramework::len).max().unwrap();
    Ok(format!("{} frameworks up to {biggest} nodes, triangular to {worst:.1e}, {total:.2?}", fws.len()))
}

fn localization(fws: &[NominalFramework]) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for (k, fw) in fws.iter().enumerate() {
        let d = fw.dim();
        for _ in 0..10 {
            let a = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-2.0..2.0));
            let b: Vec<f64> = (0..d).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let target = desired_config(fw, &a, &b);
            let leaders: BTreeMap<NodeId, Point> = fw.leaders().iter().map(|&l| (l, target[&l].clone())).collect();
            let got = localize_followers(fw, &leaders).map_err(|e| format!("framework {k}: {e}"))?;
            for &f in fw.followers() {
                let err = got[&f].iter().zip(&target[&f]).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                worst = worst.max(err);
            }
        }
    }
    check(worst <= 1e-8, || format!("follower mismatch {worst:e}"))?;
    Ok(format!("{} affine images, worst follower error {worst:.1e}", fws.len() * 10))
}

type Canonical = (BTreeMap<NodeId, Vec<u64>>, BTreeMap<NodeId, Vec<(NodeId, u64)>>);

fn canonical(fw: &NominalFramework) -> Canonical {
    let pos = fw.positions().iter().map(|(&id, p)| (id, p.iter().map(|x| x.to_bits()).collect())).collect();
    let tables = fw
        .node_ids()
        .into_iter()
        .map(|id| (id, fw.in_table(id).iter().map(|&(j, w)| (j, w.to_bits())).collect()))
        .collect();
    (pos, tables)
}

fn neighbourhood(fw: &NominalFramework, nodes: &[NodeId]) -> BTreeSet<NodeId> {
    let mut out: BTreeSet<NodeId> = nodes.iter().copied().collect();
    for &n in nodes {
        out.extend(fw.in_neighbors(n));
        out.extend(fw.out_neighbors(n));
    }
    out
}

struct EpisodeStats {
    removals: usize,
    additions: usize,
    longest_chain: usize,
    round_trips: usize,
    lcc_runs: usize,
}

/// Runs the reconfiguration episodes once, checking the central result
/// (criterion 4) and the packet-level result (criterion 5) side by side.
fn episodes() -> (Outcome, Outcome) {
    let tol = Tolerances::default();
    let opts = RandomEucOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut stats = EpisodeStats { removals: 0, additions: 0, longest_chain: 0, round_trips: 0, lcc_runs: 0 };
    let mut central: Result<(), String> = Ok(());
    let mut packets: Result<(), String> = Ok(());
    for ep in 0..200 {
        let dim = rng.gen_range(2..=3);
        let total = rng.gen_range(dim + 4..=30);
        let (fw, _) = random_euc(&mut rng, dim, total, &opts, &tol).unwrap();
        let (expected, event, chain) = if ep % 2 == 0 {
            let removed = *fw.followers().choose(&mut rng).unwrap();
            let tie = if rng.gen_bool(0.8) { TieBreak::SmallestId } else { TieBreak::LargestId };
            let (next, path) = match foa_remove(&fw, removed, tie) {
                Ok(x) => x,
                Err(e) => {
                    central = central.and(Err(format!("episode {ep}: {e}")));
                    continue;
                }
            };
            stats.removals += 1;
            stats.longest_chain = stats.longest_chain.max(path.chain.len());
            (next, LccEvent::Remove { node: removed, tie_break: tie }, path.chain)
        } else {
            let spec = random_attachment(&mut rng, &fw, fw.next_free_id(), &opts);
            let next = fia_add(&fw, &spec, &tol).unwrap();
            stats.additions += 1;
            let mut touched = spec.in_neighbors.clone();
            touched.push(spec.node);
            (next.clone(), LccEvent::Add { node: spec.node, in_table: next.in_table(spec.node).to_vec() }, touched)
        };
        let report = verify_affine_localizability(&expected, &tol);
        if !report.pass {
            central = central.and(Err(format!("episode {ep}: {}", report.notes.join("; "))));
        }

        let ends: Vec<NodeId> = fw.followers().iter().copied().filter(|&f| fw.is_end_node(f)).collect();
        let end = *ends.choose(&mut rng).unwrap();
        let spec = AttachmentSpec {
            node: end,
            position: fw.position(end).unwrap().clone(),
            in_neighbors: fw.in_neighbors(end),
        };
        let back = foa_remove(&fw, end, TieBreak::SmallestId).and_then(|(smaller, _)| fia_add(&smaller, &spec, &tol));
        match back {
            Ok(b) if canonical(&b) == canonical(&fw) => stats.round_trips += 1,
            _ => central = central.and(Err(format!("episode {ep}: round trip on end node {end} is not exact"))),
        }

        let mut reference = LccNetwork::from_framework(&fw);
        let log = match reference.run_lcc(&event, DeliveryOrder::Synchronous) {
            Ok(log) => log,
            Err(e) => {
                packets = packets.and(Err(format!("episode {ep}: {e}")));
                continue;
            }
        };
        stats.lcc_runs += 1;
        if let Err(e) = reference.check_consistency().and_then(|_| reference.matches(&expected)) {
            packets = packets.and(Err(format!("episode {ep}: {e}")));
        }
        let allowed = match &event {
            LccEvent::Remove { .. } => neighbourhood(&fw, &chain),
            LccEvent::Add { .. } => chain.iter().copied().collect(),
        };
        if !log.participants().is_subset(&allowed) {
            packets = packets.and(Err(format!("episode {ep}: messages reach beyond the chain neighbourhood")));
        }
        for seed in 0..20 {
            let mut net = LccNetwork::from_framework(&fw);
            let same = net.run_lcc(&event, DeliveryOrder::Shuffled { seed }).is_ok() && net == reference;
            if !same {
                packets = packets.and(Err(format!("episode {ep}: shuffle seed {seed} differs")));
            }
        }
    }
    let central = central
        .and_then(|_| check(stats.longest_chain >= 4, || "no multi-hop inheritance chain exercised".into()))
        .map(|_| {
            format!(
                "{} removals (longest chain {}), {} additions, {} exact end-node round trips",
                stats.removals, stats.longest_chain, stats.additions, stats.round_trips
            )
        });
    let packets = packets.map(|_| format!("{} packet runs bit-exact, local, and stable over 20 shuffles", stats.lcc_runs));
    (central, packets)
}

fn gains() -> Outcome {
    let mut worst = 0.0f64;
    for n in 1..=3 {
        let m = build_integrator(n, 2).map_err(|e| e.to_string())?;
        for xi in [0.5, 1.0, 2.0] {
            let p = solve_riccati(&m, xi).map_err(|e| e.to_string())?;
            worst = worst.max(riccati_residual(&m, &p, xi));
        }
    }
    check(worst <= 1e-8, || format!("Riccati residual {worst:e}"))?;
    let m = build_integrator(2, 2).unwrap();
    let p = solve_riccati(&m, 1.0).unwrap();
    let off = (p[(0, 0)] - 1.0).abs().max((p[(0, 1)] - 1.0).abs()).max((p[(1, 1)] - 2.0).abs()).max((p[(1, 0)] - 1.0).abs());
    check(off <= 1e-12, || format!("P differs from [[1,1],[1,2]] by {off:e}"))?;
    let g = gamma_from_p(&m, &p);
    check((g[0] - 1.0).abs() <= 1e-12 && (g[1] - 2.0).abs() <= 1e-12, || format!("gamma = {g:?}"))?;

    let report = scenario_gains(&reference_scenario(), &Tolerances::default()).map_err(|e| e.to_string())?;
    check(report.epochs.len() == 3, || format!("{} epochs", report.epochs.len()))?;
    let lam = report.epochs.iter().map(|e| e.spectrum.lambda_min_sym).fold(f64::INFINITY, f64::min);
    check(lam > 0.0, || format!("lambda_min = {lam:e}"))?;
    check(report.pass, || "gain conditions fail on the reference scenario".into())?;

    let mut ode_worst = 0.0f64;
    for &(eps, mu, ts) in &[(0.1, 1.0, 0.01), (0.5, 1.0, 1.0), (0.2, 0.3, 0.05), (0.9, 4.0, 2.0)] {
        let s = PhiSchedule::new(ts, eps, mu);
        check((s.phi(0.0) - 1.0 / eps).abs() <= 1e-10 && (s.phi(ts) - eps).abs() <= 1e-10, || {
            format!("phi endpoints for eps = {eps}")
        })?;
        for k in 0..=50 {
            let t = ts * k as f64 / 50.0;
            let phi = s.phi(t);
            let r = s.phi_dot(t) + s.gamma_bar * (phi * phi + (2.0 + mu) * phi + 1.0);
            ode_worst = ode_worst.max(r.abs() / (1.0 + s.phi_dot(t).abs()));
        }
    }
    check(ode_worst <= 1e-8, || format!("phi ODE residual {ode_worst:e}"))?;
    Ok(format!(
        "Riccati residual {worst:.1e}, lambda_min over epochs {lam:.3}, phi ODE residual {ode_worst:.1e}"
    ))
}

fn reproduction(res: &SimResult, took: Duration) -> Outcome {
    let first = &res.epochs[0];
    check(res.dim == 2 && res.order == 2 && res.dt == 0.01, || "wrong run settings".into())?;
    check(first.framework.leaders.len() == 3 && first.followers.len() == 6, || "wrong team size".into())?;
    check(res.epochs.len() == 3, || format!("{} epochs", res.epochs.len()))?;
    check(res.epochs[1].start == 60.0 && res.epochs[2].start == 500.0, || "events at the wrong times".into())?;
    let chain = res.epochs[1].inheritance_path.clone().unwrap_or_default();
    check(chain == [4, 6, 7, 8].map(NodeId), || format!("inheritance path {chain:?}"))?;
    let fits = interval_fits(res);
    let mut parts = Vec::new();
    for f in &fits {
        check(f.decays() && f.r_squared >= 0.9, || format!("[{}, {}) does not decay: {f:?}", f.start, f.end))?;
        check(f.terminal_max <= 1e-2, || format!("[{}, {}) ends at {:e}", f.start, f.end, f.terminal_max))?;
        parts.push(format!("[{},{}) slope {:.3} R2 {:.4} end {:.1e}", f.start, f.end, f.slope, f.r_squared, f.terminal_max));
    }
    check(took < Duration::from_secs(120), || format!("run took {took:.1?}"))?;
    Ok(format!("{}; run {took:.1?}", parts.join(", ")))
}

fn lyapunov(res: &SimResult) -> Outcome {
    for j in &res.jumps {
        check(j.non_increasing(1e-8), || format!("V rises at t = {}: {:e} -> {:e}", j.t, j.v_before, j.v_after))?;
    }
    let frac = res.flow.fraction();
    check(frac >= 0.99, || format!("flow bound held at {:.3}%", 100.0 * frac))?;
    Ok(format!("{} jumps non-increasing, flow bound held at {:.3}% of {} instants", res.jumps.len(), 100.0 * frac, res.flow.checked))
}

fn determinism() -> Outcome {
    let scenario = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/reference.json");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut outs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("run{k}"));
        let status = Command::new(env!("CARGO_BIN_EXE_affloc"))
            .args(["simulate", scenario.to_str().unwrap(), "--seed", "7", "--out", out.to_str().unwrap()])
            .env_remove("AFFLOC_OUT_DIR")
            .output()
            .map_err(|e| e.to_string())?;
        check(status.status.success(), || String::from_utf8_lossy(&status.stderr).into_owned())?;
        outs.push(out);
    }
    let mut bytes = 0;
    for name in ["trajectories.csv", "errors.csv", "lyapunov.csv"] {
        let a = fs::read(outs[0].join(name)).map_err(|e| e.to_string())?;
        let b = fs::read(outs[1].join(name)).map_err(|e| e.to_string())?;
        check(a == b, || format!("{name} differs between runs"))?;
        bytes += a.len();
    }
    Ok(format!("two CLI runs, {bytes} CSV bytes identical"))
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    results.push((1, "equilibrium units", unit_suite()));

    let started = Instant::now();
    let fws = euc_frameworks();
    let build_time = started.elapsed();
    results.push((2, "EUC soundness", euc_soundness(&fws, build_time)));
    results.push((3, "localization identity", localization(&fws)));

    let (central, packets) = episodes();
    results.push((4, "flow-in/flow-out preservation", central));
    results.push((5, "packet-level equivalence", packets));
    results.push((6, "gain synthesis", gains()));

    let started = Instant::now();
    let sim = run(&reference_scenario(), &Tolerances::default());
    let took = started.elapsed();
    match &sim {
        Ok(res) => {
            results.push((7, "reference scenario", reproduction(res, took)));
            results.push((8, "Lyapunov discipline", lyapunov(res)));
        }
        Err(e) => {
            results.push((7, "reference scenario", Err(e.to_string())));
            results.push((8, "Lyapunov discipline", Err(e.to_string())));
        }
    }
    results.push((9, "determinism", determinism()));

    let mut failed = 0;
    for (k, name, outcome) in &results {
        match outcome {
            Ok(msg) => println!("criterion {k} ({name}): PASS  {msg}"),
            Err(msg) => {
                failed += 1;
                println!("criterion {k} ({name}): FAIL  {msg}");
            }
        }
    }
    println!("acceptance: {} of {} criteria pass", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
