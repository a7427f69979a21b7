//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cfloss::adjacency::NormalizedAdjacency;
use cfloss::backbone::{backpropagate, init_embeddings, propagate, PropagatedEmbeddings};
use cfloss::dataset::{build_dataset, IdMap, InteractionDataset, Split, SplitFractions};
use cfloss::evaluator::{evaluate, topk_from_scores, user_metrics, DEFAULT_CUTOFFS};
use cfloss::loss::{bpr, simce, ssm, Loss, LossKind, BPR_EPS, DEFAULT_MARGIN};
use cfloss::matrix::Matrix;
use cfloss::synthetic::{block_preferences, BlockConfig};
use cfloss::{train, TrainConfig};
use cfloss_cli::gradcheck;
use cfloss_oracle as oracle;

const SEEDS: [u64; 3] = [1, 2, 3];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn within(limit: Duration, started: Instant) -> (bool, String) {
    let t = started.elapsed();
    (t < limit, format!("{:.2}s of {:.0}s", t.as_secs_f64(), limit.as_secs_f64()))
}

fn loss_identities() -> Verdict {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for n in [1usize, 3, 511] {
        let g = ssm(&[0.3], &vec![0.3; n], n).unwrap();
        worst = worst.max((g.loss - ((n + 1) as f64).ln()).abs());
    }
    worst = worst.max((bpr(&[2.0], &[2.0], BPR_EPS).unwrap().loss + 0.50001f64.ln()).abs());
    let a = simce(&[2.0], &[0.5, 1.0], 2, 5.0).unwrap();
    let b = simce(&[10.0], &[1.0, 2.0], 2, 5.0).unwrap();
    let listed = a.loss == 4.0
        && a.d_pos == [-1.0]
        && a.d_neg == [0.0, 1.0]
        && a.active == Some(vec![Some(1)])
        && b.loss == 0.0
        && b.d_pos == [0.0]
        && b.d_neg == [0.0, 0.0];
    let (fast, time) = within(Duration::from_secs(1), t);
    verdict(worst < 1e-9 && listed && fast, format!("max error {worst:.1e}, SimCE examples {listed}, {time}"))
}

fn upper_bound() -> Verdict {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut draws, mut violations) = (0usize, 0usize);
    for n in [1usize, 4, 64] {
        let gamma = (n as f64).ln();
        for _ in 0..34_000 {
            let p = rng.random_range(-10.0..10.0);
            let negs: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
            let lhs = ssm(&[p], &negs, n).unwrap().loss;
            let rhs = 2f64.ln() + simce(&[p], &negs, n, gamma).unwrap().loss;
            violations += usize::from(lhs > rhs);
            draws += 1;
        }
    }
    let (fast, time) = within(Duration::from_secs(10), t);
    verdict(
        draws >= 100_000 && violations == 0 && fast,
        format!("{violations} violations in {draws} draws, {time}"),
    )
}

fn hinge_degeneration() -> Verdict {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mismatches = 0;
    for _ in 0..10_000 {
        let (p, q): (f64, f64) = (rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
        let g = simce(&[p], &[q], 1, DEFAULT_MARGIN).unwrap();
        mismatches += usize::from(g.loss != (DEFAULT_MARGIN - p + q).max(0.0));
    }
    let (fast, time) = within(Duration::from_secs(1), t);
    verdict(mismatches == 0 && fast, format!("{mismatches} mismatches in 10000, {time}"))
}

fn softmax_equivalence() -> Verdict {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let all: Vec<f64> = (0..10).map(|_| rng.random_range(-10.0..10.0)).collect();
        let pos = rng.random_range(0..10);
        let negs: Vec<f64> = (0..10).filter(|&i| i != pos).map(|i| all[i]).collect();
        let g = ssm(&[all[pos]], &negs, 9).unwrap();
        worst = worst.max((g.loss - oracle::full_softmax_ce(&all, pos)).abs());
    }
    let (fast, time) = within(Duration::from_secs(1), t);
    verdict(worst < 1e-10 && fast, format!("max error {worst:.1e}, {time}"))
}

fn gradients() -> Verdict {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    let mut all_small = true;
    let losses = [
        (Loss::Bpr { eps: BPR_EPS }, 1),
        (Loss::Ssm, 4),
        (Loss::SimCe { margin: DEFAULT_MARGIN }, 4),
    ];
    for (loss, negatives) in losses {
        for layers in [0, 2] {
            for seed in 0..5 {
                let inst = gradcheck::random_instance(seed, negatives, 3).unwrap();
                all_small &= inst.dataset.num_users + inst.dataset.num_items <= 10;
                worst = worst.max(gradcheck::check(&inst, &loss, layers).unwrap().max_relative_error);
            }
        }
    }
    let (fast, time) = within(Duration::from_secs(30), t);
    verdict(
        worst < 1e-4 && all_small && fast,
        format!("max relative error {worst:.1e} over 3 losses x K in {{0,2}} x 5 instances, {time}"),
    )
}

fn random_graph(rng: &mut ChaCha8Rng) -> (usize, usize, Vec<(usize, usize)>) {
    let users = rng.random_range(1..=50);
    let items = rng.random_range(1..=100 - users);
    let density: f64 = rng.random_range(0.02..0.5);
    let edges = (0..users)
        .flat_map(|u| (0..items).map(move |i| (u, i)))
        .filter(|_| rng.random_bool(density))
        .collect();
    (users, items, edges)
}

fn propagation() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut worst, mut adjoint): (f64, f64) = (0.0, 0.0);
    for g in 0..20 {
        let (users, items, edges) = random_graph(&mut rng);
        let adj = NormalizedAdjacency::from_edges(users, items, &edges);
        let state = init_embeddings(users, items, 4, g, 1.0).unwrap();
        let gu = init_embeddings(users, items, 4, g + 100, 1.0).unwrap();
        for layers in 0..=3 {
            let fast = propagate(&state, &adj, layers).unwrap();
            let (du, di) = oracle::dense_propagate(
                state.users.as_slice(),
                state.items.as_slice(),
                4,
                &edges,
                layers,
            )
            .unwrap();
            for (a, b) in fast.users.as_slice().iter().chain(fast.items.as_slice()).zip(du.iter().chain(&di)) {
                worst = worst.max((a - b).abs());
            }
            let (bu, bi) = backpropagate(&gu.users, &gu.items, &adj, layers).unwrap();
            let lhs = fast.users.dot(&gu.users) + fast.items.dot(&gu.items);
            let rhs = state.users.dot(&bu) + state.items.dot(&bi);
            adjoint = adjoint.max((lhs - rhs).abs());
        }
    }
    verdict(
        worst < 1e-10 && adjoint < 1e-8,
        format!("max deviation {worst:.1e}, adjoint gap {adjoint:.1e}"),
    )
}

fn metric_instance(seed: u64) -> (InteractionDataset, PropagatedEmbeddings) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let users = 20;
    let items = rng.random_range(25..60);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for u in 0..users {
        let count = rng.random_range(2..=items / 2);
        for (k, i) in rand::seq::index::sample(&mut rng, items, count).iter().enumerate() {
            if k == 0 || rng.random_bool(0.6) {
                train.push((u, i));
            } else {
                test.push((u, i));
            }
        }
    }
    let ids = |n: usize| IdMap::from_ordered((0..n).map(|k| k.to_string()).collect()).unwrap();
    let ds = InteractionDataset::from_parts(ids(users), ids(items), train, Vec::new(), test).unwrap();
    let mut coarse = |n: usize| Matrix::from_vec(n, 2, (0..2 * n).map(|_| rng.random_range(-2..=2) as f64).collect());
    let emb = PropagatedEmbeddings { users: coarse(users), items: coarse(items), layers: 0 };
    (ds, emb)
}

fn metrics() -> Verdict {
    let (mut mismatches, mut non_monotone, mut checked) = (0, 0, 0);
    for seed in 0..50 {
        let (ds, emb) = metric_instance(seed);
        let held_out = ds.held_out_by_user(Split::Test);
        let mut sums = vec![(0.0, 0.0); DEFAULT_CUTOFFS.len()];
        for (u, relevant) in &held_out {
            let mask = &ds.user_train_items[*u];
            let scores: Vec<f64> = (0..ds.num_items).map(|i| emb.score(*u, i)).collect();
            let got = user_metrics(&emb, &ds, *u, relevant, &DEFAULT_CUTOFFS);
            for (c, &k) in DEFAULT_CUTOFFS.iter().enumerate() {
                let ranked = oracle::brute_force_topk(&scores, mask, k);
                let recall = oracle::brute_force_recall(&ranked, relevant);
                let ndcg = oracle::brute_force_ndcg(&ranked, relevant, k);
                let same_list = topk_from_scores(&scores, ranked.len(), mask).as_ref() == Some(&ranked);
                mismatches += usize::from(!same_list || got[c].recall != recall || got[c].ndcg != ndcg);
                sums[c].0 += recall;
                sums[c].1 += ndcg;
                checked += 1;
            }
            non_monotone += usize::from(got[1].recall < got[0].recall);
        }
        let m = evaluate(&emb, &ds, Split::Test, &DEFAULT_CUTOFFS).unwrap();
        let n = held_out.len() as f64;
        for (c, &k) in DEFAULT_CUTOFFS.iter().enumerate() {
            mismatches += usize::from(m.recall(k) != sums[c].0 / n || m.ndcg(k) != sums[c].1 / n);
        }
    }
    verdict(
        mismatches == 0 && non_monotone == 0,
        format!("{mismatches} mismatches in {checked} user-cutoffs, {non_monotone} users with R@20 < R@10"),
    )
}

struct Run {
    test_recall: f64,
    converged: usize,
}

fn desk_dataset(seed: u64) -> InteractionDataset {
    let pairs = block_preferences(&BlockConfig::desk_scale(), seed).unwrap();
    build_dataset(&pairs, SplitFractions::default(), seed).unwrap()
}

fn desk_config(loss: LossKind, seed: u64) -> TrainConfig {
    TrainConfig {
        loss,
        negatives: if loss == LossKind::Bpr { 1 } else { 64 },
        layers: 0,
        seed,
        ..TrainConfig::default()
    }
}

/// Test Recall@20 at the best validation epoch, per seed and loss.
fn desk_runs() -> Vec<[Run; 3]> {
    SEEDS
        .iter()
        .map(|&seed| {
            let ds = desk_dataset(seed);
            [LossKind::SimCe, LossKind::Ssm, LossKind::Bpr].map(|loss| {
                let out = train(&ds, &desk_config(loss, seed)).unwrap();
                let r = Run {
                    test_recall: out.report.test.as_ref().unwrap().recall(20),
                    converged: out.report.converged_epoch().unwrap(),
                };
                println!("    seed {seed} {:<5} test R@20 {:.4} converged epoch {}", loss.to_string(), r.test_recall, r.converged);
                r
            })
        })
        .collect()
}

fn directional(runs: &[[Run; 3]], elapsed: Duration) -> Verdict {
    let over_bpr = runs.iter().filter(|[s, _, b]| s.test_recall > b.test_recall).count();
    let over_ssm = runs.iter().filter(|[s, m, _]| s.test_recall > m.test_recall).count();
    let fast = elapsed < Duration::from_secs(600);
    verdict(
        over_bpr == 3 && over_ssm >= 2 && fast,
        format!(
            "SimCE > BPR in {over_bpr}/3, SimCE > SSM in {over_ssm}/3, {:.0}s of 600s",
            elapsed.as_secs_f64()
        ),
    )
}

/// Median seconds per training epoch for SSM and SimCE at 512 negatives,
/// alternating the two so that machine noise hits both alike.
fn epoch_seconds(ds: &InteractionDataset) -> (f64, f64) {
    let (mut simce_t, mut ssm_t) = (Vec::new(), Vec::new());
    for round in 0..3 {
        for (loss, out) in [(LossKind::Ssm, &mut ssm_t), (LossKind::SimCe, &mut simce_t)] {
            let cfg = TrainConfig {
                negatives: 512,
                max_epochs: 1,
                seed: round,
                ..desk_config(loss, 1)
            };
            let run = train(ds, &cfg).unwrap();
            out.push(run.report.rows[0].seconds);
        }
    }
    let median = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    (median(&mut simce_t), median(&mut ssm_t))
}

fn convergence(runs: &[[Run; 3]]) -> Verdict {
    let mean = |k: usize| runs.iter().map(|r| r[k].converged as f64).sum::<f64>() / runs.len() as f64;
    let (simce_e, ssm_e, bpr_e) = (mean(0), mean(1), mean(2));
    let (simce_s, ssm_s) = epoch_seconds(&desk_dataset(SEEDS[0]));
    let ratio = simce_s / ssm_s;
    verdict(
        bpr_e > simce_e && bpr_e > ssm_e && ratio <= 1.25,
        format!(
            "mean converged epoch BPR {bpr_e:.1}, SimCE {simce_e:.1}, SSM {ssm_e:.1}; \
             N=512 epoch SimCE {simce_s:.2}s / SSM {ssm_s:.2}s = {ratio:.2}"
        ),
    )
}

fn run_cli(args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_cfloss"))
        .args(args)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let (raw, data) = (p("synth.txt"), p("data"));
    if !run_cli(&["synth", "--out", &raw, "--seed", "5"]) || !run_cli(&["prepare", "--input", &raw, "--out", &data]) {
        return verdict(false, "could not build the dataset");
    }
    let flags = ["--epochs", "3", "--layers", "2", "--negatives", "16", "--seed", "9", "--deterministic"];
    for out in ["a", "b"] {
        let mut args = vec!["train", "--data", data.as_str(), "--out"];
        let dest = p(out);
        args.push(&dest);
        args.extend(flags);
        if !run_cli(&args) {
            return verdict(false, format!("train run {out} failed"));
        }
    }
    let same = |f: &str| {
        let read = |run: &str| std::fs::read(Path::new(&p(run)).join(f)).unwrap_or_default();
        let a = read("a");
        !a.is_empty() && a == read("b")
    };
    let differing: Vec<&str> = ["metrics.csv", "checkpoint.bin"].into_iter().filter(|f| !same(f)).collect();
    verdict(
        differing.is_empty(),
        if differing.is_empty() {
            "metrics.csv and checkpoint.bin byte-identical across two runs".to_string()
        } else {
            format!("differing: {}", differing.join(", "))
        },
    )
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |id: usize, name: &str, v: Verdict| {
        println!("criterion {id:>2} {}: {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        failed += usize::from(!v.pass);
    };
    report(1, "loss identities", loss_identities());
    report(2, "upper bound", upper_bound());
    report(3, "hinge degeneration", hinge_degeneration());
    report(4, "sampled softmax equals full softmax", softmax_equivalence());
    report(5, "gradient correctness", gradients());
    report(6, "propagation", propagation());
    report(7, "metrics", metrics());
    let started = Instant::now();
    let runs = desk_runs();
    report(8, "desk-scale ordering", directional(&runs, started.elapsed()));
    report(9, "convergence shape", convergence(&runs));
    report(10, "determinism", determinism());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
