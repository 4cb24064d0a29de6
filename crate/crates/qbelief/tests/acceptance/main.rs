//! Acceptance criteria. Each test writes one `PASS` or `FAIL` line to
//! stderr, bypassing output capture, before asserting.

mod oracle;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

use qbelief::config::RunConfig;
use qbelief::formats::read_metrics;
use qbelief::report::correlation_points;
use qbelief::runner::Runner;
use qbelief_core::belief::{belief_entropy, filter_history, particle_filter_final, DiscreteBelief, KalmanFilter};
use qbelief_core::drqn::{drqn_run, DrqnConfig};
use qbelief_core::envs::tmaze::{TMaze, TMazeObs, TMazeParams};
use qbelief_core::envs::{ChainMdp, GaussianWalk, SingleStateMdp};
use qbelief_core::mine::{estimate_with, mine_estimate, mine_train, MineConfig, MineDataset, ParticleBlock};
use qbelief_core::nn::{CellKind, DeepSetLayout, MlpLayout, RnnArch, RnnSpec, SetRef};
use qbelief_core::pomdp::{encode_history, rollout, HistoryBuf, Pomdp};
use qbelief_core::protocol::{Metric, MetricRecord, Tag};
use qbelief_core::rng::{derive_seed, seeded};
use qbelief_core::stats::spearman;
use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};

fn verdict(criterion: u32, ok: bool, detail: &str) {
    let line = format!("{} criterion {criterion}: {detail}\n", if ok { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(ok, "criterion {criterion}: {detail}");
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn read_records(path: &Path) -> Vec<MetricRecord> {
    read_metrics(fs::File::open(path).unwrap()).unwrap()
}

// ---------------------------------------------------------------- 1

fn worst_gradient_error(params: &[f64], analytic: &[f64], f: impl Fn(&[f64]) -> f64) -> f64 {
    const STEP: f64 = 1e-6;
    let mut p = params.to_vec();
    let mut worst = 0.0f64;
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + STEP;
        let up = f(&p);
        p[i] = orig - STEP;
        let down = f(&p);
        p[i] = orig;
        let numeric = (up - down) / (2.0 * STEP);
        let err = (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(1e-4);
        worst = worst.max(err);
    }
    worst
}

#[test]
fn criterion_1_gradient_fidelity() {
    let start = Instant::now();
    let mut rng = seeded(1);
    let mut worst: BTreeMap<String, f64> = BTreeMap::new();
    for kind in CellKind::ALL {
        for len in 1..=8 {
            let arch = RnnArch::new(RnnSpec {
                kind,
                input: 3,
                hidden: 3,
                layers: 2,
                outputs: 2,
            })
            .unwrap();
            let mut params = arch.init_params(&mut rng);
            for l in 0..2 {
                for v in &mut params[arch.init_range(l)] {
                    *v = rng.random_range(-0.5..0.5);
                }
            }
            let inputs: Vec<f64> = (0..len * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let coeffs: Vec<Vec<f64>> = (0..len)
                .map(|_| (0..2).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let loss = |p: &[f64]| {
                let tr = arch.unroll(p, &inputs).unwrap();
                (0..len)
                    .map(|t| {
                        arch.q_values(p, &tr, t)
                            .iter()
                            .zip(&coeffs[t])
                            .map(|(y, c)| y * c)
                            .sum::<f64>()
                    })
                    .sum::<f64>()
            };
            let trace = arch.unroll(&params, &inputs).unwrap();
            let d: Vec<(usize, &[f64])> = coeffs.iter().enumerate().map(|(t, c)| (t, c.as_slice())).collect();
            let mut grad = vec![0.0; arch.num_params()];
            arch.backward(&params, &inputs, &trace, &d, &mut grad).unwrap();
            let e = worst_gradient_error(&params, &grad, loss);
            let w = worst.entry(kind.name().to_string()).or_default();
            *w = w.max(e);
        }
    }

    let mlp = MlpLayout::new(vec![4, 6, 6, 2]).unwrap();
    let params = mlp.init_params(&mut rng);
    let n = 5;
    let x: Vec<f64> = (0..n * 4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let c: Vec<f64> = (0..n * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
    let cache = mlp.forward_cached(&params, &x, n).unwrap();
    let mut grad = vec![0.0; mlp.num_params()];
    mlp.backward(&params, &x, n, &cache, &c, &mut grad, None).unwrap();
    let loss = |p: &[f64]| {
        mlp.forward(p, &x, n)
            .unwrap()
            .iter()
            .zip(&c)
            .map(|(y, w)| y * w)
            .sum::<f64>()
    };
    worst.insert("mlp".into(), worst_gradient_error(&params, &grad, loss));

    let ds = DeepSetLayout::new(3, 2, 4, 6, 2).unwrap();
    let params = ds.init_params(&mut rng);
    let sizes = [1usize, 4, 7];
    let feats: Vec<Vec<f64>> = sizes
        .iter()
        .map(|&m| (0..m * 2).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let weights: Vec<Vec<f64>> = sizes
        .iter()
        .map(|&m| (0..m).map(|_| rng.random_range(0.1..1.0)).collect())
        .collect();
    let sets: Vec<SetRef> = feats
        .iter()
        .zip(&weights)
        .map(|(f, w)| SetRef {
            features: f,
            weights: w,
        })
        .collect();
    let x: Vec<f64> = (0..9).map(|_| rng.random_range(-1.0..1.0)).collect();
    let coeffs = [0.7, -1.2, 0.4];
    let mut grad = vec![0.0; ds.num_params()];
    ds.backward(&params, &x, &sets, &coeffs, &mut grad).unwrap();
    let loss = |p: &[f64]| {
        ds.forward(p, &x, &sets)
            .unwrap()
            .iter()
            .zip(&coeffs)
            .map(|(t, c)| t * c)
            .sum::<f64>()
    };
    worst.insert("deep-set".into(), worst_gradient_error(&params, &grad, loss));

    let secs = start.elapsed().as_secs_f64();
    let max = worst.values().copied().fold(0.0, f64::max);
    let parts: Vec<String> = worst.iter().map(|(k, v)| format!("{k} {v:.1e}")).collect();
    verdict(
        1,
        max <= 1e-5 && secs < 60.0,
        &format!(
            "max relative error {max:.2e} (limit 1e-5; {}), {secs:.1}s",
            parts.join(", ")
        ),
    );
}

// ---------------------------------------------------------------- 2

#[test]
fn criterion_2_belief_filter_oracle() {
    let m = TMaze::new(TMazeParams::stochastic(3, 0.3)).unwrap();
    let table = oracle::enumerate_maze(&m, 4);
    let mut worst = 0.0f64;
    for (key, joint) in &table {
        let total: f64 = joint.iter().sum();
        let b = filter_history(&m, &oracle::history_of(key)).unwrap().pop().unwrap();
        for (x, y) in b.probs().iter().zip(joint) {
            worst = worst.max((x - y / total).abs());
        }
    }
    use qbelief_core::envs::tmaze::{Layout, Symbol, TMazeState};
    use qbelief_core::pomdp::DiscretePomdp;
    let key = (
        vec![0, 0],
        vec![
            (Symbol::Up, false),
            (Symbol::Corridor, false),
            (Symbol::Corridor, false),
        ],
    );
    let b = filter_history(&m, &oracle::history_of(&key)).unwrap().pop().unwrap();
    let at = |x| {
        m.state_index(&TMazeState {
            layout: Layout::Up,
            x,
            y: 0,
        })
    };
    let (p1, p2) = (b.probs()[at(1)], b.probs()[at(2)]);
    let hand = (p1 - 6.0 / 37.0).abs().max((p2 - 31.0 / 37.0).abs());
    verdict(
        2,
        worst <= 1e-10 && hand < 1e-12,
        &format!(
            "{} histories, max abs error {worst:.1e} (limit 1e-10); posterior {p1:.6}/{p2:.6} vs 6/37, 31/37",
            table.len()
        ),
    );
}

// ---------------------------------------------------------------- 3

fn explore_history(m: &TMaze, steps: usize, seed: u64) -> HistoryBuf<TMazeObs> {
    let explore = m.exploration_policy();
    let mut policy = |_: &HistoryBuf<TMazeObs>, r: &mut dyn RngCore| explore.sample(r);
    rollout(m, &mut policy, steps, &mut seeded(seed)).unwrap().history
}

#[test]
fn criterion_3_particle_filter_consistency() {
    let m = TMaze::new(TMazeParams::stochastic(3, 0.3)).unwrap();
    let mut tv_sum = 0.0;
    for seed in 0..20 {
        let h = explore_history(&m, 5, seed);
        let exact = filter_history(&m, &h).unwrap().pop().unwrap();
        let mut rng = seeded(derive_seed(seed, &[10_000]));
        tv_sum += match particle_filter_final(&m, &h, 10_000, &mut rng) {
            Ok(set) => {
                0.5 * set
                    .histogram(&m)
                    .iter()
                    .zip(exact.probs())
                    .map(|(a, b)| (a - b).abs())
                    .sum::<f64>()
            }
            Err(_) => 1.0,
        };
    }
    let tv = tv_sum / 20.0;

    let walk = GaussianWalk::new(1).unwrap();
    let mut policy = |_: &HistoryBuf<Vec<f64>>, _: &mut dyn RngCore| 0;
    let ep = rollout(&walk, &mut policy, 5, &mut seeded(17)).unwrap();
    let obs: Vec<f64> = ep.history.observations().iter().map(|o| o[0]).collect();
    let (mean, var) = oracle::walk_posterior(&obs);
    let mut kf = KalmanFilter::new(1);
    ep.history.observations().iter().for_each(|o| {
        kf.observe(o);
    });
    let kalman_ok = (kf.belief().mean[0] - mean).abs() < 1e-12 && (kf.belief().var[0] - var).abs() < 1e-12;
    let set = particle_filter_final(&walk, &ep.history, 100_000, &mut seeded(18)).unwrap();
    let total: f64 = set.weights.iter().sum();
    let pm = set
        .particles
        .iter()
        .zip(&set.weights)
        .map(|(p, w)| w * p[0])
        .sum::<f64>()
        / total;
    let pv = set
        .particles
        .iter()
        .zip(&set.weights)
        .map(|(p, w)| w * (p[0] - pm).powi(2))
        .sum::<f64>()
        / total;
    let mean_err = (pm - mean).abs() / mean.abs().max(var.sqrt());
    let var_err = (pv - var).abs() / var;
    verdict(
        3,
        tv <= 0.05 && kalman_ok && mean_err <= 0.02 && var_err <= 0.02,
        &format!(
            "mean TV {tv:.4} at M=1e4 (limit 0.05); particle mean {pm:.4} vs {mean:.4} ({:.2}%), variance {pv:.4} vs {var:.4} ({:.2}%)",
            100.0 * mean_err,
            100.0 * var_err
        ),
    );
}

// ---------------------------------------------------------------- 4

#[test]
fn criterion_4_mine_calibration() {
    let mut lines = Vec::new();
    let mut ok = true;
    for rho in [0.0f64, 0.5, 0.9] {
        let start = Instant::now();
        let mut rng = seeded(42);
        let n = 10_000;
        let (mut xs, mut ys) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for _ in 0..n {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            xs.push(a);
            ys.push(rho * a + (1.0 - rho * rho).sqrt() * b);
        }
        let data = MineDataset::dense(1, xs, 1, ys).unwrap();
        let trained = mine_train(&data, &MineConfig::default(), &mut rng).unwrap();
        let estimate = mine_estimate(&data, &trained, &mut rng).unwrap();
        let truth = 0.0 - 0.5 * (1.0 - rho * rho).log2();
        let secs = start.elapsed().as_secs_f64();
        ok &= (estimate - truth).abs() <= 0.1;
        lines.push(format!("rho {rho}: {estimate:.4} vs {truth:.4} ({secs:.0}s)"));
    }

    let mut rng = seeded(43);
    let (n, m, d) = (1000, 16, 2);
    let mut xs = Vec::new();
    let mut sets = Vec::new();
    for _ in 0..n {
        let c: f64 = StandardNormal.sample(&mut rng);
        xs.push(c);
        let features: Vec<f64> = (0..m * d).map(|_| c + 0.5 * rng.random::<f64>()).collect();
        let weights: Vec<f64> = (0..m).map(|_| rng.random::<f64>() + 0.1).collect();
        sets.push(ParticleBlock { features, weights });
    }
    let config = MineConfig {
        width: 32,
        epochs: 20,
        batch_size: 128,
        ..MineConfig::default()
    };
    let data = MineDataset::sets(1, xs.clone(), d, sets.clone()).unwrap();
    let trained = mine_train(&data, &config, &mut seeded(44)).unwrap();
    let permuted: Vec<ParticleBlock> = sets
        .iter()
        .map(|s| {
            let mut order: Vec<usize> = (0..m).collect();
            order.shuffle(&mut rng);
            ParticleBlock {
                features: order
                    .iter()
                    .flat_map(|&i| s.features[i * d..(i + 1) * d].iter().copied())
                    .collect(),
                weights: order.iter().map(|&i| s.weights[i]).collect(),
            }
        })
        .collect();
    let a = estimate_with(&data, &trained.net, &trained.params, &mut seeded(45)).unwrap();
    let shuffled = MineDataset::sets(1, xs, d, permuted).unwrap();
    let b = estimate_with(&shuffled, &trained.net, &trained.params, &mut seeded(45)).unwrap();
    ok &= (a - b).abs() <= 1e-9;
    lines.push(format!(
        "set permutation changes the estimate by {:.1e} bits",
        (a - b).abs()
    ));
    verdict(4, ok, &lines.join("; "));
}

// ---------------------------------------------------------------- 5

#[test]
fn criterion_5_drqn_sanity() {
    let config = DrqnConfig {
        episodes: 1500,
        cadence: 1500,
        ..DrqnConfig::default()
    };
    let chain = ChainMdp::new(3, 0.9, 10).unwrap();
    let net = drqn_run(&chain, &config, CellKind::Gru, 0).unwrap().final_network();
    let truth = oracle::chain_values(3, 0.9);
    let mut chain_err = 0.0f64;
    for (s, q_star) in truth.iter().enumerate() {
        let q = net
            .q_values(&encode_history(&chain, &HistoryBuf::new(s)).unwrap())
            .unwrap();
        for a in 0..2 {
            chain_err = chain_err.max((q[a] - q_star[a]).abs() / q_star[a].abs());
        }
    }

    let single = SingleStateMdp::new(1.0, 0.9, 10);
    let net = drqn_run(&single, &config, CellKind::Gru, 0).unwrap().final_network();
    let q = net
        .q_values(&encode_history(&single, &HistoryBuf::new(())).unwrap())
        .unwrap()[0];
    let fixed = 1.0 / (1.0 - 0.9);
    let single_err = (q - fixed).abs() / fixed;
    verdict(
        5,
        chain_err <= 0.05 && single_err <= 0.005,
        &format!(
            "chain max relative error {:.2}% (limit 5%); single state q {q:.4} vs {fixed:.4} ({:.3}%, limit 0.5%)",
            100.0 * chain_err,
            100.0 * single_err
        ),
    );
}

// ---------------------------------------------------------------- 6 to 8

struct Trained {
    _dir: tempfile::TempDir,
    runner: Runner,
    records: Vec<MetricRecord>,
}

fn run_config(name: &str, root: &Path, tweak: impl FnOnce(&mut RunConfig)) -> (Runner, Vec<MetricRecord>) {
    let mut config = RunConfig::load(&configs().join(name)).unwrap();
    config.workers = 0;
    tweak(&mut config);
    config.validate().unwrap();
    let runner = Runner::new(config, root.to_path_buf());
    let path = runner.train().unwrap();
    let records = read_records(&path);
    (runner, records)
}

fn desk_run() -> &'static Trained {
    static RUN: OnceLock<Trained> = OnceLock::new();
    RUN.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let (runner, records) = run_config("tmaze-l10.toml", dir.path(), |_| {});
        Trained {
            _dir: dir,
            runner,
            records,
        }
    })
}

/// `(seed, episode) -> value` for one metric and tag of the main protocol.
fn series(records: &[MetricRecord], metric: Metric, tag: Tag) -> BTreeMap<u64, BTreeMap<u64, f64>> {
    let mut out: BTreeMap<u64, BTreeMap<u64, f64>> = BTreeMap::new();
    for r in records
        .iter()
        .filter(|r| r.metric == metric && r.tag == tag && r.epsilon.is_none())
    {
        out.entry(r.seed).or_default().insert(r.episode, r.value);
    }
    out
}

fn first_last(s: &BTreeMap<u64, f64>) -> (f64, f64) {
    (*s.values().next().unwrap(), *s.values().next_back().unwrap())
}

#[test]
fn criterion_6_desk_scale_training() {
    let start = Instant::now();
    let run = desk_run();
    let optimum = 4.0 * 0.98f64.powi(10);
    let returns = series(&run.records, Metric::Return, Tag::Main);
    let mi = series(&run.records, Metric::Mi, Tag::Main);

    let final_returns: Vec<f64> = returns.values().map(|s| first_last(s).1).collect();
    let near_optimal = final_returns
        .iter()
        .filter(|j| ((*j - optimum) / optimum).abs() <= 0.02)
        .count();
    let rises = mi
        .values()
        .filter(|s| {
            let (a, b) = first_last(s);
            b > a
        })
        .count();

    let maze = TMaze::new(TMazeParams::deterministic(10)).unwrap();
    let states = maze.num_non_terminal_states();
    let uniform = DiscreteBelief::from_weights(vec![1.0; states], 0).unwrap();
    let cap = belief_entropy(&uniform);
    assert_eq!(states, 22);
    assert!((cap - 22f64.log2()).abs() < 1e-12);
    let highest = mi
        .values()
        .flat_map(|s| s.values())
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);

    let points = correlation_points(&run.records);
    let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().map(|p| (p.mi, p.ret)).unzip();
    let rho = spearman(&xs, &ys).unwrap();

    verdict(
        6,
        returns.len() == 4 && near_optimal >= 3 && rises >= 3 && highest <= cap + 0.3 && rho > 0.3,
        &format!(
            "final returns {final_returns:.4?} vs {optimum:.4} ({near_optimal}/4 within 2%); \
             information rose in {rises}/4 seeds; max {highest:.3} bits (cap {:.4}); \
             pooled Spearman {rho:.3} over {} checkpoints; {:.0}s",
            cap + 0.3,
            points.len(),
            start.elapsed().as_secs_f64()
        ),
    );
}

#[test]
fn criterion_7_relevance_split() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let (_, records) = run_config("tmaze-l10-irrelevant.toml", dir.path(), |c| {
        c.drqn.cadence = c.drqn.episodes
    });
    let relevant = series(&records, Metric::Mi, Tag::Relevant);
    let irrelevant = series(&records, Metric::Mi, Tag::Irrelevant);
    let mut detail = Vec::new();
    let mut good = 0;
    for (seed, rel) in &relevant {
        let (r0, r1) = first_last(rel);
        let (i0, i1) = first_last(&irrelevant[seed]);
        good += usize::from(r1 > r0 && i1 < i0);
        detail.push(format!(
            "seed {seed}: relevant {r0:.3}->{r1:.3}, irrelevant {i0:.3}->{i1:.3}"
        ));
    }
    verdict(
        7,
        relevant.len() == 4 && good >= 3,
        &format!(
            "{good}/4 seeds split as expected ({}); {:.0}s",
            detail.join("; "),
            start.elapsed().as_secs_f64()
        ),
    );
}

#[test]
fn criterion_8_generalization_sweep() {
    let run = desk_run();
    let start = Instant::now();
    let records = read_records(&run.runner.sweep().unwrap());
    let mut by_eps: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.metric == Metric::Mi && r.tag == Tag::Main) {
        by_eps.entry(r.epsilon.unwrap().to_bits()).or_default().push(r.value);
    }
    let mut curve: Vec<(f64, f64)> = by_eps
        .into_iter()
        .map(|(e, v)| (f64::from_bits(e), v.iter().sum::<f64>() / v.len() as f64))
        .collect();
    curve.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (eps, mean): (Vec<f64>, Vec<f64>) = curve.iter().copied().unzip();
    let at = |e: f64| curve.iter().find(|p| p.0 == e).map(|p| p.1).unwrap_or(f64::NAN);
    let (zero, one) = (at(0.0), at(1.0));
    let rho = spearman(&eps, &mean).unwrap_or(f64::NAN);
    verdict(
        8,
        curve.len() == 6 && one > 0.0 && one <= zero && rho <= 0.0,
        &format!(
            "seed-mean information by epsilon {curve:.3?}; eps=1 {one:.3} vs eps=0 {zero:.3}; Spearman {rho:.3}; {:.0}s",
            start.elapsed().as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------- 9

#[test]
fn criterion_9_determinism() {
    let csvs = |root: &Path| {
        let config = RunConfig::load(&configs().join("miniature.toml")).unwrap();
        let runner = Runner::new(config, root.to_path_buf());
        let main = runner.train().unwrap();
        let sweep = runner.sweep().unwrap();
        (fs::read(main).unwrap(), fs::read(sweep).unwrap())
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = csvs(a.path());
    let second = csvs(b.path());
    let rows = first.0.iter().filter(|&&c| c == b'\n').count() + first.1.iter().filter(|&&c| c == b'\n').count();
    verdict(
        9,
        first == second && rows > 2,
        &format!(
            "two fresh runs wrote {} and {} bytes of CSV ({rows} lines), identical: {}",
            first.0.len() + first.1.len(),
            second.0.len() + second.1.len(),
            first == second
        ),
    );
}
