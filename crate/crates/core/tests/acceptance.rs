//! Acceptance criteria 1-10. Run with `--nocapture` to see the verdict lines.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use depcens::booster::tree::grow_tree;
use depcens::booster::{Node, SortedColumns, TreeParams};
use depcens::cli::study::{CLAYTON_BOOST, STD_BOOST};
use depcens::cli::{run_study, StudyConfig, StudyOutcome};
use depcens::copula::CopulaFamily;
use depcens::data::Matrix;
use depcens::loss::{clayton_grad, clayton_hess, clayton_loss, EPS, HESSIAN_FLOOR};
use depcens::metrics::{concordance, concordance_counts, kendall_tau_sample};
use depcens::simulate::{generate, DgpConfig, SimulationMetadata};
use depcens::{rng_from_seed, BaselineFamily, BaselineSpec, ClaytonAftLoss, CopulaSpec};
use rand::Rng;

/// Print the verdict line, then fail the test if the criterion failed.
fn verdict(n: u32, pass: bool, detail: String) {
    println!("criterion {n}: {} | {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} failed: {detail}");
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed < Duration::from_secs(limit_s)
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_depcens"))
}

#[test]
fn criterion_01_censoring_rates() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for (c, target) in [(0.89, 0.90), (1.2, 0.70), (1.49, 0.50), (2.06, 0.10)] {
        let cfg = dir.path().join("sim.json");
        fs::write(
            &cfg,
            format!(
                r#"{{"n": 10000, "c": {c}, "copula": {{"family": "clayton", "theta": 3.0}},
                   "weibull_shape": 3.0, "weibull_scale": 1.0, "seed": 2024}}"#
            ),
        )
        .unwrap();
        let out = bin()
            .current_dir(dir.path())
            .args(["--quiet", "--config", "sim.json", "simulate"])
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let meta: SimulationMetadata =
            serde_json::from_str(&fs::read_to_string(dir.path().join("metadata.json")).unwrap()).unwrap();
        let got = meta.censoring_fraction;
        pass &= (got - target).abs() <= 0.03;
        parts.push(format!("c={c}: {got:.4} (target {target:.2})"));
    }
    let elapsed = start.elapsed();
    pass &= within(elapsed, 5);
    verdict(1, pass, format!("{}; {:.1}s", parts.join(", "), elapsed.as_secs_f64()));
}

#[test]
fn criterion_02_kendall_tau() {
    let start = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    let cases = [
        (CopulaFamily::Clayton, 1.0, 1.0 / 3.0),
        (CopulaFamily::Clayton, 2.0, 0.5),
        (CopulaFamily::Clayton, 3.0, 0.6),
        (CopulaFamily::Clayton, 8.0, 0.8),
        (CopulaFamily::Gumbel, 2.5, 0.6),
        (CopulaFamily::Frank, 7.5, 0.6),
    ];
    for (i, (family, theta, want)) in cases.into_iter().enumerate() {
        let copula = CopulaSpec::new(family, theta).unwrap();
        let sim = generate(&DgpConfig::new(20_000, 1.5, copula, 100 + i as u64)).unwrap();
        let tw = sim.data.true_event_time.as_ref().unwrap();
        let uw = sim.data.true_censor_time.as_ref().unwrap();
        let tau = kendall_tau_sample(tw, uw).unwrap();
        pass &= (tau - want).abs() <= 0.02;
        parts.push(format!("{}({theta}): {tau:.4} vs {want:.3}", family.as_str()));
    }
    let elapsed = start.elapsed();
    pass &= within(elapsed, 30);
    verdict(2, pass, format!("{}; {:.1}s", parts.join(", "), elapsed.as_secs_f64()));
}

fn random_baseline<R: Rng>(rng: &mut R) -> BaselineSpec {
    let family = BaselineFamily::ALL[rng.random_range(0..3)];
    BaselineSpec::new(family, rng.random_range(0.4..1.6)).unwrap()
}

#[test]
fn criterion_03_derivatives() {
    let start = Instant::now();
    let mut rng = rng_from_seed(3);
    let rel = 1e-4;
    let (mut worst_g, mut worst_h) = (0.0f64, 0.0f64);
    let mut floor_ok = true;
    for k in 0..200 {
        let theta = [0.5, 1.0, 3.0, 8.0][k % 4];
        let spec = ClaytonAftLoss::new(theta, random_baseline(&mut rng), random_baseline(&mut rng)).unwrap();
        let t: f64 = rng.random_range(0.2..5.0);
        let y = t.ln() + rng.random_range(-1.5..1.5);
        let ev = rng.random_bool(0.5);
        let l = |y: f64| clayton_loss(&spec, t, ev, y).unwrap();
        let g = clayton_grad(&spec, t, ev, y).unwrap();
        let raw_h = spec.evaluate_raw(t, ev, y).unwrap().hess;
        let hg = 1e-5;
        let fd_g = (l(y + hg) - l(y - hg)) / (2.0 * hg);
        let hh = 1e-3;
        let fd_h = (l(y + hh) - 2.0 * l(y) + l(y - hh)) / (hh * hh);
        // Relative error, with an absolute floor for derivatives near zero.
        worst_g = worst_g.max((fd_g - g).abs() / g.abs().max(1e-4));
        worst_h = worst_h.max((fd_h - raw_h).abs() / raw_h.abs().max(1e-4));
        floor_ok &= clayton_hess(&spec, t, ev, y).unwrap() == raw_h.max(HESSIAN_FLOOR);
    }
    let elapsed = start.elapsed();
    let pass = worst_g <= rel && worst_h <= rel && floor_ok && within(elapsed, 5);
    verdict(
        3,
        pass,
        format!(
            "max rel err grad {worst_g:.2e}, hess {worst_h:.2e}, floor {floor_ok}; {:.2}s",
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_04_theta_to_zero() {
    let (sz, sv) = (0.8, 1.2);
    let mut worst = 0.0f64;
    let mut k = 0;
    let mut clamped = 0;
    for t in [0.3, 0.7, 1.0, 2.0, 4.5] {
        for j in 0..10 {
            let y = -1.5 + 0.3 * j as f64;
            for ev in [true, false] {
                let fz = BaselineFamily::ALL[k % 3];
                let fv = BaselineFamily::ALL[(k / 3) % 3];
                k += 1;
                let ez = BaselineSpec::new(fz, sz).unwrap();
                let ev_spec = BaselineSpec::new(fv, sv).unwrap();
                let spec = ClaytonAftLoss::new(1e-8, ez, ev_spec).unwrap();
                let s = (f64::ln(t) - y) / sz;
                let r = (f64::ln(t) - y) / sv;
                // Survival values go through the same clamp the loss applies.
                let mut sf = |f: BaselineFamily, q: f64| {
                    let raw = f.sf(q).unwrap();
                    clamped += usize::from(!(EPS..=1.0 - EPS).contains(&raw));
                    raw.clamp(EPS, 1.0 - EPS)
                };
                let expected = if ev {
                    -(fz.pdf(s).unwrap() / (sz * t)).ln() - sf(fv, r).ln()
                } else {
                    -sf(fz, s).ln() - (fv.pdf(r).unwrap() / (sv * t)).ln()
                };
                let got = clayton_loss(&spec, t, ev, y).unwrap();
                worst = worst.max((got - expected).abs());
            }
        }
    }
    verdict(4, k == 100 && worst <= 1e-5, format!("{k} points ({clamped} at the survival clamp), max abs diff {worst:.2e}"));
}

/// Pair enumeration written from the definition of Harrell's C.
fn harrell_pairs(time: &[f64], event: &[bool], pred: &[f64]) -> (u64, u64, u64) {
    let (mut conc, mut tied, mut usable) = (0, 0, 0);
    for i in 0..time.len() {
        for j in 0..time.len() {
            if i == j {
                continue;
            }
            // i is the earlier member of a usable pair.
            let earlier = event[i] && (time[i] < time[j] || (time[i] == time[j] && !event[j]));
            if !earlier {
                continue;
            }
            usable += 1;
            if pred[i] < pred[j] {
                conc += 1;
            } else if pred[i] == pred[j] {
                tied += 1;
            }
        }
    }
    (conc, tied, usable)
}

#[test]
fn criterion_05_concordance_oracle() {
    let mut rng = rng_from_seed(5);
    let mut mismatches = 0;
    let mut with_ties = 0;
    for _ in 0..100 {
        let n = rng.random_range(2..=200);
        let levels = rng.random_range(2..40);
        let time: Vec<f64> = (0..n).map(|_| 1.0 + rng.random_range(0..levels) as f64).collect();
        let event: Vec<bool> = (0..n).map(|_| rng.random_bool(0.6)).collect();
        let pred: Vec<f64> = (0..n).map(|_| 0.5 + rng.random_range(0..levels) as f64).collect();
        let (c, t, u) = harrell_pairs(&time, &event, &pred);
        with_ties += usize::from(t > 0);
        let counts = concordance_counts(&time, &event, &pred).unwrap();
        let oracle = if u == 0 {
            0.5
        } else {
            (2 * c + t) as f64 / (2 * u) as f64
        };
        let got = concordance(&time, &event, &pred).unwrap();
        if (counts.concordant, counts.tied_prediction, counts.usable) != (c, t, u) || got != oracle {
            mismatches += 1;
        }
    }
    verdict(
        5,
        mismatches == 0,
        format!("100 instances, {with_ties} with tied predictions, {mismatches} mismatches"),
    );
}

/// Largest objective reduction over every feature and midpoint threshold.
fn best_gain(x: &Matrix, idx: &[usize], g: &[f64], h: &[f64], p: &TreeParams) -> Option<f64> {
    let leaf_obj = |rows: &[usize]| {
        let gs: f64 = rows.iter().map(|&i| g[i]).sum();
        let hs: f64 = rows.iter().map(|&i| h[i]).sum();
        -0.5 * gs * gs / (hs + p.lambda) + p.gamma
    };
    let mut best: Option<f64> = None;
    for j in 0..x.n_cols() {
        let mut vals: Vec<f64> = idx.iter().map(|&i| x.get(i, j)).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let t = 0.5 * (w[0] + w[1]);
            let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| x.get(i, j) < t);
            let hl: f64 = l.iter().map(|&i| h[i]).sum();
            let hr: f64 = r.iter().map(|&i| h[i]).sum();
            if hl < p.min_child_weight || hr < p.min_child_weight {
                continue;
            }
            let gain = leaf_obj(idx) - leaf_obj(&l) - leaf_obj(&r);
            best = Some(best.map_or(gain, |b: f64| b.max(gain)));
        }
    }
    best
}

#[test]
fn criterion_06_booster_optimality() {
    let mut rng = rng_from_seed(6);
    let mut worst = 0.0f64;
    let mut nodes_checked = 0;
    for _ in 0..200 {
        let n = rng.random_range(2..=50);
        let d = rng.random_range(1..=4);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(0..10) as f64 * 0.3).collect())
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let g: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let h: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..2.0)).collect();
        let p = TreeParams {
            max_depth: rng.random_range(1..=4),
            lambda: rng.random_range(0.0..2.0),
            gamma: rng.random_range(0.0..0.3),
            min_child_weight: rng.random_range(0.0..1.0),
        };
        let tree = grow_tree(&x, &SortedColumns::new(&x), &g, &h, &p);
        // Route rows to nodes and track depth.
        let mut members = vec![Vec::new(); tree.nodes.len()];
        let mut depth = vec![0usize; tree.nodes.len()];
        for i in 0..n {
            let mut k = 0;
            loop {
                members[k].push(i);
                match tree.nodes[k] {
                    Node::Leaf { .. } => break,
                    Node::Split { split_feature, threshold, left, right, .. } => {
                        let next = if x.get(i, split_feature) < threshold { left } else { right };
                        depth[next] = depth[k] + 1;
                        k = next;
                    }
                }
            }
        }
        for (k, node) in tree.nodes.iter().enumerate() {
            let idx = &members[k];
            nodes_checked += 1;
            match *node {
                Node::Split { gain, .. } => {
                    let b = best_gain(&x, idx, &g, &h, &p).unwrap_or(f64::NAN);
                    worst = worst.max((gain - b).abs());
                }
                Node::Leaf { weight, .. } => {
                    let gs: f64 = idx.iter().map(|&i| g[i]).sum();
                    let hs: f64 = idx.iter().map(|&i| h[i]).sum();
                    worst = worst.max((weight + gs / (hs + p.lambda)).abs());
                    if depth[k] < p.max_depth {
                        // A leaf above the depth limit must have no improving split.
                        if let Some(b) = best_gain(&x, idx, &g, &h, &p) {
                            worst = worst.max(b.max(0.0));
                        }
                    }
                }
            }
        }
    }
    verdict(
        6,
        worst <= 1e-9,
        format!("200 trees, {nodes_checked} nodes, max deviation {worst:.2e}"),
    );
}

struct Timed {
    outcome: StudyOutcome,
    elapsed: Duration,
}

fn study(which: u8) -> &'static Timed {
    static ONE: OnceLock<Timed> = OnceLock::new();
    static TWO: OnceLock<Timed> = OnceLock::new();
    let cell = if which == 1 { &ONE } else { &TWO };
    cell.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let start = Instant::now();
        let cfg = StudyConfig::preset(which, 5).unwrap();
        let outcome = run_study(&cfg, dir.path()).unwrap();
        Timed {
            outcome,
            elapsed: start.elapsed(),
        }
    })
}

fn mae(o: &StudyOutcome, label: &str, method: &str) -> f64 {
    o.summary_for(label, method)
        .unwrap_or_else(|| panic!("no summary for {label} {method}"))
        .mean_mae
}

#[test]
fn criterion_07_study1_trend() {
    let s = study(1);
    let o = &s.outcome;
    let (lo, hi) = ("theta=1e-10", "theta=8");
    let a = mae(o, hi, STD_BOOST) > mae(o, lo, STD_BOOST);
    let b = mae(o, hi, CLAYTON_BOOST) < mae(o, lo, CLAYTON_BOOST);
    let c = (2..=8).all(|t| {
        let l = format!("theta={t}");
        mae(o, &l, CLAYTON_BOOST) < mae(o, &l, STD_BOOST)
    });
    let runtime = within(s.elapsed, 15 * 60);
    let curve = |m: &str| {
        ["theta=1e-10", "theta=1", "theta=2", "theta=3", "theta=4", "theta=5", "theta=6", "theta=7", "theta=8"]
            .iter()
            .map(|l| format!("{:.3}", mae(o, l, m)))
            .collect::<Vec<_>>()
            .join(" ")
    };
    verdict(
        7,
        a && b && c && runtime,
        format!(
            "(a) {a} (b) {b} (c) {c}; std [{}] clayton [{}]; {:.0}s",
            curve(STD_BOOST),
            curve(CLAYTON_BOOST),
            s.elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_08_study2_trend() {
    let s = study(2);
    let o = &s.outcome;
    let labels: Vec<String> = (1..=9).map(|k| format!("censoring=0.{k}")).collect();
    let std: Vec<f64> = labels.iter().map(|l| mae(o, l, STD_BOOST)).collect();
    let clay: Vec<f64> = labels.iter().map(|l| mae(o, l, CLAYTON_BOOST)).collect();
    let increasing = std.windows(2).all(|w| w[1] > w[0]);
    let ratio = std[8] / std[0];
    let flat = (clay[8] / clay[0] - 1.0).abs() <= 0.25;
    let better = (3..9).all(|k| clay[k] < std[k]);
    let runtime = within(s.elapsed, 20 * 60);
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ");
    verdict(
        8,
        increasing && ratio >= 2.0 && flat && better && runtime,
        format!(
            "std increasing {increasing}, ratio {ratio:.2}; clayton 90%/10% {:.2}; clayton better from 40% {better}; \
             std [{}] clayton [{}]; {:.0}s",
            clay[8] / clay[0],
            fmt(&std),
            fmt(&clay),
            s.elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_09_calibration() {
    let o = &study(1).outcome;
    let std = o.curve_for("theta=3", STD_BOOST);
    let clay = o.curve_for("theta=3", CLAYTON_BOOST);
    let below = std
        .predicted_proportion
        .iter()
        .zip(&std.observed_proportion)
        .filter(|(p, q)| p < q)
        .count();
    let (ms, mc) = (std.mean_abs_deviation(), clay.mean_abs_deviation());
    verdict(
        9,
        std.horizons.len() == 9 && below >= 7 && mc < ms,
        format!("std below diagonal at {below}/9 horizons; mad clayton {mc:.4} vs std {ms:.4}"),
    );
}

fn small_study_config(dir: &Path) -> std::path::PathBuf {
    let mut cfg = StudyConfig::preset(1, 2).unwrap();
    cfg.grid.truncate(2);
    cfg.n_train = 200;
    cfg.n_test = 200;
    cfg.pilot_n = 2000;
    cfg.cv.max_rounds = 50;
    cfg.cv.checkpoint_stride = 25;
    let path = dir.join("study.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

fn study_csvs(config: &Path, threads: &str, out: &Path) -> Vec<(String, Vec<u8>)> {
    let status = bin()
        .args(["--quiet", "--threads", threads, "--out"])
        .arg(out)
        .arg("--config")
        .arg(config)
        .arg("study")
        .status()
        .unwrap();
    assert!(status.success());
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn criterion_10_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_study_config(dir.path());
    // Fresh output directories so no cached partial results are reused.
    let runs: Vec<Vec<(String, Vec<u8>)>> = [("1", "a"), ("1", "b"), ("4", "c")]
        .iter()
        .map(|(threads, name)| study_csvs(&cfg, threads, &dir.path().join(name)))
        .collect();
    let n_files = runs[0].len();
    let repeat = runs[0] == runs[1];
    let threads = runs[0] == runs[2];
    verdict(
        10,
        n_files == 3 && repeat && threads,
        format!("{n_files} CSVs; identical across runs {repeat}, across 1 and 4 threads {threads}"),
    );
}
