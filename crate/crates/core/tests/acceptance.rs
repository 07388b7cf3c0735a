//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails. Run with
//! `cargo test -p dorl-core --test acceptance`.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::Rng;

use dorl_core::config::{preset, three_node_graph, three_node_regression, ExperimentConfig};
use dorl_core::estimator::{compact_step, node_step, EstimatorState, Messages, RunOptions};
use dorl_core::excitation::{
    check_definition1, check_definition2, corollary1_stationary_check, info_matrix, lambda_min_window,
    lemma_lower_bound_check, Expectations, MarkovNetwork,
};
use dorl_core::experiment::run_experiment;
use dorl_core::gains::{GainSchedule, Gains, PowerLaw};
use dorl_core::graph::{GraphProcess, GraphSample};
use dorl_core::history::HistoryCut;
use dorl_core::metrics::{lemma_regret_bound_check, run_batch, RunAggregate};
use dorl_core::noise::{ChannelNoise, NoiseIntensity, NormBoundReport};
use dorl_core::regression::{RegressionModel, RegressionProcess, RegressionSample};
use dorl_core::rng::{run_stream, StreamRng};
use dorl_core::{Matrix, Result};

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

/// Runs with the norm inequalities checked at every step; the reports are
/// collected for criterion 9.
#[derive(Default)]
struct Ledger {
    norm_bounds: NormBoundReport,
    runs: usize,
}

impl Ledger {
    fn simulate(&mut self, name: &str, runs: usize, horizon: usize, stride: usize) -> Result<(RunAggregate, Vec<f64>)> {
        let cfg = preset(name).expect("preset exists");
        let scenario = cfg.scenario()?;
        let opts = RunOptions::new(horizon).stride(stride).check_norm_bounds(true);
        let mut agg = RunAggregate::new();
        let mut final_ratio = Vec::new();
        run_batch(&scenario, cfg.seed, runs, opts, |_, rec| {
            self.norm_bounds.merge(&rec.norm_bounds);
            self.runs += 1;
            let (first, last) = (rec.node_errors_at(0), rec.node_errors_at(rec.last_row()));
            final_ratio.extend(first.iter().zip(last).map(|(a, b)| b / a));
            agg.add(&rec)
        })?;
        Ok((agg, final_ratio))
    }
}

fn random_matrix(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut StreamRng) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

fn criterion1() -> Result<Outcome> {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..1000u64 {
        let mut rng = run_stream(seed, 1);
        let nodes = rng.random_range(1..=5);
        let n = rng.random_range(1..=4);
        let mut a = Matrix::zeros(nodes, nodes);
        for i in 0..nodes {
            for j in 0..nodes {
                if i != j && rng.random::<f64>() < 0.6 {
                    a[(i, j)] = rng.random_range(0.0..2.0);
                }
            }
        }
        let graph = GraphSample::new(0, a)?;
        let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let estimates = (0..nodes)
            .map(|_| (0..n).map(|_| rng.random_range(-10.0..10.0)).collect())
            .collect();
        let h: Vec<Matrix> = (0..nodes)
            .map(|_| {
                let rows = rng.random_range(1..=3);
                random_matrix(rows, n, -2.0, 2.0, &mut rng)
            })
            .collect();
        let v: Vec<f64> = h.iter().flat_map(|m| (0..m.rows()).collect::<Vec<_>>()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = h.iter().flat_map(|m| m.mul_vec(&x0)).zip(&v).map(|(hx, e)| hx + e).collect();
        let reg = RegressionSample::new(0, h, y, v)?;
        let f = NoiseIntensity::new(rng.random_range(0.0..1.0), rng.random_range(0.0..1.0))?;
        let xi = ChannelNoise::gaussian(1.0).draw(nodes, n, &mut rng);
        let g = Gains {
            a: rng.random_range(0.0..1.0),
            b: rng.random_range(0.0..1.0),
            lambda: rng.random_range(0.0..0.5),
        };
        let state = EstimatorState::new(estimates, x0)?;
        let msgs = Messages::compute(&state, &f, &xi)?;
        let p = node_step(&state, &graph, &reg, &msgs, g)?;
        let q = compact_step(&state, &graph, &reg, &f, &xi, g)?;
        for (u, w) in p.stacked().iter().zip(q.stacked()) {
            worst = worst.max((u - w).abs());
        }
    }
    let took = start.elapsed();
    Ok(Outcome::new(
        worst <= 1e-12 && took < Duration::from_secs(10),
        format!("1000 instances, max coordinate gap {worst:.3e}, {took:.2?}"),
    ))
}

fn harmonic() -> GainSchedule {
    GainSchedule::power_law(PowerLaw::new(1.0, 1.0), PowerLaw::new(1.0, 1.0), PowerLaw::ZERO)
}

fn two_node(h2: f64) -> (GraphProcess, RegressionProcess) {
    (
        GraphProcess::Fixed {
            adjacency: Matrix::from_rows(&[[0.0, 1.0], [0.0, 0.0]]).unwrap(),
        },
        RegressionProcess::new(RegressionModel::Fixed {
            h: vec![Matrix::zeros(1, 1), Matrix::from_rows(&[[h2]]).unwrap()],
        }),
    )
}

fn criterion2() -> Result<Outcome> {
    let (g, r) = two_node(1.0);
    let exp = Expectations::analytic(&g, &r);
    let mut worst = 0.0f64;
    for k in 0..=1000 {
        let info = info_matrix(&exp, &harmonic(), k, 1, &HistoryCut::before(k))?;
        worst = worst.max((lambda_min_window(&info)? - 1.0 / (2.0 * k as f64 + 2.0)).abs());
    }
    Ok(Outcome::new(worst <= 1e-12, format!("k <= 1000, max |Lambda - 1/(2k+2)| = {worst:.3e}")))
}

fn criterion3() -> Result<Outcome> {
    let mut rng = run_stream(2024, 0);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let x: f64 = rng.random_range(0.25..1.25);
        // The frozen draw enters the sensing of node 2 as h² = x.
        let (g, r) = two_node(x.sqrt());
        let exp = Expectations::analytic(&g, &r);
        for k in 0..=100 {
            let info = info_matrix(&exp, &harmonic(), k, 1, &HistoryCut::before(k))?;
            let want = (x + 1.0 - (x * x - 2.0 * x + 2.0).sqrt()) / (2.0 * (k as f64 + 1.0));
            worst = worst.max((lambda_min_window(&info)? - want).abs());
        }
    }
    Ok(Outcome::new(worst <= 1e-10, format!("20 draws, k <= 100, max gap {worst:.3e}")))
}

fn criterion4() -> Result<Outcome> {
    let cfg = preset("setting-I").unwrap();
    let c1 = check_definition1(&cfg.graph, 2, 0.5, 50)?;
    let c2 = check_definition2(&cfg.regression, 2, 0.2, 50)?;
    let pass = c1.holds && c2.holds && (c1.min_value - 1.5).abs() <= 1e-10 && (c2.min_value - 13.0 / 6.0).abs() <= 1e-10;
    Ok(Outcome::new(
        pass,
        format!(
            "min lambda_2 = {:.12} (want 1.5), min lambda_min gram = {:.12} (want {:.12})",
            c1.min_value,
            c2.min_value,
            13.0 / 6.0
        ),
    ))
}

fn criterion5(ledger: &mut Ledger) -> Result<Outcome> {
    let mut means = Vec::new();
    let mut worst_ratio = 0.0f64;
    for name in ["setting-I", "setting-II", "setting-III", "setting-IV"] {
        let (agg, ratios) = ledger.simulate(name, 10, 100_000, 1000)?;
        worst_ratio = ratios.iter().copied().fold(worst_ratio, f64::max);
        means.push(agg.mean_v(agg.rows() - 1));
    }
    println!("   invariant: mean V(1e5) under setting-I = {:.4e} (threshold 1e-2)", means[0]);
    let fast = (means[0] + means[1]) / 2.0;
    let slow = (means[2] + means[3]) / 2.0;
    let converged = worst_ratio < 0.05;
    let ordered = fast <= slow;
    Ok(Outcome::new(
        converged && ordered,
        format!(
            "worst final/initial node error {worst_ratio:.3e} (< 0.05: {converged}); mean final V I-II {fast:.4e} vs III-IV {slow:.4e} (ordering holds: {ordered})"
        ),
    ))
}

fn criterion6(ledger: &mut Ledger) -> Result<Outcome> {
    let mut pass = true;
    let mut detail = Vec::new();
    for (reg, unreg) in [("setting-I", "setting-V"), ("setting-III", "setting-VI")] {
        let (ar, _) = ledger.simulate(reg, 50, 10_000, 100)?;
        let (au, _) = ledger.simulate(unreg, 50, 10_000, 100)?;
        let (rr, ru) = (ar.rows() - 1, au.rows() - 1);
        let margin = au.mean_global_norm(ru) - ar.mean_global_norm(rr);
        let se = ar.se_global_norm(rr).hypot(au.se_global_norm(ru));
        let ok = margin >= -2.0 * se;
        pass &= ok;
        detail.push(format!(
            "{reg} {:.6} vs {unreg} {:.6} (margin {margin:.3e}, 2se {:.3e})",
            ar.mean_global_norm(rr),
            au.mean_global_norm(ru),
            2.0 * se
        ));
    }
    Ok(Outcome::new(pass, detail.join("; ")))
}

fn criteria7_8(ledger: &mut Ledger) -> Result<(Outcome, Outcome)> {
    let (agg, _) = ledger.simulate("regret", 50, 100_000, 1)?;
    let rep = lemma_regret_bound_check(&agg, 5.0)?;
    let c7 = Outcome::new(
        rep.holds(),
        format!(
            "{} runs, {} rows x 3 nodes, violations {}, worst gap {:.3e}",
            rep.runs,
            rep.rows_checked,
            rep.violations.len(),
            rep.worst_gap
        ),
    );
    let tau = 0.6;
    let mar: Vec<f64> = [1_000, 10_000, 100_000]
        .iter()
        .map(|&t| agg.row_of(t).and_then(|r| agg.mar(r, tau)))
        .collect::<Result<_>>()?;
    let change = mar[2] / mar[1] - 1.0;
    let c8 = Outcome::new(
        change.abs() < 0.3,
        format!(
            "MAR(1e3) = {:.4}, MAR(1e4) = {:.4}, MAR(1e5) = {:.4}, change over the last decade {:+.1}%",
            mar[0],
            mar[1],
            mar[2],
            100.0 * change
        ),
    );
    let last = agg.rows() - 1;
    println!(
        "   invariant: mean V(1e5) on the regret preset = {:.4e} (threshold 1e-2)",
        agg.mean_v(last)
    );
    Ok((c7, c8))
}

fn criterion9(ledger: &Ledger) -> Outcome {
    let r = &ledger.norm_bounds;
    Outcome::new(
        r.holds() && r.checked > 0,
        format!(
            "{} runs, {} steps checked, W violations {}, M violations {}, worst ratios {:.4} / {:.4}",
            ledger.runs,
            r.checked,
            r.w_violations.len(),
            r.m_violations.len(),
            r.worst_w_ratio,
            r.worst_m_ratio
        ),
    )
}

/// Random balanced nonnegative adjacency: a sum of weighted directed cycles.
fn random_balanced(nodes: usize, rng: &mut StreamRng) -> Matrix {
    let mut a = Matrix::zeros(nodes, nodes);
    for _ in 0..3 {
        let mut perm: Vec<usize> = (0..nodes).collect();
        for i in (1..nodes).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let w: f64 = rng.random_range(0.0..2.0);
        for c in 0..nodes {
            a[(perm[(c + 1) % nodes], perm[c])] += w;
        }
    }
    a
}

fn criterion10() -> Result<Outcome> {
    let mut violations = 0;
    let mut windows = 0;
    for seed in 0..50u64 {
        let mut rng = run_stream(seed, 10);
        let nodes = rng.random_range(2..=5);
        let n = rng.random_range(1..=3);
        let a = random_balanced(nodes, &mut rng);
        let g = GraphProcess::IidUniform {
            lo: a.scale(0.2),
            hi: a.scale(1.8),
        };
        let offset = (0..nodes).map(|_| random_matrix(2, n, -1.0, 1.0, &mut rng)).collect();
        let scale = (0..nodes).map(|_| random_matrix(2, n, -1.0, 1.0, &mut rng)).collect();
        let r = RegressionProcess::new(RegressionModel::EntrywiseUniform { offset, scale });
        let rho0 = r.model.gram_norm_bound().expect("bounded regressors");
        let h = rng.random_range(1..=3);
        let rep = lemma_lower_bound_check(&g, &r, h, rho0, 5)?;
        violations += rep.violations;
        windows += rep.windows.len();
    }
    let rep = lemma_lower_bound_check(&three_node_graph(), &three_node_regression(), 2, 5.0, 50)?;
    violations += rep.violations;
    windows += rep.windows.len();
    Ok(Outcome::new(
        violations == 0,
        format!("50 random instances plus the three-node preset, {windows} windows, {violations} violations"),
    ))
}

fn criterion11() -> Result<Outcome> {
    let pair = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
    let two_state = MarkovNetwork {
        adjacency: vec![pair.clone(), pair],
        regression: vec![
            vec![Matrix::diag(&[1.0, 0.0]), Matrix::diag(&[1.0, 0.0])],
            vec![Matrix::diag(&[0.0, 1.0]), Matrix::diag(&[0.0, 1.0])],
        ],
        transition: Matrix::from_rows(&[[0.5, 0.5], [0.5, 0.5]]).unwrap(),
    };
    let ok = corollary1_stationary_check(&two_state)?;
    let local: Vec<f64> = two_state
        .regression
        .iter()
        .map(|hs| {
            let sum = hs.iter().fold(Matrix::zeros(2, 2), |acc, h| &acc + &h.gram());
            dorl_core::matrix::lambda_min(&sum)
        })
        .collect::<Result<_>>()?;
    let isolated = MarkovNetwork {
        adjacency: vec![Matrix::from_rows(&[[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]).unwrap()],
        regression: vec![vec![Matrix::identity(2); 3]],
        transition: Matrix::from_rows(&[[1.0]]).unwrap(),
    };
    let bad = corollary1_stationary_check(&isolated)?;
    let pass = ok.passes() && local.iter().all(|l| *l <= 1e-12) && !bad.spanning_tree && !bad.passes();
    Ok(Outcome::new(
        pass,
        format!(
            "two-state: local lambda_min {:?}, mixed {:.3}, passes {}; isolated node: spanning tree {}",
            local,
            ok.observability,
            ok.passes(),
            bad.spanning_tree
        ),
    ))
}

fn criterion12() -> Result<Outcome> {
    let mut cfg: ExperimentConfig = preset("regret").unwrap();
    cfg.runs = 4;
    cfg.horizon = 5_000;
    cfg.record_every = 1;
    cfg.seed = 99;
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let sa = run_experiment(&cfg, a.path())?;
    run_experiment(&cfg, b.path())?;
    let mut same = 0;
    let mut differ = Vec::new();
    for f in sa.manifest.files.iter().filter(|f| f.path.ends_with(".csv")) {
        let read = |d: &std::path::Path| std::fs::read(d.join(&f.path)).expect("artifact exists");
        if read(a.path()) == read(b.path()) {
            same += 1;
        } else {
            differ.push(f.path.clone());
        }
    }
    Ok(Outcome::new(
        differ.is_empty() && same == 5,
        format!("{same} CSV files byte-identical across reruns, differing: {differ:?}"),
    ))
}

fn report(id: usize, title: &str, outcome: Result<Outcome>, failures: &mut usize) {
    let o = outcome.unwrap_or_else(|e| Outcome::new(false, format!("error: {e}")));
    if !o.pass {
        *failures += 1;
    }
    println!(
        "criterion {id:>2} [{}] {title}: {}",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail
    );
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut failures = 0;
    let mut ledger = Ledger::default();
    report(1, "node form equals compact form", criterion1(), &mut failures);
    report(2, "two-node information series", criterion2(), &mut failures);
    report(3, "frozen-draw closed form", criterion3(), &mut failures);
    report(4, "three-node excitation constants", criterion4(), &mut failures);
    report(5, "sample-path convergence and gain ordering", criterion5(&mut ledger), &mut failures);
    report(6, "regularization shrinks norms", criterion6(&mut ledger), &mut failures);
    let (c7, c8) = match criteria7_8(&mut ledger) {
        Ok((a, b)) => (Ok(a), Ok(b)),
        Err(e) => (Err(e), Err(dorl_core::Error::InvalidInput("regret simulation failed".into()))),
    };
    report(7, "regret bounded by accumulated error", c7, &mut failures);
    report(8, "MAR levels off", c8, &mut failures);
    report(9, "W and M norm inequalities", Ok(criterion9(&ledger)), &mut failures);
    report(10, "information lower bound", criterion10(), &mut failures);
    report(11, "stationary Markov checker", criterion11(), &mut failures);
    report(12, "byte-identical reruns", criterion12(), &mut failures);
    println!("acceptance: {} of 12 criteria passed in {:.1?}", 12 - failures, start.elapsed());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
