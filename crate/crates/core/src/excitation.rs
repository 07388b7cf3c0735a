//! Windowed information matrices and the excitation conditions built on
//! them: joint connectivity, joint observability, the eigenvalue lower
//! bound for balanced conditional graphs, stationary observability of
//! Markov-switching networks, and the running persistence-of-excitation
//! series `R(k) = 1 / Σ_{i≤k} Λ_i^h`.

use std::collections::VecDeque;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::gains::GainSchedule;
use crate::graph::{is_conditionally_balanced, propagate, stationary_distribution, Exactness, GraphProcess};
use crate::history::HistoryCut;
use crate::matrix::{block_diag, kron, lambda_2, lambda_min, Matrix};
use crate::noise::MeasurementNoise;
use crate::regression::RegressionProcess;
use crate::rng::{aux_stream, StreamRng};

/// Edges lighter than this are absent from the support digraph.
pub const EDGE_TOL: f64 = 1e-12;
/// Relative threshold under which a minimum eigenvalue counts as zero.
pub const RANK_TOL: f64 = 1e-10;

/// Monte Carlo settings used when a conditional gram has no closed form.
#[derive(Debug, Clone)]
pub struct MonteCarloSpec {
    pub x0: Vec<f64>,
    pub noise: MeasurementNoise,
    pub samples: usize,
    pub seed: u64,
}

/// Source of the conditional means entering the information matrices.
#[derive(Debug, Clone)]
pub struct Expectations<'a> {
    pub graph: &'a GraphProcess,
    pub regression: &'a RegressionProcess,
    pub monte_carlo: Option<MonteCarloSpec>,
}

impl<'a> Expectations<'a> {
    pub fn analytic(graph: &'a GraphProcess, regression: &'a RegressionProcess) -> Self {
        Self {
            graph,
            regression,
            monte_carlo: None,
        }
    }

    pub fn with_monte_carlo(mut self, spec: MonteCarloSpec) -> Self {
        self.monte_carlo = Some(spec);
        self
    }

    pub fn nodes(&self) -> usize {
        self.graph.nodes()
    }

    pub fn dim(&self) -> usize {
        self.regression.dim()
    }

    fn node_grams(&self, step: usize, cut: &HistoryCut) -> Result<(Vec<Matrix>, Exactness)> {
        match self.regression.conditional_expected_node_grams(step, cut) {
            Ok(g) => Ok((g, Exactness::Analytic)),
            Err(Error::UnsupportedAnalytic(what)) => {
                let mc = self.monte_carlo.as_ref().ok_or(Error::UnsupportedAnalytic(what))?;
                let mut rng = aux_stream(mc.seed, step as u64);
                self.regression
                    .monte_carlo_node_grams(&mc.x0, &mc.noise, step, cut, mc.samples, &mut rng)
            }
            Err(e) => Err(e),
        }
    }
}

fn merge_exactness(a: Exactness, b: Exactness) -> Exactness {
    match (a, b) {
        (Exactness::Analytic, x) | (x, Exactness::Analytic) => x,
        (Exactness::MonteCarlo { samples: s }, Exactness::MonteCarlo { samples: t }) => {
            Exactness::MonteCarlo { samples: s.min(t) }
        }
    }
}

/// Sums over the window `[kh, (k+1)h − 1]` conditioned on `cut`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowTerms {
    pub k: usize,
    pub h: usize,
    /// `Σ_i E[L̂_G(i) | cut]`, `N×N`.
    pub laplacian_sum: Matrix,
    /// `Σ_i Σ_j E[H_iᵀ(j) H_i(j) | cut]`, `n×n`.
    pub gram_sum: Matrix,
    /// `Σ_i (b(i) E[L̂_G(i)|cut] ⊗ I_n + a(i) E[𝓗ᵀ𝓗(i)|cut])`.
    pub info: Matrix,
    /// The same sum with unit weights.
    pub info_unit: Matrix,
    pub exactness: Exactness,
}

impl WindowTerms {
    /// `Λ_k^h`.
    pub fn lambda(&self) -> Result<f64> {
        lambda_min(&self.info)
    }

    /// `Λ̃_k^h`.
    pub fn lambda_tilde(&self) -> Result<f64> {
        lambda_min(&self.info_unit)
    }

    /// Second smallest eigenvalue of the summed conditional Laplacian.
    pub fn connectivity(&self) -> Result<f64> {
        lambda_2(&self.laplacian_sum)
    }

    /// Minimum eigenvalue of the spatio-temporal gram.
    pub fn observability(&self) -> Result<f64> {
        lambda_min(&self.gram_sum)
    }
}

/// Assembles every window sum for window `k` of length `h`.
pub fn window_terms(exp: &Expectations<'_>, gains: &GainSchedule, k: usize, h: usize, cut: &HistoryCut) -> Result<WindowTerms> {
    if h == 0 {
        return Err(invalid("window length must be at least 1"));
    }
    let (nodes, n) = (exp.nodes(), exp.dim());
    if exp.regression.nodes() != nodes {
        return Err(invalid("graph and regression disagree on node count"));
    }
    let eye = Matrix::identity(n);
    let mut laplacian_sum = Matrix::zeros(nodes, nodes);
    let mut gram_sum = Matrix::zeros(n, n);
    let mut info = Matrix::zeros(nodes * n, nodes * n);
    let mut info_unit = Matrix::zeros(nodes * n, nodes * n);
    let mut exactness = Exactness::Analytic;
    for i in k * h..(k + 1) * h {
        let l = exp.graph.conditional_expected_sym_laplacian(i, cut)?;
        exactness = merge_exactness(exactness, l.exactness);
        let (grams, ex) = exp.node_grams(i, cut)?;
        exactness = merge_exactness(exactness, ex);
        let lk = kron(&l.matrix, &eye);
        let hh = block_diag(&grams)?;
        let g = gains.at(i);
        info = &info + &(&lk.scale(g.b) + &hh.scale(g.a));
        info_unit = &(&info_unit + &lk) + &hh;
        laplacian_sum = &laplacian_sum + &l.matrix;
        for gi in &grams {
            gram_sum = &gram_sum + gi;
        }
    }
    Ok(WindowTerms {
        k,
        h,
        laplacian_sum,
        gram_sum,
        info,
        info_unit,
        exactness,
    })
}

/// `Σ_{i=kh}^{(k+1)h−1} (b(i) E[L̂_G(i)|cut] ⊗ I_n + a(i) E[𝓗ᵀ𝓗(i)|cut])`.
pub fn info_matrix(exp: &Expectations<'_>, gains: &GainSchedule, k: usize, h: usize, cut: &HistoryCut) -> Result<Matrix> {
    Ok(window_terms(exp, gains, k, h, cut)?.info)
}

pub fn lambda_min_window(info: &Matrix) -> Result<f64> {
    lambda_min(info)
}

/// Every history cut that can precede window `k`: the start for the first
/// window; for a Markov graph one cut per state reachable at `kh − 1`.
pub fn possible_cuts(graph: &GraphProcess, k: usize, h: usize) -> Vec<HistoryCut> {
    let start = k * h;
    if start == 0 {
        return vec![HistoryCut::start()];
    }
    match graph {
        GraphProcess::MarkovSwitching {
            transition, initial, ..
        } => propagate(transition, *initial, start - 1)
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(s, _)| HistoryCut::at(start - 1).with_graph_state(s))
            .collect(),
        _ => vec![HistoryCut::at(start - 1)],
    }
}

/// Rounding allowance when comparing an eigenvalue to a threshold.
pub const THRESHOLD_SLACK: f64 = 1e-12;

/// Smallest value a window statistic reaches, with the window attaining it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionCheck {
    pub holds: bool,
    pub threshold: f64,
    pub min_value: f64,
    pub argmin_window: usize,
    pub windows: usize,
}

fn min_over_windows<F>(graph: &GraphProcess, h: usize, windows: usize, threshold: f64, mut stat: F) -> Result<ConditionCheck>
where
    F: FnMut(usize, &HistoryCut) -> Result<f64>,
{
    if windows == 0 {
        return Err(invalid("need at least one window"));
    }
    let mut min_value = f64::INFINITY;
    let mut argmin_window = 0;
    for k in 0..windows {
        for cut in possible_cuts(graph, k, h) {
            let v = stat(k, &cut)?;
            if v < min_value {
                min_value = v;
                argmin_window = k;
            }
        }
    }
    Ok(ConditionCheck {
        holds: min_value >= threshold - THRESHOLD_SLACK * threshold.abs().max(1.0),
        threshold,
        min_value,
        argmin_window,
        windows,
    })
}

/// Whether `λ₂(Σ_window E[L̂_G | cut]) ≥ θ₁` in each of the first `windows`
/// windows, for every reachable cut.
pub fn check_definition1(graph: &GraphProcess, h: usize, theta1: f64, windows: usize) -> Result<ConditionCheck> {
    if h == 0 {
        return Err(invalid("window length must be at least 1"));
    }
    let nodes = graph.nodes();
    min_over_windows(graph, h, windows, theta1, |k, cut| {
        let mut sum = Matrix::zeros(nodes, nodes);
        for i in k * h..(k + 1) * h {
            sum = &sum + &graph.conditional_expected_sym_laplacian(i, cut)?.matrix;
        }
        lambda_2(&sum)
    })
}

/// Whether `λ_min(Σ_i Σ_window E[H_iᵀ H_i | cut]) ≥ θ₂` in each of the first
/// `windows` windows. The regression kinds with closed-form grams are
/// temporally independent, so a single cut per window suffices.
pub fn check_definition2(regression: &RegressionProcess, h: usize, theta2: f64, windows: usize) -> Result<ConditionCheck> {
    if h == 0 {
        return Err(invalid("window length must be at least 1"));
    }
    let trivial = GraphProcess::Fixed {
        adjacency: Matrix::zeros(1, 1),
    };
    min_over_windows(&trivial, h, windows, theta2, |k, cut| {
        lambda_min(&regression.spatio_temporal_gram(k * h..(k + 1) * h, cut)?)
    })
}

/// Both sides of the eigenvalue lower bound in one window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LowerBoundWindow {
    pub k: usize,
    pub lambda_tilde: f64,
    pub lambda2: f64,
    pub gram_lambda_min: f64,
    pub bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowerBoundReport {
    pub h: usize,
    pub rho0: f64,
    /// Almost-sure bound on `‖𝓗ᵀ𝓗‖` used to confirm the first-moment
    /// condition; `None` when the regression is unbounded.
    pub gram_norm_bound: Option<f64>,
    pub windows: Vec<LowerBoundWindow>,
    pub violations: usize,
}

impl LowerBoundReport {
    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

/// Relative slack absorbing eigenvalue rounding in the bound comparison.
const BOUND_SLACK: f64 = 1e-10;

/// Checks `Λ̃_k^h ≥ λ₂/(2Nhρ₀ + Nλ₂) · λ_min(spatio-temporal gram)` in each
/// of the first `windows` windows and every reachable cut.
///
/// Fails with a precondition error when the graph is not in the balanced
/// class or `ρ₀` is below the almost-sure bound on `‖𝓗ᵀ𝓗‖`.
pub fn lemma_lower_bound_check(
    graph: &GraphProcess,
    regression: &RegressionProcess,
    h: usize,
    rho0: f64,
    windows: usize,
) -> Result<LowerBoundReport> {
    if !graph.is_gamma1() {
        return Err(Error::PreconditionFailed(
            "conditional mean graphs are not nonnegative and balanced".into(),
        ));
    }
    let bound = regression.model.gram_norm_bound();
    match bound {
        Some(b) if b > rho0 * (1.0 + 1e-12) => {
            return Err(Error::PreconditionFailed(format!(
                "rho0 = {rho0} is below the bound {b} on the regression gram norm"
            )))
        }
        None => {
            return Err(Error::PreconditionFailed(
                "regression gram norm is unbounded; the first-moment condition cannot be confirmed".into(),
            ))
        }
        _ => {}
    }
    let exp = Expectations::analytic(graph, regression);
    let unit = GainSchedule::Tabulated {
        a: vec![1.0],
        b: vec![1.0],
        lambda: vec![0.0],
    };
    let nodes = graph.nodes() as f64;
    let mut out = Vec::new();
    for k in 0..windows {
        for cut in possible_cuts(graph, k, h) {
            let w = window_terms(&exp, &unit, k, h, &cut)?;
            let lambda_tilde = w.lambda_tilde()?;
            let lambda2 = w.connectivity()?;
            let gram_lambda_min = w.observability()?;
            let factor = lambda2 / (2.0 * nodes * h as f64 * rho0 + nodes * lambda2);
            let rhs = factor * gram_lambda_min;
            let scale = w.info_unit.max_abs().max(1.0);
            out.push(LowerBoundWindow {
                k,
                lambda_tilde,
                lambda2,
                gram_lambda_min,
                bound: rhs,
                holds: lambda_tilde >= rhs - BOUND_SLACK * scale,
            });
        }
    }
    let violations = out.iter().filter(|w| !w.holds).count();
    Ok(LowerBoundReport {
        h,
        rho0,
        gram_norm_bound: bound,
        windows: out,
        violations,
    })
}

/// Finite-state Markov network: one adjacency and one set of per-node
/// regression matrices per state.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovNetwork {
    pub adjacency: Vec<Matrix>,
    pub regression: Vec<Vec<Matrix>>,
    pub transition: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationaryReport {
    pub stationary: Vec<f64>,
    pub mean_adjacency: Vec<Vec<f64>>,
    pub nonnegative: bool,
    pub balanced: bool,
    pub spanning_tree: bool,
    /// `λ_min(Σ_i Σ_l π_l H_{i,l}ᵀ H_{i,l})`.
    pub observability: f64,
    pub observable: bool,
}

impl StationaryReport {
    pub fn passes(&self) -> bool {
        self.nonnegative && self.balanced && self.spanning_tree && self.observable
    }
}

/// Whether some node reaches every other node along edges `j → i` with
/// `w_ij > EDGE_TOL` (node `i` weighs information from `j`).
pub fn has_spanning_tree(adjacency: &Matrix) -> bool {
    let n = adjacency.rows();
    (0..n).any(|root| {
        let mut seen = vec![false; n];
        seen[root] = true;
        let mut queue = VecDeque::from([root]);
        while let Some(j) = queue.pop_front() {
            for i in 0..n {
                if !seen[i] && adjacency[(i, j)] > EDGE_TOL {
                    seen[i] = true;
                    queue.push_back(i);
                }
            }
        }
        seen.iter().all(|&s| s)
    })
}

/// Stationary observability of a Markov network: the stationary mean graph
/// must be nonnegative, balanced and contain a spanning tree, and the
/// stationary-weighted spatial gram must be positive definite.
pub fn corollary1_stationary_check(net: &MarkovNetwork) -> Result<StationaryReport> {
    let m = net.adjacency.len();
    if m == 0 || net.regression.len() != m {
        return Err(invalid("need one adjacency and one regression set per state"));
    }
    if net.transition.rows() != m {
        return Err(invalid("transition size does not match the state count"));
    }
    let pi = stationary_distribution(&net.transition)?;
    let nodes = net.adjacency[0].rows();
    let n = net.regression[0]
        .first()
        .map(Matrix::cols)
        .ok_or_else(|| invalid("regression sets must be nonempty"))?;
    let mut mean = Matrix::zeros(nodes, nodes);
    let mut gram = Matrix::zeros(n, n);
    for (l, &p) in pi.iter().enumerate() {
        mean = &mean + &net.adjacency[l].scale(p);
        if net.regression[l].len() != nodes {
            return Err(invalid(format!("state {l} has the wrong number of regression matrices")));
        }
        for h in &net.regression[l] {
            if h.cols() != n {
                return Err(invalid("regression matrices differ in column count"));
            }
            gram = &gram + &h.gram().scale(p);
        }
    }
    let nonnegative = mean.as_slice().iter().all(|&w| w >= -crate::graph::NONNEG_TOL);
    let balanced = is_conditionally_balanced(&mean);
    let observability = lambda_min(&gram)?;
    Ok(StationaryReport {
        stationary: pi,
        nonnegative,
        balanced,
        spanning_tree: has_spanning_tree(&mean),
        observable: observability > RANK_TOL * gram.max_abs().max(1.0),
        observability,
        mean_adjacency: mean.to_rows(),
    })
}

/// One window of the persistence-of-excitation series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeWindow {
    pub k: usize,
    pub lambda: f64,
    pub lambda_tilde: f64,
    pub connectivity: f64,
    pub observability: f64,
    pub cumulative: f64,
    /// `1 / Σ_{i≤k} Λ_i^h`; absent while the sum is not positive.
    pub r: Option<f64>,
}

/// Finite-horizon growth summary of `Σ Λ_k^h`. It never decides the
/// infinite-horizon question.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthSummary {
    /// Slope of `log ΣΛ` against `log k` over the second half of the
    /// windows; 1 is linear growth, 0 is saturation.
    pub log_log_slope: Option<f64>,
    /// Increase of `ΣΛ` over the second half relative to its final value.
    pub late_share: Option<f64>,
    pub still_growing: bool,
    pub warnings: Vec<String>,
}

/// Slope under which growth counts as flattening out.
const FLAT_SLOPE: f64 = 0.05;

fn growth_summary(series: &[PeWindow]) -> GrowthSummary {
    let mut warnings = Vec::new();
    let total = series.last().map_or(0.0, |w| w.cumulative);
    if total <= 0.0 {
        warnings.push("no excitation: the information series never became positive".into());
        return GrowthSummary {
            log_log_slope: None,
            late_share: None,
            still_growing: false,
            warnings,
        };
    }
    let half = series.len() / 2;
    let late = &series[half..];
    let pts: Vec<(f64, f64)> = late
        .iter()
        .filter(|w| w.cumulative > 0.0)
        .map(|w| (((w.k + 1) as f64).ln(), w.cumulative.ln()))
        .collect();
    let slope = if pts.len() >= 2 {
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        (sxx > 0.0).then(|| sxy / sxx)
    } else {
        None
    };
    let before = if half == 0 { 0.0 } else { series[half - 1].cumulative };
    let late_share = Some((total - before) / total);
    if let Some(s) = slope {
        if s < 1.0 {
            warnings.push(format!(
                "sublinear growth (log-log slope {s:.3}); divergence cannot be decided at a finite horizon"
            ));
        }
    }
    let still_growing = slope.is_some_and(|s| s > FLAT_SLOPE);
    if !still_growing {
        warnings.push("the information series is flattening out over the second half of the horizon".into());
    }
    GrowthSummary {
        log_log_slope: slope,
        late_share,
        still_growing,
        warnings,
    }
}

/// Excitation diagnostics of a configured network, serialized next to the
/// trajectory output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcitationReport {
    pub h: usize,
    pub windows: Vec<PeWindow>,
    pub growth: GrowthSummary,
    pub exactness: Exactness,
    pub gamma1: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jointly_connected: Option<ConditionCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jointly_observable: Option<ConditionCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower_bound: Option<LowerBoundReport>,
    pub notes: Vec<String>,
}

/// Thresholds and constants to audit alongside the series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditTargets {
    pub theta1: Option<f64>,
    pub theta2: Option<f64>,
    pub rho0: Option<f64>,
}

/// Walks `windows` windows of length `h` along one sample path of the
/// history (the Markov chain state and, for autoregressive regressors, the
/// measurements), accumulating `Λ_k^h`, `Λ̃_k^h` and `R(k)`.
pub fn pe_diagnostic(
    exp: &Expectations<'_>,
    gains: &GainSchedule,
    h: usize,
    windows: usize,
    targets: AuditTargets,
    rng: &mut StreamRng,
) -> Result<ExcitationReport> {
    if h == 0 || windows == 0 {
        return Err(invalid("need h >= 1 and at least one window"));
    }
    let mut path = HistoryPath::new(exp);
    let mut series = Vec::with_capacity(windows);
    let mut cumulative = 0.0;
    let mut exactness = Exactness::Analytic;
    for k in 0..windows {
        let cut = path.cut_before(k * h, rng)?;
        let w = window_terms(exp, gains, k, h, &cut)?;
        exactness = merge_exactness(exactness, w.exactness);
        let lambda = w.lambda()?;
        cumulative += lambda;
        series.push(PeWindow {
            k,
            lambda,
            lambda_tilde: w.lambda_tilde()?,
            connectivity: w.connectivity()?,
            observability: w.observability()?,
            cumulative,
            r: (cumulative > 0.0).then(|| 1.0 / cumulative),
        });
    }
    let mut notes = Vec::new();
    let analytic_regression = exp.regression.model.gram_norm_bound().is_some();
    let jointly_connected = targets
        .theta1
        .map(|t| check_definition1(exp.graph, h, t, windows))
        .transpose()?;
    let jointly_observable = match targets.theta2 {
        Some(t) if analytic_regression => Some(check_definition2(exp.regression, h, t, windows)?),
        Some(_) => {
            notes.push("joint observability not audited: no closed-form conditional gram".into());
            None
        }
        None => None,
    };
    let lower_bound = match targets.rho0 {
        Some(rho0) => match lemma_lower_bound_check(exp.graph, exp.regression, h, rho0, windows) {
            Ok(r) => Some(r),
            Err(Error::PreconditionFailed(msg)) => {
                notes.push(format!("eigenvalue lower bound not checked: {msg}"));
                None
            }
            Err(e) => return Err(e),
        },
        None => None,
    };
    if targets.rho0.is_some() {
        notes.push(
            "rho0 checked against the first conditional moment of the gram norm only; the higher-moment condition is unchecked"
                .into(),
        );
    }
    Ok(ExcitationReport {
        h,
        growth: growth_summary(&series),
        windows: series,
        exactness,
        gamma1: exp.graph.is_gamma1(),
        jointly_connected,
        jointly_observable,
        lower_bound,
        notes,
    })
}

/// Realized history needed to condition on a sample path.
struct HistoryPath<'e, 'a> {
    exp: &'e Expectations<'a>,
    step: usize,
    chain: Option<usize>,
    ar: Option<crate::history::ArHistory>,
}

impl<'e, 'a> HistoryPath<'e, 'a> {
    fn new(exp: &'e Expectations<'a>) -> Self {
        Self {
            exp,
            step: 0,
            chain: None,
            ar: exp.regression.model.initial_history(),
        }
    }

    /// Advances the path through step `window_start − 1` and returns the cut.
    fn cut_before(&mut self, window_start: usize, rng: &mut StreamRng) -> Result<HistoryCut> {
        if window_start == 0 {
            return Ok(HistoryCut::start());
        }
        while self.step < window_start {
            if let GraphProcess::MarkovSwitching {
                transition, initial, ..
            } = self.exp.graph
            {
                self.chain = Some(match self.chain {
                    None => *initial,
                    Some(s) => crate::graph::markov_transition(transition, s, rng),
                });
            }
            if let Some(hist) = self.ar.as_mut() {
                let mc = self
                    .exp
                    .monte_carlo
                    .as_ref()
                    .ok_or_else(|| Error::UnsupportedAnalytic("ar-driven regression matrices".into()))?;
                let s = self
                    .exp
                    .regression
                    .sample_regression(&mc.x0, self.step, &mc.noise, rng, Some(hist))?;
                hist.push(&s.y);
            }
            self.step += 1;
        }
        let mut cut = HistoryCut::at(window_start - 1);
        if let Some(s) = self.chain {
            cut = cut.with_graph_state(s);
        }
        if let Some(hist) = &self.ar {
            cut = cut.with_ar_history(hist.clone());
        }
        Ok(cut)
    }
}
