//! The decentralized online regularized update, in per-node and stacked
//! form, and trajectory simulation.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::gains::{GainSchedule, Gains};
use crate::graph::{GraphProcess, GraphSample};
use crate::matrix::{kron, norm, Matrix};
use crate::noise::{build_wm, received_message, ChannelDraw, ChannelNoise, LinkNoise, MeasurementNoise, NoiseIntensity, NormBoundReport, NormBoundSample};
use crate::regression::{RegressionProcess, RegressionSample};
use crate::rng::{run_stream, StreamRng};

/// Node estimates at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState {
    pub step: usize,
    pub estimates: Vec<Vec<f64>>,
    pub x0: Vec<f64>,
}

impl EstimatorState {
    pub fn new(estimates: Vec<Vec<f64>>, x0: Vec<f64>) -> Result<Self> {
        if estimates.is_empty() {
            return Err(invalid("need at least one node"));
        }
        if estimates.iter().any(|x| x.len() != x0.len()) {
            return Err(invalid("every estimate must match the parameter dimension"));
        }
        if estimates.iter().flatten().chain(&x0).any(|v| !v.is_finite()) {
            return Err(invalid("estimates and parameter must be finite"));
        }
        Ok(Self { step: 0, estimates, x0 })
    }

    pub fn nodes(&self) -> usize {
        self.estimates.len()
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    /// `‖x_i - x0‖²` per node.
    pub fn node_errors_sq(&self) -> Vec<f64> {
        self.estimates
            .iter()
            .map(|x| x.iter().zip(&self.x0).map(|(a, b)| (a - b) * (a - b)).sum())
            .collect()
    }

    /// `V(k) = ‖x(k) - 1 ⊗ x0‖²`.
    pub fn v(&self) -> f64 {
        self.node_errors_sq().iter().sum()
    }

    /// Stacked `x(k)`.
    pub fn stacked(&self) -> Vec<f64> {
        self.estimates.concat()
    }

    fn with_stacked(&self, x: Vec<f64>) -> Self {
        let n = self.dim();
        Self {
            step: self.step + 1,
            estimates: x.chunks(n).map(<[f64]>::to_vec).collect(),
            x0: self.x0.clone(),
        }
    }
}

/// Received messages `μ_ji` for every ordered pair, receiver-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Messages {
    nodes: usize,
    n: usize,
    data: Vec<f64>,
}

impl Messages {
    /// Messages formed from the current estimates and one link-noise draw.
    pub fn compute(state: &EstimatorState, intensity: &NoiseIntensity, xi: &ChannelDraw) -> Result<Self> {
        let (nodes, n) = (state.nodes(), state.dim());
        if xi.nodes() != nodes || xi.dim() != n {
            return Err(invalid("link noise draw does not match the network"));
        }
        let mut data = Vec::with_capacity(nodes * nodes * n);
        for i in 0..nodes {
            for j in 0..nodes {
                let mu = received_message(&state.estimates[j], &state.estimates[i], intensity, LinkNoise::Vector(xi.pair(j, i)))?;
                data.extend(mu);
            }
        }
        Ok(Self { nodes, n, data })
    }

    /// `μ_ji`, the message node `i` receives from node `j`.
    pub fn get(&self, sender: usize, receiver: usize) -> &[f64] {
        let start = (receiver * self.nodes + sender) * self.n;
        &self.data[start..start + self.n]
    }
}

fn check_step_inputs(state: &EstimatorState, graph: &GraphSample, regression: &RegressionSample) -> Result<()> {
    let nodes = state.nodes();
    if graph.nodes() != nodes || regression.nodes() != nodes {
        return Err(invalid(format!(
            "node count mismatch: state {nodes}, graph {}, regression {}",
            graph.nodes(),
            regression.nodes()
        )));
    }
    if regression.h.iter().any(|h| h.cols() != state.dim()) {
        return Err(invalid("regression matrices do not match the parameter dimension"));
    }
    Ok(())
}

/// One synchronous round of the per-node recursion
///
/// `x_i ← x_i + a H_iᵀ(y_i − H_i x_i) + b Σ_j w_ij (μ_ji − x_i) − λ x_i`.
pub fn node_step(
    state: &EstimatorState,
    graph: &GraphSample,
    regression: &RegressionSample,
    messages: &Messages,
    gains: Gains,
) -> Result<EstimatorState> {
    check_step_inputs(state, graph, regression)?;
    if messages.nodes != state.nodes() || messages.n != state.dim() {
        return Err(invalid("messages do not match the network"));
    }
    let (nodes, n) = (state.nodes(), state.dim());
    let mut next = Vec::with_capacity(nodes);
    for i in 0..nodes {
        let xi = &state.estimates[i];
        let hi = &regression.h[i];
        let resid: Vec<f64> = hi
            .mul_vec(xi)
            .iter()
            .zip(regression.y_node(i))
            .map(|(hx, y)| y - hx)
            .collect();
        let innov = hi.tr_mul_vec(&resid);
        let mut consensus = vec![0.0; n];
        for j in 0..nodes {
            let w = graph.adjacency[(i, j)];
            if w != 0.0 {
                for ((c, mu), x) in consensus.iter_mut().zip(messages.get(j, i)).zip(xi) {
                    *c += w * (mu - x);
                }
            }
        }
        next.push(
            (0..n)
                .map(|c| xi[c] + gains.a * innov[c] + gains.b * consensus[c] - gains.lambda * xi[c])
                .collect(),
        );
    }
    Ok(EstimatorState {
        step: state.step + 1,
        estimates: next,
        x0: state.x0.clone(),
    })
}

/// One round of the stacked recursion
///
/// `x ← [(1−λ)I − b L⊗I_n − a 𝓗ᵀ𝓗] x + a 𝓗ᵀ y + b W M ξ`.
pub fn compact_step(
    state: &EstimatorState,
    graph: &GraphSample,
    regression: &RegressionSample,
    intensity: &NoiseIntensity,
    xi: &ChannelDraw,
    gains: Gains,
) -> Result<EstimatorState> {
    check_step_inputs(state, graph, regression)?;
    let (nodes, n) = (state.nodes(), state.dim());
    let nn = nodes * n;
    let lk = kron(&graph.laplacian, &Matrix::identity(n));
    let hh = regression.block.gram();
    let transition = &(&Matrix::identity(nn).scale(1.0 - gains.lambda) - &lk.scale(gains.b)) - &hh.scale(gains.a);
    let x = state.stacked();
    let (w, m) = build_wm(&graph.adjacency, &state.estimates, intensity, n)?;
    let noise = w.mul_vec(&m.mul_vec(xi.as_slice()));
    let innov = regression.block.tr_mul_vec(&regression.y);
    let next: Vec<f64> = transition
        .mul_vec(&x)
        .iter()
        .zip(&innov)
        .zip(&noise)
        .map(|((t, u), e)| t + gains.a * u + gains.b * e)
        .collect();
    Ok(state.with_stacked(next))
}

/// Everything needed to simulate the network, minus run bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub x0: Vec<f64>,
    pub initial: Vec<Vec<f64>>,
    pub graph: GraphProcess,
    pub regression: RegressionProcess,
    #[serde(default)]
    pub measurement_noise: MeasurementNoise,
    #[serde(default)]
    pub channel_noise: ChannelNoise,
    pub intensity: NoiseIntensity,
    pub gains: GainSchedule,
}

impl Scenario {
    pub fn nodes(&self) -> usize {
        self.initial.len()
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    pub fn validate(&self) -> Result<()> {
        let (nodes, n) = (self.nodes(), self.dim());
        if nodes == 0 || n == 0 {
            return Err(invalid("need at least one node and one parameter"));
        }
        if self.initial.iter().any(|x| x.len() != n) {
            return Err(invalid(format!("initial estimates must have dimension {n}")));
        }
        if self.x0.iter().chain(self.initial.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(invalid("x0 and initial estimates must be finite"));
        }
        self.graph.validate()?;
        self.regression.validate()?;
        self.measurement_noise.0.validate()?;
        self.channel_noise.0.validate()?;
        self.intensity.validate()?;
        self.gains.validate()?;
        if self.graph.nodes() != nodes {
            return Err(invalid(format!(
                "graph has {} nodes, initial estimates {nodes}",
                self.graph.nodes()
            )));
        }
        if self.regression.nodes() != nodes {
            return Err(invalid(format!(
                "regression has {} nodes, initial estimates {nodes}",
                self.regression.nodes()
            )));
        }
        if self.regression.dim() != n {
            return Err(invalid(format!(
                "regression parameter dimension {} differs from x0 dimension {n}",
                self.regression.dim()
            )));
        }
        if let crate::regression::RegressionModel::ArDriven { coeffs, .. } = &self.regression.model {
            if coeffs != &self.x0 {
                return Err(invalid("ar-driven regression requires x0 equal to its coefficients"));
            }
        }
        Ok(())
    }

    pub fn initial_state(&self) -> Result<EstimatorState> {
        EstimatorState::new(self.initial.clone(), self.x0.clone())
    }
}

/// How much of a trajectory to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub horizon: usize,
    /// Rows are kept at every multiple of `stride` and at the horizon.
    pub stride: usize,
    pub check_norm_bounds: bool,
}

impl RunOptions {
    pub fn new(horizon: usize) -> Self {
        Self {
            horizon,
            stride: 1,
            check_norm_bounds: true,
        }
    }

    pub fn stride(mut self, stride: usize) -> Self {
        self.stride = stride.max(1);
        self
    }

    pub fn check_norm_bounds(mut self, on: bool) -> Self {
        self.check_norm_bounds = on;
        self
    }

    pub fn keeps(&self, step: usize) -> bool {
        step.is_multiple_of(self.stride) || step == self.horizon
    }
}

/// Per-step history of one run, stored column-wise. Per-node columns are
/// flattened row-major (`rows × nodes`).
///
/// Cumulative columns at row `k` include the term of step `k` itself.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub nodes: usize,
    pub steps: Vec<usize>,
    /// `V(k)`.
    pub v: Vec<f64>,
    /// `Σ_{t≤k} V(t)`.
    pub cum_v: Vec<f64>,
    /// `‖x_i(k) − x0‖`.
    pub node_errors: Vec<f64>,
    /// `‖x_i(k)‖`.
    pub estimate_norms: Vec<f64>,
    /// `‖x(k)‖`.
    pub global_norm: Vec<f64>,
    /// `½ Σ_{t≤k} Σ_j ‖H_j(t)(x_i(t) − x0)‖²`.
    pub cum_regret: Vec<f64>,
    /// `Σ_{t≤k} Σ_j ½‖H_j(t) x_i(t) − y_j(t)‖²`.
    pub cum_loss: Vec<f64>,
    pub gains: Vec<Gains>,
    pub norm_bounds: NormBoundReport,
    pub final_estimates: Vec<Vec<f64>>,
}

impl TrajectoryRecord {
    fn new(nodes: usize) -> Self {
        Self {
            nodes,
            steps: Vec::new(),
            v: Vec::new(),
            cum_v: Vec::new(),
            node_errors: Vec::new(),
            estimate_norms: Vec::new(),
            global_norm: Vec::new(),
            cum_regret: Vec::new(),
            cum_loss: Vec::new(),
            gains: Vec::new(),
            norm_bounds: NormBoundReport::default(),
            final_estimates: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    fn node_row<'a>(&self, col: &'a [f64], row: usize) -> &'a [f64] {
        &col[row * self.nodes..(row + 1) * self.nodes]
    }

    pub fn node_errors_at(&self, row: usize) -> &[f64] {
        self.node_row(&self.node_errors, row)
    }

    pub fn estimate_norms_at(&self, row: usize) -> &[f64] {
        self.node_row(&self.estimate_norms, row)
    }

    pub fn cum_regret_at(&self, row: usize) -> &[f64] {
        self.node_row(&self.cum_regret, row)
    }

    pub fn cum_loss_at(&self, row: usize) -> &[f64] {
        self.node_row(&self.cum_loss, row)
    }

    /// Row index holding `step`, if it was kept.
    pub fn row_of(&self, step: usize) -> Option<usize> {
        self.steps.binary_search(&step).ok()
    }

    pub fn last_row(&self) -> usize {
        self.steps.len() - 1
    }
}

/// Per-node instantaneous regret and loss at step `t` for the current
/// estimates.
fn step_terms(state: &EstimatorState, reg: &RegressionSample) -> (Vec<f64>, Vec<f64>) {
    let nodes = state.nodes();
    let mut regret = vec![0.0; nodes];
    let mut loss = vec![0.0; nodes];
    for (i, x) in state.estimates.iter().enumerate() {
        let d: Vec<f64> = x.iter().zip(&state.x0).map(|(a, b)| a - b).collect();
        for (j, h) in reg.h.iter().enumerate() {
            let hd = h.mul_vec(&d);
            regret[i] += 0.5 * hd.iter().map(|v| v * v).sum::<f64>();
            let hx = h.mul_vec(x);
            loss[i] += 0.5 * hx.iter().zip(reg.y_node(j)).map(|(a, y)| (a - y) * (a - y)).sum::<f64>();
        }
    }
    (regret, loss)
}

/// Simulates run `run_index` of `scenario` under `master_seed`.
///
/// Each step draws the graph, then the regression data, then the link noise,
/// and applies the per-node update. Regression data is also drawn at the
/// horizon so that the cumulative regret at the last row includes that step.
pub fn run_trajectory(scenario: &Scenario, master_seed: u64, run_index: u64, opts: RunOptions) -> Result<TrajectoryRecord> {
    let mut rng = run_stream(master_seed, run_index);
    run_trajectory_with_rng(scenario, &mut rng, opts)
}

pub fn run_trajectory_with_rng(scenario: &Scenario, rng: &mut StreamRng, opts: RunOptions) -> Result<TrajectoryRecord> {
    scenario.validate()?;
    let (nodes, n) = (scenario.nodes(), scenario.dim());
    let regression = scenario.regression.realize(rng)?;
    let mut ar = regression.model.initial_history();
    let mut sampler = scenario.graph.sampler();
    let mut state = scenario.initial_state()?;
    let mut record = TrajectoryRecord::new(nodes);
    let mut cum_v = 0.0;
    let mut cum_regret = vec![0.0; nodes];
    let mut cum_loss = vec![0.0; nodes];

    for k in 0..=opts.horizon {
        let graph = if k < opts.horizon { Some(sampler.next_sample(rng)?) } else { None };
        let reg = regression.sample_regression(&state.x0, k, &scenario.measurement_noise, rng, ar.as_ref())?;
        let errs = state.node_errors_sq();
        let v: f64 = errs.iter().sum();
        cum_v += v;
        let (regret, loss) = step_terms(&state, &reg);
        for i in 0..nodes {
            cum_regret[i] += regret[i];
            cum_loss[i] += loss[i];
        }
        let gains = scenario.gains.at(k);
        if opts.keeps(k) {
            record.steps.push(k);
            record.v.push(v);
            record.cum_v.push(cum_v);
            record.node_errors.extend(errs.iter().map(|e| e.sqrt()));
            record.estimate_norms.extend(state.estimates.iter().map(|x| norm(x)));
            record.global_norm.push(norm(&state.stacked()));
            record.cum_regret.extend_from_slice(&cum_regret);
            record.cum_loss.extend_from_slice(&cum_loss);
            record.gains.push(gains);
        }
        let Some(graph) = graph else { break };
        if opts.check_norm_bounds {
            let s = NormBoundSample::evaluate(k, &graph.adjacency, &state.estimates, &state.x0, &scenario.intensity);
            record.norm_bounds.record(&s);
        }
        let xi = scenario.channel_noise.draw(nodes, n, rng);
        let messages = Messages::compute(&state, &scenario.intensity, &xi)?;
        state = node_step(&state, &graph, &reg, &messages, gains)?;
        if let Some(h) = ar.as_mut() {
            h.push(&reg.y);
        }
    }
    record.final_estimates = state.estimates;
    Ok(record)
}
