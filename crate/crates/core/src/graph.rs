//! Random processes generating the weighted adjacency sequence, together with
//! their conditional means.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::history::HistoryCut;
use crate::matrix::{laplacian, symmetrize, Matrix};
use crate::rng::StreamRng;

/// Tolerance on in/out-degree equality when testing balance.
pub const BALANCE_TOL: f64 = 1e-10;
/// Conditional mean entries at or above this are treated as nonnegative.
pub const NONNEG_TOL: f64 = 1e-12;
/// Fixed-point residual at which power iteration stops.
pub const STATIONARY_TOL: f64 = 1e-12;
const STATIONARY_MAX_ITER: usize = 100_000;
const STOCHASTIC_TOL: f64 = 1e-12;

/// One realization of the communication graph.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSample {
    pub step: usize,
    pub adjacency: Matrix,
    pub laplacian: Matrix,
    pub sym_laplacian: Matrix,
}

impl GraphSample {
    pub fn new(step: usize, adjacency: Matrix) -> Result<Self> {
        let laplacian = laplacian(&adjacency)?;
        let sym_laplacian = symmetrize(&laplacian)?;
        Ok(Self {
            step,
            adjacency,
            laplacian,
            sym_laplacian,
        })
    }

    pub fn nodes(&self) -> usize {
        self.adjacency.rows()
    }
}

/// Description of a random digraph sequence.
///
/// Off-diagonal weights `w_ij` are the weight node `i` puts on node `j`'s
/// message; the diagonal is always zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GraphProcess {
    /// The same adjacency at every step.
    Fixed { adjacency: Matrix },
    /// Every off-diagonal weight i.i.d. uniform on `even` at even steps and on
    /// `odd` at odd steps.
    AlternatingUniform {
        nodes: usize,
        even: [f64; 2],
        odd: [f64; 2],
    },
    /// Off-diagonal weight `(i, j)` i.i.d. over time, uniform on
    /// `[lo[i][j], hi[i][j]]`.
    IidUniform { lo: Matrix, hi: Matrix },
    /// Adjacency `states[s_k]` where `s_k` is a finite homogeneous Markov
    /// chain started at `initial`.
    MarkovSwitching {
        states: Vec<Matrix>,
        transition: Matrix,
        initial: usize,
    },
}

/// Whether a conditional mean is exact or estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Exactness {
    Analytic,
    MonteCarlo { samples: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalExpectation {
    pub matrix: Matrix,
    pub exactness: Exactness,
}

impl ConditionalExpectation {
    pub fn analytic(matrix: Matrix) -> Self {
        Self {
            matrix,
            exactness: Exactness::Analytic,
        }
    }
}

fn check_bounds(name: &str, [lo, hi]: [f64; 2]) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(invalid(format!("{name}: invalid uniform bounds [{lo}, {hi}]")));
    }
    Ok(())
}

fn check_adjacency(name: &str, a: &Matrix) -> Result<()> {
    if !a.is_square() {
        return Err(invalid(format!("{name}: adjacency must be square")));
    }
    if (0..a.rows()).any(|i| a[(i, i)] != 0.0) {
        return Err(invalid(format!("{name}: adjacency diagonal must be zero")));
    }
    Ok(())
}

/// Checks a row-stochastic matrix.
pub fn check_transition(p: &Matrix) -> Result<()> {
    if !p.is_square() || p.rows() == 0 {
        return Err(invalid("transition matrix must be square and nonempty"));
    }
    for i in 0..p.rows() {
        if p.row(i).iter().any(|&v| v < 0.0) {
            return Err(invalid(format!("transition row {i} has a negative entry")));
        }
        let s: f64 = p.row(i).iter().sum();
        if (s - 1.0).abs() > STOCHASTIC_TOL {
            return Err(invalid(format!("transition row {i} sums to {s}, not 1")));
        }
    }
    Ok(())
}

fn uniform(rng: &mut StreamRng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Draws the next state of a finite chain from row `from` of `p`.
pub(crate) fn markov_transition(p: &Matrix, from: usize, rng: &mut StreamRng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let row = p.row(from);
    for (to, &w) in row.iter().enumerate() {
        acc += w;
        if u < acc {
            return to;
        }
    }
    // Rounding left the cumulative sum a hair under 1; take the last
    // state with positive mass.
    row.iter().rposition(|&w| w > 0.0).unwrap_or(from)
}

/// Distribution after `steps` transitions from the point mass at `from`.
pub fn propagate(p: &Matrix, from: usize, steps: usize) -> Vec<f64> {
    let m = p.rows();
    let mut dist = vec![0.0; m];
    dist[from] = 1.0;
    for _ in 0..steps {
        dist = p.tr_mul_vec(&dist);
    }
    dist
}

impl GraphProcess {
    pub fn nodes(&self) -> usize {
        match self {
            GraphProcess::Fixed { adjacency } => adjacency.rows(),
            GraphProcess::AlternatingUniform { nodes, .. } => *nodes,
            GraphProcess::IidUniform { lo, .. } => lo.rows(),
            GraphProcess::MarkovSwitching { states, .. } => states.first().map_or(0, Matrix::rows),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            GraphProcess::Fixed { adjacency } => check_adjacency("fixed graph", adjacency),
            GraphProcess::AlternatingUniform { nodes, even, odd } => {
                if *nodes == 0 {
                    return Err(invalid("graph needs at least one node"));
                }
                check_bounds("even-step weights", *even)?;
                check_bounds("odd-step weights", *odd)
            }
            GraphProcess::IidUniform { lo, hi } => {
                check_adjacency("iid lower bounds", lo)?;
                check_adjacency("iid upper bounds", hi)?;
                if lo.shape() != hi.shape() {
                    return Err(invalid("iid bounds have different shapes"));
                }
                for i in 0..lo.rows() {
                    for j in 0..lo.cols() {
                        if lo[(i, j)] > hi[(i, j)] {
                            return Err(invalid(format!("iid bounds inverted at ({i}, {j})")));
                        }
                    }
                }
                Ok(())
            }
            GraphProcess::MarkovSwitching {
                states,
                transition,
                initial,
            } => {
                if states.is_empty() {
                    return Err(invalid("markov graph needs at least one state"));
                }
                let n = states[0].rows();
                for (l, a) in states.iter().enumerate() {
                    check_adjacency(&format!("markov state {l}"), a)?;
                    if a.rows() != n {
                        return Err(invalid("markov states have different node counts"));
                    }
                }
                check_transition(transition)?;
                if transition.rows() != states.len() {
                    return Err(invalid("transition size does not match state count"));
                }
                if *initial >= states.len() {
                    return Err(invalid("initial markov state out of range"));
                }
                Ok(())
            }
        }
    }

    /// True when successive adjacencies are independent, so conditioning on
    /// the past changes nothing.
    pub fn is_temporally_independent(&self) -> bool {
        !matches!(self, GraphProcess::MarkovSwitching { .. })
    }

    /// Draws the adjacency at `step`. Markov processes need the chain state
    /// at that step; other kinds ignore it.
    pub fn sample_adjacency(&self, step: usize, markov_state: Option<usize>, rng: &mut StreamRng) -> Matrix {
        match self {
            GraphProcess::Fixed { adjacency } => adjacency.clone(),
            GraphProcess::AlternatingUniform { nodes, even, odd } => {
                let [lo, hi] = if step.is_multiple_of(2) { *even } else { *odd };
                let mut a = Matrix::zeros(*nodes, *nodes);
                for i in 0..*nodes {
                    for j in 0..*nodes {
                        if i != j {
                            a[(i, j)] = uniform(rng, lo, hi);
                        }
                    }
                }
                a
            }
            GraphProcess::IidUniform { lo, hi } => {
                let n = lo.rows();
                let mut a = Matrix::zeros(n, n);
                for i in 0..n {
                    for j in 0..n {
                        if i != j {
                            a[(i, j)] = uniform(rng, lo[(i, j)], hi[(i, j)]);
                        }
                    }
                }
                a
            }
            GraphProcess::MarkovSwitching { states, .. } => {
                states[markov_state.expect("markov graph sampled without a chain state")].clone()
            }
        }
    }

    /// A sampler walking the process forward from step 0.
    pub fn sampler(&self) -> GraphSampler<'_> {
        GraphSampler {
            process: self,
            next_step: 0,
            state: None,
        }
    }

    /// `E[A_G(step) | cut]`.
    pub fn conditional_expected_adjacency(&self, step: usize, cut: &HistoryCut) -> Result<ConditionalExpectation> {
        if cut.lead(step).is_none() {
            return Err(invalid(format!(
                "history cut {:?} lies after step {step}",
                cut.index
            )));
        }
        let mean = match self {
            GraphProcess::Fixed { adjacency } => adjacency.clone(),
            GraphProcess::AlternatingUniform { nodes, even, odd } => {
                let [lo, hi] = if step.is_multiple_of(2) { *even } else { *odd };
                let w = 0.5 * (lo + hi);
                let mut a = Matrix::zeros(*nodes, *nodes);
                for i in 0..*nodes {
                    for j in 0..*nodes {
                        if i != j {
                            a[(i, j)] = w;
                        }
                    }
                }
                a
            }
            GraphProcess::IidUniform { lo, hi } => (lo + hi).scale(0.5),
            GraphProcess::MarkovSwitching {
                states,
                transition,
                initial,
            } => {
                let dist = match cut.index {
                    None => propagate(transition, *initial, step),
                    Some(m) => {
                        let s = cut.graph_state.ok_or_else(|| {
                            invalid("markov conditional mean needs the chain state at the cut")
                        })?;
                        if s >= states.len() {
                            return Err(invalid("chain state at the cut is out of range"));
                        }
                        propagate(transition, s, step - m)
                    }
                };
                mix(states, &dist)
            }
        };
        Ok(ConditionalExpectation::analytic(mean))
    }

    /// `E[L̂_G(step) | cut]`, exact because the symmetrized Laplacian is
    /// linear in the adjacency.
    pub fn conditional_expected_sym_laplacian(&self, step: usize, cut: &HistoryCut) -> Result<ConditionalExpectation> {
        let a = self.conditional_expected_adjacency(step, cut)?;
        Ok(ConditionalExpectation {
            matrix: symmetrize(&laplacian(&a.matrix)?)?,
            exactness: a.exactness,
        })
    }

    /// Every one-step-ahead conditional mean adjacency the process can
    /// produce. Membership in the balanced class has to hold for all of them.
    pub fn one_step_conditional_means(&self) -> Vec<Matrix> {
        match self {
            GraphProcess::Fixed { adjacency } => vec![adjacency.clone()],
            GraphProcess::AlternatingUniform { .. } => (0..2)
                .map(|k| self.conditional_expected_adjacency(k, &HistoryCut::start()).unwrap().matrix)
                .collect(),
            GraphProcess::IidUniform { .. } => {
                vec![self.conditional_expected_adjacency(0, &HistoryCut::start()).unwrap().matrix]
            }
            GraphProcess::MarkovSwitching {
                states,
                transition,
                initial,
            } => {
                let mut means = vec![states[*initial].clone()];
                for l in 0..states.len() {
                    means.push(mix(states, transition.row(l)));
                }
                means
            }
        }
    }

    /// Whether the process belongs to the class of graph sequences whose
    /// one-step conditional means are nonnegative and balanced almost surely.
    pub fn is_gamma1(&self) -> bool {
        self.one_step_conditional_means().iter().all(is_conditionally_balanced)
    }
}

fn mix(states: &[Matrix], weights: &[f64]) -> Matrix {
    let n = states[0].rows();
    let mut out = Matrix::zeros(n, n);
    for (a, &w) in states.iter().zip(weights) {
        if w != 0.0 {
            out = &out + &a.scale(w);
        }
    }
    out
}

/// Walks a graph process forward, tracking the Markov state.
#[derive(Debug, Clone)]
pub struct GraphSampler<'a> {
    process: &'a GraphProcess,
    next_step: usize,
    state: Option<usize>,
}

impl GraphSampler<'_> {
    /// Draws the next graph in the sequence.
    pub fn next_sample(&mut self, rng: &mut StreamRng) -> Result<GraphSample> {
        let step = self.next_step;
        if let GraphProcess::MarkovSwitching {
            transition, initial, ..
        } = self.process
        {
            self.state = Some(match self.state {
                None => *initial,
                Some(s) => markov_transition(transition, s, rng),
            });
        }
        let a = self.process.sample_adjacency(step, self.state, rng);
        self.next_step += 1;
        GraphSample::new(step, a)
    }

    /// Chain state of the most recently emitted sample.
    pub fn markov_state(&self) -> Option<usize> {
        self.state
    }
}

/// Draws the graph at `step` for a temporally independent process.
pub fn sample_graph(process: &GraphProcess, step: usize, rng: &mut StreamRng) -> Result<GraphSample> {
    if !process.is_temporally_independent() {
        return Err(invalid("markov graphs are sampled through GraphProcess::sampler"));
    }
    GraphSample::new(step, process.sample_adjacency(step, None, rng))
}

/// Nonnegative (within `NONNEG_TOL`) with equal in- and out-degrees at every
/// node.
pub fn is_conditionally_balanced(mean_adjacency: &Matrix) -> bool {
    if !mean_adjacency.is_square() {
        return false;
    }
    if mean_adjacency.as_slice().iter().any(|&w| w < -NONNEG_TOL) {
        return false;
    }
    let din = mean_adjacency.row_sums();
    let dout = mean_adjacency.col_sums();
    din.iter().zip(&dout).all(|(a, b)| (a - b).abs() <= BALANCE_TOL)
}

/// Unique stationary distribution of a row-stochastic matrix.
///
/// Power iteration is started from every point mass; the chain has a unique
/// limit only if all of them converge to the same fixed point.
pub fn stationary_distribution(transition: &Matrix) -> Result<Vec<f64>> {
    check_transition(transition)?;
    let m = transition.rows();
    let mut limit: Option<Vec<f64>> = None;
    for start in 0..m {
        let mut pi = vec![0.0; m];
        pi[start] = 1.0;
        let mut converged = false;
        for _ in 0..STATIONARY_MAX_ITER {
            let next = transition.tr_mul_vec(&pi);
            let residual: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
            pi = next;
            if residual < STATIONARY_TOL {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NoUniqueStationary {
                iterations: STATIONARY_MAX_ITER,
            });
        }
        match &limit {
            None => limit = Some(pi),
            Some(prev) => {
                let gap: f64 = prev.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
                if gap > 1e-9 {
                    return Err(Error::NoUniqueStationary {
                        iterations: STATIONARY_MAX_ITER,
                    });
                }
            }
        }
    }
    let mut pi = limit.expect("at least one state");
    let total: f64 = pi.iter().sum();
    for p in &mut pi {
        *p = p.max(0.0) / total;
    }
    Ok(pi)
}

/// Source of adjacency draws whose conditional mean has no closed form.
pub trait AdjacencySampler {
    fn nodes(&self) -> usize;
    /// An independent draw of the adjacency at `step` given whatever
    /// conditioning the implementor encodes.
    fn draw(&self, step: usize, rng: &mut StreamRng) -> Matrix;
}

impl AdjacencySampler for GraphProcess {
    fn nodes(&self) -> usize {
        GraphProcess::nodes(self)
    }

    fn draw(&self, step: usize, rng: &mut StreamRng) -> Matrix {
        match self {
            GraphProcess::MarkovSwitching {
                transition, initial, ..
            } => {
                let mut s = *initial;
                for _ in 0..step {
                    s = markov_transition(transition, s, rng);
                }
                self.sample_adjacency(step, Some(s), rng)
            }
            _ => self.sample_adjacency(step, None, rng),
        }
    }
}

/// Default sample count of the Monte Carlo fallback.
pub const DEFAULT_MC_SAMPLES: usize = 10_000;

/// Monte Carlo estimate of `E[L̂_G(step)]` for processes without a closed
/// form.
pub fn monte_carlo_expected_sym_laplacian<S: AdjacencySampler + ?Sized>(
    sampler: &S,
    step: usize,
    samples: usize,
    rng: &mut StreamRng,
) -> Result<ConditionalExpectation> {
    if samples == 0 {
        return Err(invalid("Monte Carlo estimate needs at least one sample"));
    }
    let n = sampler.nodes();
    let mut acc = Matrix::zeros(n, n);
    for _ in 0..samples {
        acc = &acc + &sampler.draw(step, rng);
    }
    let mean = acc.scale(1.0 / samples as f64);
    Ok(ConditionalExpectation {
        matrix: symmetrize(&laplacian(&mean)?)?,
        exactness: Exactness::MonteCarlo { samples },
    })
}
