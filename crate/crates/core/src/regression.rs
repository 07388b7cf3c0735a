//! Random processes generating the regression matrices `H_i(k)` and the
//! measurements `y_i(k) = H_i(k) x0 + v_i(k)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::{ConditionalExpectation, Exactness};
use crate::history::{ArHistory, HistoryCut};
use crate::matrix::{block_diag, spectral_norm, vstack, Matrix};
use crate::noise::MeasurementNoise;
use crate::rng::StreamRng;

/// Per-node regression model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RegressionModel {
    /// `H_i(k) = h[i]` at every step.
    Fixed { h: Vec<Matrix> },
    /// `H_i(k) = offset[i] + scale[i] ∘ U` with every entry of `U` i.i.d.
    /// uniform on `[0, 1]`.
    EntrywiseUniform { offset: Vec<Matrix>, scale: Vec<Matrix> },
    /// `H_i(k) = μ_i(k) base[i]` with `μ_i(k)` i.i.d. Bernoulli; `p` is the
    /// probability that a sensor works.
    BernoulliFailure { base: Vec<Matrix>, p: f64 },
    /// Scalar autoregressive measurements: `H_i(k) = [y_i(k-1), …, y_i(k-d)]`
    /// and `x0` must equal the coefficients `c_1..c_d`.
    ArDriven {
        nodes: usize,
        coeffs: Vec<f64>,
        /// Lags `[y_i(-1), …, y_i(-d)]` per node; zeros when omitted.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        initial_lags: Option<Vec<Vec<f64>>>,
    },
}

/// Regression process: a model plus the option of drawing it once at the
/// start and reusing that draw at every step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionProcess {
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub frozen: bool,
    pub model: RegressionModel,
}

/// One instant of regression data for all nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSample {
    pub step: usize,
    pub h: Vec<Matrix>,
    /// `H(k)`, the vertical stack of the `H_i(k)`.
    pub stacked: Matrix,
    /// `𝓗(k) = diag(H_1(k), …, H_N(k))`.
    pub block: Matrix,
    /// Stacked measurements `y(k)`.
    pub y: Vec<f64>,
    /// Stacked measurement noise `v(k)`.
    pub v: Vec<f64>,
    offsets: Vec<usize>,
}

impl RegressionSample {
    /// Assembles a sample from per-node matrices, measurements and noise.
    pub fn new(step: usize, h: Vec<Matrix>, y: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        let stacked = vstack(&h)?;
        let block = block_diag(&h)?;
        if y.len() != stacked.rows() || v.len() != stacked.rows() {
            return Err(invalid("measurement length does not match stacked rows"));
        }
        let mut offsets = Vec::with_capacity(h.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for hi in &h {
            acc += hi.rows();
            offsets.push(acc);
        }
        Ok(Self {
            step,
            h,
            stacked,
            block,
            y,
            v,
            offsets,
        })
    }

    pub fn nodes(&self) -> usize {
        self.h.len()
    }

    /// `y_i(k)`.
    pub fn y_node(&self, i: usize) -> &[f64] {
        &self.y[self.offsets[i]..self.offsets[i + 1]]
    }

    /// `v_i(k)`.
    pub fn v_node(&self, i: usize) -> &[f64] {
        &self.v[self.offsets[i]..self.offsets[i + 1]]
    }
}

fn check_family(name: &str, mats: &[Matrix]) -> Result<usize> {
    let first = mats.first().ok_or_else(|| invalid(format!("{name}: no nodes")))?;
    let n = first.cols();
    if n == 0 {
        return Err(invalid(format!("{name}: parameter dimension must be >= 1")));
    }
    for (i, m) in mats.iter().enumerate() {
        if m.rows() == 0 {
            return Err(invalid(format!("{name}: node {i} has no measurement rows")));
        }
        if m.cols() != n {
            return Err(invalid(format!("{name}: node {i} has {} columns, expected {n}", m.cols())));
        }
    }
    Ok(n)
}

impl RegressionModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            RegressionModel::Fixed { h } => check_family("fixed regression", h).map(drop),
            RegressionModel::EntrywiseUniform { offset, scale } => {
                check_family("uniform offsets", offset)?;
                check_family("uniform scales", scale)?;
                if offset.len() != scale.len() || offset.iter().zip(scale).any(|(o, s)| o.shape() != s.shape()) {
                    return Err(invalid("uniform offsets and scales differ in shape"));
                }
                Ok(())
            }
            RegressionModel::BernoulliFailure { base, p } => {
                check_family("bernoulli base", base)?;
                if !(0.0..=1.0).contains(p) {
                    return Err(invalid(format!("bernoulli probability {p} outside [0, 1]")));
                }
                Ok(())
            }
            RegressionModel::ArDriven {
                nodes,
                coeffs,
                initial_lags,
            } => {
                if *nodes == 0 {
                    return Err(invalid("ar-driven regression needs at least one node"));
                }
                if coeffs.is_empty() {
                    return Err(invalid("ar-driven regression needs at least one coefficient"));
                }
                if coeffs.iter().any(|c| !c.is_finite()) {
                    return Err(invalid("ar coefficients must be finite"));
                }
                if let Some(l) = initial_lags {
                    if l.len() != *nodes || l.iter().any(|v| v.len() != coeffs.len()) {
                        return Err(invalid("initial lags must be nodes × order"));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn nodes(&self) -> usize {
        match self {
            RegressionModel::Fixed { h } => h.len(),
            RegressionModel::EntrywiseUniform { offset, .. } => offset.len(),
            RegressionModel::BernoulliFailure { base, .. } => base.len(),
            RegressionModel::ArDriven { nodes, .. } => *nodes,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            RegressionModel::Fixed { h } => h.first().map_or(0, Matrix::cols),
            RegressionModel::EntrywiseUniform { offset, .. } => offset.first().map_or(0, Matrix::cols),
            RegressionModel::BernoulliFailure { base, .. } => base.first().map_or(0, Matrix::cols),
            RegressionModel::ArDriven { coeffs, .. } => coeffs.len(),
        }
    }

    /// Measurement rows `n_i` per node.
    pub fn rows_per_node(&self) -> Vec<usize> {
        match self {
            RegressionModel::Fixed { h } => h.iter().map(Matrix::rows).collect(),
            RegressionModel::EntrywiseUniform { offset, .. } => offset.iter().map(Matrix::rows).collect(),
            RegressionModel::BernoulliFailure { base, .. } => base.iter().map(Matrix::rows).collect(),
            RegressionModel::ArDriven { nodes, .. } => vec![1; *nodes],
        }
    }

    /// History the process starts from (autoregressive kind only).
    pub fn initial_history(&self) -> Option<ArHistory> {
        match self {
            RegressionModel::ArDriven {
                nodes,
                coeffs,
                initial_lags,
            } => Some(match initial_lags {
                Some(l) => ArHistory::from_lags(l.clone()),
                None => ArHistory::constant(*nodes, coeffs.len(), 0.0),
            }),
            _ => None,
        }
    }

    /// Draws the per-node regression matrices at one instant.
    fn draw_matrices(&self, rng: &mut StreamRng, history: Option<&ArHistory>) -> Result<Vec<Matrix>> {
        Ok(match self {
            RegressionModel::Fixed { h } => h.clone(),
            RegressionModel::EntrywiseUniform { offset, scale } => offset
                .iter()
                .zip(scale)
                .map(|(o, s)| {
                    let mut m = o.clone();
                    for r in 0..m.rows() {
                        for c in 0..m.cols() {
                            let u: f64 = rng.random();
                            m[(r, c)] += s[(r, c)] * u;
                        }
                    }
                    m
                })
                .collect(),
            RegressionModel::BernoulliFailure { base, p } => base
                .iter()
                .map(|c| {
                    let works = rng.random::<f64>() < *p;
                    if works {
                        c.clone()
                    } else {
                        Matrix::zeros(c.rows(), c.cols())
                    }
                })
                .collect(),
            RegressionModel::ArDriven { nodes, coeffs, .. } => {
                let hist = history.ok_or_else(|| invalid("ar-driven regression needs the measurement history"))?;
                if hist.nodes() != *nodes || hist.order() != coeffs.len() {
                    return Err(invalid("measurement history does not match the ar model"));
                }
                (0..*nodes)
                    .map(|i| Matrix::from_vec(1, coeffs.len(), hist.regressor(i)))
                    .collect::<Result<_>>()?
            }
        })
    }

    /// `E[H_iᵀ H_i]` per node for the temporally independent kinds.
    fn expected_node_grams(&self) -> Result<Vec<Matrix>> {
        match self {
            RegressionModel::Fixed { h } => Ok(h.iter().map(Matrix::gram).collect()),
            RegressionModel::EntrywiseUniform { offset, scale } => Ok(offset
                .iter()
                .zip(scale)
                .map(|(o, s)| uniform_gram(o, s))
                .collect()),
            RegressionModel::BernoulliFailure { base, p } => Ok(base.iter().map(|c| c.gram().scale(*p)).collect()),
            RegressionModel::ArDriven { .. } => Err(Error::UnsupportedAnalytic(
                "ar-driven regression matrices".into(),
            )),
        }
    }

    /// Almost-sure bound on `max_i ‖H_iᵀ H_i‖`, from the largest possible
    /// magnitude of every entry. `None` when the process is unbounded.
    pub fn gram_norm_bound(&self) -> Option<f64> {
        let frob_sq = |m: &Matrix| m.as_slice().iter().map(|v| v * v).sum::<f64>();
        match self {
            RegressionModel::Fixed { h } => Some(h.iter().map(|m| m.gram()).map(|g| spectral_norm(&g)).fold(0.0, f64::max)),
            RegressionModel::EntrywiseUniform { offset, scale } => Some(
                offset
                    .iter()
                    .zip(scale)
                    .map(|(o, s)| {
                        o.as_slice()
                            .iter()
                            .zip(s.as_slice())
                            .map(|(&a, &b)| a.abs().max((a + b).abs()).powi(2))
                            .sum::<f64>()
                    })
                    .fold(0.0, f64::max),
            ),
            RegressionModel::BernoulliFailure { base, .. } => Some(base.iter().map(frob_sq).fold(0.0, f64::max)),
            RegressionModel::ArDriven { .. } => None,
        }
    }
}

/// `E[(O + S∘U)ᵀ(O + S∘U)]` for `U` with i.i.d. uniform `[0,1]` entries.
fn uniform_gram(o: &Matrix, s: &Matrix) -> Matrix {
    let n = o.cols();
    let mut g = Matrix::zeros(n, n);
    for r in 0..o.rows() {
        for c in 0..n {
            let (oc, sc) = (o[(r, c)], s[(r, c)]);
            let mean_c = oc + 0.5 * sc;
            for d in 0..n {
                g[(c, d)] += if c == d {
                    oc * oc + oc * sc + sc * sc / 3.0
                } else {
                    mean_c * (o[(r, d)] + 0.5 * s[(r, d)])
                };
            }
        }
    }
    g
}

impl RegressionProcess {
    pub fn new(model: RegressionModel) -> Self {
        Self { frozen: false, model }
    }

    pub fn frozen(model: RegressionModel) -> Self {
        Self { frozen: true, model }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.frozen && matches!(self.model, RegressionModel::ArDriven { .. }) {
            return Err(invalid("an ar-driven regression cannot be frozen"));
        }
        Ok(())
    }

    pub fn nodes(&self) -> usize {
        self.model.nodes()
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    /// Replaces a frozen process by its single draw, which is then known at
    /// every history cut. Non-frozen processes are returned unchanged.
    pub fn realize(&self, rng: &mut StreamRng) -> Result<RegressionProcess> {
        if !self.frozen {
            return Ok(self.clone());
        }
        let h = self.model.draw_matrices(rng, None)?;
        Ok(RegressionProcess::new(RegressionModel::Fixed { h }))
    }

    /// Draws `H(k)` and `y(k) = H(k) x0 + v(k)`. The autoregressive kind
    /// reads its regressors from `history` and does not update it.
    pub fn sample_regression(
        &self,
        x0: &[f64],
        step: usize,
        noise: &MeasurementNoise,
        rng: &mut StreamRng,
        history: Option<&ArHistory>,
    ) -> Result<RegressionSample> {
        if self.frozen {
            return Err(invalid("realize a frozen regression process before sampling it"));
        }
        if x0.len() != self.dim() {
            return Err(invalid(format!(
                "true parameter has dimension {}, regression expects {}",
                x0.len(),
                self.dim()
            )));
        }
        if let RegressionModel::ArDriven { coeffs, .. } = &self.model {
            if coeffs.as_slice() != x0 {
                return Err(invalid("ar-driven regression requires x0 equal to its coefficients"));
            }
        }
        let h = self.model.draw_matrices(rng, history)?;
        let mut y = Vec::new();
        let mut v = Vec::new();
        for hi in &h {
            let clean = hi.mul_vec(x0);
            let mut vi = vec![0.0; clean.len()];
            noise.0.fill(&mut vi, rng);
            y.extend(clean.iter().zip(&vi).map(|(a, b)| a + b));
            v.extend(vi);
        }
        RegressionSample::new(step, h, y, v)
    }

    fn check_cut(&self, step: usize, cut: &HistoryCut) -> Result<()> {
        if self.frozen {
            return Err(invalid("realize a frozen regression process before taking expectations"));
        }
        if cut.lead(step).is_none() {
            return Err(invalid(format!("history cut {:?} lies after step {step}", cut.index)));
        }
        Ok(())
    }

    /// `E[H_iᵀ(step) H_i(step) | cut]` per node.
    pub fn conditional_expected_node_grams(&self, step: usize, cut: &HistoryCut) -> Result<Vec<Matrix>> {
        self.check_cut(step, cut)?;
        self.model.expected_node_grams()
    }

    /// `E[𝓗ᵀ(step) 𝓗(step) | cut]`.
    pub fn conditional_expected_gram(&self, step: usize, cut: &HistoryCut) -> Result<ConditionalExpectation> {
        let grams = self.conditional_expected_node_grams(step, cut)?;
        Ok(ConditionalExpectation::analytic(block_diag(&grams)?))
    }

    /// `Σ_i Σ_{j ∈ window} E[H_iᵀ(j) H_i(j) | cut]`, an `n×n` matrix.
    pub fn spatio_temporal_gram(&self, window: std::ops::Range<usize>, cut: &HistoryCut) -> Result<Matrix> {
        let n = self.dim();
        let mut acc = Matrix::zeros(n, n);
        for j in window {
            for g in self.conditional_expected_node_grams(j, cut)? {
                acc = &acc + &g;
            }
        }
        Ok(acc)
    }

    /// Monte Carlo estimate of `E[H_iᵀ(step) H_i(step) | cut]` per node.
    ///
    /// The autoregressive kind is simulated forward from the history at the
    /// cut (or from its initial lags at the start), using `x0` and `noise`.
    pub fn monte_carlo_node_grams(
        &self,
        x0: &[f64],
        noise: &MeasurementNoise,
        step: usize,
        cut: &HistoryCut,
        samples: usize,
        rng: &mut StreamRng,
    ) -> Result<(Vec<Matrix>, Exactness)> {
        self.check_cut(step, cut)?;
        if samples == 0 {
            return Err(invalid("Monte Carlo estimate needs at least one sample"));
        }
        let n = self.dim();
        let mut acc = vec![Matrix::zeros(n, n); self.nodes()];
        let (start_hist, first) = match (&self.model, cut.index) {
            (RegressionModel::ArDriven { .. }, None) => (self.model.initial_history(), 0),
            (RegressionModel::ArDriven { .. }, Some(m)) => (
                Some(
                    cut.ar_history
                        .clone()
                        .ok_or_else(|| invalid("ar-driven conditional gram needs the history at the cut"))?,
                ),
                m + 1,
            ),
            _ => (None, step),
        };
        for _ in 0..samples {
            let mut hist = start_hist.clone();
            let mut sample = None;
            for t in first..=step {
                let s = self.sample_regression(x0, t, noise, rng, hist.as_ref())?;
                if let Some(hh) = hist.as_mut() {
                    hh.push(&s.y);
                }
                sample = Some(s);
            }
            let s = sample.expect("window contains the step");
            for (a, h) in acc.iter_mut().zip(&s.h) {
                *a = &*a + &h.gram();
            }
        }
        let inv = 1.0 / samples as f64;
        Ok((
            acc.into_iter().map(|g| g.scale(inv)).collect(),
            Exactness::MonteCarlo { samples },
        ))
    }
}
