//! Measurement noise, link noise, the multiplicative noise intensity and the
//! received-message model.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::matrix::{norm, norm_sq, spectral_norm, Matrix};
use crate::rng::StreamRng;

/// Relative slack for the norm inequalities, absorbing rounding only.
pub const BOUND_REL_TOL: f64 = 1e-12;

/// Distribution of an i.i.d. zero-mean noise component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseLaw {
    #[default]
    Zero,
    Gaussian { std: f64 },
}

impl NoiseLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseLaw::Zero => Ok(()),
            NoiseLaw::Gaussian { std } if std.is_finite() && std >= 0.0 => Ok(()),
            NoiseLaw::Gaussian { std } => Err(invalid(format!("noise std must be finite and >= 0, got {std}"))),
        }
    }

    pub fn std(&self) -> f64 {
        match *self {
            NoiseLaw::Zero => 0.0,
            NoiseLaw::Gaussian { std } => std,
        }
    }

    pub fn draw(&self, rng: &mut StreamRng) -> f64 {
        match *self {
            NoiseLaw::Zero => 0.0,
            NoiseLaw::Gaussian { std } => std * rng.sample::<f64, _>(StandardNormal),
        }
    }

    pub fn fill(&self, out: &mut [f64], rng: &mut StreamRng) {
        for v in out {
            *v = self.draw(rng);
        }
    }
}

/// Additive noise on the measurements `y_i(k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct MeasurementNoise(pub NoiseLaw);

impl MeasurementNoise {
    pub fn zero() -> Self {
        Self(NoiseLaw::Zero)
    }

    pub fn gaussian(std: f64) -> Self {
        Self(NoiseLaw::Gaussian { std })
    }

    /// Bound on `E‖v(k)‖²` for a stacked measurement of `dim` components.
    pub fn second_moment_bound(&self, dim: usize) -> f64 {
        self.0.std().powi(2) * dim as f64
    }
}

/// Noise on the links, `ξ_ji(k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct ChannelNoise(pub NoiseLaw);

impl ChannelNoise {
    pub fn zero() -> Self {
        Self(NoiseLaw::Zero)
    }

    pub fn gaussian(std: f64) -> Self {
        Self(NoiseLaw::Gaussian { std })
    }

    /// Draws the full stacked link noise of one step.
    pub fn draw(&self, nodes: usize, n: usize, rng: &mut StreamRng) -> ChannelDraw {
        let mut data = vec![0.0; nodes * nodes * n];
        self.0.fill(&mut data, rng);
        ChannelDraw { nodes, n, data }
    }
}

/// Affine intensity `f(z) = sigma·‖z‖ + b` scaling the link noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseIntensity {
    pub sigma: f64,
    pub b: f64,
}

impl NoiseIntensity {
    pub fn new(sigma: f64, b: f64) -> Result<Self> {
        let f = Self { sigma, b };
        f.validate()?;
        Ok(f)
    }

    pub fn zero() -> Self {
        Self { sigma: 0.0, b: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.b.is_finite() && self.sigma >= 0.0 && self.b >= 0.0) {
            return Err(invalid(format!(
                "noise intensity needs finite sigma, b >= 0, got sigma={} b={}",
                self.sigma, self.b
            )));
        }
        Ok(())
    }

    pub fn eval(&self, relative: &[f64]) -> f64 {
        self.sigma * norm(relative) + self.b
    }

    /// `f(x_j - x_i)`.
    pub fn between(&self, x_j: &[f64], x_i: &[f64]) -> f64 {
        let d2: f64 = x_j.iter().zip(x_i).map(|(a, b)| (a - b) * (a - b)).sum();
        self.sigma * d2.sqrt() + self.b
    }
}

/// Link noise of one step, stacked receiver-major: the block of receiver
/// `i` lists `ξ_1i, …, ξ_Ni`, each an `n`-vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDraw {
    nodes: usize,
    n: usize,
    data: Vec<f64>,
}

impl ChannelDraw {
    pub fn zeros(nodes: usize, n: usize) -> Self {
        Self {
            nodes,
            n,
            data: vec![0.0; nodes * nodes * n],
        }
    }

    pub fn from_vec(nodes: usize, n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != nodes * nodes * n {
            return Err(invalid(format!(
                "channel draw needs {} entries, got {}",
                nodes * nodes * n,
                data.len()
            )));
        }
        Ok(Self { nodes, n, data })
    }

    /// `ξ_ji`, noise on the message from `j` to `i`.
    pub fn pair(&self, sender: usize, receiver: usize) -> &[f64] {
        let start = (receiver * self.nodes + sender) * self.n;
        &self.data[start..start + self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn dim(&self) -> usize {
        self.n
    }
}

/// Link noise entering one message: a scalar broadcast over coordinates or
/// an `n`-vector.
#[derive(Debug, Clone, Copy)]
pub enum LinkNoise<'a> {
    Scalar(f64),
    Vector(&'a [f64]),
}

/// `μ_ji = x_j + f(x_j - x_i)·ξ_ji`.
pub fn received_message(x_j: &[f64], x_i: &[f64], intensity: &NoiseIntensity, xi: LinkNoise<'_>) -> Result<Vec<f64>> {
    if x_j.len() != x_i.len() {
        return Err(invalid("sender and receiver states differ in dimension"));
    }
    let f = intensity.between(x_j, x_i);
    match xi {
        LinkNoise::Scalar(s) => Ok(x_j.iter().map(|&v| v + f * s).collect()),
        LinkNoise::Vector(v) => {
            if v.len() != x_j.len() {
                return Err(invalid("link noise vector has the wrong dimension"));
            }
            Ok(x_j.iter().zip(v).map(|(&x, &e)| x + f * e).collect())
        }
    }
}

/// Intensities `f_ji = f(x_j - x_i)` as an `N×N` table indexed `[i][j]`
/// (receiver, sender).
pub fn intensity_table(states: &[Vec<f64>], intensity: &NoiseIntensity) -> Matrix {
    let nodes = states.len();
    let mut f = Matrix::zeros(nodes, nodes);
    for i in 0..nodes {
        for j in 0..nodes {
            f[(i, j)] = intensity.between(&states[j], &states[i]);
        }
    }
    f
}

/// Dense `W(k)` (`Nn × N²n`) and `M(k)` (`N²n × N²n`).
///
/// Row block `i` of `W` is `α_iᵀ ⊗ I_n` placed over receiver `i`'s part of
/// the stacked noise; `M` is diagonal with `f_ji` repeated `n` times at the
/// position of `ξ_ji`.
pub fn build_wm(adjacency: &Matrix, states: &[Vec<f64>], intensity: &NoiseIntensity, n: usize) -> Result<(Matrix, Matrix)> {
    let nodes = adjacency.rows();
    if !adjacency.is_square() || states.len() != nodes {
        return Err(invalid("adjacency and state list disagree on node count"));
    }
    if states.iter().any(|x| x.len() != n) {
        return Err(invalid(format!("every state must have dimension {n}")));
    }
    let f = intensity_table(states, intensity);
    let big = nodes * nodes * n;
    let mut w = Matrix::zeros(nodes * n, big);
    let mut m = Matrix::zeros(big, big);
    for i in 0..nodes {
        for j in 0..nodes {
            let block = (i * nodes + j) * n;
            for c in 0..n {
                w[(i * n + c, block + c)] = adjacency[(i, j)];
                m[(block + c, block + c)] = f[(i, j)];
            }
        }
    }
    Ok((w, m))
}

/// Both sides of the two norm inequalities at one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormBoundSample {
    pub step: usize,
    /// `‖W(k)‖`.
    pub w_norm: f64,
    /// `√N‖A_G(k)‖`.
    pub w_bound: f64,
    /// `‖M(k)‖²`.
    pub m_norm_sq: f64,
    /// `4σ²V(k) + 2b²`.
    pub m_bound: f64,
}

impl NormBoundSample {
    /// Computes both sides from closed forms: `W Wᵀ` is block diagonal with
    /// blocks `‖α_i‖² I_n`, and `M` is diagonal.
    pub fn evaluate(step: usize, adjacency: &Matrix, states: &[Vec<f64>], x0: &[f64], intensity: &NoiseIntensity) -> Self {
        let nodes = adjacency.rows();
        let w_norm = (0..nodes)
            .map(|i| norm_sq(adjacency.row(i)))
            .fold(0.0, f64::max)
            .sqrt();
        let w_bound = (nodes as f64).sqrt() * spectral_norm(adjacency);
        let f = intensity_table(states, intensity);
        let m_norm_sq = f.max_abs().powi(2);
        let v: f64 = states
            .iter()
            .map(|x| x.iter().zip(x0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
            .sum();
        let m_bound = 4.0 * intensity.sigma.powi(2) * v + 2.0 * intensity.b.powi(2);
        Self {
            step,
            w_norm,
            w_bound,
            m_norm_sq,
            m_bound,
        }
    }

    pub fn w_holds(&self) -> bool {
        self.w_norm <= self.w_bound * (1.0 + BOUND_REL_TOL) + f64::MIN_POSITIVE
    }

    pub fn m_holds(&self) -> bool {
        self.m_norm_sq <= self.m_bound * (1.0 + BOUND_REL_TOL) + f64::MIN_POSITIVE
    }
}

/// Outcome of checking the norm inequalities over a trajectory.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct NormBoundReport {
    pub checked: usize,
    pub w_violations: Vec<usize>,
    pub m_violations: Vec<usize>,
    /// Largest `‖W‖ / (√N‖A‖)` seen.
    pub worst_w_ratio: f64,
    /// Largest `‖M‖² / (4σ²V + 2b²)` seen.
    pub worst_m_ratio: f64,
}

impl NormBoundReport {
    pub fn record(&mut self, s: &NormBoundSample) {
        self.checked += 1;
        if !s.w_holds() {
            self.w_violations.push(s.step);
        }
        if !s.m_holds() {
            self.m_violations.push(s.step);
        }
        if s.w_bound > 0.0 {
            self.worst_w_ratio = self.worst_w_ratio.max(s.w_norm / s.w_bound);
        }
        if s.m_bound > 0.0 {
            self.worst_m_ratio = self.worst_m_ratio.max(s.m_norm_sq / s.m_bound);
        }
    }

    pub fn merge(&mut self, other: &NormBoundReport) {
        self.checked += other.checked;
        self.w_violations.extend_from_slice(&other.w_violations);
        self.m_violations.extend_from_slice(&other.m_violations);
        self.worst_w_ratio = self.worst_w_ratio.max(other.worst_w_ratio);
        self.worst_m_ratio = self.worst_m_ratio.max(other.worst_m_ratio);
    }

    pub fn holds(&self) -> bool {
        self.w_violations.is_empty() && self.m_violations.is_empty()
    }
}

/// Checks the norm inequalities at every recorded step.
pub fn verify_norm_bounds<'a, I>(samples: I) -> NormBoundReport
where
    I: IntoIterator<Item = &'a NormBoundSample>,
{
    let mut report = NormBoundReport::default();
    for s in samples {
        report.record(s);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::run_stream;
    use proptest::prelude::*;

    #[test]
    fn zero_channel_noise_passes_sender_state() {
        let f = NoiseIntensity::new(0.1, 0.1).unwrap();
        let mu = received_message(&[1.0, 2.0], &[0.0, 0.0], &f, LinkNoise::Scalar(0.0)).unwrap();
        assert_eq!(mu, vec![1.0, 2.0]);
    }

    #[test]
    fn pure_multiplicative_noise_vanishes_at_agreement() {
        let f = NoiseIntensity::new(0.7, 0.0).unwrap();
        let mu = received_message(&[3.0, -1.0], &[3.0, -1.0], &f, LinkNoise::Vector(&[5.0, 9.0])).unwrap();
        assert_eq!(mu, vec![3.0, -1.0]);
    }

    #[test]
    fn affine_intensity_value() {
        let f = NoiseIntensity::new(0.1, 0.1).unwrap();
        // ‖(3,4)‖ = 5.
        assert!((f.between(&[3.0, 4.0], &[0.0, 0.0]) - 0.6).abs() < 1e-15);
        let mu = received_message(&[3.0, 4.0], &[0.0, 0.0], &f, LinkNoise::Vector(&[1.0, -2.0])).unwrap();
        assert!((mu[0] - 3.6).abs() < 1e-15 && (mu[1] - 2.8).abs() < 1e-15);
        assert!(NoiseIntensity::new(-0.1, 0.0).is_err());
    }

    #[test]
    fn single_node_w_is_zero() {
        let (w, m) = build_wm(&Matrix::zeros(1, 1), &[vec![1.0, 2.0]], &NoiseIntensity::new(0.3, 0.2).unwrap(), 2).unwrap();
        assert_eq!(w.shape(), (2, 2));
        assert_eq!(w, Matrix::zeros(2, 2));
        assert_eq!(m, Matrix::identity(2).scale(0.2));
    }

    #[test]
    fn equal_states_without_offset_give_zero_m() {
        let a = Matrix::from_rows(&[[0.0, 1.0, 0.5], [0.2, 0.0, 0.0], [1.0, 1.0, 0.0]]).unwrap();
        let states = vec![vec![1.0, -1.0]; 3];
        let (w, m) = build_wm(&a, &states, &NoiseIntensity::new(2.0, 0.0).unwrap(), 2).unwrap();
        assert_eq!(w.shape(), (6, 18));
        assert_eq!(m, Matrix::zeros(18, 18));
    }

    #[test]
    fn wm_times_xi_matches_pairwise_sum() {
        let a = Matrix::from_rows(&[[0.0, 1.0, -0.5], [0.2, 0.0, 0.0], [1.0, 0.3, 0.0]]).unwrap();
        let states = vec![vec![1.0, 0.0], vec![0.0, 2.0], vec![-1.0, 1.0]];
        let f = NoiseIntensity::new(0.4, 0.1).unwrap();
        let mut rng = run_stream(9, 0);
        let xi = ChannelNoise::gaussian(1.0).draw(3, 2, &mut rng);
        let (w, m) = build_wm(&a, &states, &f, 2).unwrap();
        let got = w.mul_vec(&m.mul_vec(xi.as_slice()));
        for i in 0..3 {
            for c in 0..2 {
                let want: f64 = (0..3)
                    .map(|j| a[(i, j)] * f.between(&states[j], &states[i]) * xi.pair(j, i)[c])
                    .sum();
                assert!((got[i * 2 + c] - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn consensus_state_meets_offset_bound() {
        let f = NoiseIntensity::new(0.1, 0.1).unwrap();
        let x0 = [5.0, 4.0, 3.0];
        let states = vec![x0.to_vec(); 3];
        let a = Matrix::from_rows(&[[0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]]).unwrap();
        let s = NormBoundSample::evaluate(0, &a, &states, &x0, &f);
        assert!((s.m_bound - 0.02).abs() < 1e-15);
        assert!(s.m_norm_sq <= 0.02);
        assert!(s.m_holds() && s.w_holds());

        let zero = NormBoundSample::evaluate(0, &a, &states, &x0, &NoiseIntensity::zero());
        assert_eq!(zero.m_norm_sq, 0.0);
        assert!(zero.m_holds());
    }

    #[test]
    fn closed_form_norms_match_dense_spectral_norms() {
        let a = Matrix::from_rows(&[[0.0, 0.7, -0.5], [0.2, 0.0, 0.9], [0.4, 0.3, 0.0]]).unwrap();
        let states = vec![vec![1.0, 0.0], vec![0.0, 2.0], vec![-1.0, 1.0]];
        let f = NoiseIntensity::new(0.4, 0.1).unwrap();
        let (w, m) = build_wm(&a, &states, &f, 2).unwrap();
        let s = NormBoundSample::evaluate(0, &a, &states, &[0.0, 0.0], &f);
        assert!((spectral_norm(&w) - s.w_norm).abs() < 1e-12);
        assert!((spectral_norm(&m).powi(2) - s.m_norm_sq).abs() < 1e-12);
    }

    #[test]
    fn gaussian_draws_are_reproducible() {
        let law = ChannelNoise::gaussian(1.5);
        let a = law.draw(3, 3, &mut run_stream(4, 2));
        let b = law.draw(3, 3, &mut run_stream(4, 2));
        assert_eq!(a, b);
    }

    #[test]
    fn channel_noise_mean_is_zero() {
        let mut rng = run_stream(21, 0);
        let law = NoiseLaw::Gaussian { std: 2.0 };
        let draws = 100_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..draws {
            let x = law.draw(&mut rng);
            s += x;
            s2 += x * x;
        }
        let d = draws as f64;
        let mean = s / d;
        let se = ((s2 / d - mean * mean) / d).sqrt();
        assert!(mean.abs() <= 3.0 * se, "mean {mean} se {se}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn norm_inequalities_hold_on_random_instances(
            w in proptest::collection::vec(-2.0f64..2.0, 9),
            x in proptest::collection::vec(-10.0f64..10.0, 9),
            x0 in proptest::collection::vec(-10.0f64..10.0, 3),
            sigma in 0.0f64..2.0,
            b in 0.0f64..2.0,
        ) {
            let mut a = Matrix::from_vec(3, 3, w).unwrap();
            for i in 0..3 { a[(i, i)] = 0.0; }
            let states: Vec<Vec<f64>> = x.chunks(3).map(<[f64]>::to_vec).collect();
            let s = NormBoundSample::evaluate(0, &a, &states, &x0, &NoiseIntensity::new(sigma, b).unwrap());
            prop_assert!(s.w_holds(), "{s:?}");
            prop_assert!(s.m_holds(), "{s:?}");
        }
    }
}
