//! Operational stand-in for the information available at a history cut.
//!
//! Conditional expectations are taken with respect to what has been realized
//! up to some step. Only the pieces of a realization that actually matter for
//! the supported process classes are carried: the Markov state of a switching
//! graph and the recent measurements of autoregressive regressors. Temporally
//! independent processes need nothing.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

/// Recent scalar measurements of each node, most recent first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArHistory {
    lags: Vec<VecDeque<f64>>,
}

impl ArHistory {
    /// History of `nodes` nodes and `order` lags, all set to `fill`.
    pub fn constant(nodes: usize, order: usize, fill: f64) -> Self {
        Self {
            lags: vec![VecDeque::from(vec![fill; order]); nodes],
        }
    }

    /// Builds a history from explicit lags (`lags[i][0]` is node `i`'s
    /// latest measurement).
    pub fn from_lags(lags: Vec<Vec<f64>>) -> Self {
        Self {
            lags: lags.into_iter().map(VecDeque::from).collect(),
        }
    }

    pub fn nodes(&self) -> usize {
        self.lags.len()
    }

    pub fn order(&self) -> usize {
        self.lags.first().map_or(0, VecDeque::len)
    }

    /// `[y_i(k-1), ..., y_i(k-d)]`.
    pub fn regressor(&self, node: usize) -> Vec<f64> {
        self.lags[node].iter().copied().collect()
    }

    /// Shifts in the newest measurement of every node.
    pub fn push(&mut self, measurements: &[f64]) {
        debug_assert_eq!(measurements.len(), self.lags.len());
        for (lag, &y) in self.lags.iter_mut().zip(measurements) {
            lag.pop_back();
            lag.push_front(y);
        }
    }
}

/// What is known after step `index` has been realized. `index == None`
/// means nothing is known yet (the trivial sigma-field before step 0).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HistoryCut {
    pub index: Option<usize>,
    pub graph_state: Option<usize>,
    pub ar_history: Option<ArHistory>,
}

impl HistoryCut {
    pub fn start() -> Self {
        Self::default()
    }

    pub fn at(index: usize) -> Self {
        Self {
            index: Some(index),
            ..Self::default()
        }
    }

    /// Cut for the window starting at `window_start`, i.e. index
    /// `window_start - 1` (or the start when the window begins at 0).
    pub fn before(window_start: usize) -> Self {
        match window_start {
            0 => Self::start(),
            s => Self::at(s - 1),
        }
    }

    pub fn with_graph_state(mut self, state: usize) -> Self {
        self.graph_state = Some(state);
        self
    }

    pub fn with_ar_history(mut self, history: ArHistory) -> Self {
        self.ar_history = Some(history);
        self
    }

    /// Steps between the cut and `step`; `None` when the cut lies after
    /// `step`.
    pub(crate) fn lead(&self, step: usize) -> Option<usize> {
        match self.index {
            None => Some(step + 1),
            Some(m) if m <= step => Some(step - m),
            Some(_) => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ar_history_shifts() {
        let mut h = ArHistory::from_lags(vec![vec![1.0, 2.0, 3.0]]);
        h.push(&[0.5]);
        assert_eq!(h.regressor(0), vec![0.5, 1.0, 2.0]);
        assert_eq!(h.order(), 3);
    }

    #[test]
    fn cut_lead() {
        assert_eq!(HistoryCut::start().lead(0), Some(1));
        assert_eq!(HistoryCut::at(3).lead(5), Some(2));
        assert_eq!(HistoryCut::at(5).lead(3), None);
        assert_eq!(HistoryCut::before(0), HistoryCut::start());
        assert_eq!(HistoryCut::before(4), HistoryCut::at(3));
    }
}
