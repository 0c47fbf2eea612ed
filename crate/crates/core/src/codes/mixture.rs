use std::sync::Arc;

use super::{MeasureState, SequentialMeasure};
use crate::error::{Error, Result};
use crate::numeric::log2_sum_exp;
use crate::pmf::Symbol;

/// `log2 1/(i(i+1))`.
pub fn harmonic_weight_log2(index: u64) -> f64 {
    let i = index as f64;
    -(i.log2() + (i + 1.0).log2())
}

/// `q*(x) = sum_i w_i q_i(x)` over a finite prefix of components. With the
/// default weights `1/(i(i+1))` the truncation is left unnormalized.
#[derive(Debug, Clone)]
pub struct MixtureMeasure {
    indices: Vec<u64>,
    log2_weights: Vec<f64>,
    components: Vec<Arc<dyn SequentialMeasure>>,
}

impl MixtureMeasure {
    /// Components keyed by their index `i >= 1`, weights `1/(i(i+1))`.
    pub fn new(components: Vec<(u64, Arc<dyn SequentialMeasure>)>) -> Result<MixtureMeasure> {
        let weights = components.iter().map(|c| harmonic_weight_log2(c.0)).collect();
        Self::with_log2_weights(components, weights)
    }

    pub fn with_log2_weights(
        components: Vec<(u64, Arc<dyn SequentialMeasure>)>,
        log2_weights: Vec<f64>,
    ) -> Result<MixtureMeasure> {
        if components.is_empty() {
            return Err(Error::InvalidArgument("mixture needs at least one component".into()));
        }
        if components.len() != log2_weights.len() {
            return Err(Error::InvalidArgument("one weight per component".into()));
        }
        let mut indices: Vec<u64> = components.iter().map(|c| c.0).collect();
        if indices.contains(&0) {
            return Err(Error::InvalidArgument("component indices start at 1".into()));
        }
        indices.sort_unstable();
        indices.dedup();
        if indices.len() != components.len() {
            return Err(Error::InvalidArgument("component indices must be distinct".into()));
        }
        if log2_sum_exp(&log2_weights) > 1e-12 || log2_weights.iter().any(|w| w.is_nan()) {
            return Err(Error::InvalidArgument("mixture weights exceed total mass 1".into()));
        }
        Ok(MixtureMeasure {
            indices: components.iter().map(|c| c.0).collect(),
            log2_weights,
            components: components.into_iter().map(|c| c.1).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn component(&self, index: u64) -> Option<&Arc<dyn SequentialMeasure>> {
        self.indices
            .iter()
            .position(|&i| i == index)
            .map(|k| &self.components[k])
    }

    pub fn components(&self) -> impl Iterator<Item = (u64, f64, &Arc<dyn SequentialMeasure>)> {
        self.indices
            .iter()
            .zip(&self.log2_weights)
            .zip(&self.components)
            .map(|((&i, &w), c)| (i, w, c))
    }

    fn mixed(&self, logs: &[f64]) -> f64 {
        let terms: Vec<f64> = self
            .log2_weights
            .iter()
            .zip(logs)
            .map(|(w, l)| w + l)
            .collect();
        log2_sum_exp(&terms)
    }
}

impl SequentialMeasure for MixtureMeasure {
    fn name(&self) -> String {
        format!("mixture[{} components]", self.components.len())
    }

    fn initial_state(&self) -> MeasureState {
        MeasureState {
            children: self.components.iter().map(|c| c.initial_state()).collect(),
            child_logs: vec![0.0; self.components.len()],
            log2_prob: self.mixed(&vec![0.0; self.components.len()]),
            ..MeasureState::default()
        }
    }

    fn conditional(&self, state: &MeasureState, a: Symbol) -> f64 {
        let next: Vec<f64> = self
            .components
            .iter()
            .zip(&state.children)
            .zip(&state.child_logs)
            .map(|((c, st), l)| l + c.conditional(st, a))
            .collect();
        self.mixed(&next) - self.mixed(&state.child_logs)
    }

    fn observe(&self, state: &mut MeasureState, a: Symbol) -> f64 {
        for ((c, st), l) in self
            .components
            .iter()
            .zip(state.children.iter_mut())
            .zip(state.child_logs.iter_mut())
        {
            *l += c.observe(st, a);
        }
        let total = self.mixed(&state.child_logs);
        let step = total - state.log2_prob;
        state.log2_prob = total;
        state.n += 1;
        step
    }

    fn log2_type_prob(&self, counts: &[(Symbol, u64)]) -> Option<f64> {
        let logs: Option<Vec<f64>> = self
            .components
            .iter()
            .map(|c| c.log2_type_prob(counts))
            .collect();
        logs.map(|l| self.mixed(&l))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codes::{iid_measure, log2_prob, KtCode};
    use crate::pmf::Pmf;

    fn arc<M: SequentialMeasure + 'static>(m: M) -> Arc<dyn SequentialMeasure> {
        Arc::new(m)
    }

    #[test]
    fn single_component_halves() {
        let m = MixtureMeasure::new(vec![(1, arc(KtCode::new(vec![1, 2]).unwrap()))]).unwrap();
        let xs = [1, 2, 2];
        let direct = log2_prob(&KtCode::new(vec![1, 2]).unwrap(), &xs);
        assert!((log2_prob(&m, &xs) - (direct - 1.0)).abs() < 1e-12);
        // the empty string carries the total weight
        assert!((log2_prob(&m, &[]) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn disjoint_point_masses() {
        let m = MixtureMeasure::new(vec![
            (1, arc(iid_measure(Pmf::point(1)))),
            (2, arc(iid_measure(Pmf::point(2)))),
        ])
        .unwrap();
        assert!((log2_prob(&m, &[1]) + 1.0).abs() < 1e-15);
        assert!((log2_prob(&m, &[2]) - (1.0f64 / 6.0).log2()).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_components() {
        assert!(MixtureMeasure::new(vec![]).is_err());
        let c = arc(KtCode::new(vec![1]).unwrap());
        assert!(MixtureMeasure::new(vec![(1, c.clone()), (1, c.clone())]).is_err());
        assert!(MixtureMeasure::new(vec![(0, c)]).is_err());
    }

    #[test]
    fn conditional_agrees_with_observe() {
        let m = MixtureMeasure::new(vec![
            (1, arc(KtCode::new(vec![1, 2]).unwrap())),
            (3, arc(KtCode::new(vec![1, 2, 3]).unwrap())),
        ])
        .unwrap();
        let mut st = m.initial_state();
        for &a in &[1, 3, 1, 2] {
            let c = m.conditional(&st, a);
            let o = m.observe(&mut st, a);
            assert!((c - o).abs() < 1e-12);
        }
    }
}
