use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{Bindings, Graph, NodeId};
use crate::{Error, Result};

/// Denominator floor for relative errors, so that near-zero gradients are
/// compared on an absolute scale.
const RELATIVE_FLOOR: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckEntry {
    pub input: String,
    pub elements: usize,
    pub max_abs_error: f64,
    pub max_rel_error: f64,
    /// Set when any perturbed evaluation produced NaN or infinity.
    pub non_finite: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.entries.iter().map(|e| e.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.entries
            .iter()
            .all(|e| !e.non_finite && e.max_rel_error < self.tolerance)
    }
}

/// Compares [`Evaluation::backward`](super::Evaluation::backward) against
/// central differences `(f(x+h) − f(x−h)) / 2h` for every tracked input.
pub fn finite_difference_check(
    graph: &Graph,
    bindings: &Bindings<'_>,
    output: NodeId,
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    if step.is_nan() || step <= 0.0 {
        return Err(Error::InvalidConfig("finite-difference step must be positive".into()));
    }
    let analytic = graph.evaluate(bindings)?.backward(graph, output)?;
    let mut entries = Vec::new();
    for (name, tensor) in bindings.iter().filter(|(_, t)| t.requires_grad()) {
        let Some(grad) = analytic.get(name) else {
            continue;
        };
        let mut entry = GradCheckEntry {
            input: name.to_string(),
            elements: tensor.len(),
            max_abs_error: 0.0,
            max_rel_error: 0.0,
            non_finite: false,
        };
        let mut probe = tensor.clone();
        for (i, &base) in tensor.data().iter().enumerate() {
            let mut eval_at = |v: f64| -> Result<f64> {
                probe.data_mut()[i] = v;
                let mut b = bindings.clone();
                b.bind(name, &probe);
                let ev = graph.evaluate(&b)?;
                Ok(ev.value(output)?.data()[0])
            };
            let plus = eval_at(base + step)?;
            let minus = eval_at(base - step)?;
            probe.data_mut()[i] = base;
            if !plus.is_finite() || !minus.is_finite() || !grad[i].is_finite() {
                entry.non_finite = true;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * step);
            let abs = (numeric - grad[i]).abs();
            let rel = abs / numeric.abs().max(grad[i].abs()).max(RELATIVE_FLOOR);
            entry.max_abs_error = entry.max_abs_error.max(abs);
            entry.max_rel_error = entry.max_rel_error.max(rel);
        }
        entries.push(entry);
    }
    Ok(GradCheckReport { tolerance, entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;
    use alloc::vec;

    #[test]
    fn linear_graph_is_exact() {
        let mut g = Graph::new();
        let (x, w) = (g.input("x"), g.input("w"));
        let y = g.matmul(x, w);
        let s = g.sum(y);
        let tx = Tensor::matrix(2, 3, vec![0.3, -1.2, 2.0, 0.5, 0.7, -0.1]).unwrap().tracked();
        let tw = Tensor::matrix(3, 1, vec![1.0, -2.0, 0.25]).unwrap().tracked();
        let b = Bindings::new().with("x", &tx).with("w", &tw);
        let report = finite_difference_check(&g, &b, s, 1e-3, 1e-9).unwrap();
        assert!(report.passed(), "{report:?}");
        assert!(report.max_rel_error() < 1e-9);
    }

    #[test]
    fn no_tracked_inputs_is_vacuous() {
        let mut g = Graph::new();
        let x = g.input("x");
        let s = g.sum(x);
        let t = Tensor::vector(vec![1.0]);
        let report = finite_difference_check(&g, &Bindings::new().with("x", &t), s, 1e-5, 1e-4).unwrap();
        assert!(report.entries.is_empty());
        assert!(report.passed());
    }

    #[test]
    fn nan_is_flagged() {
        let mut g = Graph::new();
        let x = g.input("x");
        let r = g.reciprocal(x);
        let s = g.sum(r);
        let t = Tensor::vector(vec![0.0]).tracked();
        let report = finite_difference_check(&g, &Bindings::new().with("x", &t), s, 1e-5, 1e-4).unwrap();
        assert!(report.entries[0].non_finite);
        assert!(!report.passed());
    }

    #[test]
    fn step_must_be_positive() {
        let mut g = Graph::new();
        let x = g.input("x");
        let t = Tensor::scalar(1.0);
        assert!(finite_difference_check(&g, &Bindings::new().with("x", &t), x, 0.0, 1e-4).is_err());
    }
}
