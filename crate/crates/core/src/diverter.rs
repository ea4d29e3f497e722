//! The diverter: a parameter-free layer that splits a shared representation
//! `f` into a control flow and a treatment flow gated by the treatment
//! value `t`, and merges two branch outputs by addition.
//!
//! ```text
//! control = max(1 − sigmoid(max(0, f + t)), 0)
//! treated = sigmoid(max(0, f + t − 1))
//! ```
//!
//! `t` is one real scalar per record, broadcast across the width of `f`.
//! Binary treatments use 0 and 1 but any finite value (a dose) is accepted.
//! With `t = 0` the treatment flow stays at its floor of 0.5 until `f`
//! exceeds 1, and with `t = 1` the control flow is pushed below 0.5
//! wherever `f > −1`; the network learns how far the two ranges separate.

use crate::error::{Error, Result};
use crate::numerics::{self, Mode, NetworkGraph, NodeId, Tensor};

/// The two gated flows, each shaped like the input representation.
#[derive(Debug, Clone, PartialEq)]
pub struct DiverterOutput {
    /// Entries lie in `[0, 0.5]`.
    pub control: Tensor,
    /// Entries lie in `[0.5, 1)`.
    pub treated: Tensor,
}

/// Control gate as a function of `z = f + t`.
pub fn control_gate(z: f64) -> f64 {
    (1.0 - numerics::sigmoid(numerics::relu(z))).max(0.0)
}

/// Treatment gate as a function of `z = f + t`.
pub fn treated_gate(z: f64) -> f64 {
    numerics::sigmoid(numerics::relu(z - 1.0))
}

/// Appends the split to `graph`. `f` is `[batch, ...]`, `t` holds one value
/// per record. Returns `(control, treated)` nodes.
pub fn build_split(graph: &mut NetworkGraph, f: NodeId, t: NodeId) -> Result<(NodeId, NodeId)> {
    let shifted = graph.add_row_scalar(f, t)?;
    graph.label(shifted, "f+t");

    let c = graph.relu(shifted)?;
    let c = graph.sigmoid(c)?;
    let c = graph.affine(c, -1.0, 1.0)?;
    // Inert (1 − sigmoid is never negative) but kept to mirror the gate formula.
    let control = graph.relu(c)?;
    graph.label(control, "control_flow");

    let s = graph.affine(shifted, 1.0, -1.0)?;
    let s = graph.relu(s)?;
    let treated = graph.sigmoid(s)?;
    graph.label(treated, "treatment_flow");
    Ok((control, treated))
}

/// Appends the merge `control + treated` of the two branch outputs.
pub fn build_merge(graph: &mut NetworkGraph, control: NodeId, treated: NodeId) -> Result<NodeId> {
    let y = graph.add(control, treated)?;
    graph.label(y, "merge");
    Ok(y)
}

/// Evaluates the split of `f` (`[batch, width]` or any `[batch, ...]`) with
/// one treatment value per record, through the autodiff graph.
pub fn split(f: &Tensor, t: &[f64]) -> Result<DiverterOutput> {
    let batch = f.shape()[0];
    if f.rank() < 2 || t.len() != batch {
        return Err(Error::shape(
            "diverter_split",
            format!("{} treatment values for representation {:?}", t.len(), f.shape()),
        ));
    }
    let t = Tensor::vector(t.to_vec())?;
    let mut g = NetworkGraph::new();
    let (fi, ti) = (g.input("f"), g.input("t"));
    let (c, tr) = build_split(&mut g, fi, ti)?;
    let bound = [("f", f), ("t", &t)];
    let control = g.forward_node(c, &bound, Mode::Eval)?.clone();
    let treated = g.forward_node(tr, &bound, Mode::Eval)?.clone();
    Ok(DiverterOutput { control, treated })
}

/// Elementwise sum of the two branch outputs.
pub fn merge(control: &Tensor, treated: &Tensor) -> Result<Tensor> {
    if control.shape() != treated.shape() {
        return Err(Error::shape(
            "diverter_merge",
            format!("{:?} vs {:?}", control.shape(), treated.shape()),
        ));
    }
    let data = control.data().iter().zip(treated.data()).map(|(a, b)| a + b).collect();
    Tensor::new(control.shape().to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{grad_check, GradCheckOptions};
    use proptest::prelude::*;

    fn scalar_split(f: f64, t: f64) -> (f64, f64) {
        let out = split(&Tensor::new(vec![1, 1], vec![f]).unwrap(), &[t]).unwrap();
        (out.control.data()[0], out.treated.data()[0])
    }

    #[test]
    fn all_zero_case() {
        assert_eq!(scalar_split(0.0, 0.0), (0.5, 0.5));
    }

    #[test]
    fn strongly_treated_case() {
        let (c, t) = scalar_split(10.0, 1.0);
        let expect_c = 1.0 - 1.0 / (1.0 + (-11.0f64).exp());
        let expect_t = 1.0 / (1.0 + (-10.0f64).exp());
        assert!((c - expect_c).abs() < 1e-15);
        assert!((c - 1.670e-5).abs() < 1e-8);
        assert!((t - expect_t).abs() < 1e-15);
        assert!((t - 0.9999546).abs() < 1e-7);
    }

    #[test]
    fn negative_pre_activation_is_clipped() {
        assert_eq!(scalar_split(-5.0, 0.0), (0.5, 0.5));
    }

    #[test]
    fn graph_matches_scalar_gates() {
        let f = Tensor::new(vec![2, 3], vec![-2.0, 0.3, 1.7, 4.0, -0.2, 0.9]).unwrap();
        let t = [0.0, 1.0];
        let out = split(&f, &t).unwrap();
        for r in 0..2 {
            for j in 0..3 {
                let z = f.at(&[r, j]) + t[r];
                assert_eq!(out.control.at(&[r, j]), control_gate(z));
                assert_eq!(out.treated.at(&[r, j]), treated_gate(z));
            }
        }
    }

    #[test]
    fn split_rejects_wrong_treatment_count() {
        assert!(split(&Tensor::zeros(vec![3, 2]), &[0.0, 1.0]).is_err());
    }

    #[test]
    fn merge_adds_and_checks_shapes() {
        let a = Tensor::vector(vec![1.5]).unwrap();
        let b = Tensor::vector(vec![2.5]).unwrap();
        assert_eq!(merge(&a, &b).unwrap().data(), &[4.0]);
        let x = Tensor::vector(vec![1.0, -2.0]).unwrap();
        assert_eq!(merge(&x, &Tensor::zeros(vec![2])).unwrap(), x);
        assert!(merge(&a, &x).is_err());
    }

    #[test]
    fn gradients_through_both_flows() {
        // loss = mean((control + treated − target)²), differentiated w.r.t. f and t
        let mut g = NetworkGraph::new();
        let (f, t, y) = (g.input("f"), g.input("t"), g.input("y"));
        let (c, tr) = build_split(&mut g, f, t).unwrap();
        let m = build_merge(&mut g, c, tr).unwrap();
        let l = g.mse_loss(m, y).unwrap();
        g.set_output(l).unwrap();
        let fv = Tensor::new(vec![2, 3], vec![0.4, -0.7, 1.2, 0.05, 2.5, -1.6]).unwrap();
        let tv = Tensor::vector(vec![0.3, 0.8]).unwrap();
        let yv = Tensor::new(vec![2, 3], vec![0.1, 0.9, 1.3, 0.2, 0.4, 1.7]).unwrap();
        let opts = GradCheckOptions {
            include_inputs: true,
            ..Default::default()
        };
        let rep = grad_check(&mut g, &[("f", &fv), ("t", &tv), ("y", &yv)], &opts).unwrap();
        assert!(rep.margin > 1e-3);
        assert!(rep.max_rel_error <= 1e-4, "{rep:?}");
    }

    proptest! {
        #[test]
        fn gates_stay_in_range(f in -1e3f64..1e3, t in -10f64..10.0) {
            let z = f + t;
            let (c, tr) = (control_gate(z), treated_gate(z));
            prop_assert!((0.0..=0.5).contains(&c));
            // f64 sigmoid rounds to exactly 1 once its argument passes ~36.7.
            prop_assert!((0.5..1.0).contains(&tr) || (tr == 1.0 && z - 1.0 > 36.0));
        }
    }
}
