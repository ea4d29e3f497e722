use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::graph::{Mode, NetworkGraph};
use super::Tensor;

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    /// Central-difference half step.
    pub step: f64,
    /// Floor on the relative-error denominator. A central difference with
    /// step 1e-5 on an O(1) loss carries about 1e-11 of rounding error, so
    /// entries smaller than the floor are effectively judged on absolute
    /// error.
    pub denominator_floor: f64,
    /// Check at most this many entries of each tensor (seeded choice).
    pub max_entries_per_tensor: Option<usize>,
    pub entry_seed: u64,
    /// Also check gradients with respect to bound inputs.
    pub include_inputs: bool,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            denominator_floor: 1e-6,
            max_entries_per_tensor: None,
            entry_seed: 0,
            include_inputs: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Tensor holding the worst entry.
    pub worst: String,
    /// Analytic and finite-difference values at the worst entry.
    pub worst_values: (f64, f64),
    /// Max relative error per checked tensor, parameters first.
    pub per_tensor: Vec<(String, f64)>,
    pub checked: usize,
    /// Entries whose ±step evaluations straddled a ReLU or argmax switch.
    pub skipped_at_kink: usize,
    /// [`NetworkGraph::kink_margin`] at the unperturbed point.
    pub margin: f64,
}

fn rel_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn pick(numel: usize, opts: &GradCheckOptions, salt: u64) -> Vec<usize> {
    match opts.max_entries_per_tensor {
        Some(k) if k < numel => {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.entry_seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let mut v = index::sample(&mut rng, numel, k).into_vec();
            v.sort_unstable();
            v
        }
        _ => (0..numel).collect(),
    }
}

/// Compares reverse-mode gradients of the graph's scalar output against
/// central finite differences, in training mode.
///
/// Entries where the `+step` and `-step` evaluations land on different
/// linear pieces (a ReLU sign or pooling argmax changed) are skipped and
/// counted. Batchnorm running statistics are restored afterwards.
pub fn grad_check(
    graph: &mut NetworkGraph,
    inputs: &[(&str, &Tensor)],
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let saved_states = graph.norm_states().to_vec();
    let result = run(graph, inputs, opts);
    graph
        .norm_states_mut()
        .iter_mut()
        .zip(saved_states)
        .for_each(|(s, saved)| *s = saved);
    result
}

fn eval(graph: &mut NetworkGraph, inputs: &[(&str, &Tensor)]) -> Result<(f64, super::KinkSignature)> {
    let v = graph
        .forward(inputs, Mode::Train)?
        .item()
        .ok_or_else(|| Error::Graph("gradient check needs a scalar output".into()))?;
    Ok((v, graph.kink_signature()))
}

fn run(graph: &mut NetworkGraph, inputs: &[(&str, &Tensor)], opts: &GradCheckOptions) -> Result<GradCheckReport> {
    graph.forward(inputs, Mode::Train)?;
    let margin = graph.kink_margin();
    let grads = graph.backward()?;

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: String::new(),
        worst_values: (0.0, 0.0),
        per_tensor: Vec::new(),
        checked: 0,
        skipped_at_kink: 0,
        margin,
    };
    let h = opts.step;

    let names: Vec<String> = graph.params().map(|(n, _)| n.to_string()).collect();
    for (pi, name) in names.iter().enumerate() {
        let original = graph.param_value(name).expect("listed parameter").clone();
        let analytic = grads.params.by_index(pi);
        let mut worst = 0.0f64;
        for idx in pick(original.numel(), opts, pi as u64) {
            let mut plus = original.clone();
            plus.data_mut()[idx] += h;
            graph.set_param(name, plus)?;
            let (lp, sp) = eval(graph, inputs)?;
            let mut minus = original.clone();
            minus.data_mut()[idx] -= h;
            graph.set_param(name, minus)?;
            let (lm, sm) = eval(graph, inputs)?;
            if sp != sm {
                report.skipped_at_kink += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * h);
            let a = analytic.data()[idx];
            let e = rel_error(a, numeric, opts.denominator_floor);
            if e > report.max_rel_error || report.worst.is_empty() {
                report.max_rel_error = e;
                report.worst = name.clone();
                report.worst_values = (a, numeric);
            }
            worst = worst.max(e);
            report.checked += 1;
        }
        graph.set_param(name, original)?;
        report.per_tensor.push((name.clone(), worst));
    }

    if opts.include_inputs {
        for (ii, (slot, value)) in inputs.iter().enumerate() {
            let Some(analytic) = grads.inputs.get(*slot) else { continue };
            let mut worst = 0.0f64;
            for idx in pick(value.numel(), opts, 1_000_003 + ii as u64) {
                let mut perturbed = |delta: f64| -> Result<(f64, super::KinkSignature)> {
                    let mut t = (*value).clone();
                    t.data_mut()[idx] += delta;
                    let bound: Vec<(&str, &Tensor)> = inputs
                        .iter()
                        .map(|(n, v)| if n == slot { (*n, &t) } else { (*n, *v) })
                        .collect();
                    eval(graph, &bound)
                };
                let (lp, sp) = perturbed(h)?;
                let (lm, sm) = perturbed(-h)?;
                if sp != sm {
                    report.skipped_at_kink += 1;
                    continue;
                }
                let numeric = (lp - lm) / (2.0 * h);
                let a = analytic.data()[idx];
                let e = rel_error(a, numeric, opts.denominator_floor);
                if e > report.max_rel_error || report.worst.is_empty() {
                    report.max_rel_error = e;
                    report.worst = format!("input:{slot}");
                    report.worst_values = (a, numeric);
                }
                worst = worst.max(e);
                report.checked += 1;
            }
            report.per_tensor.push((format!("input:{slot}"), worst));
        }
    }

    // Leave a valid cache for the caller.
    graph.forward(inputs, Mode::Train)?;
    Ok(report)
}
