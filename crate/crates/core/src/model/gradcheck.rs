use super::network::{LossWeights, Model};
use crate::error::Result;
use crate::graph::MultiGraph;
use crate::symh::SymhTree;

/// Outcome of comparing analytic gradients with central differences.
#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Coordinates whose ±h probes crossed a ReLU or max-pool switch.
    pub skipped: usize,
    pub max_rel_error: f64,
    /// `(tensor name, index, analytic, numeric)` of the worst coordinate.
    pub worst: Option<(String, usize, f64, f64)>,
}

/// Relative error with an absolute floor, so that gradients near zero are
/// compared in absolute terms.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Central differences on every parameter coordinate, using training-mode
/// batch statistics. Steps `h` and `h/2` are combined by Richardson
/// extrapolation, which cancels the `h²` error term.
pub fn gradient_check(
    model: &Model,
    graphs: &[&MultiGraph],
    trees: &[&SymhTree],
    weights: &LossWeights,
    h: f64,
    floor: f64,
) -> Result<GradCheckReport> {
    let (tape, loss, _) = model.batch_loss(graphs, trees, weights, true)?;
    let base_sig = tape.signature().to_vec();
    let mut grads = model.store.zero_grads();
    tape.backward(loss, &mut grads)?;

    let mut probe = model.clone();
    let mut report = GradCheckReport::default();
    for (p, grad) in grads.iter().enumerate() {
        let name = model.store.params()[p].0.clone();
        for k in 0..grad.len() {
            let id = super::params::ParamId(p);
            let original = model.store.value(id).as_slice().expect("contiguous")[k];
            let mut eval = |x: f64| -> Result<(f64, bool)> {
                probe.store.value_mut(id).as_slice_mut().expect("contiguous")[k] = x;
                let (t, l, _) = probe.batch_loss(graphs, trees, weights, true)?;
                Ok((t.scalar(l), t.signature() == base_sig.as_slice()))
            };
            let mut probes = [0.0; 4];
            let mut same = true;
            for (slot, step) in probes.iter_mut().zip([h, -h, 0.5 * h, -0.5 * h]) {
                let (loss, s) = eval(original + step)?;
                *slot = loss;
                same &= s;
            }
            probe.store.value_mut(id).as_slice_mut().expect("contiguous")[k] = original;
            if !same {
                report.skipped += 1;
                continue;
            }
            let [plus, minus, half_plus, half_minus] = probes;
            let coarse = (plus - minus) / (2.0 * h);
            let fine = (half_plus - half_minus) / h;
            let numeric = (4.0 * fine - coarse) / 3.0;
            let analytic = grad.as_slice().expect("contiguous")[k];
            let err = relative_error(analytic, numeric, floor);
            report.checked += 1;
            if err >= report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((name.clone(), k, analytic, numeric));
            }
        }
    }
    Ok(report)
}
