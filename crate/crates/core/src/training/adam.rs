use std::collections::BTreeMap;

use crate::tensor::Scalar;
use crate::transformer::DualDecoderModel;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.98;
pub const EPS: f64 = 1e-9;

/// Adam with bias correction over the model's named parameters. Moments are
/// keyed by parameter name so they survive checkpointing; a parameter that
/// never received a gradient keeps zero moments and is not moved.
pub struct Adam<S: Scalar> {
    pub step: u64,
    slots: BTreeMap<String, (Vec<S>, Vec<S>)>,
}

impl<S: Scalar> Adam<S> {
    pub fn new() -> Self {
        Adam { step: 0, slots: BTreeMap::new() }
    }

    /// One update over every unfrozen parameter, using `grad * grad_scale`
    /// (the scale implements gradient-accumulation averaging). Returns false
    /// and skips the whole step when any gradient is non-finite.
    pub fn step(&mut self, model: &mut DualDecoderModel<S>, lr: f64, grad_scale: f64) -> bool {
        // gather first so a bad gradient skips the step atomically
        let mut updates: Vec<(String, Vec<S>)> = Vec::new();
        let mut bad = false;
        model.visit_params(&mut |name, t| {
            if bad || model.is_frozen(&name) {
                return;
            }
            if let Some(g) = t.grad() {
                if g.iter().any(|x| !x.is_finite()) {
                    bad = true;
                    return;
                }
                updates.push((name, g));
            }
        });
        if bad {
            log::warn!("non-finite gradient at optimizer step {}; step skipped", self.step + 1);
            return false;
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - BETA1.powi(t);
        let bc2 = 1.0 - BETA2.powi(t);
        let b1 = S::from_f64c(BETA1);
        let b2 = S::from_f64c(BETA2);
        let one_m_b1 = S::from_f64c(1.0 - BETA1);
        let one_m_b2 = S::from_f64c(1.0 - BETA2);
        let scale = S::from_f64c(grad_scale);
        let eps = S::from_f64c(EPS);

        let grads: BTreeMap<String, Vec<S>> = updates.into_iter().collect();
        model.visit_params_mut(&mut |name, tensor| {
            let Some(g) = grads.get(&name) else { return };
            let (m, v) = self
                .slots
                .entry(name.clone())
                .or_insert_with(|| (vec![S::zero(); g.len()], vec![S::zero(); g.len()]));
            let mut values = tensor.values().to_vec();
            let lr_t = S::from_f64c(lr / bc1);
            let bc2_sqrt = S::from_f64c(bc2.sqrt());
            for i in 0..values.len() {
                let gi = g[i] * scale;
                m[i] = b1 * m[i] + one_m_b1 * gi;
                v[i] = b2 * v[i] + one_m_b2 * gi * gi;
                // m_hat/(sqrt(v_hat)+eps) folded as lr/bc1 * m / (sqrt(v/bc2)+eps)
                let denom = (v[i]).sqrt() / bc2_sqrt + eps;
                values[i] = values[i] - lr_t * m[i] / denom;
            }
            *tensor = tensor.reparam(values).expect("finite update");
        });
        true
    }

    /// Moments as named tensors for checkpointing.
    pub fn export(&self) -> BTreeMap<String, (Vec<usize>, Vec<S>)> {
        let mut out = BTreeMap::new();
        for (name, (m, v)) in &self.slots {
            out.insert(format!("optim.m.{name}"), (vec![m.len()], m.clone()));
            out.insert(format!("optim.v.{name}"), (vec![v.len()], v.clone()));
        }
        out
    }

    pub fn restore(step: u64, tensors: &BTreeMap<String, (Vec<usize>, Vec<S>)>) -> Self {
        let mut slots: BTreeMap<String, (Vec<S>, Vec<S>)> = BTreeMap::new();
        for (name, (_, values)) in tensors {
            if let Some(p) = name.strip_prefix("optim.m.") {
                slots.entry(p.to_string()).or_insert_with(|| (Vec::new(), Vec::new())).0 =
                    values.clone();
            } else if let Some(p) = name.strip_prefix("optim.v.") {
                slots.entry(p.to_string()).or_insert_with(|| (Vec::new(), Vec::new())).1 =
                    values.clone();
            }
        }
        Adam { step, slots }
    }
}

impl<S: Scalar> Default for Adam<S> {
    fn default() -> Self {
        Adam::new()
    }
}
