use crate::error::{Error, Result};
use crate::numerics::{Gradients, ParamStore, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// One bias-corrected Adam update of a flat parameter slice.
///
/// `step` is 1-based. Entries flagged in `fixed` are left untouched, moments
/// included.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    step: u64,
    cfg: &AdamConfig,
    fixed: Option<&[bool]>,
) -> Result<()> {
    let n = params.len();
    if grads.len() != n || m.len() != n || v.len() != n || fixed.is_some_and(|f| f.len() != n) {
        return Err(Error::invalid("adam: parameter, gradient and moment lengths differ"));
    }
    if step == 0 {
        return Err(Error::invalid("adam: step counter starts at 1"));
    }
    let c1 = 1.0 - cfg.beta1.powi(step as i32);
    let c2 = 1.0 - cfg.beta2.powi(step as i32);
    for i in 0..n {
        if fixed.is_some_and(|f| f[i]) {
            continue;
        }
        let g = grads[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        params[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

/// Adam state for every tensor of a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
}

impl Adam {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let zeros = |p: &crate::numerics::Param| {
            Tensor::new(p.value.shape().to_vec(), vec![0.0; p.value.len()]).expect("same shape")
        };
        Adam {
            config,
            m: store.iter().map(|(_, p)| zeros(p)).collect(),
            v: store.iter().map(|(_, p)| zeros(p)).collect(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update. Parameters without a gradient entry are skipped.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) -> Result<()> {
        self.step += 1;
        for (id, g) in grads.iter() {
            let i = id.index();
            if i >= self.m.len() {
                return Err(Error::invalid("adam: gradient for an unknown parameter"));
            }
            let p = store.get_mut(id);
            if !p.value.same_shape(g) {
                return Err(Error::invalid(format!("adam: gradient shape mismatch for {}", p.name)));
            }
            let fixed = p.fixed.clone();
            adam_step(
                p.value.data_mut(),
                g.data(),
                self.m[i].data_mut(),
                self.v[i].data_mut(),
                self.step,
                &self.config,
                fixed.as_deref(),
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_from_rest_leaves_params() {
        let mut p = [1.0, -2.0];
        let (mut m, mut v) = ([0.0; 2], [0.0; 2]);
        adam_step(&mut p, &[0.0; 2], &mut m, &mut v, 1, &AdamConfig::default(), None).unwrap();
        assert_eq!(p, [1.0, -2.0]);
    }

    #[test]
    fn zero_gradient_decays_moments() {
        let mut p = [1.0];
        let (mut m, mut v) = ([0.5], [0.25]);
        adam_step(&mut p, &[0.0], &mut m, &mut v, 3, &AdamConfig::default(), None).unwrap();
        assert!((m[0] - 0.45).abs() < 1e-15);
        assert!((v[0] - 0.24975).abs() < 1e-15);
    }

    #[test]
    fn constant_gradient_step_approaches_learning_rate() {
        let cfg = AdamConfig::default();
        let mut p = [0.0];
        let (mut m, mut v) = ([0.0], [0.0]);
        let mut last = 0.0;
        for t in 1..=5000 {
            let before = p[0];
            adam_step(&mut p, &[-3.0], &mut m, &mut v, t, &cfg, None).unwrap();
            last = p[0] - before;
        }
        assert!((last - cfg.learning_rate).abs() < 1e-6, "{last}");
    }

    #[test]
    fn fixed_entries_do_not_move() {
        let mut p = [1.0, 1.0];
        let (mut m, mut v) = ([0.0; 2], [0.0; 2]);
        adam_step(&mut p, &[1.0, 1.0], &mut m, &mut v, 1, &AdamConfig::default(), Some(&[true, false]))
            .unwrap();
        assert_eq!(p[0], 1.0);
        assert!(p[1] < 1.0);
        assert_eq!(m[0], 0.0);
    }

    #[test]
    fn length_mismatch_rejected() {
        let mut p = [1.0, 2.0];
        let (mut m, mut v) = ([0.0; 2], [0.0; 1]);
        assert!(adam_step(&mut p, &[0.0; 2], &mut m, &mut v, 1, &AdamConfig::default(), None).is_err());
    }
}
