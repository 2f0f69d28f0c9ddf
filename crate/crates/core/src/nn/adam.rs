use super::{NnError, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-4, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Adam moments for a fixed list of parameter tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<S> {
    pub config: AdamConfig,
    m: Vec<Vec<S>>,
    v: Vec<Vec<S>>,
    step: u64,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(sizes: &[usize], config: AdamConfig) -> Self {
        Self {
            config,
            m: sizes.iter().map(|&n| vec![S::zero(); n]).collect(),
            v: sizes.iter().map(|&n| vec![S::zero(); n]).collect(),
            step: 0,
        }
    }

    pub fn for_tensors(tensors: &[&[S]], config: AdamConfig) -> Self {
        Self::new(&tensors.iter().map(|t| t.len()).collect::<Vec<_>>(), config)
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update. Nothing is modified when a gradient is not
    /// finite.
    pub fn step(&mut self, params: Vec<&mut [S]>, grads: &[&[S]]) -> Result<(), NnError> {
        if params.len() != self.m.len()
            || grads.len() != self.m.len()
            || params.iter().zip(grads).zip(&self.m).any(|((p, g), m)| p.len() != m.len() || g.len() != m.len())
        {
            return Err(NnError::ShapeMismatch);
        }
        if let Some(tensor) = grads.iter().position(|g| g.iter().any(|v| !v.is_finite())) {
            return Err(NnError::NonFiniteGradient { tensor });
        }
        self.step += 1;
        let c = &self.config;
        let (b1, b2) = (S::lit(c.beta1), S::lit(c.beta2));
        let (one_b1, one_b2) = (S::lit(1.0 - c.beta1), S::lit(1.0 - c.beta2));
        let corr1 = S::lit(1.0 - c.beta1.powi(self.step as i32));
        let corr2 = S::lit(1.0 - c.beta2.powi(self.step as i32));
        let lr = S::lit(c.learning_rate);
        let eps = S::lit(c.epsilon);
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for k in 0..p.len() {
                m[k] = b1 * m[k] + one_b1 * g[k];
                v[k] = b2 * v[k] + one_b2 * g[k] * g[k];
                let mh = m[k] / corr1;
                let vh = v[k] / corr2;
                p[k] -= lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(())
    }
}
