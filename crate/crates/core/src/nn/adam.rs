use serde::{Deserialize, Serialize};

use super::tensor::{ParamSet, Real};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one buffer per parameter tensor in
/// [`ParamSet`] visit order.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new<P: ParamSet<T>>(params: &P, config: AdamConfig) -> Self {
        let mut m = Vec::new();
        params.visit(&mut |_, _, t| m.push(vec![T::zero(); t.len()]));
        AdamState {
            config,
            v: m.clone(),
            m,
            t: 0,
        }
    }

    /// One bias-corrected Adam update. Gradients are checked for finiteness
    /// before anything is modified.
    pub fn step<P: ParamSet<T>>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let mut gs: Vec<&[T]> = Vec::with_capacity(self.m.len());
        let mut bad = None;
        grads.visit(&mut |name, _, g| {
            if bad.is_none() && g.iter().any(|v| !v.is_finite()) {
                bad = Some(name.to_string());
            }
            gs.push(g);
        });
        if let Some(name) = bad {
            return Err(Error::NonFinite(format!("gradient of {name}")));
        }
        if gs.len() != self.m.len() {
            return Err(Error::shape(format!(
                "adam: {} gradient tensors for {} state tensors",
                gs.len(),
                self.m.len()
            )));
        }

        self.t += 1;
        let c = self.config;
        let bc1 = T::of(1.0 - c.beta1.powi(self.t as i32));
        let bc2 = T::of(1.0 - c.beta2.powi(self.t as i32));
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let (lr, eps) = (T::of(c.lr), T::of(c.eps));
        let one = T::one();

        let mut k = 0;
        let (ms, vs) = (&mut self.m, &mut self.v);
        let mut mismatch = None;
        params.visit_mut(&mut |name, _, theta| {
            let (g, m, v) = (gs[k], &mut ms[k], &mut vs[k]);
            k += 1;
            if g.len() != theta.len() || m.len() != theta.len() {
                mismatch.get_or_insert_with(|| name.to_string());
                return;
            }
            for i in 0..theta.len() {
                m[i] = b1 * m[i] + (one - b1) * g[i];
                v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                theta[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        });
        match mismatch {
            Some(name) => Err(Error::shape(format!("adam: size mismatch for {name}"))),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone)]
    struct Flat(Vec<f64>);

    impl ParamSet<f64> for Flat {
        fn visit<'a>(&'a self, f: &mut dyn FnMut(&str, &[usize], &'a [f64])) {
            f("theta", &[self.0.len()], &self.0);
        }
        fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
            let n = self.0.len();
            f("theta", &[n], &mut self.0);
        }
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut p = Flat(vec![1.0, -2.0, 0.5]);
        let g = Flat(vec![0.3, -7.0, 1e-3]);
        let mut st = AdamState::new(&p, AdamConfig { lr: 0.01, ..Default::default() });
        st.step(&mut p, &g).unwrap();
        let want = [1.0 - 0.01, -2.0 + 0.01, 0.5 - 0.01];
        for (a, b) in p.0.iter().zip(want) {
            // m̂ = g, v̂ = g², so the step is lr·g/(|g| + ε).
            assert!((a - b).abs() < 1e-7, "{a} vs {b}");
        }
        assert_eq!(st.t, 1);
    }

    #[test]
    fn zero_gradient_is_noop() {
        let mut p = Flat(vec![1.0, 2.0]);
        let before = p.0.clone();
        let mut st = AdamState::new(&p, AdamConfig::default());
        for _ in 0..5 {
            st.step(&mut p, &Flat(vec![0.0, 0.0])).unwrap();
        }
        assert_eq!(p.0, before);
    }

    #[test]
    fn two_steps_match_hand_iteration() {
        let (lr, b1, b2, eps) = (0.05, 0.9, 0.999, 1e-8);
        let mut p = Flat(vec![0.8]);
        let mut st = AdamState::new(&p, AdamConfig { lr, beta1: b1, beta2: b2, eps });
        let grads = [0.4, -1.2];

        let (mut theta, mut m, mut v) = (0.8f64, 0.0f64, 0.0f64);
        for (t, g) in grads.iter().enumerate() {
            st.step(&mut p, &Flat(vec![*g])).unwrap();
            let t = (t + 1) as i32;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            theta -= lr * mh / (vh.sqrt() + eps);
            assert!((p.0[0] - theta).abs() <= 1e-12);
        }
    }

    #[test]
    fn non_finite_gradient_names_tensor() {
        let mut p = Flat(vec![1.0]);
        let mut st = AdamState::new(&p, AdamConfig::default());
        let err = st.step(&mut p, &Flat(vec![f64::NAN])).unwrap_err();
        assert!(err.to_string().contains("theta"));
        assert_eq!(p.0, vec![1.0]);
        assert_eq!(st.t, 0);
    }
}
