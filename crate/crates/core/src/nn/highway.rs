//! Highway layers: `y = t ∘ relu(W_h x + b_h) + (1 − t) ∘ x`, with the
//! transform gate `t = sigmoid(W_t x + b_t)`.

use rand::Rng;

use super::tensor::{affine, affine_t_acc, outer_acc, sigmoid, ParamSet, Real, Tensor2};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct HighwayParams<T> {
    pub w_h: Tensor2<T>,
    pub b_h: Vec<T>,
    pub w_t: Tensor2<T>,
    pub b_t: Vec<T>,
}

/// Gate bias at init; −1 starts each layer close to the carry path.
pub const GATE_BIAS_INIT: f64 = -1.0;

impl<T: Real> HighwayParams<T> {
    pub fn zeros(dim: usize) -> Self {
        HighwayParams {
            w_h: Tensor2::zeros(dim, dim),
            b_h: vec![T::zero(); dim],
            w_t: Tensor2::zeros(dim, dim),
            b_t: vec![T::zero(); dim],
        }
    }

    pub fn init<R: Rng>(dim: usize, rng: &mut R) -> Self {
        let k = 1.0 / (dim as f64).sqrt();
        let mut p = Self::zeros(dim);
        for v in p
            .w_h
            .data
            .iter_mut()
            .chain(p.b_h.iter_mut())
            .chain(p.w_t.data.iter_mut())
        {
            *v = T::of(rng.random_range(-k..k));
        }
        p.b_t.iter_mut().for_each(|v| *v = T::of(GATE_BIAS_INIT));
        p
    }

    pub fn dim(&self) -> usize {
        self.b_h.len()
    }

    fn check(&self, x: usize) -> Result<()> {
        let d = self.dim();
        let ok = self.w_h.rows == d
            && self.w_h.cols == d
            && self.w_t.rows == d
            && self.w_t.cols == d
            && self.b_t.len() == d;
        if !ok || x != d {
            return Err(Error::shape(format!("highway: input {x} against layer dim {d}")));
        }
        Ok(())
    }

    pub fn forward_cached(&self, x: &[T]) -> HighwayCache<T> {
        let d = self.dim();
        let mut gate = vec![T::zero(); d];
        let mut transform = vec![T::zero(); d];
        affine(&self.w_t, x, &self.b_t, &mut gate);
        affine(&self.w_h, x, &self.b_h, &mut transform);
        let mut y = vec![T::zero(); d];
        for k in 0..d {
            gate[k] = sigmoid(gate[k]);
            transform[k] = transform[k].max(T::zero());
            y[k] = gate[k] * transform[k] + (T::one() - gate[k]) * x[k];
        }
        HighwayCache {
            x: x.to_vec(),
            gate,
            transform,
            y,
        }
    }

    /// Accumulates into `grad`; returns dx.
    pub fn backward(&self, cache: &HighwayCache<T>, dy: &[T], grad: &mut HighwayParams<T>) -> Vec<T> {
        let d = self.dim();
        let one = T::one();
        let mut dx = vec![T::zero(); d];
        let mut da_t = vec![T::zero(); d];
        let mut da_h = vec![T::zero(); d];
        for k in 0..d {
            let (t, h, x) = (cache.gate[k], cache.transform[k], cache.x[k]);
            dx[k] = dy[k] * (one - t);
            da_t[k] = dy[k] * (h - x) * t * (one - t);
            da_h[k] = if h > T::zero() { dy[k] * t } else { T::zero() };
        }
        outer_acc(&mut grad.w_t, &da_t, &cache.x);
        outer_acc(&mut grad.w_h, &da_h, &cache.x);
        for k in 0..d {
            grad.b_t[k] += da_t[k];
            grad.b_h[k] += da_h[k];
        }
        affine_t_acc(&self.w_t, &da_t, &mut dx);
        affine_t_acc(&self.w_h, &da_h, &mut dx);
        dx
    }
}

#[derive(Debug, Clone)]
pub struct HighwayCache<T> {
    pub x: Vec<T>,
    pub gate: Vec<T>,
    pub transform: Vec<T>,
    pub y: Vec<T>,
}

impl<T: Real> ParamSet<T> for HighwayParams<T> {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&str, &[usize], &'a [T])) {
        let d = self.dim();
        f("w_h", &[d, d], &self.w_h.data);
        f("b_h", &[d], &self.b_h);
        f("w_t", &[d, d], &self.w_t.data);
        f("b_t", &[d], &self.b_t);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [T])) {
        let d = self.dim();
        f("w_h", &[d, d], &mut self.w_h.data);
        f("b_h", &[d], &mut self.b_h);
        f("w_t", &[d, d], &mut self.w_t.data);
        f("b_t", &[d], &mut self.b_t);
    }
}

/// A stack of highway layers applied in order.
#[derive(Debug, Clone, PartialEq)]
pub struct HighwayStack<T> {
    pub layers: Vec<HighwayParams<T>>,
}

impl<T: Real> HighwayStack<T> {
    pub fn init<R: Rng>(dim: usize, n: usize, rng: &mut R) -> Self {
        HighwayStack {
            layers: (0..n).map(|_| HighwayParams::init(dim, rng)).collect(),
        }
    }

    pub fn zeros(dim: usize, n: usize) -> Self {
        HighwayStack {
            layers: (0..n).map(|_| HighwayParams::zeros(dim)).collect(),
        }
    }

    pub fn forward_cached(&self, x: &[T]) -> Vec<HighwayCache<T>> {
        let mut caches: Vec<HighwayCache<T>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let input = caches.last().map_or(x, |c| c.y.as_slice());
            let c = layer.forward_cached(input);
            caches.push(c);
        }
        caches
    }

    pub fn backward(&self, caches: &[HighwayCache<T>], dy: &[T], grad: &mut HighwayStack<T>) -> Vec<T> {
        let mut d = dy.to_vec();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            d = layer.backward(&caches[k], &d, &mut grad.layers[k]);
        }
        d
    }
}

impl<T: Real> ParamSet<T> for HighwayStack<T> {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&str, &[usize], &'a [T])) {
        for (k, l) in self.layers.iter().enumerate() {
            l.visit(&mut |n, d, t| f(&format!("{k}.{n}"), d, t));
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [T])) {
        for (k, l) in self.layers.iter_mut().enumerate() {
            l.visit_mut(&mut |n, d, t| f(&format!("{k}.{n}"), d, t));
        }
    }
}

/// Batched highway layer over rows of `x` (B×D).
pub fn highway_forward<T: Real>(x: &Tensor2<T>, p: &HighwayParams<T>) -> Result<Tensor2<T>> {
    p.check(x.cols)?;
    let mut y = Tensor2::zeros(x.rows, x.cols);
    for r in 0..x.rows {
        let c = p.forward_cached(x.row(r));
        y.row_mut(r).copy_from_slice(&c.y);
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor2<f64> {
        Tensor2::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
    }

    #[test]
    fn closed_gate_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = HighwayParams::<f64>::init(6, &mut rng);
        p.b_t.iter_mut().for_each(|v| *v = -1e9);
        let x = sample(&mut rng, 4, 6);
        let y = highway_forward(&x, &p).unwrap();
        // Bit-identical, not just close.
        assert_eq!(y.data, x.data);
    }

    #[test]
    fn open_gate_is_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut p = HighwayParams::<f64>::init(5, &mut rng);
        p.b_t.iter_mut().for_each(|v| *v = 1e9);
        let x = sample(&mut rng, 3, 5);
        let y = highway_forward(&x, &p).unwrap();
        for r in 0..3 {
            for k in 0..5 {
                let mut s = p.b_h[k];
                for j in 0..5 {
                    s += p.w_h.get(k, j) * x.get(r, j);
                }
                assert!((y.get(r, k) - s.max(0.0)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn matches_elementwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = HighwayParams::<f64>::init(7, &mut rng);
        let x = sample(&mut rng, 5, 7);
        let y = highway_forward(&x, &p).unwrap();
        for r in 0..5 {
            for k in 0..7 {
                let (mut a, mut b) = (p.b_t[k], p.b_h[k]);
                for j in 0..7 {
                    a += p.w_t.get(k, j) * x.get(r, j);
                    b += p.w_h.get(k, j) * x.get(r, j);
                }
                let t = 1.0 / (1.0 + (-a).exp());
                let want = t * b.max(0.0) + (1.0 - t) * x.get(r, k);
                assert!((y.get(r, k) - want).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn shape_mismatch() {
        let p = HighwayParams::<f64>::zeros(4);
        assert!(highway_forward(&Tensor2::zeros(1, 3), &p).is_err());
    }

    #[test]
    fn init_gate_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = HighwayParams::<f32>::init(3, &mut rng);
        assert!(p.b_t.iter().all(|v| *v == -1.0));
    }
}
