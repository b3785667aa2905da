use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{affine, affine_t_acc, outer_acc, sigmoid, ParamSet, Real, Tensor2};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Sigmoid,
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply<T: Real>(self, z: T) -> T {
        match self {
            Activation::Identity => z,
            Activation::Sigmoid => sigmoid(z),
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(T::zero()),
        }
    }

    /// Derivative expressed through the activation output `y`.
    #[inline]
    pub fn grad_from_output<T: Real>(self, y: T) -> T {
        match self {
            Activation::Identity => T::one(),
            Activation::Sigmoid => y * (T::one() - y),
            Activation::Tanh => T::one() - y * y,
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }
}

/// Fully connected layer, `y = act(W x + b)` with `W` of shape O×I.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams<T> {
    pub w: Tensor2<T>,
    pub b: Vec<T>,
}

impl<T: Real> DenseParams<T> {
    pub fn zeros(input: usize, output: usize) -> Self {
        DenseParams {
            w: Tensor2::zeros(output, input),
            b: vec![T::zero(); output],
        }
    }

    /// Uniform(−k, k), k = 1/√fan_in.
    pub fn init<R: Rng>(input: usize, output: usize, rng: &mut R) -> Self {
        let k = 1.0 / (input as f64).sqrt();
        let mut p = Self::zeros(input, output);
        for v in p.w.data.iter_mut().chain(p.b.iter_mut()) {
            *v = T::of(rng.random_range(-k..k));
        }
        p
    }

    pub fn input(&self) -> usize {
        self.w.cols
    }

    pub fn output(&self) -> usize {
        self.w.rows
    }

    pub fn forward_vec(&self, x: &[T], act: Activation, y: &mut [T]) {
        affine(&self.w, x, &self.b, y);
        for v in y.iter_mut() {
            *v = act.apply(*v);
        }
    }

    /// Accumulates parameter gradients into `grad` and, if given, the input
    /// gradient into `dx`.
    pub fn backward_vec(
        &self,
        x: &[T],
        y: &[T],
        act: Activation,
        dy: &[T],
        grad: &mut DenseParams<T>,
        dx: Option<&mut [T]>,
    ) {
        let dz: Vec<T> = dy
            .iter()
            .zip(y)
            .map(|(&g, &out)| g * act.grad_from_output(out))
            .collect();
        outer_acc(&mut grad.w, &dz, x);
        for (gb, d) in grad.b.iter_mut().zip(&dz) {
            *gb += *d;
        }
        if let Some(dx) = dx {
            affine_t_acc(&self.w, &dz, dx);
        }
    }
}

impl<T: Real> ParamSet<T> for DenseParams<T> {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&str, &[usize], &'a [T])) {
        f("w", &[self.w.rows, self.w.cols], &self.w.data);
        f("b", &[self.b.len()], &self.b);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [T])) {
        let dims = [self.w.rows, self.w.cols];
        f("w", &dims, &mut self.w.data);
        let n = self.b.len();
        f("b", &[n], &mut self.b);
    }
}

/// Batched `act(x Wᵀ + b)` for x of shape B×I.
pub fn dense_forward<T: Real>(x: &Tensor2<T>, p: &DenseParams<T>, act: Activation) -> Result<Tensor2<T>> {
    if x.cols != p.input() || p.b.len() != p.output() {
        return Err(Error::shape(format!(
            "dense: input {}x{} against weight {}x{} and bias {}",
            x.rows,
            x.cols,
            p.w.rows,
            p.w.cols,
            p.b.len()
        )));
    }
    let mut y = Tensor2::zeros(x.rows, p.output());
    for r in 0..x.rows {
        let (xr, yr) = (x.row(r), &mut y.data[r * p.output()..(r + 1) * p.output()]);
        p.forward_vec(xr, act, yr);
    }
    Ok(y)
}

/// Batched backward; returns the input gradient.
pub fn dense_backward<T: Real>(
    x: &Tensor2<T>,
    y: &Tensor2<T>,
    dy: &Tensor2<T>,
    p: &DenseParams<T>,
    act: Activation,
    grad: &mut DenseParams<T>,
) -> Tensor2<T> {
    let mut dx = Tensor2::zeros(x.rows, x.cols);
    for r in 0..x.rows {
        p.backward_vec(x.row(r), y.row(r), act, dy.row(r), grad, Some(dx.row_mut(r)));
    }
    dx
}
