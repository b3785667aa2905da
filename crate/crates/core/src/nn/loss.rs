use super::tensor::{sigmoid, Real};
use crate::error::{Error, Result};

/// Binary cross-entropy on logits (sigmoid fused in). Returns the batch-mean
/// loss and its gradient w.r.t. each logit, `(sigmoid(z) − y) / B`.
pub fn bce_with_logits<T: Real>(logits: &[T], labels: &[T]) -> Result<(T, Vec<T>)> {
    if logits.len() != labels.len() || logits.is_empty() {
        return Err(Error::shape(format!(
            "bce: {} logits vs {} labels",
            logits.len(),
            labels.len()
        )));
    }
    let b = T::of(logits.len() as f64);
    let mut loss = T::zero();
    let mut grad = Vec::with_capacity(logits.len());
    for (&z, &y) in logits.iter().zip(labels) {
        // max(z,0) − z·y + ln(1 + e^{−|z|})
        loss += z.max(T::zero()) - z * y + (-z.abs()).exp().ln_1p();
        grad.push((sigmoid(z) - y) / b);
    }
    Ok((loss / b, grad))
}

/// Mean squared error and its gradient `2(ŷ − y) / B`.
pub fn mse_loss<T: Real>(pred: &[T], target: &[T]) -> Result<(T, Vec<T>)> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::shape(format!(
            "mse: {} predictions vs {} targets",
            pred.len(),
            target.len()
        )));
    }
    let b = T::of(pred.len() as f64);
    let two = T::of(2.0);
    let mut loss = T::zero();
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &y) in pred.iter().zip(target) {
        let d = p - y;
        loss += d * d;
        grad.push(two * d / b);
    }
    Ok((loss / b, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bce_closed_forms() {
        let (l, g) = bce_with_logits(&[0.0f64], &[1.0]).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((g[0] + 0.5).abs() < 1e-15);
        let (l, _) = bce_with_logits(&[1e6f64], &[1.0]).unwrap();
        assert_eq!(l, 0.0);
        let (l, _) = bce_with_logits(&[-1e6f64, 1e6], &[0.0, 1.0]).unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn bce_matches_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let z: Vec<f64> = (0..16).map(|_| rng.random_range(-4.0..4.0)).collect();
        let y: Vec<f64> = (0..16).map(|_| rng.random_range(0..2) as f64).collect();
        let (l, g) = bce_with_logits(&z, &y).unwrap();
        let mut want = 0.0;
        for i in 0..16 {
            let p = 1.0 / (1.0 + (-z[i]).exp());
            want -= y[i] * p.ln() + (1.0 - y[i]) * (1.0 - p).ln();
            assert!((g[i] - (p - y[i]) / 16.0).abs() < 1e-15);
        }
        assert!((l - want / 16.0).abs() <= 1e-12);
    }

    #[test]
    fn mse_closed_forms() {
        let (l, g) = mse_loss(&[0.0f64], &[2.0]).unwrap();
        assert_eq!(l, 4.0);
        assert_eq!(g, vec![-4.0]);
        let (l, _) = mse_loss(&[1.5f64, -2.0], &[1.5, -2.0]).unwrap();
        assert_eq!(l, 0.0);
        assert!(mse_loss(&[1.0f64], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn mse_matches_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p: Vec<f64> = (0..20).map(|_| rng.random_range(-30.0..30.0)).collect();
        let y: Vec<f64> = (0..20).map(|_| rng.random_range(0.0..30.0)).collect();
        let (l, _) = mse_loss(&p, &y).unwrap();
        let want: f64 = p.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / 20.0;
        assert!((l - want).abs() <= 1e-12 * want.max(1.0));
    }
}
