//! Metrics and the evaluation report.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{SessionPrediction, Task};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

fn check_binary(pred: &[u8], truth: &[u8]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::shape(format!("{} predictions for {} labels", pred.len(), truth.len())));
    }
    if pred.is_empty() {
        return Err(Error::validation("no predictions to evaluate"));
    }
    if let Some(v) = pred.iter().chain(truth).find(|v| **v > 1) {
        return Err(Error::validation(format!("binary label expected, got {v}")));
    }
    Ok(())
}

pub fn confusion(pred: &[u8], truth: &[u8]) -> Result<Confusion> {
    check_binary(pred, truth)?;
    let mut c = Confusion::default();
    for (p, t) in pred.iter().zip(truth) {
        match (p, t) {
            (1, 1) => c.tp += 1,
            (1, 0) => c.fp += 1,
            (0, 0) => c.tn += 1,
            _ => c.fn_ += 1,
        }
    }
    Ok(c)
}

pub fn accuracy(pred: &[u8], truth: &[u8]) -> Result<f64> {
    let c = confusion(pred, truth)?;
    Ok((c.tp + c.tn) as f64 / c.total() as f64)
}

/// Per-class F1 for classes (0, 1). A class with no predicted and no true
/// members scores 0 and is reported in the second element.
pub fn per_class_f1(pred: &[u8], truth: &[u8]) -> Result<([f64; 2], Vec<u8>)> {
    let c = confusion(pred, truth)?;
    let mut degenerate = Vec::new();
    let mut f1 = |class: u8, tp: usize, fp: usize, fn_: usize| {
        let denom = 2 * tp + fp + fn_;
        if denom == 0 {
            degenerate.push(class);
            0.0
        } else {
            2.0 * tp as f64 / denom as f64
        }
    };
    let f0 = f1(0, c.tn, c.fn_, c.fp);
    let f1v = f1(1, c.tp, c.fp, c.fn_);
    Ok(([f0, f1v], degenerate))
}

/// Unweighted mean of the two per-class F1 scores.
pub fn f1_mean(pred: &[u8], truth: &[u8]) -> Result<f64> {
    let ([a, b], _) = per_class_f1(pred, truth)?;
    Ok(0.5 * (a + b))
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::shape(format!("{} predictions for {} targets", pred.len(), truth.len())));
    }
    if pred.is_empty() {
        return Err(Error::validation("no predictions to evaluate"));
    }
    let sse: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sse / pred.len() as f64).sqrt())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: Option<f64>,
    pub rmse: Option<f64>,
    pub f1_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub metrics: Metrics,
    pub confusion: Option<Confusion>,
    pub f1_degenerate_classes: Vec<u8>,
}

/// Scores predictions against `(session_id, target)` pairs in the same order.
pub fn evaluate(predictions: &[SessionPrediction], labels: &[(String, f64)], task: Task) -> Result<Evaluation> {
    if predictions.len() != labels.len() {
        return Err(Error::shape(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    for (p, (id, _)) in predictions.iter().zip(labels) {
        if p.session_id != *id {
            return Err(Error::validation(format!(
                "prediction for session {} aligned with label for {id}",
                p.session_id
            )));
        }
    }
    if task.is_classification() {
        let pred: Vec<u8> = predictions.iter().map(|p| u8::from(p.score >= 0.5)).collect();
        let truth: Vec<u8> = labels.iter().map(|(_, y)| u8::from(*y >= 0.5)).collect();
        let (f1, degenerate) = per_class_f1(&pred, &truth)?;
        Ok(Evaluation {
            metrics: Metrics {
                accuracy: Some(accuracy(&pred, &truth)?),
                rmse: None,
                f1_mean: Some(0.5 * (f1[0] + f1[1])),
            },
            confusion: Some(confusion(&pred, &truth)?),
            f1_degenerate_classes: degenerate,
        })
    } else {
        let pred: Vec<f64> = predictions.iter().map(|p| p.score).collect();
        let truth: Vec<f64> = labels.iter().map(|(_, y)| *y).collect();
        Ok(Evaluation {
            metrics: Metrics {
                rmse: Some(rmse(&pred, &truth)?),
                ..Metrics::default()
            },
            confusion: None,
            f1_degenerate_classes: Vec::new(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub n_test: usize,
    pub metrics: Metrics,
    pub f1_degenerate_classes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    pub protocol: String,
    pub seed: u64,
    /// Pooled over every out-of-fold prediction.
    pub metrics: Metrics,
    pub folds: Vec<FoldReport>,
    pub confusion: Option<Confusion>,
    pub f1_degenerate_classes: Vec<u8>,
    pub predictions: Vec<SessionPrediction>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}
