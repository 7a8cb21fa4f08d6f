use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How per-class F1 scores are combined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum F1Average {
    /// Unweighted mean over all classes.
    #[default]
    Macro,
    /// Mean weighted by each class's support in `labels`.
    Weighted,
}

fn check_lengths(preds: &[usize], labels: &[usize]) -> Result<()> {
    if preds.len() != labels.len() {
        return Err(Error::dim(
            "metric",
            format!("{} predictions vs {} labels", preds.len(), labels.len()),
        ));
    }
    if preds.is_empty() {
        return Err(Error::Contract("metrics need at least one example".into()));
    }
    Ok(())
}

pub fn accuracy(preds: &[usize], labels: &[usize]) -> Result<f64> {
    check_lengths(preds, labels)?;
    let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// F1 of each class; a class with no true or predicted members scores 0.
pub fn per_class_f1(preds: &[usize], labels: &[usize], classes: usize) -> Result<Vec<f64>> {
    check_lengths(preds, labels)?;
    let mut tp = vec![0usize; classes];
    let mut predicted = vec![0usize; classes];
    let mut actual = vec![0usize; classes];
    for (&p, &l) in preds.iter().zip(labels) {
        if p >= classes || l >= classes {
            return Err(Error::Label(format!("class index {} outside 0..{classes}", p.max(l))));
        }
        predicted[p] += 1;
        actual[l] += 1;
        if p == l {
            tp[p] += 1;
        }
    }
    // F1 = 2TP / (predicted + actual), identical to 2PR/(P+R) and 0 when both vanish
    Ok((0..classes)
        .map(|c| match predicted[c] + actual[c] {
            0 => 0.0,
            denom => 2.0 * tp[c] as f64 / denom as f64,
        })
        .collect())
}

pub fn f1_score(preds: &[usize], labels: &[usize], classes: usize, average: F1Average) -> Result<f64> {
    let f1 = per_class_f1(preds, labels, classes)?;
    Ok(match average {
        F1Average::Macro => f1.iter().sum::<f64>() / classes as f64,
        F1Average::Weighted => {
            let mut support = vec![0usize; classes];
            labels.iter().for_each(|&l| support[l] += 1);
            f1.iter().zip(&support).map(|(f, &s)| f * s as f64).sum::<f64>() / labels.len() as f64
        }
    })
}

pub fn macro_f1(preds: &[usize], labels: &[usize], classes: usize) -> Result<f64> {
    f1_score(preds, labels, classes, F1Average::Macro)
}

/// Recall of one class; `None` when the class has no members in `labels`.
pub fn recall(preds: &[usize], labels: &[usize], class: usize) -> Result<Option<f64>> {
    check_lengths(preds, labels)?;
    let members = labels.iter().filter(|&&l| l == class).count();
    if members == 0 {
        return Ok(None);
    }
    let hits = preds.iter().zip(labels).filter(|(&p, &l)| l == class && p == class).count();
    Ok(Some(hits as f64 / members as f64))
}
