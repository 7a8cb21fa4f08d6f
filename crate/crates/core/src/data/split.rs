use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Disjoint train/validation row indices, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
}

/// Shuffles each class separately and sends `round(n_c · val_fraction)` of
/// its rows (at least one, at most `n_c - 1`) to validation.
pub fn stratified_split(labels: &[usize], n_classes: usize, val_fraction: f64, seed: u64) -> Result<Split> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::Split(format!("validation fraction must lie in (0, 1), got {val_fraction}")));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &y) in labels.iter().enumerate() {
        by_class
            .get_mut(y)
            .ok_or_else(|| Error::Label(format!("label {y} out of range for {n_classes} classes")))?
            .push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity(labels.len());
    let mut val = Vec::new();
    for (class, mut rows) in by_class.into_iter().enumerate() {
        match rows.len() {
            0 => continue,
            1 => {
                return Err(Error::Split(format!(
                    "class {class} has a single member and cannot be stratified"
                )))
            }
            n => {
                rows.shuffle(&mut rng);
                let k = ((n as f64 * val_fraction).round() as usize).clamp(1, n - 1);
                val.extend_from_slice(&rows[..k]);
                train.extend_from_slice(&rows[k..]);
            }
        }
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok(Split {
        train_indices: train,
        val_indices: val,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_two_class() {
        let labels: Vec<usize> = (0..100).map(|i| i % 2).collect();
        let s = stratified_split(&labels, 2, 0.2, 42).unwrap();
        assert_eq!(s.val_indices.len(), 20);
        assert_eq!(s.val_indices.iter().filter(|&&i| labels[i] == 0).count(), 10);
        let mut all: Vec<usize> = s.train_indices.iter().chain(&s.val_indices).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn seeded_determinism() {
        let labels: Vec<usize> = (0..50).map(|i| i % 3).collect();
        assert_eq!(
            stratified_split(&labels, 3, 0.3, 7).unwrap(),
            stratified_split(&labels, 3, 0.3, 7).unwrap()
        );
        assert_ne!(
            stratified_split(&labels, 3, 0.3, 7).unwrap(),
            stratified_split(&labels, 3, 0.3, 8).unwrap()
        );
    }

    #[test]
    fn singleton_class_rejected() {
        assert!(matches!(stratified_split(&[0, 0, 1], 2, 0.5, 1), Err(Error::Split(_))));
        assert!(matches!(stratified_split(&[0, 0], 1, 1.0, 1), Err(Error::Split(_))));
    }
}
