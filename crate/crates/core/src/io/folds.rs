use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Seeded, class-stratified assignment of items to `k` folds.
///
/// Each class is shuffled and the classes are dealt round-robin in
/// sequence, so fold sizes differ by at most one. If some class has fewer
/// than `k` members the assignment falls back to an unstratified shuffle.
/// Returns the fold index of every item.
pub fn make_folds(labels: &[usize], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 || k > labels.len() {
        return Err(Error::InvalidParameter(format!("cannot split {} items into {k} folds", labels.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &c) in labels.iter().enumerate() {
        by_class[c].push(i);
    }
    let stratified = by_class.iter().all(|members| members.is_empty() || members.len() >= k);

    let order: Vec<usize> = if stratified {
        by_class
            .into_iter()
            .flat_map(|mut members| {
                members.shuffle(&mut rng);
                members
            })
            .collect()
    } else {
        log::warn!("a class has fewer than {k} members; folds are not stratified");
        let mut all: Vec<usize> = (0..labels.len()).collect();
        all.shuffle(&mut rng);
        all
    };

    let mut folds = vec![0; labels.len()];
    for (pos, &item) in order.iter().enumerate() {
        folds[item] = pos % k;
    }
    Ok(folds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sizes(folds: &[usize], k: usize) -> Vec<usize> {
        let mut s = vec![0; k];
        folds.iter().for_each(|&f| s[f] += 1);
        s
    }

    #[test]
    fn one_item_per_fold() {
        let labels = vec![0; 10];
        let folds = make_folds(&labels, 10, 1).unwrap();
        assert_eq!(sizes(&folds, 10), vec![1; 10]);
    }

    #[test]
    fn enzymes_sized_folds_are_stratified() {
        let labels: Vec<usize> = (0..600).map(|i| i % 6).collect();
        let folds = make_folds(&labels, 10, 7).unwrap();
        assert_eq!(sizes(&folds, 10), vec![60; 10]);
        for f in 0..10 {
            for c in 0..6 {
                let count = (0..600).filter(|&i| folds[i] == f && labels[i] == c).count();
                assert_eq!(count, 10);
            }
        }
        // each training side has 540 graphs
        assert_eq!(folds.iter().filter(|&&x| x != 3).count(), 540);
    }

    #[test]
    fn deterministic_per_seed() {
        let labels: Vec<usize> = (0..50).map(|i| i % 3).collect();
        assert_eq!(make_folds(&labels, 5, 11).unwrap(), make_folds(&labels, 5, 11).unwrap());
        assert_ne!(make_folds(&labels, 5, 11).unwrap(), make_folds(&labels, 5, 12).unwrap());
    }

    #[test]
    fn small_class_falls_back() {
        let mut labels = vec![0; 20];
        labels[0] = 1;
        let folds = make_folds(&labels, 4, 3).unwrap();
        assert_eq!(sizes(&folds, 4), vec![5; 4]);
        assert!(make_folds(&labels, 21, 3).is_err());
    }
}
