use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaReport {
    pub kappa: f64,
    pub n_items: usize,
    pub n_raters: usize,
    /// Mean observed agreement.
    pub observed: f64,
    /// Chance agreement from the marginal category proportions.
    pub expected: f64,
    pub per_item_agreement: Vec<f64>,
}

/// Fleiss' kappa over an items x raters matrix of categorical labels.
///
/// When chance agreement is 1 (a single category used throughout) kappa is
/// defined as 1.
pub fn fleiss_kappa<L: Ord>(ratings: &[Vec<L>]) -> Result<KappaReport> {
    let n_items = ratings.len();
    if n_items == 0 {
        return Err(Error::InvalidArgument(
            "kappa needs at least one item".into(),
        ));
    }
    let n_raters = ratings[0].len();
    if n_raters < 2 {
        return Err(Error::InvalidArgument(
            "kappa needs at least two raters".into(),
        ));
    }
    if let Some(i) = ratings.iter().position(|row| row.len() != n_raters) {
        return Err(Error::InvalidArgument(format!(
            "ragged ratings: item {i} has {} ratings, expected {n_raters}",
            ratings[i].len()
        )));
    }

    let mut index = BTreeMap::new();
    for label in ratings.iter().flatten() {
        let next = index.len();
        index.entry(label).or_insert(next);
    }
    let k = index.len();
    let n = n_raters as f64;
    let mut totals = vec![0usize; k];
    let mut per_item_agreement = Vec::with_capacity(n_items);
    for row in ratings {
        let mut counts = vec![0usize; k];
        for label in row {
            counts[index[label]] += 1;
        }
        let sum_sq: usize = counts.iter().map(|c| c * c).sum();
        per_item_agreement.push((sum_sq as f64 - n) / (n * (n - 1.0)));
        for (t, c) in totals.iter_mut().zip(&counts) {
            *t += c;
        }
    }
    let observed = per_item_agreement.iter().sum::<f64>() / n_items as f64;
    let cells = (n_items * n_raters) as f64;
    let expected: f64 = totals
        .iter()
        .map(|&t| {
            let p = t as f64 / cells;
            p * p
        })
        .sum();
    let kappa = if expected >= 1.0 {
        1.0
    } else {
        (observed - expected) / (1.0 - expected)
    };
    Ok(KappaReport {
        kappa,
        n_items,
        n_raters,
        observed,
        expected,
        per_item_agreement,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unanimous_raters() {
        let ratings: Vec<Vec<u8>> = (0..1000).map(|i| vec![(i % 2) as u8; 5]).collect();
        assert_eq!(fleiss_kappa(&ratings).unwrap().kappa, 1.0);
    }

    #[test]
    fn single_category_convention() {
        let ratings = vec![vec!["a"; 3]; 4];
        let r = fleiss_kappa(&ratings).unwrap();
        assert_eq!(r.expected, 1.0);
        assert_eq!(r.kappa, 1.0);
    }

    #[test]
    fn two_raters_four_items() {
        // Items (A,A),(A,B),(B,A),(B,B): P_i = 1,0,0,1 -> mean 0.5;
        // marginals 0.5/0.5 -> expected 0.5; kappa 0.
        let ratings = vec![
            vec!['A', 'A'],
            vec!['A', 'B'],
            vec!['B', 'A'],
            vec!['B', 'B'],
        ];
        let r = fleiss_kappa(&ratings).unwrap();
        assert_eq!(r.per_item_agreement, vec![1.0, 0.0, 0.0, 1.0]);
        assert_eq!(r.kappa, 0.0);
    }

    #[test]
    fn classic_textbook_table() {
        // Fleiss (1971) style example: 10 items, 14 raters, 5 categories,
        // tabulated as counts; known kappa 0.210.
        let counts = [
            [0, 0, 0, 0, 14],
            [0, 2, 6, 4, 2],
            [0, 0, 3, 5, 6],
            [0, 3, 9, 2, 0],
            [2, 2, 8, 1, 1],
            [7, 7, 0, 0, 0],
            [3, 2, 6, 3, 0],
            [2, 5, 3, 2, 2],
            [6, 5, 2, 1, 0],
            [0, 2, 2, 3, 7],
        ];
        let ratings: Vec<Vec<usize>> = counts
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .flat_map(|(cat, &c)| std::iter::repeat_n(cat, c))
                    .collect()
            })
            .collect();
        let r = fleiss_kappa(&ratings).unwrap();
        assert!((r.kappa - 0.20993).abs() < 1e-4, "{}", r.kappa);
    }

    #[test]
    fn errors() {
        assert!(fleiss_kappa::<u8>(&[]).is_err());
        assert!(fleiss_kappa(&[vec![1]]).is_err());
        assert!(fleiss_kappa(&[vec![1, 2], vec![1]]).is_err());
    }
}
