//! Partition agreement scores.

use std::collections::HashMap;

use crate::error::{Error, Result};

struct Contingency {
    n: f64,
    cells: Vec<f64>,
    rows: Vec<f64>,
    cols: Vec<f64>,
}

fn contingency(a: &[usize], b: &[usize]) -> Result<Contingency> {
    if a.len() != b.len() {
        return Err(Error::InvalidData(format!("label length mismatch: {} vs {}", a.len(), b.len())));
    }
    let dense = |labels: &[usize]| {
        let mut ids = HashMap::new();
        let mapped: Vec<usize> = labels
            .iter()
            .map(|l| {
                let next = ids.len();
                *ids.entry(*l).or_insert(next)
            })
            .collect();
        (mapped, ids.len())
    };
    let (da, ka) = dense(a);
    let (db, kb) = dense(b);
    let mut cells = vec![0.0; ka * kb];
    let mut rows = vec![0.0; ka];
    let mut cols = vec![0.0; kb];
    for (&i, &j) in da.iter().zip(&db) {
        cells[i * kb + j] += 1.0;
        rows[i] += 1.0;
        cols[j] += 1.0;
    }
    Ok(Contingency { n: a.len() as f64, cells, rows, cols })
}

fn entropy(counts: &[f64], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0.0)
        .map(|&c| {
            let p = c / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information, `I(A;B) / ((H(A) + H(B)) / 2)`.
///
/// Two single-cluster labelings score 1.
pub fn nmi(labels_a: &[usize], labels_b: &[usize]) -> Result<f64> {
    if labels_a.is_empty() {
        return Err(Error::InvalidData("NMI needs at least one label".into()));
    }
    let t = contingency(labels_a, labels_b)?;
    let ha = entropy(&t.rows, t.n);
    let hb = entropy(&t.cols, t.n);
    if ha == 0.0 && hb == 0.0 {
        return Ok(1.0);
    }
    let kb = t.cols.len();
    let mut mi = 0.0;
    for (i, &ri) in t.rows.iter().enumerate() {
        for (j, &cj) in t.cols.iter().enumerate() {
            let nij = t.cells[i * kb + j];
            if nij > 0.0 {
                mi += nij / t.n * (t.n * nij / (ri * cj)).ln();
            }
        }
    }
    Ok((mi / ((ha + hb) / 2.0)).clamp(0.0, 1.0))
}

fn choose2(x: f64) -> f64 {
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index from the contingency table.
pub fn ari(labels_a: &[usize], labels_b: &[usize]) -> Result<f64> {
    if labels_a.len() < 2 {
        return Err(Error::InvalidData("ARI needs at least two labels".into()));
    }
    let t = contingency(labels_a, labels_b)?;
    let index: f64 = t.cells.iter().map(|&c| choose2(c)).sum();
    let sum_a: f64 = t.rows.iter().map(|&c| choose2(c)).sum();
    let sum_b: f64 = t.cols.iter().map(|&c| choose2(c)).sum();
    let expected = sum_a * sum_b / choose2(t.n);
    let max = (sum_a + sum_b) / 2.0;
    if max == expected {
        // both partitions trivial in the same way; agreement is perfect
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// Fraction of matching binary labels, maximized over swapping the names.
pub fn best_swap_accuracy(a: &[bool], b: &[bool]) -> f64 {
    if a.is_empty() {
        return 1.0;
    }
    let same = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / a.len() as f64;
    same.max(1.0 - same)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reference_cases() {
        let a = [0, 0, 1, 1];
        let b = [0, 1, 0, 1];
        assert_eq!(nmi(&a, &a).unwrap(), 1.0);
        assert_eq!(nmi(&a, &[1, 1, 0, 0]).unwrap(), 1.0);
        assert!(nmi(&a, &b).unwrap().abs() < 1e-15);
        assert_eq!(ari(&a, &a).unwrap(), 1.0);
        assert!((ari(&a, &b).unwrap() + 0.5).abs() < 1e-15);
    }

    #[test]
    fn constant_labelings() {
        assert_eq!(nmi(&[3, 3, 3], &[1, 1, 1]).unwrap(), 1.0);
        assert_eq!(nmi(&[0, 0, 0, 0], &[0, 1, 0, 1]).unwrap(), 0.0);
        assert_eq!(ari(&[0, 0, 0], &[5, 5, 5]).unwrap(), 1.0);
    }

    #[test]
    fn length_checks() {
        assert!(matches!(nmi(&[0, 1], &[0]), Err(Error::InvalidData(_))));
        assert!(matches!(ari(&[0, 1], &[0]), Err(Error::InvalidData(_))));
        assert!(ari(&[0], &[0]).is_err());
    }

    #[test]
    fn best_swap() {
        assert_eq!(best_swap_accuracy(&[true, false, true], &[false, true, false]), 1.0);
        assert_eq!(best_swap_accuracy(&[true, true, false, false], &[true, false, true, false]), 0.5);
    }

    proptest! {
        #[test]
        fn scores_ignore_label_names(
            a in proptest::collection::vec(0usize..4, 2..30),
            shift in 1usize..7,
        ) {
            let b: Vec<usize> = a.iter().enumerate().map(|(i, &x)| (x + i) % 3).collect();
            let renamed: Vec<usize> = a.iter().map(|&x| (x + shift) * 10).collect();
            let n1 = nmi(&a, &b).unwrap();
            let n2 = nmi(&renamed, &b).unwrap();
            prop_assert!((n1 - n2).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&n1));
            let r1 = ari(&a, &b).unwrap();
            let r2 = ari(&b, &renamed).unwrap();
            prop_assert!((r1 - r2).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&r1));
        }
    }
}
