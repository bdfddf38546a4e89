//! Classification and correlation metrics.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("{preds} predictions vs {labels} labels")]
    LengthMismatch { preds: usize, labels: usize },
    #[error("need at least 3 points, got {have}")]
    TooFewPoints { have: usize },
    #[error("zero variance on the {side} side")]
    ZeroVariance { side: &'static str },
    #[error("class {value} is not binary")]
    NotBinary { value: usize },
    #[error("non-finite value on the {side} side")]
    NonFinite { side: &'static str },
}

fn check_lengths(preds: usize, labels: usize) -> Result<(), MetricError> {
    if preds != labels {
        return Err(MetricError::LengthMismatch { preds, labels });
    }
    if preds == 0 {
        return Err(MetricError::TooFewPoints { have: 0 });
    }
    Ok(())
}

fn check_binary(values: &[usize]) -> Result<(), MetricError> {
    match values.iter().find(|&&v| v > 1) {
        Some(&value) => Err(MetricError::NotBinary { value }),
        None => Ok(()),
    }
}

pub fn accuracy(preds: &[usize], labels: &[usize]) -> Result<f64, MetricError> {
    check_lengths(preds.len(), labels.len())?;
    let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// Matthews correlation coefficient for binary classes. Returns 0 when any
/// factor of the denominator vanishes.
pub fn matthews(preds: &[usize], labels: &[usize]) -> Result<f64, MetricError> {
    check_lengths(preds.len(), labels.len())?;
    check_binary(preds)?;
    check_binary(labels)?;
    let (mut tp, mut tn, mut fp, mut fnn) = (0.0, 0.0, 0.0, 0.0);
    for (&p, &l) in preds.iter().zip(labels) {
        match (p, l) {
            (1, 1) => tp += 1.0,
            (0, 0) => tn += 1.0,
            (1, 0) => fp += 1.0,
            _ => fnn += 1.0,
        }
    }
    let factors = [tp + fp, tp + fnn, tn + fp, tn + fnn];
    if factors.contains(&0.0) {
        return Ok(0.0);
    }
    Ok((tp * tn - fp * fnn) / factors.iter().product::<f64>().sqrt())
}

fn check_points(preds: &[f64], labels: &[f64]) -> Result<(), MetricError> {
    check_lengths(preds.len(), labels.len())?;
    if preds.len() < 3 {
        return Err(MetricError::TooFewPoints { have: preds.len() });
    }
    for (side, xs) in [("prediction", preds), ("label", labels)] {
        if xs.iter().any(|v| !v.is_finite()) {
            return Err(MetricError::NonFinite { side });
        }
    }
    Ok(())
}

fn pearson_unchecked(xs: &[f64], ys: &[f64]) -> Result<f64, MetricError> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return Err(MetricError::ZeroVariance { side: "prediction" });
    }
    if syy == 0.0 {
        return Err(MetricError::ZeroVariance { side: "label" });
    }
    Ok(sxy / (sxx * syy).sqrt())
}

pub fn pearson(preds: &[f64], labels: &[f64]) -> Result<f64, MetricError> {
    check_points(preds, labels)?;
    pearson_unchecked(preds, labels)
}

/// Ranks with ties assigned the average of the positions they span (1-based).
fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).expect("finite values"));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman(preds: &[f64], labels: &[f64]) -> Result<f64, MetricError> {
    check_points(preds, labels)?;
    pearson_unchecked(&average_ranks(preds), &average_ranks(labels)).map_err(|e| match e {
        // a constant vector has constant ranks; report the raw side
        MetricError::ZeroVariance { side } => MetricError::ZeroVariance { side },
        other => other,
    })
}

pub fn pearson_spearman_mean(preds: &[f64], labels: &[f64]) -> Result<f64, MetricError> {
    Ok((pearson(preds, labels)? + spearman(preds, labels)?) / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    use proptest::prelude::*;
    use rand::Rng as _;

    use crate::rng::seeded;

    #[test]
    fn accuracy_counts_hits() {
        assert_eq!(accuracy(&[1, 0, 1, 1], &[1, 0, 0, 1]).unwrap(), 0.75);
        assert_eq!(accuracy(&[1], &[1]).unwrap(), 1.0);
        assert_eq!(
            accuracy(&[1, 0], &[1]).unwrap_err(),
            MetricError::LengthMismatch { preds: 2, labels: 1 }
        );
    }

    #[test]
    fn matthews_is_one_for_a_perfect_predictor() {
        let labels = [1, 0, 1, 1, 0, 0, 1, 0];
        assert_eq!(matthews(&labels, &labels).unwrap(), 1.0);
    }

    #[test]
    fn matthews_is_zero_on_a_balanced_confusion() {
        // tp = tn = fp = fn = 1
        let preds = [1, 0, 1, 0];
        let labels = [1, 0, 0, 1];
        assert_eq!(matthews(&preds, &labels).unwrap(), 0.0);
    }

    #[test]
    fn matthews_matches_the_direct_formula() {
        // tp=3 tn=4 fp=1 fn=2: (3*4 - 1*2) / sqrt(4 * 5 * 5 * 6)
        let preds = [1, 1, 1, 0, 0, 0, 0, 1, 0, 0];
        let labels = [1, 1, 1, 0, 0, 0, 0, 0, 1, 1];
        let expected = 10.0 / 600.0_f64.sqrt();
        assert!((matthews(&preds, &labels).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn matthews_rejects_multiclass_input() {
        assert_eq!(
            matthews(&[0, 2], &[0, 1]).unwrap_err(),
            MetricError::NotBinary { value: 2 }
        );
    }

    // independent oracle: explicit confusion counting and literal formula
    fn mcc_oracle(preds: &[usize], labels: &[usize]) -> f64 {
        let count = |p, l| {
            preds
                .iter()
                .zip(labels)
                .filter(|&(&a, &b)| a == p && b == l)
                .count() as f64
        };
        let (tp, tn, fp, fnn) = (count(1, 1), count(0, 0), count(1, 0), count(0, 1));
        let d = (tp + fp) * (tp + fnn) * (tn + fp) * (tn + fnn);
        if d == 0.0 {
            0.0
        } else {
            (tp * tn - fp * fnn) / d.sqrt()
        }
    }

    #[test]
    fn matthews_matches_a_bruteforce_oracle_on_random_instances() {
        let mut rng = seeded(901);
        for _ in 0..1000 {
            let n = rng.gen_range(2..40);
            let preds: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();
            let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();
            let got = matthews(&preds, &labels).unwrap();
            assert!((got - mcc_oracle(&preds, &labels)).abs() < 1e-10);
            assert!((-1.0..=1.0).contains(&got));
        }
    }

    #[test]
    fn correlations_are_exact_on_identity_and_reversal() {
        let xs = [0.1, 0.4, 0.2, 0.9, 0.7];
        let rev: Vec<f64> = xs.iter().map(|v| 1.0 - v).collect();
        assert!((pearson(&xs, &xs).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&xs, &xs).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson_spearman_mean(&xs, &xs).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&xs, &rev).unwrap() + 1.0).abs() < 1e-12);
        assert!((spearman(&xs, &rev).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn spearman_averages_tied_ranks() {
        // ranks of [10, 20, 20, 30] are [1, 2.5, 2.5, 4]
        assert_eq!(average_ranks(&[10.0, 20.0, 20.0, 30.0]), vec![1.0, 2.5, 2.5, 4.0]);
        // hand case: xs ties force the average-rank path end to end
        let xs = [1.0, 2.0, 2.0, 3.0];
        let ys = [1.0, 2.0, 3.0, 4.0];
        // rank(xs) = [1, 2.5, 2.5, 4], rank(ys) = [1, 2, 3, 4]
        // pearson of those: sxy = 4.5, sxx = 4.5, syy = 5.0
        let expected = 4.5 / (4.5_f64 * 5.0).sqrt();
        assert!((spearman(&xs, &ys).unwrap() - expected).abs() < 1e-12);
    }

    // O(n^2) rank oracle: count-below plus half the remaining ties
    fn rank_oracle(xs: &[f64]) -> Vec<f64> {
        xs.iter()
            .map(|&x| {
                let below = xs.iter().filter(|&&y| y < x).count() as f64;
                let equal = xs.iter().filter(|&&y| y == x).count() as f64;
                below + (equal + 1.0) / 2.0
            })
            .collect()
    }

    fn pearson_oracle(xs: &[f64], ys: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
        sxy / (sxx * syy).sqrt()
    }

    #[test]
    fn correlation_mean_matches_a_bruteforce_oracle_on_random_instances() {
        let mut rng = seeded(902);
        let mut checked = 0;
        while checked < 1000 {
            let n = rng.gen_range(3..30);
            // draw from a small grid so ties are common
            let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(0..7) as f64 / 6.0).collect();
            let ys: Vec<f64> = (0..n).map(|_| rng.gen_range(0..7) as f64 / 6.0).collect();
            let got = match pearson_spearman_mean(&xs, &ys) {
                Ok(v) => v,
                Err(MetricError::ZeroVariance { .. }) => continue,
                Err(e) => panic!("unexpected error {e}"),
            };
            let want =
                (pearson_oracle(&xs, &ys) + pearson_oracle(&rank_oracle(&xs), &rank_oracle(&ys)))
                    / 2.0;
            assert!((got - want).abs() < 1e-10, "got {got} want {want}");
            assert!((-1.0..=1.0).contains(&got));
            checked += 1;
        }
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        assert_eq!(
            pearson(&[1.0, 2.0], &[1.0, 2.0]).unwrap_err(),
            MetricError::TooFewPoints { have: 2 }
        );
        assert_eq!(
            pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap_err(),
            MetricError::ZeroVariance { side: "prediction" }
        );
        assert_eq!(
            spearman(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]).unwrap_err(),
            MetricError::ZeroVariance { side: "label" }
        );
        assert_eq!(
            pearson(&[1.0, f64::NAN, 3.0], &[1.0, 2.0, 3.0]).unwrap_err(),
            MetricError::NonFinite { side: "prediction" }
        );
    }

    proptest! {
        #[test]
        fn mcc_is_invariant_under_simultaneous_permutation(
            pairs in proptest::collection::vec((0usize..2, 0usize..2), 4..40),
            swap in proptest::collection::vec((0usize..40, 0usize..40), 0..20),
        ) {
            let (mut preds, mut labels): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            let before = matthews(&preds, &labels).unwrap();
            for (a, b) in swap {
                let (a, b) = (a % preds.len(), b % preds.len());
                preds.swap(a, b);
                labels.swap(a, b);
            }
            let after = matthews(&preds, &labels).unwrap();
            prop_assert!((before - after).abs() < 1e-12);
        }

        #[test]
        fn accuracy_is_bounded(
            pairs in proptest::collection::vec((0usize..2, 0usize..2), 1..50),
        ) {
            let (preds, labels): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            let a = accuracy(&preds, &labels).unwrap();
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }
}
