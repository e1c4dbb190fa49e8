/// Neumaier-compensated summation.
pub(crate) fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    compensated_sum(values.iter().copied()) / values.len() as f64
}

/// Two-pass standard deviation around `mu`. `ddof` is 0 for population, 1 for sample.
pub(crate) fn std_dev(values: &[f64], mu: f64, ddof: usize) -> f64 {
    let n = values.len();
    if n <= ddof {
        return 0.0;
    }
    let ss = compensated_sum(values.iter().map(|v| (v - mu) * (v - mu)));
    (ss / (n - ddof) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensation_recovers_small_terms() {
        let vals = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(vals), 2.0);
    }

    #[test]
    fn population_and_sample_std() {
        let v = [2.0, 4.0];
        assert_eq!(mean(&v), 3.0);
        assert_eq!(std_dev(&v, 3.0, 0), 1.0);
        assert!((std_dev(&v, 3.0, 1) - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(std_dev(&[5.0], 5.0, 1), 0.0);
    }
}
