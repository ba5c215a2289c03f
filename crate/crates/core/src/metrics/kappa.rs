use std::collections::BTreeMap;

use super::MetricsError;

/// Cohen's kappa between two raters over the same items.
///
/// Computed from integer counts, `(n·agree − Σ aₖbₖ) / (n² − Σ aₖbₖ)`, so
/// rational results such as 1/3 come out exact. When chance agreement is
/// total (both raters constant on the same label) the value is 1 if the
/// raters agree everywhere, otherwise an error.
pub fn cohens_kappa<T: Ord>(a: &[T], b: &[T]) -> Result<f64, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len() as u128;
    if n < 2 {
        return Err(MetricsError::TooFewItems(a.len()));
    }

    let mut marg_a: BTreeMap<&T, u128> = BTreeMap::new();
    let mut marg_b: BTreeMap<&T, u128> = BTreeMap::new();
    let mut agree = 0u128;
    for (x, y) in a.iter().zip(b) {
        *marg_a.entry(x).or_default() += 1;
        *marg_b.entry(y).or_default() += 1;
        agree += u128::from(x == y);
    }
    let chance: u128 = marg_a
        .iter()
        .map(|(k, ca)| ca * marg_b.get(k).copied().unwrap_or(0))
        .sum();

    let den = n * n - chance;
    if den == 0 {
        return if agree == n {
            Ok(1.0)
        } else {
            Err(MetricsError::DegenerateMarginals)
        };
    }
    let num = (n * agree) as i128 - chance as i128;
    Ok(num as f64 / den as f64)
}
