use crate::error::{Error, Result};

/// Labels for the intervals induced by `breakpoints`:
/// `b1-`, `[b1,b2)`, ..., `bn+`.
pub fn default_bin_labels(breakpoints: &[f64]) -> Vec<String> {
    let n = breakpoints.len();
    let mut labels = Vec::with_capacity(n + 1);
    if n == 0 {
        labels.push("all".to_string());
        return labels;
    }
    labels.push(format!("{}-", breakpoints[0]));
    for w in breakpoints.windows(2) {
        labels.push(format!("[{},{})", w[0], w[1]));
    }
    labels.push(format!("{}+", breakpoints[n - 1]));
    labels
}

/// Map numeric values to interval labels.
///
/// Intervals are half-open `[a, b)`: a value equal to a breakpoint falls in
/// the interval to its right. `None` (and NaN) map to `na_label`.
pub fn bin_continuous(
    values: &[Option<f64>],
    breakpoints: &[f64],
    labels: Option<&[String]>,
    na_label: &str,
) -> Result<Vec<String>> {
    if breakpoints.iter().any(|b| !b.is_finite()) {
        return Err(Error::Config("bin breakpoints must be finite".into()));
    }
    if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!("bin breakpoints {breakpoints:?} are not strictly increasing")));
    }
    let owned;
    let labels = match labels {
        Some(l) => {
            if l.len() != breakpoints.len() + 1 {
                return Err(Error::Config(format!(
                    "{} breakpoints need {} labels, got {}",
                    breakpoints.len(),
                    breakpoints.len() + 1,
                    l.len()
                )));
            }
            l
        }
        None => {
            owned = default_bin_labels(breakpoints);
            &owned[..]
        }
    };
    Ok(values
        .iter()
        .map(|v| match v {
            Some(x) if !x.is_nan() => {
                let idx = breakpoints.partition_point(|b| *b <= *x);
                labels[idx].clone()
            }
            _ => na_label.to_string(),
        })
        .collect())
}
