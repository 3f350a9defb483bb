#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("{0} true labels but {1} predictions")]
    Length(usize, usize),
    #[error("label {0} out of range for {1} classes")]
    Range(usize, usize),
    #[error("no samples")]
    Empty,
}

/// `k x k` counts indexed `[true][predicted]`.
pub fn confusion_matrix(y_true: &[usize], y_pred: &[usize], k: usize) -> Result<Vec<Vec<usize>>, MetricsError> {
    if y_true.len() != y_pred.len() {
        return Err(MetricsError::Length(y_true.len(), y_pred.len()));
    }
    let mut m = vec![vec![0; k]; k];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= k || p >= k {
            return Err(MetricsError::Range(t.max(p), k));
        }
        m[t][p] += 1;
    }
    Ok(m)
}

pub fn accuracy(y_true: &[usize], y_pred: &[usize]) -> Result<f64, MetricsError> {
    if y_true.len() != y_pred.len() {
        return Err(MetricsError::Length(y_true.len(), y_pred.len()));
    }
    if y_true.is_empty() {
        return Err(MetricsError::Empty);
    }
    let hits = y_true.iter().zip(y_pred).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / y_true.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_inverted() {
        let y = [0, 1, 1, 0];
        assert_eq!(confusion_matrix(&y, &y, 2).unwrap(), vec![vec![2, 0], vec![0, 2]]);
        assert_eq!(accuracy(&y, &y).unwrap(), 1.0);
        let flipped: Vec<usize> = y.iter().map(|v| 1 - v).collect();
        assert_eq!(confusion_matrix(&y, &flipped, 2).unwrap(), vec![vec![0, 2], vec![2, 0]]);
        assert_eq!(accuracy(&y, &flipped).unwrap(), 0.0);
    }

    #[test]
    fn errors() {
        assert_eq!(accuracy(&[0], &[0, 1]), Err(MetricsError::Length(1, 2)));
        assert_eq!(confusion_matrix(&[2], &[0], 2), Err(MetricsError::Range(2, 2)));
        assert_eq!(accuracy(&[], &[]), Err(MetricsError::Empty));
    }
}
