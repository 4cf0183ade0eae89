use super::MetricError;

fn check_matrix(ratings: &[Vec<u8>]) -> Result<usize, MetricError> {
    let n = ratings.first().ok_or(MetricError::Empty)?.len();
    for (rater, row) in ratings.iter().enumerate() {
        if row.len() != n {
            return Err(MetricError::Ragged {
                rater,
                expected: n,
                found: row.len(),
            });
        }
        if let Some(&v) = row.iter().find(|&&v| v > 1) {
            return Err(MetricError::NotBinary(v));
        }
    }
    Ok(n)
}

/// Per-item majority over raters (rows). Exact ties count as 1.
pub fn majority_vote(ratings: &[Vec<u8>]) -> Result<Vec<u8>, MetricError> {
    let n = check_matrix(ratings)?;
    let raters = ratings.len();
    Ok((0..n)
        .map(|i| {
            let ones = ratings.iter().filter(|row| row[i] == 1).count();
            u8::from(2 * ones >= raters)
        })
        .collect())
}

/// Cohen's kappa for two binary raters. When chance agreement is 1 the
/// result is 1 for identical vectors and 0 otherwise.
pub fn cohens_kappa(a: &[u8], b: &[u8]) -> Result<f64, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch {
            predictions: a.len(),
            labels: b.len(),
        });
    }
    check_matrix(&[a.to_vec(), b.to_vec()])?;
    let n = a.len() as f64;
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64;
    let a1 = a.iter().filter(|&&v| v == 1).count() as f64 / n;
    let b1 = b.iter().filter(|&&v| v == 1).count() as f64 / n;
    let p_o = agree / n;
    let p_e = a1 * b1 + (1.0 - a1) * (1.0 - b1);
    if (1.0 - p_e).abs() < 1e-15 {
        return Ok(if a == b { 1.0 } else { 0.0 });
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Mean and population standard deviation of kappa over all rater pairs.
pub fn pairwise_kappa(ratings: &[Vec<u8>]) -> Result<(f64, f64), MetricError> {
    check_matrix(ratings)?;
    let mut values = Vec::new();
    for i in 0..ratings.len() {
        for j in i + 1..ratings.len() {
            values.push(cohens_kappa(&ratings[i], &ratings[j])?);
        }
    }
    if values.is_empty() {
        return Err(MetricError::Empty);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}
