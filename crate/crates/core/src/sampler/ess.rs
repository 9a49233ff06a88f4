//! Effective sample size and batch-means errors for chain output.

/// Lags beyond this are not examined; a chain that needs more is reported
/// with the truncated (optimistic) estimate and a warning.
pub const MAX_LAG: usize = 5_000;

/// Initial-positive-sequence estimate of the effective sample size.
/// A constant trace has `n` effective samples.
pub fn effective_sample_size(trace: &[f64]) -> f64 {
    let n = trace.len();
    if n < 4 {
        return n as f64;
    }
    let mean = trace.iter().sum::<f64>() / n as f64;
    let centred: Vec<f64> = trace.iter().map(|x| x - mean).collect();
    let autocov = |lag: usize| -> f64 {
        centred[..n - lag].iter().zip(&centred[lag..]).map(|(a, b)| a * b).sum::<f64>() / n as f64
    };
    let g0 = autocov(0);
    if g0 <= 0.0 {
        return n as f64;
    }
    let mut sum_pairs = 0.0;
    let mut lag = 0;
    loop {
        if lag + 1 >= n {
            break;
        }
        if lag >= MAX_LAG {
            log::warn!("autocorrelation still positive at lag {MAX_LAG}; ESS is an overestimate");
            break;
        }
        let pair = autocov(lag) + autocov(lag + 1);
        if pair <= 0.0 {
            break;
        }
        sum_pairs += pair;
        lag += 2;
    }
    let tau = (2.0 * sum_pairs - g0) / g0;
    n as f64 / tau.max(1.0 / n as f64)
}

/// Standard error of the pooled mean of several independent sequences by
/// non-overlapping batch means; batches never straddle two sequences.
pub fn batch_means_se(sequences: &[&[f64]]) -> f64 {
    let shortest = sequences.iter().map(|s| s.len()).min().unwrap_or(0);
    if shortest < 4 {
        return f64::NAN;
    }
    let size = ((shortest as f64).sqrt() as usize).max(1);
    let mut means = Vec::new();
    for s in sequences {
        for b in s.chunks_exact(size) {
            means.push(b.iter().sum::<f64>() / size as f64);
        }
    }
    let nb = means.len() as f64;
    let mu = means.iter().sum::<f64>() / nb;
    let var = means.iter().map(|m| (m - mu).powi(2)).sum::<f64>() / (nb - 1.0);
    (var / nb).sqrt()
}
