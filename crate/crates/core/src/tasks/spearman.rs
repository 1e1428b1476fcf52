use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpearmanError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least two observations, got {0}")]
    TooShort(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub rho: f64,
    /// One side had no rank variation; `rho` is reported as 0.
    pub degenerate: bool,
}

/// 1-based ranks, tied values sharing the average of their positions.
pub fn rank_average(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]).then(a.cmp(&b)));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman_detail(xs: &[f64], ys: &[f64]) -> Result<Correlation, SpearmanError> {
    if xs.len() != ys.len() {
        return Err(SpearmanError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(SpearmanError::TooShort(xs.len()));
    }
    let rx = rank_average(xs);
    let ry = rank_average(ys);
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(Correlation {
            rho: 0.0,
            degenerate: true,
        });
    }
    Ok(Correlation {
        rho: (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0),
        degenerate: false,
    })
}

pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64, SpearmanError> {
    spearman_detail(xs, ys).map(|c| c.rho)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_share_rank() {
        assert_eq!(rank_average(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
    }

    #[test]
    fn constant_is_degenerate() {
        let c = spearman_detail(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(c, Correlation { rho: 0.0, degenerate: true });
    }

    #[test]
    fn errors() {
        assert_eq!(spearman(&[1.0], &[1.0, 2.0]), Err(SpearmanError::LengthMismatch(1, 2)));
        assert_eq!(spearman(&[1.0], &[1.0]), Err(SpearmanError::TooShort(1)));
    }
}
