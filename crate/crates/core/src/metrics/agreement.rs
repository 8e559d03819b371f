//! Rater agreement: Pearson, Spearman, mean absolute error, and the
//! two-way random-effects absolute-agreement ICC.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IccForm {
    /// ICC(2,k): reliability of the mean of k raters.
    #[default]
    AverageMeasures,
    /// ICC(2,1): reliability of a single rater.
    SingleMeasure,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub pearson: f64,
    pub spearman: f64,
    pub icc: f64,
    pub mae: f64,
}

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::argument(format!(
            "sequence lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 3 {
        return Err(Error::argument(format!(
            "need at least 3 paired scores, got {}",
            a.len()
        )));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(Error::argument("scores must be finite"));
    }
    Ok(())
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 {
        return Err(Error::argument("first sequence is constant; correlation undefined"));
    }
    if sbb == 0.0 {
        return Err(Error::argument("second sequence is constant; correlation undefined"));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    pearson(&average_ranks(a), &average_ranks(b))
}

pub fn mae(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64)
}

/// Mean squares of a two-way ANOVA without replication over an
/// `items × raters` matrix: (rows, columns, residual).
pub fn mean_squares(matrix: &[Vec<f64>]) -> Result<(f64, f64, f64)> {
    let n = matrix.len();
    let k = matrix.first().map_or(0, Vec::len);
    if n < 2 || k < 2 {
        return Err(Error::argument(format!(
            "ICC needs at least 2 items and 2 raters, got {n}x{k}"
        )));
    }
    if matrix.iter().any(|r| r.len() != k) {
        return Err(Error::argument("ragged rater matrix"));
    }
    if matrix.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::argument("rater scores must be finite"));
    }
    let row_means: Vec<f64> = matrix.iter().map(|r| r.iter().sum::<f64>() / k as f64).collect();
    let col_means: Vec<f64> = (0..k)
        .map(|j| matrix.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let grand = matrix.iter().flatten().sum::<f64>() / (n * k) as f64;

    let ss_rows = k as f64 * row_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ss_cols = n as f64 * col_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let mut ss_err = 0.0;
    for (i, r) in matrix.iter().enumerate() {
        for (j, x) in r.iter().enumerate() {
            ss_err += (x - row_means[i] - col_means[j] + grand).powi(2);
        }
    }
    let msr = ss_rows / (n - 1) as f64;
    let msc = ss_cols / (k - 1) as f64;
    let mse = ss_err / ((n - 1) * (k - 1)) as f64;
    Ok((msr, msc, mse))
}

/// Two-way random effects, absolute agreement.
pub fn icc(matrix: &[Vec<f64>], form: IccForm) -> Result<f64> {
    let (msr, msc, mse) = mean_squares(matrix)?;
    let n = matrix.len() as f64;
    let k = matrix[0].len() as f64;
    let denom = match form {
        IccForm::AverageMeasures => msr + (msc - mse) / n,
        IccForm::SingleMeasure => msr + (k - 1.0) * mse + k * (msc - mse) / n,
    };
    if denom <= 0.0 {
        return Err(Error::argument("ICC undefined: no between-item variance"));
    }
    Ok((msr - mse) / denom)
}

/// Agreement between two score sequences. ICC uses `all_raters`
/// (`items × raters`) when given, else the two sequences as two raters.
pub fn agreement(a: &[f64], b: &[f64], all_raters: Option<&[Vec<f64>]>, form: IccForm) -> Result<AgreementReport> {
    check_pair(a, b)?;
    let pair_matrix: Vec<Vec<f64>>;
    let matrix = match all_raters {
        Some(m) => m,
        None => {
            pair_matrix = a.iter().zip(b).map(|(x, y)| vec![*x, *y]).collect();
            &pair_matrix
        }
    };
    Ok(AgreementReport {
        pearson: pearson(a, b)?,
        spearman: spearman(a, b)?,
        icc: icc(matrix, form)?,
        mae: mae(a, b)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_agreement_is_exact() {
        let a = [3.0, 4.5, 2.0, 5.0, 1.5];
        let r = agreement(&a, &a, None, IccForm::AverageMeasures).unwrap();
        assert_eq!((r.pearson, r.spearman, r.mae, r.icc), (1.0, 1.0, 0.0, 1.0));
    }

    #[test]
    fn reversed_ranking_is_minus_one() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [50.0, 40.0, 30.0, 20.0, 10.0];
        assert_eq!(spearman(&a, &b).unwrap(), -1.0);
    }

    #[test]
    fn ties_share_average_rank() {
        assert_eq!(average_ranks(&[2.0, 1.0, 2.0, 3.0]), vec![2.5, 1.0, 2.5, 4.0]);
    }

    #[test]
    fn degenerate_inputs_are_named() {
        let err = pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap_err();
        assert!(err.to_string().contains("first sequence is constant"));
        assert!(pearson(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(mae(&[1.0, 2.0, 3.0], &[1.0, 2.0]).is_err());
    }
}
