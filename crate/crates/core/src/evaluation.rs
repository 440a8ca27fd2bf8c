//! Agreement and estimation-quality metrics.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

fn choose2(n: u64) -> f64 {
    (n as f64) * (n.saturating_sub(1) as f64) / 2.0
}

/// Hubert–Arabie adjusted Rand index between two partitions given as label
/// vectors (label values are arbitrary). When both partitions are trivial in
/// the same way the index is undefined; it is taken as 1 if the partitions
/// coincide and an error otherwise.
pub fn adjusted_rand(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Ari(format!("partitions have {} and {} items", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::Ari("need at least 2 items".into()));
    }
    let mut cells: HashMap<(usize, usize), u64> = HashMap::new();
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut cols: HashMap<usize, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *cells.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = cells.values().map(|&c| choose2(c)).sum();
    let sum_a: f64 = rows.values().map(|&c| choose2(c)).sum();
    let sum_b: f64 = cols.values().map(|&c| choose2(c)).sum();
    let expected = sum_a * sum_b / choose2(a.len() as u64);
    let max = 0.5 * (sum_a + sum_b);
    let denom = max - expected;
    if denom == 0.0 {
        return if cells.len() == rows.len() && cells.len() == cols.len() {
            Ok(1.0)
        } else {
            Err(Error::Ari("adjusted Rand index undefined for these partitions".into()))
        };
    }
    Ok((index - expected) / denom)
}

/// [`adjusted_rand`] over the items where `mask` is true.
pub fn adjusted_rand_subset(a: &[usize], b: &[usize], mask: &[bool]) -> Result<f64> {
    if mask.len() != a.len() || a.len() != b.len() {
        return Err(Error::Ari("mask and partitions differ in length".into()));
    }
    let (sa, sb): (Vec<usize>, Vec<usize>) = a
        .iter()
        .zip(b)
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|((&x, &y), _)| (x, y))
        .unzip();
    if sa.len() < 2 {
        return Err(Error::Ari(format!("mask selects {} items, need at least 2", sa.len())));
    }
    adjusted_rand(&sa, &sb)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasRow {
    pub parameter: String,
    pub true_value: f64,
    pub mean_estimate: f64,
    pub raw_bias: f64,
    /// `raw_bias / true_value`; `None` when the truth is 0.
    pub relative_bias: Option<f64>,
    pub empirical_sd: f64,
    pub mean_estimated_se: f64,
    pub n_replications: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BiasReport {
    pub rows: Vec<BiasRow>,
}

impl BiasReport {
    pub fn row(&self, parameter: &str) -> Option<&BiasRow> {
        self.rows.iter().find(|r| r.parameter == parameter)
    }

    /// CSV with one row per parameter; undefined values are written as `NA`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "parameter",
            "true_value",
            "mean_estimate",
            "raw_bias",
            "relative_bias",
            "empirical_sd",
            "mean_estimated_se",
            "n_replications",
        ])?;
        for r in &self.rows {
            out.write_record([
                r.parameter.clone(),
                fmt(r.true_value),
                fmt(r.mean_estimate),
                fmt(r.raw_bias),
                r.relative_bias.map_or_else(|| "NA".into(), fmt),
                fmt(r.empirical_sd),
                fmt(r.mean_estimated_se),
                r.n_replications.to_string(),
            ])?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

pub(crate) fn fmt(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        "NA".into()
    }
}

/// Per-parameter bias summary. `estimates[r][k]` and `std_errors[r][k]` are
/// replication `r`'s estimate and SE of parameter `k`. An estimate whose SE
/// is not finite (a parameter the fit could not identify) is left out of its
/// row, so `n_replications` may differ between rows.
pub fn bias_table(
    names: &[String],
    true_theta: &[f64],
    estimates: &[Vec<f64>],
    std_errors: &[Vec<f64>],
) -> Result<BiasReport> {
    if names.len() != true_theta.len() {
        return Err(Error::Invalid("one name per true parameter required".into()));
    }
    if estimates.len() != std_errors.len()
        || estimates
            .iter()
            .chain(std_errors)
            .any(|v| v.len() != true_theta.len())
    {
        return Err(Error::Invalid("estimate and SE vectors must match the true parameters".into()));
    }
    let rows = names
        .iter()
        .zip(true_theta)
        .enumerate()
        .map(|(k, (name, &truth))| {
            let (values, ses): (Vec<f64>, Vec<f64>) = estimates
                .iter()
                .zip(std_errors)
                .map(|(e, s)| (e[k], s[k]))
                .filter(|(_, s)| s.is_finite())
                .unzip();
            let n = values.len();
            let mean = values.iter().sum::<f64>() / n as f64;
            let sd = if n > 1 {
                (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                f64::NAN
            };
            let mean_se = if ses.is_empty() {
                f64::NAN
            } else {
                ses.iter().sum::<f64>() / ses.len() as f64
            };
            let raw = mean - truth;
            BiasRow {
                parameter: name.clone(),
                true_value: truth,
                mean_estimate: mean,
                raw_bias: raw,
                relative_bias: (truth != 0.0).then(|| raw / truth),
                empirical_sd: sd,
                mean_estimated_se: mean_se,
                n_replications: n,
            }
        })
        .collect();
    Ok(BiasReport { rows })
}

/// Wald contrast between two class estimates: `z = (e1 − e2)/√(se1² + se2²)`
/// and its two-sided normal p-value.
pub fn class_contrast_z(est_1: f64, se_1: f64, est_2: f64, se_2: f64) -> Result<(f64, f64)> {
    if !(se_1 > 0.0 && se_2 > 0.0) || !se_1.is_finite() || !se_2.is_finite() {
        return Err(Error::Invalid("standard errors must be positive and finite".into()));
    }
    let z = (est_1 - est_2) / (se_1 * se_1 + se_2 * se_2).sqrt();
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    Ok((z, (2.0 * std.sf(z.abs())).min(1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ari_examples() {
        assert_eq!(adjusted_rand(&[0, 0, 1, 1], &[5, 5, 2, 2]).unwrap(), 1.0);
        let v = adjusted_rand(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap();
        assert!((v + 0.5).abs() < 1e-15, "{v}");
        assert!(adjusted_rand(&[0, 1], &[0]).is_err());
    }

    #[test]
    fn ari_degenerate() {
        assert_eq!(adjusted_rand(&[0, 0, 0], &[1, 1, 1]).unwrap(), 1.0);
        assert_eq!(adjusted_rand(&[0, 1, 2], &[2, 0, 1]).unwrap(), 1.0);
        assert!(adjusted_rand(&[0, 0, 0], &[0, 1, 2]).is_ok());
    }

    #[test]
    fn ari_subset() {
        let a = [0, 0, 1, 1, 0];
        let b = [0, 1, 0, 1, 0];
        assert_eq!(
            adjusted_rand_subset(&a, &b, &[true; 5]).unwrap(),
            adjusted_rand(&a, &b).unwrap()
        );
        assert_eq!(
            adjusted_rand_subset(&a, &b, &[true, false, false, false, true]).unwrap(),
            1.0
        );
        assert!(adjusted_rand_subset(&a, &b, &[false, false, true, false, false]).is_err());
    }

    #[test]
    fn bias_examples() {
        let names = vec!["a".to_string(), "b".to_string()];
        let exact = bias_table(&names, &[0.5, 0.0], &[vec![0.5, 0.0], vec![0.5, 0.0]], &[vec![0.1, 0.2], vec![0.1, 0.2]])
            .unwrap();
        assert_eq!(exact.rows[0].raw_bias, 0.0);
        assert_eq!(exact.rows[0].relative_bias, Some(0.0));
        assert_eq!(exact.rows[0].empirical_sd, 0.0);
        assert_eq!(exact.rows[1].relative_bias, None);

        let t = bias_table(&names[..1], &[0.06], &[vec![0.1], vec![0.118]], &[vec![0.1], vec![0.1]]).unwrap();
        assert!((t.rows[0].relative_bias.unwrap() - 0.816_666_666_666_666_7).abs() < 1e-12);

        let mut buf = Vec::new();
        exact.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().nth(2).unwrap().contains(",NA,"));
    }

    #[test]
    fn contrast_examples() {
        let (z, p) = class_contrast_z(0.3, 0.1, 0.3, 0.2).unwrap();
        assert_eq!(z, 0.0);
        assert_eq!(p, 1.0);
        let (z, p) = class_contrast_z(-0.21, 0.10, 0.06, 0.07).unwrap();
        assert!((z + 2.21).abs() < 0.005);
        assert!(p < 0.05);
        let (z, _) = class_contrast_z(-5.28, 0.11, -4.22, 0.12).unwrap();
        assert!((z.abs() - 6.51).abs() < 0.005);
        assert!(class_contrast_z(0.0, 0.0, 1.0, 1.0).is_err());
    }
}
