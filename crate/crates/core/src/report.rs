// SPDX-License-Identifier: MIT OR Apache-2.0

//! Plot-ready CSV emitters.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::lape::FeatureProfile;
use crate::lid::EvalReport;

/// Quote a CSV field when it contains a separator, quote or newline.
pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Count of language-specific units per `(layer, language)`.
/// Every language appears for every layer present, zero counts included.
pub fn layer_histogram_csv(profiles: &[FeatureProfile], languages: &[String]) -> Result<String> {
    let mut counts: BTreeMap<u16, Vec<u64>> = BTreeMap::new();
    for p in profiles {
        let Some(l) = p.specific_language() else {
            continue;
        };
        if l >= languages.len() {
            return Err(Error::LanguageIdOutOfRange {
                id: l as u32,
                n_langs: languages.len(),
            });
        }
        counts
            .entry(p.layer)
            .or_insert_with(|| vec![0; languages.len()])[l] += 1;
    }
    let mut out = String::from("layer,language,count\n");
    for (layer, row) in counts {
        for (code, c) in languages.iter().zip(row) {
            writeln!(out, "{layer},{},{c}", csv_field(code)).unwrap();
        }
    }
    Ok(out)
}

/// Count of shared units per `(layer, number of assigned languages)`.
pub fn shared_layer_histogram_csv(profiles: &[FeatureProfile]) -> String {
    let mut counts: BTreeMap<(u16, usize), u64> = BTreeMap::new();
    for p in profiles.iter().filter(|p| p.is_shared()) {
        *counts.entry((p.layer, p.assigned_langs.len())).or_default() += 1;
    }
    let mut out = String::from("layer,n_langs,count\n");
    for ((layer, n), c) in counts {
        writeln!(out, "{layer},{n},{c}").unwrap();
    }
    out
}

/// Equal-width histogram of `values` over `[lo, hi]`; the last bin is
/// closed. Values outside the range are an error.
pub fn histogram(values: &[f64], bins: usize, lo: f64, hi: f64) -> Result<Vec<u64>> {
    if bins == 0 || !(lo.is_finite() && hi.is_finite()) || hi <= lo {
        return Err(Error::InvalidParam(format!(
            "histogram needs bins > 0 and lo < hi, got {bins} bins over [{lo}, {hi}]"
        )));
    }
    let mut counts = vec![0u64; bins];
    let width = (hi - lo) / bins as f64;
    for &v in values {
        if !(lo..=hi).contains(&v) {
            return Err(Error::InvalidParam(format!(
                "value {v} outside [{lo}, {hi}]"
            )));
        }
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    Ok(counts)
}

/// LAPE histogram over `[0, ln n_langs]` as `bin_start,bin_end,count`.
pub fn lape_histogram_csv(
    profiles: &[FeatureProfile],
    n_langs: usize,
    bins: usize,
) -> Result<String> {
    if n_langs < 2 {
        return Err(Error::InvalidParam(
            "LAPE histogram needs at least two languages".into(),
        ));
    }
    let hi = (n_langs as f64).ln();
    // entropies can exceed ln n by rounding
    let values: Vec<f64> = profiles.iter().map(|p| p.lape.min(hi)).collect();
    let counts = histogram(&values, bins, 0.0, hi)?;
    let width = hi / bins as f64;
    let mut out = String::from("bin_start,bin_end,count\n");
    for (i, c) in counts.iter().enumerate() {
        let end = if i + 1 == bins {
            hi
        } else {
            (i + 1) as f64 * width
        };
        writeln!(out, "{},{},{c}", i as f64 * width, end).unwrap();
    }
    Ok(out)
}

/// Square matrix with a header row and a leading label column.
pub fn matrix_csv(labels: &[String], matrix: &[Vec<f64>]) -> Result<String> {
    let mut out = String::from("label");
    for l in labels {
        write!(out, ",{}", csv_field(l)).unwrap();
    }
    out.push('\n');
    if matrix.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: labels.len(),
            right: matrix.len(),
        });
    }
    for (label, row) in labels.iter().zip(matrix) {
        if row.len() != labels.len() {
            return Err(Error::LengthMismatch {
                left: labels.len(),
                right: row.len(),
            });
        }
        out.push_str(&csv_field(label));
        for v in row {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

/// Confusion matrix rows are gold languages, columns predictions.
pub fn confusion_csv(report: &EvalReport, languages: &[String]) -> Result<String> {
    if report.confusion.len() != languages.len() {
        return Err(Error::LengthMismatch {
            left: languages.len(),
            right: report.confusion.len(),
        });
    }
    let mut out = String::from("gold");
    for l in languages {
        write!(out, ",{}", csv_field(l)).unwrap();
    }
    out.push('\n');
    for (l, row) in languages.iter().zip(&report.confusion) {
        out.push_str(&csv_field(l));
        for c in row {
            write!(out, ",{c}").unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prof(layer: u16, unit: u32, langs: Vec<usize>, lape: f64) -> FeatureProfile {
        FeatureProfile {
            layer,
            unit,
            p: vec![],
            p_norm: vec![],
            lape,
            assigned_langs: langs,
            hfl_pass: true,
            max_activation: 1.0,
        }
    }

    #[test]
    fn layer_counts() {
        let langs = vec!["en".to_string(), "fr".to_string()];
        let ps = vec![
            prof(0, 1, vec![0], 0.0),
            prof(0, 2, vec![0], 0.0),
            prof(3, 1, vec![1], 0.0),
            prof(3, 5, vec![0, 1], 0.6),
        ];
        assert_eq!(
            layer_histogram_csv(&ps, &langs).unwrap(),
            "layer,language,count\n0,en,2\n0,fr,0\n3,en,0\n3,fr,1\n"
        );
        assert_eq!(
            shared_layer_histogram_csv(&ps),
            "layer,n_langs,count\n3,2,1\n"
        );
    }

    #[test]
    fn histogram_edges() {
        assert_eq!(
            histogram(&[0.0, 0.5, 1.0, 0.99], 2, 0.0, 1.0).unwrap(),
            vec![1, 3]
        );
        assert!(histogram(&[1.5], 2, 0.0, 1.0).is_err());
        assert!(histogram(&[], 0, 0.0, 1.0).is_err());
    }

    #[test]
    fn lape_hist_total() {
        let ps: Vec<_> = (0..10)
            .map(|i| prof(0, i, vec![0], i as f64 * 0.1))
            .collect();
        let csv = lape_histogram_csv(&ps, 3, 4).unwrap();
        let total: u64 = csv
            .lines()
            .skip(1)
            .map(|l| l.rsplit(',').next().unwrap().parse::<u64>().unwrap())
            .sum();
        assert_eq!(total, 10);
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn matrix_and_quoting() {
        let labels = vec!["a,b".to_string(), "c".to_string()];
        let m = vec![vec![1.0, 0.5], vec![0.5, 1.0]];
        assert_eq!(
            matrix_csv(&labels, &m).unwrap(),
            "label,\"a,b\",c\n\"a,b\",1,0.5\nc,0.5,1\n"
        );
        assert!(matrix_csv(&labels, &m[..1]).is_err());
    }
}
