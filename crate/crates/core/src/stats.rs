//! Rank-based comparison of classifiers over several datasets: Friedman
//! test, Bonferroni-Dunn critical difference and the sign test.

use std::fs;
use std::path::Path;

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Test errors of `l` methods on `N` datasets; `None` marks a method that
/// produced no result on a dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankTable {
    pub methods: Vec<String>,
    pub datasets: Vec<String>,
    pub errors: Vec<Vec<Option<f64>>>,
    /// Ascending-error ranks per row, ties averaged, over present cells.
    pub ranks: Vec<Vec<Option<f64>>>,
}

/// Ranks `values` ascending (1 = smallest), averaging ties. Missing cells
/// stay missing.
pub fn rank_row(values: &[Option<f64>]) -> Vec<Option<f64>> {
    let mut present: Vec<(usize, f64)> = values
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|v| (i, v)))
        .collect();
    present.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut ranks = vec![None; values.len()];
    let mut start = 0;
    while start < present.len() {
        let mut end = start + 1;
        while end < present.len() && present[end].1 == present[start].1 {
            end += 1;
        }
        // positions start..end share ranks start+1..=end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &(i, _) in &present[start..end] {
            ranks[i] = Some(avg);
        }
        start = end;
    }
    ranks
}

impl RankTable {
    pub fn new(methods: Vec<String>, datasets: Vec<String>, errors: Vec<Vec<Option<f64>>>) -> Result<Self> {
        if methods.len() < 2 {
            return Err(Error::InvalidArgument("need at least two methods".into()));
        }
        if datasets.is_empty() || datasets.len() != errors.len() {
            return Err(Error::Shape("one error row per dataset required".into()));
        }
        for (r, row) in errors.iter().enumerate() {
            if row.len() != methods.len() {
                return Err(Error::Parse {
                    line: r + 2,
                    column: row.len().min(methods.len()) + 1,
                    message: format!("expected {} values, found {}", methods.len(), row.len()),
                });
            }
            if row.iter().flatten().count() < 2 {
                return Err(Error::InvalidArgument(format!(
                    "dataset {:?} has fewer than two results",
                    datasets[r]
                )));
            }
        }
        let ranks = errors.iter().map(|row| rank_row(row)).collect();
        Ok(RankTable {
            methods,
            datasets,
            errors,
            ranks,
        })
    }

    /// Parses a delimited matrix: a header naming the methods (first cell
    /// is the dataset column), then one dataset per line. `NA` or an empty
    /// cell marks a missing result.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (_, header) = lines.next().ok_or(Error::EmptyFile)?;
        let delim = [',', ';', '\t'].into_iter().find(|d| header.contains(*d));
        let split = |l: &str| -> Vec<String> {
            match delim {
                Some(d) => l.split(d).map(|c| c.trim().to_string()).collect(),
                None => l.split_whitespace().map(str::to_string).collect(),
            }
        };
        let methods: Vec<String> = split(header).into_iter().skip(1).collect();
        let mut datasets = Vec::new();
        let mut errors = Vec::new();
        for (line, l) in lines {
            let cells = split(l);
            if cells.len() != methods.len() + 1 {
                return Err(Error::Parse {
                    line,
                    column: cells.len().min(methods.len() + 1) + 1,
                    message: format!("expected {} cells, found {}", methods.len() + 1, cells.len()),
                });
            }
            let mut row = Vec::with_capacity(methods.len());
            for (c, cell) in cells[1..].iter().enumerate() {
                if cell.is_empty() || cell.eq_ignore_ascii_case("na") {
                    row.push(None);
                    continue;
                }
                let v: f64 = cell.parse().map_err(|_| Error::Parse {
                    line,
                    column: c + 2,
                    message: format!("not a number: {cell:?}"),
                })?;
                if !v.is_finite() {
                    return Err(Error::NonFinite { line, column: c + 2 });
                }
                row.push(Some(v));
            }
            datasets.push(cells[0].clone());
            errors.push(row);
        }
        Self::new(methods, datasets, errors)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn method_count(&self) -> usize {
        self.methods.len()
    }

    pub fn dataset_count(&self) -> usize {
        self.datasets.len()
    }

    pub fn method_index(&self, name: &str) -> Option<usize> {
        self.methods.iter().position(|m| m == name)
    }

    pub fn rank_sums(&self) -> Vec<f64> {
        (0..self.method_count())
            .map(|j| self.ranks.iter().filter_map(|r| r[j]).sum())
            .collect()
    }

    /// Mean rank per method over the datasets where it has a result.
    pub fn average_ranks(&self) -> Vec<f64> {
        (0..self.method_count())
            .map(|j| {
                let present: Vec<f64> = self.ranks.iter().filter_map(|r| r[j]).collect();
                present.iter().sum::<f64>() / present.len().max(1) as f64
            })
            .collect()
    }

    /// Average ranks rounded to `decimals` places, as they are usually
    /// tabulated.
    pub fn rounded_average_ranks(&self, decimals: i32) -> Vec<f64> {
        let scale = 10f64.powi(decimals);
        self.average_ranks().iter().map(|r| (r * scale).round() / scale).collect()
    }

    pub fn friedman(&self) -> Result<Friedman> {
        friedman(&self.average_ranks(), self.dataset_count())
    }

    /// Paired errors of two methods; datasets missing either are dropped.
    pub fn pair(&self, a: usize, b: usize) -> (Vec<f64>, Vec<f64>) {
        self.errors
            .iter()
            .filter_map(|row| Some((row[a]?, row[b]?)))
            .unzip()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Friedman {
    pub chi_square: f64,
    pub df: usize,
    pub p_value: f64,
}

/// `chi2 = 12N / (l(l+1)) [sum_j R_j^2 - l(l+1)^2 / 4]` with `l - 1`
/// degrees of freedom.
pub fn friedman(average_ranks: &[f64], datasets: usize) -> Result<Friedman> {
    let l = average_ranks.len();
    if l < 2 || datasets < 2 {
        return Err(Error::InvalidArgument("Friedman test needs at least two methods and two datasets".into()));
    }
    let lf = l as f64;
    let sum_sq: f64 = average_ranks.iter().map(|r| r * r).sum();
    let chi_square = 12.0 * datasets as f64 / (lf * (lf + 1.0)) * (sum_sq - lf * (lf + 1.0).powi(2) / 4.0);
    let df = l - 1;
    let dist = ChiSquared::new(df as f64).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(Friedman {
        chi_square,
        df,
        p_value: dist.sf(chi_square.max(0.0)),
    })
}

/// Two-tailed Bonferroni-Dunn critical values for `k = 2..=10`
/// classifiers.
const Q_05: [f64; 9] = [1.960, 2.241, 2.394, 2.498, 2.576, 2.638, 2.690, 2.724, 2.773];
const Q_10: [f64; 9] = [1.645, 1.960, 2.128, 2.241, 2.326, 2.394, 2.450, 2.498, 2.539];

fn alpha_index(alpha: f64) -> Result<usize> {
    if (alpha - 0.05).abs() < 1e-12 {
        Ok(0)
    } else if (alpha - 0.10).abs() < 1e-12 {
        Ok(1)
    } else {
        Err(Error::OutOfRange(format!("alpha {alpha} is not tabulated (0.05 or 0.10)")))
    }
}

/// Bonferroni-Dunn `q_alpha` for `k` classifiers.
pub fn bonferroni_dunn_q(alpha: f64, k: usize) -> Result<f64> {
    let table = [&Q_05, &Q_10][alpha_index(alpha)?];
    if !(2..=10).contains(&k) {
        return Err(Error::OutOfRange(format!("q is tabulated for 2 to 10 classifiers, not {k}")));
    }
    Ok(table[k - 2])
}

/// `q` looked up by the degrees of freedom of `l` methods (`l - 1`, at
/// least 2), the convention under which five methods use 2.394.
pub fn q_for_methods(alpha: f64, l: usize) -> Result<f64> {
    bonferroni_dunn_q(alpha, (l.max(2) - 1).max(2))
}

/// `CD = q sqrt(l(l+1) / (6N))`.
pub fn bonferroni_dunn_cd(l: usize, datasets: usize, q: f64) -> Result<f64> {
    if l < 2 || datasets == 0 || !(q > 0.0) {
        return Err(Error::InvalidArgument("critical difference needs l >= 2, N >= 1 and q > 0".into()));
    }
    let lf = l as f64;
    Ok(q * (lf * (lf + 1.0) / (6.0 * datasets as f64)).sqrt())
}

/// Minimum wins out of `N = 5..=25` paired comparisons.
const SIGN_05: [usize; 21] = [5, 6, 7, 7, 8, 9, 9, 10, 10, 11, 12, 12, 13, 13, 14, 15, 15, 16, 17, 17, 18];
const SIGN_10: [usize; 21] = [5, 6, 6, 7, 7, 8, 9, 9, 10, 10, 11, 12, 12, 13, 13, 14, 14, 15, 16, 16, 17];

/// Wins needed for a significant sign test over `n` datasets; `None`
/// below five datasets.
pub fn sign_test_cutoff(alpha: f64, n: usize) -> Result<Option<f64>> {
    let a = alpha_index(alpha)?;
    Ok(match n {
        0..=4 => None,
        5..=25 => Some([&SIGN_05, &SIGN_10][a][n - 5] as f64),
        _ => {
            let z = [1.96, 1.645][a];
            let nf = n as f64;
            Some((nf / 2.0 + z * nf.sqrt() / 2.0).ceil())
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignTest {
    pub wins_a: usize,
    pub wins_b: usize,
    pub ties: usize,
    pub cutoff: Option<f64>,
    /// `a` is significantly better: its wins plus half the ties reach the
    /// cutoff.
    pub significant: bool,
}

/// Counts datasets where `a` has strictly lower error than `b`, and the
/// reverse.
pub fn sign_test(errors_a: &[f64], errors_b: &[f64], alpha: f64) -> Result<SignTest> {
    if errors_a.len() != errors_b.len() {
        return Err(Error::Shape(format!(
            "paired errors differ in length: {} vs {}",
            errors_a.len(),
            errors_b.len()
        )));
    }
    let wins_a = errors_a.iter().zip(errors_b).filter(|(a, b)| a < b).count();
    let wins_b = errors_a.iter().zip(errors_b).filter(|(a, b)| a > b).count();
    let ties = errors_a.len() - wins_a - wins_b;
    let cutoff = sign_test_cutoff(alpha, errors_a.len())?;
    let significant = cutoff.is_some_and(|c| wins_a as f64 + ties as f64 / 2.0 >= c);
    Ok(SignTest {
        wins_a,
        wins_b,
        ties,
        cutoff,
        significant,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub method: String,
    pub rank_difference: f64,
    pub beyond_cd: bool,
    pub sign: SignTest,
}

/// Everything the statistics report prints.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsReport {
    pub table: RankTable,
    pub rank_sums: Vec<f64>,
    pub average_ranks: Vec<f64>,
    pub friedman: Friedman,
    /// Friedman statistic from ranks rounded to two decimals.
    pub friedman_rounded: Friedman,
    pub alpha: f64,
    pub q: f64,
    pub critical_difference: f64,
    pub control: String,
    pub comparisons: Vec<Comparison>,
}

/// Full analysis of `table` against the `control` method. `q` overrides
/// the tabulated critical value.
pub fn analyze(table: &RankTable, control: &str, alpha: f64, q: Option<f64>) -> Result<StatsReport> {
    let c = table
        .method_index(control)
        .ok_or_else(|| Error::InvalidArgument(format!("no method named {control:?}")))?;
    let l = table.method_count();
    let n = table.dataset_count();
    let avg = table.average_ranks();
    let q = match q {
        Some(q) => q,
        None => q_for_methods(alpha, l)?,
    };
    let cd = bonferroni_dunn_cd(l, n, q)?;
    let mut comparisons = Vec::new();
    for j in (0..l).filter(|&j| j != c) {
        let (a, b) = table.pair(c, j);
        let diff = avg[j] - avg[c];
        comparisons.push(Comparison {
            method: table.methods[j].clone(),
            rank_difference: diff,
            beyond_cd: diff > cd,
            sign: sign_test(&a, &b, alpha)?,
        });
    }
    Ok(StatsReport {
        table: table.clone(),
        rank_sums: table.rank_sums(),
        friedman: table.friedman()?,
        friedman_rounded: friedman(&table.rounded_average_ranks(2), n)?,
        average_ranks: avg,
        alpha,
        q,
        critical_difference: cd,
        control: control.to_string(),
        comparisons,
    })
}

impl StatsReport {
    pub fn to_text(&self) -> String {
        use std::fmt::Write as _;
        let t = &self.table;
        let mut s = String::new();
        let _ = writeln!(s, "ranks (ascending error, ties averaged):");
        let _ = writeln!(s, "dataset,{}", t.methods.join(","));
        for (name, row) in t.datasets.iter().zip(&t.ranks) {
            let cells: Vec<String> = row.iter().map(|r| r.map_or("NA".into(), |v| format!("{v}"))).collect();
            let _ = writeln!(s, "{name},{}", cells.join(","));
        }
        let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(",");
        let _ = writeln!(s, "rank sums,{}", fmt(&self.rank_sums));
        let _ = writeln!(s, "average ranks,{}", fmt(&self.average_ranks));
        let _ = writeln!(
            s,
            "friedman chi2 = {:.4} (df = {}, p = {:.3e}); from ranks rounded to 2 decimals: {:.4}",
            self.friedman.chi_square, self.friedman.df, self.friedman.p_value, self.friedman_rounded.chi_square
        );
        let _ = writeln!(
            s,
            "bonferroni-dunn CD = {:.4} (alpha = {}, q = {})",
            self.critical_difference, self.alpha, self.q
        );
        for c in &self.comparisons {
            let _ = writeln!(
                s,
                "{} vs {}: rank difference {:.4}{}; wins {}-{} ties {} over {} datasets, cutoff {}, {}",
                self.control,
                c.method,
                c.rank_difference,
                if c.beyond_cd { " (beyond CD)" } else { "" },
                c.sign.wins_a,
                c.sign.wins_b,
                c.sign.ties,
                c.sign.wins_a + c.sign.wins_b + c.sign.ties,
                c.sign.cutoff.map_or("n/a".into(), |v| v.to_string()),
                if c.sign.significant { "significant" } else { "not significant" }
            );
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ties_share_the_average_rank() {
        let r = rank_row(&[Some(1.0), Some(1.0), Some(0.5)]);
        assert_eq!(r, vec![Some(2.5), Some(2.5), Some(1.0)]);
        let r = rank_row(&[Some(3.0), None, Some(2.0)]);
        assert_eq!(r, vec![Some(2.0), None, Some(1.0)]);
    }

    #[test]
    fn identical_methods_have_zero_statistic() {
        let f = friedman(&[1.5, 1.5], 6).unwrap();
        assert_eq!(f.chi_square, 0.0);
        assert_eq!(f.df, 1);
    }

    #[test]
    fn one_method_always_better() {
        let f = friedman(&[1.0, 2.0], 4).unwrap();
        assert!((f.chi_square - 4.0).abs() < 1e-12);
    }

    #[test]
    fn critical_difference_scaling() {
        let cd = bonferroni_dunn_cd(2, 6, 1.960).unwrap();
        assert!((cd - 0.8).abs() < 1e-3);
        let a = bonferroni_dunn_cd(5, 15, 2.394).unwrap();
        let b = bonferroni_dunn_cd(5, 60, 2.394).unwrap();
        assert!((a / b - 2.0).abs() < 1e-12);
        assert!(bonferroni_dunn_q(0.01, 3).is_err());
        assert!(bonferroni_dunn_q(0.05, 11).is_err());
        assert_eq!(q_for_methods(0.05, 5).unwrap(), 2.394);
    }

    #[test]
    fn sign_test_edges() {
        let same = sign_test(&[1.0; 6], &[1.0; 6], 0.05).unwrap();
        assert_eq!((same.wins_a, same.wins_b, same.ties), (0, 0, 6));
        assert!(!same.significant);
        let all: Vec<f64> = (0..15).map(|i| i as f64).collect();
        let worse: Vec<f64> = all.iter().map(|v| v + 1.0).collect();
        let st = sign_test(&all, &worse, 0.05).unwrap();
        assert_eq!((st.wins_a, st.cutoff), (15, Some(12.0)));
        assert!(st.significant);
        assert!(sign_test(&[1.0], &[1.0, 2.0], 0.05).is_err());
        assert_eq!(sign_test_cutoff(0.05, 14).unwrap(), Some(11.0));
        assert_eq!(sign_test_cutoff(0.05, 4).unwrap(), None);
        assert_eq!(sign_test_cutoff(0.05, 30).unwrap(), Some(21.0));
    }

    #[test]
    fn parse_reports_bad_cells() {
        let err = RankTable::parse("d,a,b\nx,1,zz\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, column: 3, .. }), "{err:?}");
        let t = RankTable::parse("d a b\nx 1 2\ny NA 2 \n");
        assert!(t.is_err(), "a row with one result cannot be ranked");
        let t = RankTable::parse("d;a;b\nx;1;2\ny;3;2\n").unwrap();
        assert_eq!(t.average_ranks(), vec![1.5, 1.5]);
        let f = t.friedman().unwrap();
        assert_eq!(f.df, 1);
    }

    proptest! {
        #[test]
        fn rows_rank_to_a_permutation(row in proptest::collection::vec(0u8..6, 2..8)) {
            let values: Vec<Option<f64>> = row.iter().map(|&v| Some(v as f64)).collect();
            let ranks: Vec<f64> = rank_row(&values).into_iter().map(Option::unwrap).collect();
            let l = ranks.len() as f64;
            prop_assert!((ranks.iter().sum::<f64>() - l * (l + 1.0) / 2.0).abs() < 1e-12);
            for (i, a) in values.iter().enumerate() {
                for (j, b) in values.iter().enumerate() {
                    if a < b { prop_assert!(ranks[i] < ranks[j]); }
                }
            }
        }

        #[test]
        fn friedman_ignores_monotone_transforms(rows in proptest::collection::vec(proptest::collection::vec(0.1f64..50.0, 4), 2..10)) {
            let names = |n: usize, p: &str| (0..n).map(|i| format!("{p}{i}")).collect::<Vec<_>>();
            let raw: Vec<Vec<Option<f64>>> = rows.iter().map(|r| r.iter().map(|&v| Some(v)).collect()).collect();
            let warped: Vec<Vec<Option<f64>>> = rows.iter().map(|r| r.iter().map(|&v| Some(v.ln() * 3.0 + v.powi(3))).collect()).collect();
            let a = RankTable::new(names(4, "m"), names(rows.len(), "d"), raw).unwrap();
            let b = RankTable::new(names(4, "m"), names(rows.len(), "d"), warped).unwrap();
            prop_assert_eq!(a.friedman().unwrap(), b.friedman().unwrap());
        }
    }
}
