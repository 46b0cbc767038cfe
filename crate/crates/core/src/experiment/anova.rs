//! Balanced fully crossed ANOVA.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::special::f_upper_tail;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Factor {
    pub name: String,
    pub levels: usize,
}

impl Factor {
    pub fn new(name: impl Into<String>, levels: usize) -> Self {
        Self {
            name: name.into(),
            levels,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnovaRow {
    pub term: String,
    pub df: usize,
    pub sum_sq: f64,
    pub mean_sq: f64,
    /// `None` on the residual row.
    pub f: Option<f64>,
    pub p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnovaTable {
    /// Effects in order of interaction size, then the residual row.
    pub rows: Vec<AnovaRow>,
    pub total_ss: f64,
    pub n: usize,
}

impl AnovaTable {
    pub fn row(&self, term: &str) -> Option<&AnovaRow> {
        self.rows.iter().find(|r| r.term == term)
    }

    pub fn df_column(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.df).collect()
    }

    /// `|sum of row SS - total SS| / total SS`, or the absolute gap when the
    /// total is zero.
    pub fn closure_error(&self) -> f64 {
        let sum: f64 = self.rows.iter().map(|r| r.sum_sq).sum();
        let gap = (sum - self.total_ss).abs();
        if self.total_ss > 0.0 {
            gap / self.total_ss
        } else {
            gap
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(["term", "df", "sum_sq", "mean_sq", "f", "p"])?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.16e}"));
        for r in &self.rows {
            w.write_record([
                r.term.clone(),
                r.df.to_string(),
                format!("{:.16e}", r.sum_sq),
                format!("{:.16e}", r.mean_sq),
                opt(r.f),
                opt(r.p),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Effect masks ordered by size, then by bit pattern.
fn term_masks(k: usize) -> Vec<u32> {
    let mut masks: Vec<u32> = (1..(1u32 << k)).collect();
    masks.sort_by_key(|m| (m.count_ones(), *m));
    masks
}

/// Full crossed ANOVA of `y` on `factors`; `levels[i][f]` is observation
/// `i`'s level index for factor `f`. Every cell must hold the same count.
pub fn anova_balanced(factors: &[Factor], levels: &[Vec<usize>], y: &[f64]) -> Result<AnovaTable> {
    let k = factors.len();
    if k == 0 || k > 16 {
        return Err(Error::invalid(format!("{k} factors; expected 1 to 16")));
    }
    if levels.len() != y.len() || y.is_empty() {
        return Err(Error::invalid(
            "level rows and responses differ in length or are empty",
        ));
    }
    if factors.iter().any(|f| f.levels < 2) {
        return Err(Error::invalid("every factor needs at least two levels"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("responses must be finite"));
    }
    let cells: usize = factors.iter().map(|f| f.levels).product();
    let mut sums = vec![0.0; cells];
    let mut counts = vec![0usize; cells];
    let mut cell_of = Vec::with_capacity(y.len());
    for (row, &v) in levels.iter().zip(y) {
        if row.len() != k {
            return Err(Error::invalid(
                "observation has the wrong number of factor levels",
            ));
        }
        let mut c = 0;
        for (f, &l) in factors.iter().zip(row) {
            if l >= f.levels {
                return Err(Error::invalid(format!(
                    "level {l} out of range for factor {}",
                    f.name
                )));
            }
            c = c * f.levels + l;
        }
        sums[c] += v;
        counts[c] += 1;
        cell_of.push(c);
    }
    let per_cell = counts[0];
    if per_cell == 0 || counts.iter().any(|&c| c != per_cell) {
        return Err(Error::Unbalanced(format!(
            "cell counts range from {} to {}",
            counts.iter().min().unwrap_or(&0),
            counts.iter().max().unwrap_or(&0)
        )));
    }
    let n = y.len();
    let cell_mean: Vec<f64> = sums.iter().map(|s| s / per_cell as f64).collect();
    let grand = y.iter().sum::<f64>() / n as f64;
    let total_ss: f64 = y.iter().map(|v| (v - grand).powi(2)).sum();
    let residual_ss: f64 = y
        .iter()
        .zip(&cell_of)
        .map(|(v, &c)| (v - cell_mean[c]).powi(2))
        .sum();
    let residual_df = n - cells;

    // Decode each full cell into per-factor levels.
    let mut cell_levels = vec![vec![0usize; k]; cells];
    for (c, lv) in cell_levels.iter_mut().enumerate() {
        let mut rest = c;
        for f in (0..k).rev() {
            lv[f] = rest % factors[f].levels;
            rest /= factors[f].levels;
        }
    }
    let sub_index = |mask: u32, lv: &[usize]| -> usize {
        (0..k)
            .filter(|f| mask >> f & 1 == 1)
            .fold(0, |acc, f| acc * factors[f].levels + lv[f])
    };
    let sub_size = |mask: u32| -> usize {
        (0..k)
            .filter(|f| mask >> f & 1 == 1)
            .map(|f| factors[f].levels)
            .product()
    };

    // Marginal means for every subset of factors, including the empty one.
    let all = 1u32 << k;
    let mut marginal: Vec<Vec<f64>> = Vec::with_capacity(all as usize);
    for mask in 0..all {
        let size = sub_size(mask);
        let mut acc = vec![0.0; size];
        for (c, lv) in cell_levels.iter().enumerate() {
            acc[sub_index(mask, lv)] += cell_mean[c];
        }
        let share = (cells / size) as f64;
        marginal.push(acc.into_iter().map(|s| s / share).collect());
    }

    let residual_ms = if residual_df > 0 {
        residual_ss / residual_df as f64
    } else {
        f64::NAN
    };
    let mut rows = Vec::new();
    for mask in term_masks(k) {
        let size = sub_size(mask);
        let mut effect = vec![0.0; size];
        // Inclusion-exclusion over subsets of the term.
        let mut sub = mask;
        loop {
            let sign = if (mask.count_ones() - sub.count_ones()) % 2 == 0 {
                1.0
            } else {
                -1.0
            };
            let mut seen = vec![false; size];
            for lv in &cell_levels {
                let i = sub_index(mask, lv);
                if !seen[i] {
                    seen[i] = true;
                    effect[i] += sign * marginal[sub as usize][sub_index(sub, lv)];
                }
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & mask;
        }
        let ss = (n as f64 / size as f64) * effect.iter().map(|e| e * e).sum::<f64>();
        let df: usize = (0..k)
            .filter(|f| mask >> f & 1 == 1)
            .map(|f| factors[f].levels - 1)
            .product();
        let ms = ss / df as f64;
        let (f, p) = if ss == 0.0 {
            (0.0, 1.0)
        } else {
            let f = ms / residual_ms;
            (f, f_upper_tail(f, df as f64, residual_df as f64))
        };
        let term = (0..k)
            .filter(|f| mask >> f & 1 == 1)
            .map(|f| factors[f].name.as_str())
            .collect::<Vec<_>>()
            .join(":");
        rows.push(AnovaRow {
            term,
            df,
            sum_sq: ss,
            mean_sq: ms,
            f: Some(f),
            p: Some(p),
        });
    }
    rows.push(AnovaRow {
        term: "residuals".into(),
        df: residual_df,
        sum_sq: residual_ss,
        mean_sq: residual_ms,
        f: None,
        p: None,
    });
    Ok(AnovaTable { rows, total_ss, n })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn term_order_matches_table_layout() {
        let names = ["p", "b", "a", "s"];
        let terms: Vec<String> = term_masks(4)
            .into_iter()
            .map(|m| {
                (0..4)
                    .filter(|f| m >> f & 1 == 1)
                    .map(|f| names[f])
                    .collect::<Vec<_>>()
                    .join(":")
            })
            .collect();
        assert_eq!(
            terms,
            [
                "p", "b", "a", "s", "p:b", "p:a", "b:a", "p:s", "b:s", "a:s", "p:b:a", "p:b:s",
                "p:a:s", "b:a:s", "p:b:a:s"
            ]
        );
    }

    #[test]
    fn constant_response() {
        let factors = [Factor::new("x", 2), Factor::new("z", 3)];
        let levels: Vec<Vec<usize>> = (0..12).map(|i| vec![i % 2, (i / 2) % 3]).collect();
        let t = anova_balanced(&factors, &levels, &[4.0; 12]).unwrap();
        for r in &t.rows[..3] {
            assert_eq!((r.sum_sq, r.f, r.p), (0.0, Some(0.0), Some(1.0)));
        }
        assert_eq!(t.rows[3].df, 6);
    }

    #[test]
    fn unbalanced_is_rejected() {
        let factors = [Factor::new("x", 2)];
        let levels = vec![vec![0], vec![0], vec![1]];
        assert!(matches!(
            anova_balanced(&factors, &levels, &[1.0, 2.0, 3.0]),
            Err(Error::Unbalanced(_))
        ));
    }

    #[test]
    fn one_way_by_hand() {
        // Groups {1,3} and {5,7}: grand 4, SS_between = 4*4 = 16, SS_within = 4.
        let factors = [Factor::new("g", 2)];
        let levels = vec![vec![0], vec![0], vec![1], vec![1]];
        let t = anova_balanced(&factors, &levels, &[1.0, 3.0, 5.0, 7.0]).unwrap();
        assert!((t.rows[0].sum_sq - 16.0).abs() < 1e-12);
        assert!((t.rows[1].sum_sq - 4.0).abs() < 1e-12);
        assert!((t.rows[0].f.unwrap() - 8.0).abs() < 1e-12);
        // F(1, 2) tail at 8: 1 - sqrt(8/10)
        assert!((t.rows[0].p.unwrap() - (1.0 - 0.8f64.sqrt())).abs() < 1e-10);
    }
}
