//! Group means and the cut and time table layouts.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use hubloc::NormKind;

use crate::error::{CliError, CliResult};
use crate::output::write_file;
use crate::records::{Method, RunRecord};

/// Means over a group of records.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GroupStats {
    pub runs: usize,
    pub mean_time: f64,
    /// Percentage of runs that did not finish `OPTIMAL`.
    pub unsolved_pct: f64,
    pub mean_cuts: f64,
    pub mean_nodes: f64,
}

impl GroupStats {
    pub fn of<'a>(records: impl IntoIterator<Item = &'a RunRecord>) -> Self {
        let mut g = GroupStats::default();
        let mut unsolved = 0;
        for r in records {
            g.runs += 1;
            g.mean_time += r.time_s;
            g.mean_cuts += r.cuts as f64;
            g.mean_nodes += r.nodes as f64;
            unsolved += usize::from(!r.status.solved());
        }
        if g.runs > 0 {
            let n = g.runs as f64;
            g.mean_time /= n;
            g.mean_cuts /= n;
            g.mean_nodes /= n;
            g.unsolved_pct = 100.0 * unsolved as f64 / n;
        }
        g
    }
}

/// A rendered table: header plus string cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
    }

    /// Number of value columns after the `keys` leading label columns.
    pub fn value_columns(&self, keys: usize) -> usize {
        self.header.len() - keys
    }
}

fn fmt(v: f64, digits: usize) -> String {
    format!("{v:.digits$}")
}

type GroupKey = (String, usize, String, NormKind, NormKind, NormKind, Method);

fn group_key(r: &RunRecord) -> GroupKey {
    (r.dataset.clone(), r.n, format!("{}", r.alpha), r.norm_c, r.norm_h, r.gauge, r.method)
}

/// One row per (dataset, n, alpha, norm pair, gauge, method).
pub fn summary(records: &[RunRecord]) -> Table {
    let mut groups: BTreeMap<GroupKey, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(group_key(r)).or_default().push(r);
    }
    let header = ["dataset", "n", "alpha", "norm_C", "norm_H", "gauge", "method", "runs", "mean_time_s", "US_pct", "mean_cuts", "mean_nodes"];
    let rows = groups
        .iter()
        .map(|((d, n, a, c, h, g, m), rs)| {
            let s = GroupStats::of(rs.iter().copied());
            vec![
                d.clone(),
                n.to_string(),
                a.clone(),
                c.to_string(),
                h.to_string(),
                g.to_string(),
                m.to_string(),
                s.runs.to_string(),
                fmt(s.mean_time, 2),
                fmt(s.unsolved_pct, 2),
                fmt(s.mean_cuts, 1),
                fmt(s.mean_nodes, 1),
            ]
        })
        .collect();
    Table { header: header.iter().map(|s| s.to_string()).collect(), rows }
}

fn alpha_key(a: f64) -> u64 {
    (a * 1e9).round() as u64
}

/// CPU-time layout: one row per (n, dataset, alpha, norm pair); for each
/// gauge the columns `Time1, Time2, US1, US2` (F1 and F2-BnC).
pub fn time_table(records: &[RunRecord]) -> Table {
    let mut header: Vec<String> = ["n", "dataset", "alpha", "norm_C", "norm_H"].iter().map(|s| s.to_string()).collect();
    for g in NormKind::ALL {
        for col in ["Time1", "Time2", "US1", "US2"] {
            header.push(format!("{g}_{col}"));
        }
    }
    let mut rows_keys = BTreeSet::new();
    let mut cells: BTreeMap<_, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        let row = (r.n, r.dataset.clone(), alpha_key(r.alpha), r.norm_c, r.norm_h);
        rows_keys.insert(row.clone());
        cells.entry((row, r.gauge, r.method)).or_default().push(r);
    }
    let rows = rows_keys
        .into_iter()
        .map(|row| {
            let (n, d, a, c, h) = row.clone();
            let mut out = vec![n.to_string(), d, format!("{}", a as f64 / 1e9), c.to_string(), h.to_string()];
            for g in NormKind::ALL {
                let stats: Vec<Option<GroupStats>> = Method::BOTH
                    .iter()
                    .map(|&m| cells.get(&(row.clone(), g, m)).map(|rs| GroupStats::of(rs.iter().copied())))
                    .collect();
                for s in &stats {
                    out.push(s.map_or(String::new(), |s| fmt(s.mean_time, 2)));
                }
                for s in &stats {
                    out.push(s.map_or(String::new(), |s| format!("{}%", fmt(s.unsolved_pct, 0))));
                }
            }
            out
        })
        .collect();
    Table { header, rows }
}

/// Cut-count layout: rows are (alpha, norm pair) restricted to pairs with
/// `norm_H` strictly below `norm_C`; columns are (n, dataset, gauge); cells
/// are mean F2-BnC cuts.
pub fn cut_table(records: &[RunRecord]) -> Table {
    let f2: Vec<&RunRecord> =
        records.iter().filter(|r| r.method == Method::F2 && r.norm_h.is_strictly_below(r.norm_c)).collect();
    let mut row_keys = BTreeSet::new();
    let mut col_keys = BTreeSet::new();
    let mut cells: BTreeMap<_, Vec<&RunRecord>> = BTreeMap::new();
    for r in &f2 {
        // (L1, L2) < (L1, LINF) < (L2, LINF) in table order
        let row = (alpha_key(r.alpha), r.norm_c, r.norm_h);
        let col = (r.n, r.dataset.clone(), r.gauge);
        row_keys.insert(row);
        col_keys.insert(col.clone());
        cells.entry((row, col)).or_default().push(*r);
    }
    let mut header: Vec<String> = ["alpha", "norm_C", "norm_H"].iter().map(|s| s.to_string()).collect();
    header.extend(col_keys.iter().map(|(n, d, g)| format!("n{n}_{d}_{g}")));
    let rows = row_keys
        .iter()
        .map(|&(a, c, h)| {
            let mut out = vec![format!("{}", a as f64 / 1e9), c.to_string(), h.to_string()];
            for col in &col_keys {
                out.push(
                    cells
                        .get(&((a, c, h), col.clone()))
                        .map_or(String::new(), |rs| fmt(GroupStats::of(rs.iter().copied()).mean_cuts, 1)),
                );
            }
            out
        })
        .collect();
    Table { header, rows }
}

/// Writes `summary.csv`, `times.csv` and `cuts.csv` into `dir`.
pub fn write_tables(records: &[RunRecord], dir: &Path) -> CliResult<()> {
    if records.is_empty() {
        return Err(CliError::Data("no records to aggregate".into()));
    }
    write_file(&dir.join("summary.csv"), &summary(records).to_csv())?;
    write_file(&dir.join("times.csv"), &time_table(records).to_csv())?;
    write_file(&dir.join("cuts.csv"), &cut_table(records).to_csv())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::records::{RunStatus, SCHEMA_VERSION};
    use hubloc::NormKind::*;

    fn rec(method: Method, gauge: NormKind, time: f64, status: RunStatus, cuts: usize) -> RunRecord {
        RunRecord {
            schema: SCHEMA_VERSION,
            dataset: "AP".into(),
            n: 10,
            alpha: 0.5,
            norm_c: L1,
            norm_h: L2,
            gauge,
            tau: 1.0,
            rho: 0.1,
            method,
            time_s: time,
            status,
            objective: None,
            gap: None,
            cuts,
            nodes: 1,
        }
    }

    #[test]
    fn mean_time() {
        let rs = [rec(Method::F2, L1, 4.0, RunStatus::Optimal, 0), rec(Method::F2, L1, 6.0, RunStatus::Optimal, 0)];
        assert_eq!(GroupStats::of(&rs).mean_time, 5.0);
    }

    #[test]
    fn one_timeout_in_four_is_25_percent() {
        let mut rs = vec![rec(Method::F1, L2, 1.0, RunStatus::Optimal, 0); 3];
        rs.push(rec(Method::F1, L2, 9.0, RunStatus::TimeLimit, 0));
        assert_eq!(GroupStats::of(&rs).unsolved_pct, 25.0);
        let t = time_table(&rs);
        assert_eq!(t.rows.len(), 1);
        let col = t.header.iter().position(|h| h == "L2_US1").unwrap();
        assert_eq!(t.rows[0][col], "25%");
    }

    #[test]
    fn errors_count_as_unsolved() {
        let rs = [rec(Method::F2, L1, 1.0, RunStatus::Error, 0), rec(Method::F2, L1, 1.0, RunStatus::Optimal, 0)];
        assert_eq!(GroupStats::of(&rs).unsolved_pct, 50.0);
    }

    #[test]
    fn cut_table_keeps_strict_pairs_and_f2_only() {
        let mut rs = vec![rec(Method::F2, L1, 1.0, RunStatus::Optimal, 10), rec(Method::F2, L1, 1.0, RunStatus::Optimal, 20)];
        rs.push(rec(Method::F1, L1, 1.0, RunStatus::Optimal, 999));
        let mut same = rec(Method::F2, L1, 1.0, RunStatus::Optimal, 999);
        same.norm_h = L1;
        rs.push(same);
        let t = cut_table(&rs);
        assert_eq!(t.rows, vec![vec!["0.5".to_string(), "L1".into(), "L2".into(), "15.0".into()]]);
        assert_eq!(t.header[3], "n10_AP_L1");
    }

    #[test]
    fn summary_groups_by_method() {
        let rs = [rec(Method::F1, L1, 1.0, RunStatus::Optimal, 0), rec(Method::F2, L1, 3.0, RunStatus::Optimal, 5)];
        let s = summary(&rs);
        assert_eq!(s.rows.len(), 2);
        assert!(s.to_csv().starts_with("dataset,n,alpha"));
    }
}
