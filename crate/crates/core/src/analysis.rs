//! Frequency distributions of feature combinations versus individual
//! feature values.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::corpus_io::AnnotatedSentence;
use crate::error::{Error, Result};
use crate::vocab::canonical_combination;

/// One log2 bin: counts `lower..=upper` and how many types fall in it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BinRow {
    pub bin: u32,
    pub lower: u64,
    pub upper: u64,
    pub types: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SparsityReport {
    /// Word occurrences carrying at least one feature.
    pub occurrences: u64,
    pub distinct_combinations: usize,
    pub distinct_features: usize,
    pub combination_histogram: BTreeMap<String, u64>,
    pub feature_histogram: BTreeMap<String, u64>,
    pub combination_bins: Vec<BinRow>,
    pub feature_bins: Vec<BinRow>,
}

/// `floor(log2(c))` for `c >= 1`.
pub fn log2_bin(c: u64) -> u32 {
    assert!(c > 0, "count must be positive");
    63 - c.leading_zeros()
}

/// Type counts per log2 bin, for every bin from 0 to the largest occupied.
pub fn bin_histogram(hist: &BTreeMap<String, u64>) -> Vec<BinRow> {
    let mut per_bin: BTreeMap<u32, usize> = BTreeMap::new();
    for &c in hist.values() {
        *per_bin.entry(log2_bin(c)).or_default() += 1;
    }
    let top = per_bin.keys().next_back().copied();
    let Some(top) = top else { return Vec::new() };
    (0..=top)
        .map(|b| BinRow {
            bin: b,
            lower: 1u64 << b,
            upper: (1u64 << (b + 1)) - 1,
            types: per_bin.get(&b).copied().unwrap_or(0),
        })
        .collect()
}

type Counts = (u64, BTreeMap<String, u64>, BTreeMap<String, u64>);

fn merge(mut a: Counts, b: Counts) -> Counts {
    a.0 += b.0;
    for (k, v) in b.1 {
        *a.1.entry(k).or_default() += v;
    }
    for (k, v) in b.2 {
        *a.2.entry(k).or_default() += v;
    }
    a
}

pub fn sparsity_report(corpus: &[AnnotatedSentence]) -> SparsityReport {
    let (occurrences, combination_histogram, feature_histogram) = corpus
        .par_iter()
        .fold(Counts::default, |mut acc, sentence| {
            for t in sentence.tokens() {
                if t.features().is_empty() {
                    continue;
                }
                acc.0 += 1;
                *acc.1.entry(canonical_combination(t.features())).or_default() += 1;
                for f in t.features() {
                    *acc.2.entry(f.clone()).or_default() += 1;
                }
            }
            acc
        })
        .reduce(Counts::default, merge);
    SparsityReport {
        occurrences,
        distinct_combinations: combination_histogram.len(),
        distinct_features: feature_histogram.len(),
        combination_bins: bin_histogram(&combination_histogram),
        feature_bins: bin_histogram(&feature_histogram),
        combination_histogram,
        feature_histogram,
    }
}

fn csv_field(out: &mut String, v: &str) {
    if v.contains(',') || v.starts_with('"') {
        out.push('"');
        out.push_str(&v.replace('"', "\"\""));
        out.push('"');
    } else {
        out.push_str(v);
    }
}

/// `token,count` rows, most frequent first, ties by token.
pub fn histogram_csv(hist: &BTreeMap<String, u64>) -> String {
    let mut rows: Vec<(&String, &u64)> = hist.iter().collect();
    rows.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
    let mut s = String::from("token,count\n");
    for (t, c) in rows {
        csv_field(&mut s, t);
        let _ = writeln!(s, ",{c}");
    }
    s
}

pub fn bins_csv(report: &SparsityReport) -> String {
    let mut s = String::from("space,bin,lower,upper,types\n");
    for (space, rows) in [
        ("combination", &report.combination_bins),
        ("feature", &report.feature_bins),
    ] {
        for r in rows {
            let _ = writeln!(s, "{space},{},{},{},{}", r.bin, r.lower, r.upper, r.types);
        }
    }
    s
}

/// Parse a `token,count` file back into a histogram.
pub fn parse_histogram_csv(text: &str) -> Result<BTreeMap<String, u64>> {
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let bad = |line: usize, message: String| Error::Format {
        what: "csv",
        line,
        message,
    };
    let header = reader.headers().map_err(|e| bad(1, e.to_string()))?;
    if header != vec!["token", "count"] {
        return Err(bad(1, "expected header token,count".into()));
    }
    let mut out = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            bad(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != 2 {
            return Err(bad(line, format!("expected 2 fields, found {}", record.len())));
        }
        let c: u64 = record[1]
            .parse()
            .map_err(|_| bad(line, format!("bad count {:?}", &record[1])))?;
        if out.insert(record[0].to_string(), c).is_some() {
            return Err(bad(line, format!("duplicate token {:?}", &record[0])));
        }
    }
    Ok(out)
}

/// Write `combinations.csv`, `features.csv` and `bins.csv` into `dir`.
pub fn export_report(report: &SparsityReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, body) in [
        ("combinations.csv", histogram_csv(&report.combination_histogram)),
        ("features.csv", histogram_csv(&report.feature_histogram)),
        ("bins.csv", bins_csv(report)),
    ] {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}
