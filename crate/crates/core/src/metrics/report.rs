use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fmt::g17;
use crate::matrix::Matrix;
use crate::repr_store::EmbeddingSet;

use super::{isoscore, linear_cka, retrieval_precision, rsa_score};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MetricKind {
    Retrieval,
    Cka,
    Rsa,
    IsoScore,
}

impl MetricKind {
    pub const ALL: [MetricKind; 4] =
        [MetricKind::Retrieval, MetricKind::Cka, MetricKind::Rsa, MetricKind::IsoScore];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Retrieval => "retrieval",
            MetricKind::Cka => "cka",
            MetricKind::Rsa => "rsa",
            MetricKind::IsoScore => "isoscore",
        }
    }

    pub fn rule(self) -> AggregationRule {
        match self {
            MetricKind::Retrieval => AggregationRule::FullOffDiagonal,
            MetricKind::Cka | MetricKind::Rsa => AggregationRule::UpperTriangle,
            MetricKind::IsoScore => AggregationRule::Pooled,
        }
    }

    fn pair_value(self, x: &Matrix, y: &Matrix) -> Result<f64> {
        match self {
            MetricKind::Retrieval => retrieval_precision(x, y),
            MetricKind::Cka => linear_cka(x, y),
            MetricKind::Rsa => rsa_score(x, y).map(|c| c.rho),
            MetricKind::IsoScore => unreachable!("IsoScore is pooled, not pairwise"),
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetricKind::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown metric {s:?}")))
    }
}

/// How per-pair values are combined into the aggregate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregationRule {
    /// All ordered pairs `q != r`.
    FullOffDiagonal,
    /// Unordered pairs `q < r`.
    UpperTriangle,
    /// One value over all languages stacked together.
    Pooled,
}

#[derive(Debug, Clone)]
pub struct MetricReport {
    pub metric: MetricKind,
    pub layer: i64,
    pub pairs: Vec<(String, String, f64)>,
    pub aggregate: f64,
    pub rule: AggregationRule,
}

impl MetricReport {
    pub const CSV_HEADER: &'static str = "metric,lang_a,lang_b,layer,value";

    /// Writes data rows (no header) followed by the `ALL,ALL` aggregate row.
    pub fn write_csv_rows<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        for (a, b, v) in &self.pairs {
            writeln!(out, "{},{a},{b},{},{}", self.metric, self.layer, g17(*v))?;
        }
        writeln!(out, "{},ALL,ALL,{},{}", self.metric, self.layer, g17(self.aggregate))
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        writeln!(buf, "{}", Self::CSV_HEADER).unwrap();
        self.write_csv_rows(&mut buf).unwrap();
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

pub fn pairwise_report(set: &EmbeddingSet, metric: MetricKind) -> Result<MetricReport> {
    let langs = set.languages();
    let rule = metric.rule();
    if rule == AggregationRule::Pooled {
        let refs: Vec<&Matrix> = set.matrices().iter().collect();
        let aggregate = isoscore(&Matrix::vstack(&refs)?)?;
        return Ok(MetricReport { metric, layer: set.layer(), pairs: Vec::new(), aggregate, rule });
    }

    let l = langs.len();
    let index_pairs: Vec<(usize, usize)> = match rule {
        AggregationRule::FullOffDiagonal => {
            (0..l).flat_map(|q| (0..l).filter(move |&r| r != q).map(move |r| (q, r))).collect()
        }
        _ => (0..l).flat_map(|q| (q + 1..l).map(move |r| (q, r))).collect(),
    };
    let values: Vec<f64> = index_pairs
        .par_iter()
        .map(|&(q, r)| {
            metric.pair_value(set.matrix(q), set.matrix(r)).map_err(|e| Error::Pair {
                metric: metric.name(),
                lang_a: langs[q].clone(),
                lang_b: langs[r].clone(),
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    // Sequential sum in (q, r) order keeps the aggregate bit-reproducible.
    let aggregate = values.iter().sum::<f64>() / values.len() as f64;
    let pairs = index_pairs
        .iter()
        .zip(values)
        .map(|(&(q, r), v)| (langs[q].clone(), langs[r].clone(), v))
        .collect();
    Ok(MetricReport { metric, layer: set.layer(), pairs, aggregate, rule })
}
