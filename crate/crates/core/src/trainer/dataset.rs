//! Labeled classification data: an `EMB1` feature matrix plus a labels file
//! with one `<label>\t<language>` line per row.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::repr_store::{read_embeddings, write_embeddings};

pub const FEATURES_FILE: &str = "features.emb";
pub const LABELS_FILE: &str = "labels.tsv";

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub languages: Vec<String>,
}

impl LabeledDataset {
    pub fn new(features: Matrix, labels: Vec<usize>, languages: Vec<String>) -> Result<Self> {
        if labels.len() != features.rows() || languages.len() != features.rows() {
            return Err(Error::ShapeMismatch(format!(
                "{} feature rows, {} labels, {} language tags",
                features.rows(),
                labels.len(),
                languages.len()
            )));
        }
        if !features.is_finite() {
            return Err(Error::NonFinite("dataset features"));
        }
        Ok(Self { features, labels, languages })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn x(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    pub fn num_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    pub fn check_classes(&self, num_classes: usize) -> Result<()> {
        match self.labels.iter().find(|&&y| y >= num_classes) {
            Some(y) => Err(Error::ShapeMismatch(format!("label {y} out of range for {num_classes} classes"))),
            None => Ok(()),
        }
    }

    /// Distinct language tags in order of first appearance.
    pub fn language_order(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for l in &self.languages {
            if !out.contains(l) {
                out.push(l.clone());
            }
        }
        out
    }

    /// Groups rows into translation tuples: the k-th row of every language
    /// forms tuple k. Languages must have equal row counts.
    pub fn tuples(&self) -> Result<Vec<Vec<usize>>> {
        let order = self.language_order();
        let mut per_lang: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, l) in self.languages.iter().enumerate() {
            per_lang.entry(l).or_default().push(i);
        }
        let counts: Vec<usize> = order.iter().map(|l| per_lang[l.as_str()].len()).collect();
        if counts.iter().any(|&c| c != counts[0]) {
            return Err(Error::ShapeMismatch(format!("languages have unequal row counts {counts:?}")));
        }
        Ok((0..counts[0])
            .map(|k| order.iter().map(|l| per_lang[l.as_str()][k]).collect())
            .collect())
    }

    /// Copy without row `index`.
    pub fn without(&self, index: usize) -> LabeledDataset {
        let keep: Vec<usize> = (0..self.len()).filter(|&i| i != index).collect();
        LabeledDataset {
            features: self.features.permute_rows(&keep),
            labels: keep.iter().map(|&i| self.labels[i]).collect(),
            languages: keep.iter().map(|&i| self.languages[i].clone()).collect(),
        }
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        write_embeddings(dir.join(FEATURES_FILE), &self.features)?;
        let path = dir.join(LABELS_FILE);
        fs::write(&path, format_labels(&self.labels, &self.languages)).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let features = read_embeddings(dir.join(FEATURES_FILE))?;
        let path = dir.join(LABELS_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let (labels, languages) = parse_labels(&text)?;
        Self::new(features, labels, languages)
    }
}

pub fn format_labels(labels: &[usize], languages: &[String]) -> String {
    labels.iter().zip(languages).map(|(y, l)| format!("{y}\t{l}\n")).collect()
}

/// Parses `<label>\t<language>` lines. Blank lines and `#` comments are skipped.
pub fn parse_labels(text: &str) -> Result<(Vec<usize>, Vec<String>)> {
    let mut labels = Vec::new();
    let mut languages = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((label, lang)) = line.split_once('\t') else {
            return Err(Error::Format(format!("labels line {}: expected <label>\\t<language>", lineno + 1)));
        };
        if lang.is_empty() || lang.contains('\t') {
            return Err(Error::Format(format!("labels line {}: bad language tag", lineno + 1)));
        }
        let y: usize = label
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("labels line {}: bad label {label:?}", lineno + 1)))?;
        labels.push(y);
        languages.push(lang.to_string());
    }
    Ok((labels, languages))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> LabeledDataset {
        let f = Matrix::from_rows(&[[1.0], [2.0], [3.0], [4.0]]).unwrap();
        LabeledDataset::new(f, vec![0, 1, 0, 1], vec!["en".into(), "en".into(), "de".into(), "de".into()]).unwrap()
    }

    #[test]
    fn labels_round_trip() {
        let d = toy();
        let text = format_labels(&d.labels, &d.languages);
        assert_eq!(parse_labels(&text).unwrap(), (d.labels.clone(), d.languages.clone()));
        assert!(parse_labels("x\ten\n").is_err());
        assert!(parse_labels("1 en\n").is_err());
        assert!(parse_labels("1\ten\tfr\n").is_err());
    }

    #[test]
    fn tuples_follow_language_order() {
        assert_eq!(toy().tuples().unwrap(), vec![vec![0, 2], vec![1, 3]]);
        let d = toy().without(3);
        assert!(d.tuples().is_err());
        assert_eq!(d.len(), 3);
        assert_eq!(d.x(2), &[3.0]);
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let d = toy();
        d.save(dir.path()).unwrap();
        assert_eq!(LabeledDataset::load(dir.path()).unwrap(), d);
    }
}
