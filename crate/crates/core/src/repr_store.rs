//! Aligned multilingual embedding sets: pooling, the `EMB1` binary format and
//! the tab-separated manifest that ties per-language files to layers.
//!
//! `EMB1` layout: magic `EMB1`, u32 LE row count, u32 LE dim, then
//! `rows * dim` little-endian `f64` values in row-major order.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const EMB_MAGIC: &[u8; 4] = b"EMB1";
const EMB_HEADER_LEN: usize = 12;

/// Sub-word representations of one sentence plus a content-token mask.
#[derive(Debug, Clone)]
pub struct TokenMatrix {
    values: Matrix,
    mask: Vec<bool>,
}

impl TokenMatrix {
    pub fn new(values: Matrix, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != values.rows() {
            return Err(Error::ShapeMismatch(format!(
                "mask has {} entries for {} token rows",
                mask.len(),
                values.rows()
            )));
        }
        if !values.is_finite() {
            return Err(Error::NonFinite("token matrix"));
        }
        Ok(Self { values, mask })
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }
}

/// Mean of the unmasked token rows.
pub fn mean_pool(tokens: &TokenMatrix) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; tokens.values.cols()];
    let mut count = 0usize;
    for (row, _) in tokens.values.iter_rows().zip(&tokens.mask).filter(|(_, &keep)| keep) {
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::AllMasked);
    }
    let n = count as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

pub fn encode_embeddings(matrix: &Matrix) -> Result<Vec<u8>> {
    let (rows, cols) = matrix.shape();
    if rows == 0 || cols == 0 {
        return Err(Error::Format(format!("refusing to encode empty {rows}x{cols} matrix")));
    }
    if !matrix.is_finite() {
        return Err(Error::NonFinite("embedding matrix"));
    }
    let rows32 = u32::try_from(rows).map_err(|_| Error::Format("too many rows".into()))?;
    let cols32 = u32::try_from(cols).map_err(|_| Error::Format("dimension too large".into()))?;
    let mut out = Vec::with_capacity(EMB_HEADER_LEN + rows * cols * 8);
    out.extend_from_slice(EMB_MAGIC);
    out.extend_from_slice(&rows32.to_le_bytes());
    out.extend_from_slice(&cols32.to_le_bytes());
    for v in matrix.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Decodes an `EMB1` payload. Trailing bytes after the declared payload are rejected.
pub fn decode_embeddings(bytes: &[u8]) -> Result<Matrix> {
    if bytes.len() < EMB_HEADER_LEN {
        return Err(Error::Format(format!("header truncated ({} bytes)", bytes.len())));
    }
    if &bytes[..4] != EMB_MAGIC {
        return Err(Error::Format("bad magic, expected EMB1".into()));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::Format(format!("empty {rows}x{cols} matrix")));
    }
    let payload = &bytes[EMB_HEADER_LEN..];
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::Format("declared size overflows".into()))?;
    if payload.len() < expected {
        return Err(Error::Format(format!(
            "payload truncated: {rows}x{cols} needs {expected} bytes, found {}",
            payload.len()
        )));
    }
    if payload.len() > expected {
        return Err(Error::Format(format!(
            "{} trailing bytes after payload",
            payload.len() - expected
        )));
    }
    let data: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("embedding file"));
    }
    Matrix::from_vec(rows, cols, data)
}

pub fn write_embeddings(path: impl AsRef<Path>, matrix: &Matrix) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_embeddings(matrix)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_embeddings(&bytes)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub language: String,
    pub layer: i64,
    pub path: PathBuf,
}

/// One `<lang>\t<layer>\t<path>` entry per line; `#` lines are comments.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert((e.language.as_str(), e.layer)) {
                return Err(Error::Format(format!(
                    "duplicate manifest entry for language {} layer {}",
                    e.language, e.layer
                )));
            }
        }
        Ok(Self { entries })
    }

    /// Parses manifest text. Relative paths are resolved against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [lang, layer, path] = fields[..] else {
                return Err(Error::Format(format!(
                    "manifest line {}: expected 3 tab-separated fields, found {}",
                    lineno + 1,
                    fields.len()
                )));
            };
            if lang.is_empty() || path.is_empty() {
                return Err(Error::Format(format!("manifest line {}: empty field", lineno + 1)));
            }
            let layer: i64 = layer.trim().parse().map_err(|_| {
                Error::Format(format!("manifest line {}: bad layer {layer:?}", lineno + 1))
            })?;
            let path = Path::new(path);
            let path = if path.is_absolute() { path.to_path_buf() } else { base_dir.join(path) };
            entries.push(ManifestEntry { language: lang.to_string(), layer, path });
        }
        Self::new(entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    /// Serializes with paths written as given (no relativization).
    pub fn to_text(&self) -> String {
        let mut out = String::from("# lang\tlayer\tpath\n");
        for e in &self.entries {
            out.push_str(&format!("{}\t{}\t{}\n", e.language, e.layer, e.path.display()));
        }
        out
    }
}

/// Per-language sentence matrices whose rows are translation-aligned.
#[derive(Debug, Clone)]
pub struct EmbeddingSet {
    languages: Vec<String>,
    matrices: Vec<Matrix>,
    layer: i64,
}

impl EmbeddingSet {
    pub fn new(languages: Vec<String>, matrices: Vec<Matrix>, layer: i64) -> Result<Self> {
        if languages.len() != matrices.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} language tags for {} matrices",
                languages.len(),
                matrices.len()
            )));
        }
        if languages.len() < 2 {
            return Err(Error::MissingLanguage { layer, found: languages.len() });
        }
        let shape = matrices[0].shape();
        for (lang, m) in languages.iter().zip(&matrices) {
            if m.shape() != shape {
                return Err(Error::ShapeMismatch(format!(
                    "language {lang} is {}x{}, expected {}x{}",
                    m.rows(),
                    m.cols(),
                    shape.0,
                    shape.1
                )));
            }
            if !m.is_finite() {
                return Err(Error::NonFinite("embedding set"));
            }
        }
        if shape.0 < 2 || shape.1 == 0 {
            return Err(Error::ShapeMismatch(format!(
                "embedding sets need at least 2 rows and 1 column, got {}x{}",
                shape.0, shape.1
            )));
        }
        Ok(Self { languages, matrices, layer })
    }

    pub fn languages(&self) -> &[String] {
        &self.languages
    }

    pub fn matrices(&self) -> &[Matrix] {
        &self.matrices
    }

    pub fn matrix(&self, lang_index: usize) -> &Matrix {
        &self.matrices[lang_index]
    }

    pub fn layer(&self) -> i64 {
        self.layer
    }

    pub fn num_languages(&self) -> usize {
        self.languages.len()
    }

    /// Number of aligned tuples (rows per language).
    pub fn len(&self) -> usize {
        self.matrices[0].rows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.matrices[0].cols()
    }
}

/// Loads every language of `layer` listed in the manifest, in manifest order.
pub fn load_set(manifest: &Manifest, layer: i64) -> Result<EmbeddingSet> {
    let selected: Vec<&ManifestEntry> =
        manifest.entries().iter().filter(|e| e.layer == layer).collect();
    if selected.len() < 2 {
        return Err(Error::MissingLanguage { layer, found: selected.len() });
    }
    let mut languages = Vec::with_capacity(selected.len());
    let mut matrices = Vec::with_capacity(selected.len());
    for e in selected {
        languages.push(e.language.clone());
        matrices.push(read_embeddings(&e.path)?);
    }
    EmbeddingSet::new(languages, matrices, layer)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tm(rows: &[[f64; 2]], mask: &[bool]) -> TokenMatrix {
        TokenMatrix::new(Matrix::from_rows(rows).unwrap(), mask.to_vec()).unwrap()
    }

    #[test]
    fn pool_single_unmasked_row() {
        let t = tm(&[[3.0, -1.0], [7.0, 7.0]], &[true, false]);
        assert_eq!(mean_pool(&t).unwrap(), vec![3.0, -1.0]);
    }

    #[test]
    fn pool_equal_rows() {
        let t = tm(&[[0.25, 2.0]; 3], &[true; 3]);
        assert_eq!(mean_pool(&t).unwrap(), vec![0.25, 2.0]);
    }

    #[test]
    fn pool_skips_special_tokens() {
        let t = tm(&[[1.0, 0.0], [0.0, 1.0], [9.0, 9.0]], &[true, true, false]);
        assert_eq!(mean_pool(&t).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn pool_all_masked() {
        let t = tm(&[[1.0, 0.0]], &[false]);
        assert!(matches!(mean_pool(&t), Err(Error::AllMasked)));
    }

    #[test]
    fn token_matrix_rejects_nan_and_bad_mask() {
        let m = Matrix::from_rows(&[[f64::NAN, 0.0]]).unwrap();
        assert!(matches!(TokenMatrix::new(m, vec![true]), Err(Error::NonFinite(_))));
        let m = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        assert!(matches!(TokenMatrix::new(m, vec![true, true]), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn emb_round_trip_file() {
        let dir = tempfile::tempdir().unwrap();
        let m = Matrix::from_rows(&[[1.0, -2.5, 3.25], [0.1, 1e-300, -0.0]]).unwrap();
        let p = dir.path().join("x.emb");
        write_embeddings(&p, &m).unwrap();
        let back = read_embeddings(&p).unwrap();
        assert_eq!(back.shape(), (2, 3));
        for (a, b) in m.as_slice().iter().zip(back.as_slice()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn emb_bad_magic() {
        let mut bytes = encode_embeddings(&Matrix::from_rows(&[[1.0]]).unwrap()).unwrap();
        bytes[0] = b'X';
        assert!(matches!(decode_embeddings(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn emb_truncated_payload() {
        let mut bytes = Vec::from(*EMB_MAGIC);
        bytes.extend_from_slice(&4u32.to_le_bytes());
        bytes.extend_from_slice(&3u32.to_le_bytes());
        bytes.extend_from_slice(&[0u8; 8 * 11]);
        assert!(matches!(decode_embeddings(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn emb_huge_header_does_not_allocate() {
        let mut bytes = Vec::from(*EMB_MAGIC);
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(decode_embeddings(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn emb_rejects_non_finite_and_empty() {
        let m = Matrix::from_rows(&[[f64::INFINITY]]).unwrap();
        assert!(matches!(encode_embeddings(&m), Err(Error::NonFinite(_))));
        assert!(matches!(encode_embeddings(&Matrix::zeros(3, 0)), Err(Error::Format(_))));
        let mut bytes = Vec::from(*EMB_MAGIC);
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(decode_embeddings(&bytes), Err(Error::NonFinite(_))));
    }

    #[test]
    fn manifest_parse_and_errors() {
        let base = Path::new("/data");
        let m = Manifest::parse("# comment\nen\t0\ten.emb\n\nde\t0\t/abs/de.emb\n", base).unwrap();
        assert_eq!(m.entries().len(), 2);
        assert_eq!(m.entries()[0].path, PathBuf::from("/data/en.emb"));
        assert_eq!(m.entries()[1].path, PathBuf::from("/abs/de.emb"));
        assert!(Manifest::parse("en\t0\ta\nen\t0\tb\n", base).is_err());
        assert!(Manifest::parse("en 0 a\n", base).is_err());
        assert!(Manifest::parse("en\tx\ta\n", base).is_err());
    }

    fn write_set(dir: &Path, shapes: &[(&str, usize, usize)]) -> Manifest {
        let mut entries = Vec::new();
        for (lang, m, d) in shapes {
            let data = (0..m * d).map(|v| v as f64 + 0.5).collect();
            let path = dir.join(format!("{lang}.emb"));
            write_embeddings(&path, &Matrix::from_vec(*m, *d, data).unwrap()).unwrap();
            entries.push(ManifestEntry { language: lang.to_string(), layer: 0, path });
        }
        Manifest::new(entries).unwrap()
    }

    #[test]
    fn load_set_happy_path() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_set(dir.path(), &[("en", 10, 4), ("fr", 10, 4)]);
        let set = load_set(&manifest, 0).unwrap();
        assert_eq!((set.num_languages(), set.len(), set.dim()), (2, 10, 4));
        assert_eq!(set.languages(), ["en", "fr"]);
    }

    #[test]
    fn load_set_shape_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_set(dir.path(), &[("en", 10, 4), ("fr", 9, 4)]);
        assert!(matches!(load_set(&manifest, 0), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn load_set_missing_language() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_set(dir.path(), &[("en", 10, 4)]);
        assert!(matches!(load_set(&manifest, 0), Err(Error::MissingLanguage { .. })));
        assert!(matches!(load_set(&manifest, 3), Err(Error::MissingLanguage { found: 0, .. })));
    }

    #[test]
    fn set_rejects_single_row() {
        let one = Matrix::from_rows(&[[1.0]]).unwrap();
        let r = EmbeddingSet::new(vec!["a".into(), "b".into()], vec![one.clone(), one], 0);
        assert!(matches!(r, Err(Error::ShapeMismatch(_))));
    }
}
