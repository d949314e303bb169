//! Seeded multi-parallel synthetic data with a tunable compression level λ.
//!
//! Every tuple shares a latent `s_i ~ N(0, I)`. Language `q` sees
//! `λ s_i + (1 − λ)(A_q s_i + b_q + noise)`, where `A_q` is a random rotation
//! times a diagonal scale with condition number at most 2. Labels are a
//! function of the latent only, so they agree across languages.

use nalgebra::DMatrix;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::{Error, Result};
use crate::matrix::{norm, Matrix};
use crate::repr_store::EmbeddingSet;
use crate::trainer::LabeledDataset;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub num_languages: usize,
    pub tuples: usize,
    pub dim: usize,
    pub classes: usize,
    /// 1 = identical representations across languages.
    pub lambda: f64,
    pub noise_scale: f64,
    /// Norm of the per-language offset `b_q`.
    pub offset_scale: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            num_languages: 4,
            tuples: 200,
            dim: 8,
            classes: 2,
            lambda: 1.0,
            noise_scale: 0.05,
            offset_scale: 1.0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Domain(format!("lambda {} not in [0, 1]", self.lambda)));
        }
        if self.num_languages < 2 {
            return Err(Error::TooFewLanguages(self.num_languages));
        }
        if self.tuples < 2 || self.dim == 0 || self.classes == 0 {
            return Err(Error::Domain(format!(
                "need tuples >= 2, dim >= 1, classes >= 1 (got {}, {}, {})",
                self.tuples, self.dim, self.classes
            )));
        }
        if !(self.noise_scale >= 0.0 && self.offset_scale >= 0.0) {
            return Err(Error::Domain("noise_scale and offset_scale must be >= 0".into()));
        }
        Ok(())
    }

    pub fn language_tags(&self) -> Vec<String> {
        (0..self.num_languages).map(|q| format!("l{q}")).collect()
    }
}

fn gaussian_vec<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn unit_vec<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let v = gaussian_vec(rng, n);
        let len = norm(&v);
        if len > 1e-12 {
            return v.into_iter().map(|x| x / len).collect();
        }
    }
}

/// Haar-distributed rotation from the QR factorization of a Gaussian matrix.
fn random_rotation<R: Rng>(rng: &mut R, d: usize) -> DMatrix<f64> {
    let g = DMatrix::from_vec(d, d, gaussian_vec(rng, d * d));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Quantile buckets of the latent projection onto a random direction.
fn latent_labels<R: Rng>(rng: &mut R, latents: &[Vec<f64>], classes: usize) -> Vec<usize> {
    let w = unit_vec(rng, latents[0].len());
    let proj: Vec<f64> = latents.iter().map(|s| s.iter().zip(&w).map(|(a, b)| a * b).sum()).collect();
    let mut order: Vec<usize> = (0..proj.len()).collect();
    order.sort_by(|&a, &b| proj[a].total_cmp(&proj[b]));
    let m = proj.len();
    let mut labels = vec![0; m];
    for (rank, &i) in order.iter().enumerate() {
        labels[i] = rank * classes / m;
    }
    labels
}

pub fn gen_parallel_set(spec: &SynthSpec) -> Result<(EmbeddingSet, Vec<usize>)> {
    spec.validate()?;
    let (m, d) = (spec.tuples, spec.dim);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let latents: Vec<Vec<f64>> = (0..m).map(|_| gaussian_vec(&mut rng, d)).collect();
    let labels = latent_labels(&mut rng, &latents, spec.classes);
    let scale_dist = Uniform::new_inclusive(std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::SQRT_2)
        .expect("valid range");

    let lam = spec.lambda;
    let mut matrices = Vec::with_capacity(spec.num_languages);
    for _ in 0..spec.num_languages {
        // Draws happen for every λ so that the same seed yields the same maps.
        let rotation = random_rotation(&mut rng, d);
        let scales: Vec<f64> = (0..d).map(|_| scale_dist.sample(&mut rng)).collect();
        let offset: Vec<f64> = unit_vec(&mut rng, d).into_iter().map(|v| v * spec.offset_scale).collect();
        let mut out = Matrix::zeros(m, d);
        for (i, s) in latents.iter().enumerate() {
            let noise = gaussian_vec(&mut rng, d);
            let row = out.row_mut(i);
            if lam == 1.0 {
                row.copy_from_slice(s);
                continue;
            }
            for (a, r) in row.iter_mut().enumerate() {
                let mapped: f64 = (0..d).map(|b| rotation[(a, b)] * scales[b] * s[b]).sum();
                let language_view = mapped + offset[a] + spec.noise_scale * noise[a];
                *r = lam * s[a] + (1.0 - lam) * language_view;
            }
        }
        matrices.push(out);
    }
    Ok((EmbeddingSet::new(spec.language_tags(), matrices, 0)?, labels))
}

/// Flattens the parallel set language by language into `m · |L|` examples.
pub fn gen_classification_data(spec: &SynthSpec) -> Result<LabeledDataset> {
    let (set, labels) = gen_parallel_set(spec)?;
    dataset_from_set(&set, &labels)
}

pub fn dataset_from_set(set: &EmbeddingSet, labels: &[usize]) -> Result<LabeledDataset> {
    if labels.len() != set.len() {
        return Err(Error::ShapeMismatch(format!("{} labels for {} tuples", labels.len(), set.len())));
    }
    let refs: Vec<&Matrix> = set.matrices().iter().collect();
    let features = Matrix::vstack(&refs)?;
    let mut all_labels = Vec::with_capacity(features.rows());
    let mut languages = Vec::with_capacity(features.rows());
    for lang in set.languages() {
        all_labels.extend_from_slice(labels);
        languages.extend(std::iter::repeat_n(lang.clone(), set.len()));
    }
    LabeledDataset::new(features, all_labels, languages)
}

/// Replaces row `index` by `x_index + shift` with label `label`.
pub fn plant_outlier_at(dataset: &LabeledDataset, index: usize, shift: &[f64], label: usize) -> Result<LabeledDataset> {
    if index >= dataset.len() || shift.len() != dataset.dim() {
        return Err(Error::ShapeMismatch("outlier index or shift does not fit the dataset".into()));
    }
    let mut out = dataset.clone();
    for (v, s) in out.features.row_mut(index).iter_mut().zip(shift) {
        *v += s;
    }
    out.labels[index] = label;
    if !out.features.is_finite() {
        return Err(Error::NonFinite("planted outlier"));
    }
    Ok(out)
}

/// Picks one random example of class `y`, gives it label `y + 1 (mod c)` and
/// moves it `magnitude` further into class `y`, along the direction from the
/// centroid of the new label's class to the centroid of the old one. Falls
/// back to a random direction when a centroid is missing or they coincide.
pub fn plant_outlier(dataset: &LabeledDataset, magnitude: f64, seed: u64) -> Result<(LabeledDataset, usize)> {
    if !(magnitude >= 0.0 && magnitude.is_finite()) {
        return Err(Error::Domain(format!("outlier magnitude {magnitude} must be finite and >= 0")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let indices: Vec<usize> = (0..dataset.len()).collect();
    let &index = indices.choose(&mut rng).ok_or_else(|| Error::Domain("empty dataset".into()))?;
    let fallback = unit_vec(&mut rng, dataset.dim());
    let classes = dataset.num_classes().max(2);
    let (from, to) = (dataset.labels[index], (dataset.labels[index] + 1) % classes);
    let direction = match (centroid(dataset, from), centroid(dataset, to)) {
        (Some(a), Some(b)) => {
            let diff: Vec<f64> = a.iter().zip(&b).map(|(a, b)| a - b).collect();
            let norm = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 { diff.into_iter().map(|v| v / norm).collect() } else { fallback }
        }
        _ => fallback,
    };
    let shift: Vec<f64> = direction.into_iter().map(|v| v * magnitude).collect();
    Ok((plant_outlier_at(dataset, index, &shift, to)?, index))
}

fn centroid(dataset: &LabeledDataset, class: usize) -> Option<Vec<f64>> {
    let mut sum = vec![0.0; dataset.dim()];
    let mut count = 0usize;
    for i in (0..dataset.len()).filter(|&i| dataset.labels[i] == class) {
        for (s, v) in sum.iter_mut().zip(dataset.x(i)) {
            *s += v;
        }
        count += 1;
    }
    (count > 0).then(|| sum.into_iter().map(|s| s / count as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{pairwise_report, MetricKind};

    #[test]
    fn compressed_set_is_identical() {
        let (set, _) = gen_parallel_set(&SynthSpec { tuples: 30, ..SynthSpec::default() }).unwrap();
        for m in &set.matrices()[1..] {
            assert_eq!(m, &set.matrices()[0]);
        }
        let r = pairwise_report(&set, MetricKind::Retrieval).unwrap();
        assert_eq!(r.aggregate, 1.0);
    }

    #[test]
    fn deterministic() {
        let spec = SynthSpec { lambda: 0.3, tuples: 20, ..SynthSpec::default() };
        let (a, la) = gen_parallel_set(&spec).unwrap();
        let (b, lb) = gen_parallel_set(&spec).unwrap();
        assert_eq!(a.matrices(), b.matrices());
        assert_eq!(la, lb);
    }

    #[test]
    fn uncompressed_retrieval_near_chance() {
        let spec = SynthSpec { lambda: 0.0, tuples: 100, offset_scale: 5.0, ..SynthSpec::default() };
        let mut total = 0.0;
        for seed in 0..5 {
            let (set, _) = gen_parallel_set(&SynthSpec { seed, ..spec.clone() }).unwrap();
            total += pairwise_report(&set, MetricKind::Retrieval).unwrap().aggregate;
        }
        assert!(total / 5.0 < 3.0 / 100.0, "{}", total / 5.0);
    }

    #[test]
    fn rejects_bad_lambda() {
        assert!(matches!(gen_parallel_set(&SynthSpec { lambda: 1.5, ..SynthSpec::default() }), Err(Error::Domain(_))));
    }

    #[test]
    fn flattening_counts_and_balance() {
        let spec = SynthSpec { tuples: 200, num_languages: 3, ..SynthSpec::default() };
        let d = gen_classification_data(&spec).unwrap();
        assert_eq!(d.len(), 600);
        let ones = d.labels.iter().filter(|&&y| y == 1).count() as f64;
        assert!((ones / 600.0 - 0.5).abs() <= 0.1);
        assert_eq!(d.tuples().unwrap().len(), 200);
    }

    #[test]
    fn zero_magnitude_same_label_is_noop() {
        let d = gen_classification_data(&SynthSpec { tuples: 10, ..SynthSpec::default() }).unwrap();
        let same = plant_outlier_at(&d, 3, &[0.0; 8], d.labels[3]).unwrap();
        assert_eq!(same, d);
    }

    #[test]
    fn planted_point_moves() {
        let d = gen_classification_data(&SynthSpec { tuples: 10, classes: 3, ..SynthSpec::default() }).unwrap();
        let (p, idx) = plant_outlier(&d, 10.0, 4).unwrap();
        let moved: Vec<f64> = p.x(idx).iter().zip(d.x(idx)).map(|(a, b)| a - b).collect();
        assert!((norm(&moved) - 10.0).abs() < 1e-9);
        assert_eq!(p.labels[idx], (d.labels[idx] + 1) % 3);
        for i in (0..d.len()).filter(|&i| i != idx) {
            assert_eq!(p.x(i), d.x(i));
        }
    }
}
