//! Discrete speech tokens at 12.5 tokens/s: factor-8 pooling of 100 Hz band
//! amplitudes followed by nearest-neighbour vector quantization.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;

use crate::audio::mel_frames;
use crate::error::{Error, Result};
use crate::nn::checkpoint::{read_records, write_records};
use crate::rng::derive_rng;
use crate::tensor::Tensor;

/// Mel frames per speech token (100 frames/s over 12.5 tokens/s).
pub const POOL_FACTOR: usize = 8;
pub const TOKEN_RATE_HZ: f64 = 12.5;
pub const KMEANS_ITERATIONS: usize = 25;
pub const CODEBOOK_RECORD: &str = "tokenizer.codebook";

/// Non-overlapping means over windows of 8 frames; a trailing partial window
/// is averaged over the frames it has.
pub fn pool_features(mel: &Tensor) -> Tensor {
    let (n, d) = (mel.rows(), mel.cols());
    let out_len = n.div_ceil(POOL_FACTOR);
    let mut out = Tensor::zeros(&[out_len, d]);
    for w in 0..out_len {
        let start = w * POOL_FACTOR;
        let end = (start + POOL_FACTOR).min(n);
        let row = out.row_mut(w);
        for t in start..end {
            for (o, x) in row.iter_mut().zip(mel.row(t)) {
                *o += x;
            }
        }
        let count = (end - start) as f64;
        row.iter_mut().for_each(|o| *o /= count);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct SpeechTokenSequence {
    pub ids: Vec<usize>,
}

impl SpeechTokenSequence {
    pub fn new(ids: Vec<usize>) -> Self {
        Self { ids }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.ids.len() as f64 / TOKEN_RATE_HZ
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    vectors: Tensor,
}

impl Codebook {
    /// Rejects non-finite or duplicate code vectors.
    pub fn new(vectors: Tensor) -> Result<Self> {
        if vectors.shape().len() != 2 || vectors.rows() == 0 || vectors.cols() == 0 {
            return Err(Error::Config(format!(
                "codebook must be a non-empty matrix, got {:?}",
                vectors.shape()
            )));
        }
        if !vectors.is_finite() {
            return Err(Error::Config("codebook has non-finite entries".into()));
        }
        let mut seen = HashSet::new();
        for k in 0..vectors.rows() {
            let key: Vec<u64> = vectors.row(k).iter().map(|v| v.to_bits()).collect();
            if !seen.insert(key) {
                return Err(Error::Config(format!("codebook vector {k} is a duplicate")));
            }
        }
        Ok(Self { vectors })
    }

    pub fn size(&self) -> usize {
        self.vectors.rows()
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn vectors(&self) -> &Tensor {
        &self.vectors
    }

    pub fn code(&self, id: usize) -> Result<&[f64]> {
        if id >= self.size() {
            return Err(Error::TokenOutOfRange { id, size: self.size() });
        }
        Ok(self.vectors.row(id))
    }

    /// Nearest code by squared distance, lowest index on ties.
    pub fn nearest(&self, x: &[f64]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for k in 0..self.size() {
            let d = squared_distance(x, self.vectors.row(k));
            if d < best_d {
                best = k;
                best_d = d;
            }
        }
        best
    }

    pub fn save<W: Write>(&self, w: W) -> Result<()> {
        write_records(w, &[(CODEBOOK_RECORD, &self.vectors)])
    }

    pub fn load<R: Read>(r: R) -> Result<Self> {
        let mut records = read_records(r)?;
        match records.pop() {
            Some(rec) if records.is_empty() && rec.name == CODEBOOK_RECORD => Self::new(rec.value),
            _ => Err(Error::Checkpoint(format!(
                "expected a single `{CODEBOOK_RECORD}` record"
            ))),
        }
    }

    pub fn save_file(&self, path: &Path) -> Result<()> {
        self.save(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load_file(path: &Path) -> Result<Self> {
        Self::load(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// k-means with k-means++ seeding over the distinct rows of `features`,
/// `KMEANS_ITERATIONS` Lloyd iterations, empty clusters re-seeded from the
/// points farthest from their centroids.
pub fn build_codebook(features: &Tensor, v: usize, seed: u64) -> Result<Codebook> {
    if v == 0 {
        return Err(Error::Config("codebook size must be at least 1".into()));
    }
    if features.shape().len() != 2 || !features.is_finite() {
        return Err(Error::Config("codebook features must be a finite matrix".into()));
    }
    let mut seen = HashSet::new();
    let points: Vec<&[f64]> = (0..features.rows())
        .map(|i| features.row(i))
        .filter(|r| seen.insert(r.iter().map(|x| x.to_bits()).collect::<Vec<_>>()))
        .collect();
    if points.len() < v {
        return Err(Error::InsufficientData {
            needed: v,
            got: points.len(),
        });
    }
    let dim = features.cols();
    let mut rng = derive_rng(seed, "tokenizer.kmeans");

    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(v);
    let mut d2: Vec<f64> = vec![f64::INFINITY; points.len()];
    let mut pick = rng.gen_range(0..points.len());
    loop {
        centroids.push(points[pick].to_vec());
        if centroids.len() == v {
            break;
        }
        let c = centroids.last().expect("just pushed");
        for (d, p) in d2.iter_mut().zip(&points) {
            *d = d.min(squared_distance(p, c));
        }
        let total: f64 = d2.iter().sum();
        let mut target = rng.gen::<f64>() * total;
        pick = d2.iter().rposition(|&d| d > 0.0).expect("distinct points remain");
        for (i, &d) in d2.iter().enumerate() {
            if d > 0.0 && target < d {
                pick = i;
                break;
            }
            target -= d;
        }
    }

    let mut book = Codebook::new(Tensor::from_rows(&centroids, dim)?)?;
    let mut assign = vec![0usize; points.len()];
    for _ in 0..KMEANS_ITERATIONS {
        let mut dist = vec![0.0; points.len()];
        for (i, p) in points.iter().enumerate() {
            assign[i] = book.nearest(p);
            dist[i] = squared_distance(p, book.vectors.row(assign[i]));
        }
        let mut sums = vec![vec![0.0; dim]; v];
        let mut counts = vec![0usize; v];
        for (p, &k) in points.iter().zip(&assign) {
            counts[k] += 1;
            for (s, x) in sums[k].iter_mut().zip(p.iter()) {
                *s += x;
            }
        }
        let mut far: Vec<usize> = (0..points.len()).collect();
        far.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]).then(a.cmp(&b)));
        let mut far = far.into_iter();
        let mut next: Vec<Vec<f64>> = Vec::with_capacity(v);
        for k in 0..v {
            if counts[k] == 0 {
                let i = far.next().expect("at least v distinct points");
                next.push(points[i].to_vec());
            } else {
                next.push(sums[k].iter().map(|s| s / counts[k] as f64).collect());
            }
        }
        let candidate = Tensor::from_rows(&next, dim)?;
        match Codebook::new(candidate) {
            Ok(b) => book = b,
            Err(_) => break,
        }
    }
    Ok(book)
}

pub fn quantize(features: &Tensor, book: &Codebook) -> Result<SpeechTokenSequence> {
    if features.rows() > 0 && features.cols() != book.dim() {
        return Err(Error::DimensionMismatch {
            expected: book.dim(),
            actual: features.cols(),
        });
    }
    Ok(SpeechTokenSequence::new(
        (0..features.rows()).map(|i| book.nearest(features.row(i))).collect(),
    ))
}

pub fn dequantize(tokens: &SpeechTokenSequence, book: &Codebook) -> Result<Tensor> {
    let mut out = Tensor::zeros(&[tokens.len(), book.dim()]);
    for (t, &id) in tokens.ids.iter().enumerate() {
        out.row_mut(t).copy_from_slice(book.code(id)?);
    }
    Ok(out)
}

/// Waveform → band amplitudes → pooled → token ids.
pub fn tokenize_waveform(samples: &[f64], sample_rate: u32, book: &Codebook) -> Result<SpeechTokenSequence> {
    quantize(&pool_features(&mel_frames(samples, sample_rate)), book)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pooling_lengths() {
        assert_eq!(pool_features(&Tensor::zeros(&[80, 3])).rows(), 10);
        let mut mel = Tensor::zeros(&[83, 1]);
        for t in 0..83 {
            mel.row_mut(t)[0] = t as f64;
        }
        let p = pool_features(&mel);
        assert_eq!(p.rows(), 11);
        assert_eq!(p.row(10)[0], 81.0);
        assert_eq!(p.row(0)[0], 3.5);
        let c = pool_features(&Tensor::filled(&[17, 2], 0.25));
        assert!(c.data().iter().all(|&x| x == 0.25));
    }

    #[test]
    fn tie_goes_to_lowest_index() {
        let mut rows = vec![vec![10.0]; 8];
        for (k, r) in rows.iter_mut().enumerate() {
            r[0] = 10.0 + k as f64;
        }
        rows[3] = vec![-1.0];
        rows[7] = vec![1.0];
        let book = Codebook::new(Tensor::from_rows(&rows, 1).unwrap()).unwrap();
        assert_eq!(book.nearest(&[0.0]), 3);
    }

    #[test]
    fn v_points_v_codes() {
        let f = Tensor::from_rows(&[vec![0.0, 1.0], vec![2.0, 0.0], vec![5.0, 5.0]], 2).unwrap();
        let book = build_codebook(&f, 3, 1).unwrap();
        let ids = quantize(&f, &book).unwrap();
        let back = dequantize(&ids, &book).unwrap();
        assert_eq!(back.max_abs_diff(&f), 0.0);
        assert!(matches!(
            build_codebook(&f, 4, 1),
            Err(Error::InsufficientData { needed: 4, got: 3 })
        ));
    }

    #[test]
    fn out_of_range_and_empty() {
        let book = Codebook::new(Tensor::from_rows(&[vec![0.0], vec![1.0]], 1).unwrap()).unwrap();
        assert!(dequantize(&SpeechTokenSequence::default(), &book).unwrap().is_empty());
        assert!(matches!(
            dequantize(&SpeechTokenSequence::new(vec![2]), &book),
            Err(Error::TokenOutOfRange { id: 2, size: 2 })
        ));
        assert!(quantize(&Tensor::zeros(&[1, 3]), &book).is_err());
    }

    #[test]
    fn codebook_file_round_trip() {
        let book = Codebook::new(Tensor::from_rows(&[vec![0.5, 1.0], vec![1.5, -2.0]], 2).unwrap()).unwrap();
        let mut bytes = Vec::new();
        book.save(&mut bytes).unwrap();
        assert_eq!(Codebook::load(bytes.as_slice()).unwrap(), book);
    }
}
