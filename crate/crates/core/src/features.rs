//! Fixed-width pair representation shared by the TF-IDF and embedding
//! featurizers: `[|u - v|, u * v, cos(u, v)]`.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFeatures {
    values: Vec<f64>,
    dimension: usize,
}

impl PairFeatures {
    /// Builds the features of two equal-length dense vectors.
    ///
    /// # Panics
    /// If `u` and `v` differ in length.
    pub fn from_dense(u: &[f64], v: &[f64]) -> Self {
        assert_eq!(u.len(), v.len(), "pair vectors must have equal length");
        let d = u.len();
        let mut values = Vec::with_capacity(2 * d + 1);
        values.extend(u.iter().zip(v).map(|(a, b)| (a - b).abs()));
        values.extend(u.iter().zip(v).map(|(a, b)| a * b));
        values.push(cosine_slices(u, v));
        Self {
            values,
            dimension: d,
        }
    }

    /// Width of one sentence vector (the full feature length is `2d + 1`).
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn difference(&self) -> &[f64] {
        &self.values[..self.dimension]
    }

    pub fn product(&self) -> &[f64] {
        &self.values[self.dimension..2 * self.dimension]
    }

    pub fn cosine(&self) -> f64 {
        self.values[2 * self.dimension]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Cosine similarity; 0 when either vector has zero norm. Clamped to
/// [-1, 1] against rounding.
pub(crate) fn cosine_slices(u: &[f64], v: &[f64]) -> f64 {
    let (mut dot, mut nu, mut nv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    (dot / (nu * nv).sqrt()).clamp(-1.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout() {
        let f = PairFeatures::from_dense(&[1.0, 0.0], &[0.0, 1.0]);
        assert_eq!(f.values(), &[1.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(f.len(), 5);

        let same = PairFeatures::from_dense(&[1.0, 0.0], &[1.0, 0.0]);
        assert_eq!(same.values(), &[0.0, 0.0, 1.0, 0.0, 1.0]);

        let empty = PairFeatures::from_dense(&[0.0, 0.0], &[0.5, -2.0]);
        assert_eq!(empty.difference(), &[0.5, 2.0]);
        assert_eq!(empty.product(), &[0.0, -0.0]);
        assert_eq!(empty.cosine(), 0.0);
    }

    #[test]
    fn symmetric() {
        let u = [0.3, -1.2, 4.0];
        let v = [2.0, 0.1, -0.7];
        assert_eq!(
            PairFeatures::from_dense(&u, &v),
            PairFeatures::from_dense(&v, &u)
        );
    }
}
