//! Truncated tensor algebra over `R^l`: products, signatures of piecewise
//! linear paths, and the weak-geometric diagnostic.
//!
//! A [`TensorSeries`] stores one dense coordinate block per level
//! `k = 0..=N`; the block for level `k` holds `l^k` coordinates indexed by
//! words `(i_1, ..., i_k)` over `{0, ..., l-1}`, laid out row-major with
//! `i_1` as the most significant digit. The coordinate of a word is the
//! iterated integral of the path over the ordered simplex with `i_1`
//! attached to the earliest integration time, so the concatenation rule
//! reads: signature over `[r, s]` times signature over `[s, t]`, in that
//! order, equals the signature over `[r, t]`.

use crate::error::{Error, Result};

/// Element of the tensor algebra over `R^dim` truncated at `depth`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorSeries {
    dim: usize,
    depth: usize,
    levels: Vec<Vec<f64>>,
}

fn level_len(dim: usize, k: usize) -> usize {
    dim.pow(k as u32)
}

impl TensorSeries {
    /// The neutral element `(1, 0, 0, ...)`.
    pub fn identity(dim: usize, depth: usize) -> Self {
        let levels = (0..=depth).map(|k| vec![0.0; level_len(dim, k)]).collect::<Vec<_>>();
        let mut out = Self { dim, depth, levels };
        out.levels[0][0] = 1.0;
        out
    }

    /// Build from explicit level blocks; `levels[k]` must hold `dim^k` entries.
    pub fn from_levels(dim: usize, levels: Vec<Vec<f64>>) -> Result<Self> {
        if dim == 0 || levels.is_empty() {
            return Err(Error::Invalid("need dim >= 1 and at least level 0".into()));
        }
        let depth = levels.len() - 1;
        for (k, block) in levels.iter().enumerate() {
            if block.len() != level_len(dim, k) {
                return Err(Error::Structure(format!(
                    "level {k} has {} coordinates, expected {}",
                    block.len(),
                    level_len(dim, k)
                )));
            }
        }
        Ok(Self { dim, depth, levels })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Coordinate block of one level.
    pub fn level(&self, k: usize) -> &[f64] {
        &self.levels[k]
    }

    pub fn level_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.levels[k]
    }

    /// Coordinate of the word `word` (empty word = level 0).
    pub fn coord(&self, word: &[usize]) -> f64 {
        let mut idx = 0;
        for &i in word {
            debug_assert!(i < self.dim);
            idx = idx * self.dim + i;
        }
        self.levels[word.len()][idx]
    }

    /// Copy truncated to a smaller depth.
    pub fn truncated(&self, depth: usize) -> Self {
        let depth = depth.min(self.depth);
        Self {
            dim: self.dim,
            depth,
            levels: self.levels[..=depth].to_vec(),
        }
    }

    /// Largest absolute coordinate over levels `1..=depth`.
    pub fn max_abs(&self) -> f64 {
        self.levels[1..]
            .iter()
            .flat_map(|block| block.iter())
            .fold(0.0, |acc: f64, &x| acc.max(x.abs()))
    }

    /// Largest absolute coordinate of one level.
    pub fn level_max_abs(&self, k: usize) -> f64 {
        self.levels[k].iter().fold(0.0, |acc: f64, &x| acc.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.levels.iter().all(|b| b.iter().all(|x| x.is_finite()))
    }

    /// Coordinate-wise difference, largest absolute entry over all levels.
    pub fn distance(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.dim, other.dim);
        debug_assert_eq!(self.depth, other.depth);
        let mut d: f64 = 0.0;
        for (a, b) in self.levels.iter().zip(other.levels.iter()) {
            for (x, y) in a.iter().zip(b.iter()) {
                d = d.max((x - y).abs());
            }
        }
        d
    }
}

/// Truncated product: the coordinate of a word in the output is the sum of
/// `a^J * b^K` over all splittings of the word into a prefix `J` and a
/// suffix `K`.
pub fn tensor_product(a: &TensorSeries, b: &TensorSeries) -> Result<TensorSeries> {
    if a.dim != b.dim {
        return Err(Error::Structure(format!(
            "dimension mismatch: {} vs {}",
            a.dim, b.dim
        )));
    }
    if a.depth != b.depth {
        return Err(Error::Structure(format!(
            "depth mismatch: {} vs {}",
            a.depth, b.depth
        )));
    }
    let dim = a.dim;
    let depth = a.depth;
    let mut levels: Vec<Vec<f64>> = (0..=depth).map(|k| vec![0.0; level_len(dim, k)]).collect();
    for k in 0..=depth {
        for ka in 0..=k {
            let kb = k - ka;
            let block_a = &a.levels[ka];
            let block_b = &b.levels[kb];
            let stride = level_len(dim, kb);
            let out = &mut levels[k];
            for (ia, &va) in block_a.iter().enumerate() {
                if va == 0.0 {
                    continue;
                }
                let base = ia * stride;
                for (ib, &vb) in block_b.iter().enumerate() {
                    out[base + ib] += va * vb;
                }
            }
        }
    }
    Ok(TensorSeries { dim, depth, levels })
}

/// Signature of a straight segment with the given increment:
/// level `k` is the `k`-fold tensor power of the increment divided by `k!`.
pub fn segment_signature(increment: &[f64], depth: usize) -> Result<TensorSeries> {
    if depth < 1 {
        return Err(Error::Invalid(format!("depth must be >= 1, got {depth}")));
    }
    if increment.is_empty() {
        return Err(Error::Invalid("empty increment".into()));
    }
    let dim = increment.len();
    let mut levels: Vec<Vec<f64>> = Vec::with_capacity(depth + 1);
    levels.push(vec![1.0]);
    for k in 1..=depth {
        let prev = &levels[k - 1];
        let mut block = vec![0.0; level_len(dim, k)];
        let inv_k = 1.0 / k as f64;
        for (ia, &va) in prev.iter().enumerate() {
            let base = ia * dim;
            for (i, &vi) in increment.iter().enumerate() {
                block[base + i] = va * vi * inv_k;
            }
        }
        levels.push(block);
    }
    Ok(TensorSeries { dim, depth, levels })
}

/// Signature of the polyline through `points`: the ordered product of the
/// per-segment signatures.
pub fn piecewise_linear_signature(points: &[Vec<f64>], depth: usize) -> Result<TensorSeries> {
    if points.len() < 2 {
        return Err(Error::Invalid(format!(
            "need at least 2 vertices, got {}",
            points.len()
        )));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::Structure("vertices of mixed dimension".into()));
    }
    let mut sig = TensorSeries::identity(dim, depth);
    for pair in points.windows(2) {
        let inc: Vec<f64> = pair[1].iter().zip(pair[0].iter()).map(|(b, a)| b - a).collect();
        sig = tensor_product(&sig, &segment_signature(&inc, depth)?)?;
    }
    Ok(sig)
}

/// Largest violation of `x^{ij} + x^{ji} = x^i x^j` over all index pairs.
/// Zero (up to rounding) for the signature of any genuine path.
pub fn weak_geometric_defect(x: &TensorSeries) -> f64 {
    assert!(x.depth >= 2, "weak-geometric defect needs two levels");
    let l = x.dim;
    let one = &x.levels[1];
    let two = &x.levels[2];
    let mut worst: f64 = 0.0;
    for i in 0..l {
        for j in 0..l {
            let defect = (two[i * l + j] + two[j * l + i] - one[i] * one[j]).abs();
            worst = worst.max(defect);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(dim: usize, levels: Vec<Vec<f64>>) -> TensorSeries {
        TensorSeries::from_levels(dim, levels).unwrap()
    }

    #[test]
    fn identity_is_neutral() {
        let b = series(1, vec![vec![1.0], vec![0.7], vec![0.3]]);
        let id = TensorSeries::identity(1, 2);
        assert_eq!(tensor_product(&id, &b).unwrap(), b);
        assert_eq!(tensor_product(&b, &id).unwrap(), b);
    }

    #[test]
    fn product_rejects_mismatched_operands() {
        let a = TensorSeries::identity(2, 2);
        let b = TensorSeries::identity(3, 2);
        assert!(tensor_product(&a, &b).is_err());
        let c = TensorSeries::identity(2, 3);
        assert!(tensor_product(&a, &c).is_err());
    }

    #[test]
    fn segment_of_zero_increment_is_identity() {
        let s = segment_signature(&[0.0, 0.0], 3).unwrap();
        assert_eq!(s, TensorSeries::identity(2, 3));
    }

    #[test]
    fn segment_basis_vector_level_two() {
        let s = segment_signature(&[1.0, 0.0], 2).unwrap();
        assert_eq!(s.level(1), &[1.0, 0.0]);
        assert_eq!(s.coord(&[0, 0]), 0.5);
        assert_eq!(s.coord(&[0, 1]), 0.0);
        assert_eq!(s.coord(&[1, 0]), 0.0);
        assert_eq!(s.coord(&[1, 1]), 0.0);
    }

    #[test]
    fn segment_diagonal_increment_level_two() {
        let s = segment_signature(&[1.0, 1.0], 2).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((s.coord(&[i, j]) - 0.5).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn depth_one_truncation_is_the_increment() {
        let v = [0.3, -1.2, 2.0];
        let s = segment_signature(&v, 1).unwrap();
        assert_eq!(s.level(1), &v);
    }

    #[test]
    fn collinear_segments_match_single_segment() {
        let v = vec![0.4, -0.3];
        let two = piecewise_linear_signature(
            &[vec![0.0, 0.0], v.clone(), vec![0.8, -0.6]],
            3,
        )
        .unwrap();
        let one = segment_signature(&[0.8, -0.6], 3).unwrap();
        assert!(two.distance(&one) < 1e-15);
    }

    #[test]
    fn single_segment_polyline_is_segment_signature() {
        let p = piecewise_linear_signature(&[vec![0.1, 0.2], vec![1.1, -0.8]], 2).unwrap();
        let s = segment_signature(&[1.0, -1.0], 2).unwrap();
        assert!(p.distance(&s) < 1e-15);
    }

    #[test]
    fn polyline_rejects_degenerate_vertex_lists() {
        assert!(piecewise_linear_signature(&[], 2).is_err());
        assert!(piecewise_linear_signature(&[vec![0.0]], 2).is_err());
    }

    #[test]
    fn unit_square_loop_level_two() {
        // Counterclockwise unit square in the (0,1) plane: net increment
        // vanishes and the level-2 block is the pure area +1/-1.
        let square = vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
            vec![0.0, 1.0],
            vec![0.0, 0.0],
        ];
        let sig = piecewise_linear_signature(&square, 2).unwrap();
        assert!(sig.level_max_abs(1) < 1e-15);
        assert!((sig.coord(&[0, 1]) - 1.0).abs() < 1e-14);
        assert!((sig.coord(&[1, 0]) + 1.0).abs() < 1e-14);
        assert!(sig.coord(&[0, 0]).abs() < 1e-14);
        assert!(sig.coord(&[1, 1]).abs() < 1e-14);
    }

    #[test]
    fn signatures_are_weak_geometric() {
        let path = vec![
            vec![0.0, 0.0],
            vec![0.7, 0.1],
            vec![0.3, 0.9],
            vec![-0.2, 0.4],
        ];
        let sig = piecewise_linear_signature(&path, 2).unwrap();
        assert!(weak_geometric_defect(&sig) < 1e-12);
    }

    #[test]
    fn pure_area_element_is_weak_geometric() {
        let x = series(
            2,
            vec![vec![1.0], vec![0.0, 0.0], vec![0.0, 0.8, -0.8, 0.0]],
        );
        assert_eq!(weak_geometric_defect(&x), 0.0);
    }

    #[test]
    fn symmetric_level_two_without_increment_violates() {
        // level 2 = identity matrix, level 1 = 0: defect 2 on diagonal pairs.
        let x = series(
            2,
            vec![vec![1.0], vec![0.0, 0.0], vec![1.0, 0.0, 0.0, 1.0]],
        );
        assert_eq!(weak_geometric_defect(&x), 2.0);
    }
}
