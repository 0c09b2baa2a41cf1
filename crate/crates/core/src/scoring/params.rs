use ndarray::Array2;

/// Named parameter tensors; gradients use the same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub tensors: Vec<Array2<f64>>,
}

pub(crate) const EMB: usize = 0;
pub(crate) const WX: usize = 1;
pub(crate) const WH: usize = 2;
pub(crate) const BH: usize = 3;
pub(crate) const NULL: usize = 4;
pub(crate) const ROOT: usize = 5;
pub(crate) const BOS: usize = 6;
pub(crate) const TRANS_W: usize = 7;
pub(crate) const TRANS_B: usize = 8;
pub(crate) const DIR_W: usize = 9;
pub(crate) const DIR_B: usize = 10;
pub(crate) const LABEL_W: usize = 11;
pub(crate) const LABEL_B: usize = 12;
pub(crate) const WORD_W: usize = 13;
pub(crate) const WORD_B: usize = 14;
pub(crate) const N_TENSORS: usize = 15;

pub(crate) const NAMES: [&str; N_TENSORS] = [
    "embedding",
    "rnn_input",
    "rnn_recurrent",
    "rnn_bias",
    "null_vector",
    "root_vector",
    "bos_vector",
    "transition_weight",
    "transition_bias",
    "direction_weight",
    "direction_bias",
    "label_weight",
    "label_bias",
    "word_weight",
    "word_bias",
];

impl ParamSet {
    pub fn zeros_like(other: &ParamSet) -> Self {
        ParamSet {
            tensors: other
                .tensors
                .iter()
                .map(|t| Array2::zeros(t.raw_dim()))
                .collect(),
        }
    }

    pub fn fill_zero(&mut self) {
        for t in &mut self.tensors {
            t.fill(0.0);
        }
    }

    pub fn num_params(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.tensors
            .iter()
            .map(|t| t.iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for t in &mut self.tensors {
            t.mapv_inplace(|x| x * factor);
        }
    }

    /// `self += alpha * other`
    pub fn add_scaled(&mut self, alpha: f64, other: &ParamSet) {
        for (t, o) in self.tensors.iter_mut().zip(&other.tensors) {
            t.scaled_add(alpha, o);
        }
    }

    /// Rescales so the global L2 norm is at most `max_norm`; returns the
    /// norm before clipping.
    pub fn clip_norm(&mut self, max_norm: f64) -> f64 {
        let n = self.norm();
        if n > max_norm {
            self.scale(max_norm / n);
        }
        n
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    pub fn name(index: usize) -> &'static str {
        NAMES[index]
    }

    /// Flat element access, in tensor order then row-major.
    pub fn get_flat(&self, mut k: usize) -> f64 {
        for t in &self.tensors {
            if k < t.len() {
                return t.as_slice().expect("standard layout")[k];
            }
            k -= t.len();
        }
        panic!("flat index out of range")
    }

    pub fn set_flat(&mut self, mut k: usize, v: f64) {
        for t in &mut self.tensors {
            if k < t.len() {
                t.as_slice_mut().expect("standard layout")[k] = v;
                return;
            }
            k -= t.len();
        }
        panic!("flat index out of range")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clipping_bounds_the_norm() {
        let mut p = ParamSet {
            tensors: vec![Array2::from_elem((3, 4), 2.0), Array2::from_elem((1, 5), -3.0)],
        };
        let before = p.clip_norm(5.0);
        assert!(before > 5.0);
        assert!(p.norm() <= 5.0 + 1e-9);
        let mut small = ParamSet {
            tensors: vec![Array2::from_elem((1, 1), 0.5)],
        };
        small.clip_norm(5.0);
        assert_eq!(small.tensors[0][[0, 0]], 0.5);
    }

    #[test]
    fn flat_indexing_spans_tensors() {
        let mut p = ParamSet {
            tensors: vec![Array2::zeros((2, 2)), Array2::zeros((1, 3))],
        };
        p.set_flat(5, 7.0);
        assert_eq!(p.tensors[1][[0, 1]], 7.0);
        assert_eq!(p.get_flat(5), 7.0);
    }
}
