use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major tensor of IEEE-754 single-precision values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::Shape(format!("dimensions must be positive, got {shape:?}")));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let len = shape.iter().product();
        Self::new(shape, vec![0.0; len])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Size of the leading (batch) dimension.
    pub fn batch_len(&self) -> usize {
        self.shape[0]
    }

    /// Shape of one item along the leading dimension.
    pub fn item_shape(&self) -> &[usize] {
        &self.shape[1..]
    }

    pub fn item_len(&self) -> usize {
        self.shape[1..].iter().product()
    }

    /// Borrow item `index` along the leading dimension.
    pub fn item(&self, index: usize) -> &[f32] {
        let len = self.item_len();
        &self.data[index * len..(index + 1) * len]
    }

    /// Gather items along the leading dimension into a new tensor.
    pub fn select(&self, indices: &[usize]) -> Result<Tensor> {
        if indices.is_empty() {
            return Err(Error::Empty("selection of zero items".into()));
        }
        let len = self.item_len();
        let mut data = Vec::with_capacity(indices.len() * len);
        for &i in indices {
            if i >= self.batch_len() {
                return Err(Error::Shape(format!(
                    "item {i} out of range for batch of {}",
                    self.batch_len()
                )));
            }
            data.extend_from_slice(self.item(i));
        }
        let mut shape = self.shape.clone();
        shape[0] = indices.len();
        Tensor::new(shape, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_mismatched_length() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![2, 0], vec![]).is_err());
    }

    #[test]
    fn select_gathers_items() {
        let t = Tensor::new(vec![3, 2], vec![0., 1., 2., 3., 4., 5.]).unwrap();
        let s = t.select(&[2, 0]).unwrap();
        assert_eq!(s.shape(), &[2, 2]);
        assert_eq!(s.data(), &[4., 5., 0., 1.]);
        assert!(t.select(&[3]).is_err());
    }
}
