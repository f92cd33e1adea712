use super::DiffnumError;

/// Dense row-major f64 tensor of rank 1 or 2.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Rank-1 tensor from raw data.
    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            dims: vec![data.len()],
            data,
        }
    }

    /// Rank-2 tensor from row-major data; panics if sizes disagree.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "matrix data length mismatch");
        Tensor {
            dims: vec![rows, cols],
            data,
        }
    }

    pub fn zeros(dims: &[usize]) -> Self {
        assert!(
            dims.len() == 1 || dims.len() == 2,
            "only rank 1 and 2 supported"
        );
        Tensor {
            dims: dims.to_vec(),
            data: vec![0.0; dims.iter().product()],
        }
    }

    pub fn zeros_like(other: &Tensor) -> Self {
        Tensor {
            dims: other.dims.clone(),
            data: vec![0.0; other.data.len()],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor::vector(vec![v])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Row count; a rank-1 tensor is treated as a single row.
    pub fn rows(&self) -> usize {
        if self.rank() == 2 {
            self.dims[0]
        } else {
            1
        }
    }

    /// Column count; a rank-1 tensor's columns are its length.
    pub fn cols(&self) -> usize {
        if self.rank() == 2 {
            self.dims[1]
        } else {
            self.dims[0]
        }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Scalar value of a one-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Elementwise in-place accumulation; shapes must match exactly.
    pub fn add_assign(&mut self, other: &Tensor) -> Result<(), DiffnumError> {
        if self.dims != other.dims {
            return Err(DiffnumError::ShapeMismatch {
                op: "add_assign",
                left: self.dims.clone(),
                right: other.dims.clone(),
            });
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }
}
