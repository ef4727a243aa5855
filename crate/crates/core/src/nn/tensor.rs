use crate::error::{Error, Result};

/// Dense `(channels, height, width)` array of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    c: usize,
    h: usize,
    w: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Tensor {
            c,
            h,
            w,
            data: vec![0.0; c * h * w],
        }
    }

    pub fn from_vec(c: usize, h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != c * h * w {
            return Err(Error::InvalidArgument(format!(
                "tensor ({c}, {h}, {w}) needs {} values, got {}",
                c * h * w,
                data.len()
            )));
        }
        Ok(Tensor { c, h, w, data })
    }

    /// Single-channel image tensor.
    pub fn image(h: usize, w: usize, pixels: &[f64]) -> Result<Self> {
        Tensor::from_vec(1, h, w, pixels.to_vec())
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.c, self.h, self.w)
    }

    pub fn channels(&self) -> usize {
        self.c
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn plane(&self, ch: usize) -> &[f64] {
        let n = self.h * self.w;
        &self.data[ch * n..(ch + 1) * n]
    }

    pub fn plane_mut(&mut self, ch: usize) -> &mut [f64] {
        let n = self.h * self.w;
        &mut self.data[ch * n..(ch + 1) * n]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            c: self.c,
            h: self.h,
            w: self.w,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn mul(&self, other: &Tensor) -> Tensor {
        debug_assert_eq!(self.shape(), other.shape());
        Tensor {
            c: self.c,
            h: self.h,
            w: self.w,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a * b).collect(),
        }
    }
}
