use super::Real;
use crate::{Error, Result};

/// Dense batch of feature maps laid out `[sample][channel][ping][depth]`,
/// depth fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub n: usize,
    pub c: usize,
    pub w: usize,
    pub h: usize,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(n: usize, c: usize, w: usize, h: usize) -> Self {
        Self {
            n,
            c,
            w,
            h,
            data: vec![T::zero(); n * c * w * h],
        }
    }

    pub fn from_vec(n: usize, c: usize, w: usize, h: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != n * c * w * h {
            return Err(Error::Structure(format!(
                "{} values for a {n}x{c}x{w}x{h} tensor",
                data.len()
            )));
        }
        Ok(Self { n, c, w, h, data })
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.n, self.c, self.w, self.h]
    }

    pub fn plane_len(&self) -> usize {
        self.w * self.h
    }

    pub fn plane(&self, b: usize, c: usize) -> &[T] {
        let p = self.plane_len();
        let start = (b * self.c + c) * p;
        &self.data[start..start + p]
    }

    pub fn plane_mut(&mut self, b: usize, c: usize) -> &mut [T] {
        let p = self.plane_len();
        let start = (b * self.c + c) * p;
        &mut self.data[start..start + p]
    }

    pub fn at(&self, b: usize, c: usize, i: usize, j: usize) -> T {
        self.data[((b * self.c + c) * self.w + i) * self.h + j]
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            n: self.n,
            c: self.c,
            w: self.w,
            h: self.h,
            data: self.data.iter().map(|&v| U::from_f64(v.to_f64().unwrap_or(0.0)).unwrap_or(U::zero())).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Tensor<T>) {
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Copies sample `b` into a batch of one.
    pub fn sample(&self, b: usize) -> Tensor<T> {
        let len = self.c * self.plane_len();
        Tensor {
            n: 1,
            c: self.c,
            w: self.w,
            h: self.h,
            data: self.data[b * len..(b + 1) * len].to_vec(),
        }
    }

    /// Stacks batches along the sample axis.
    pub fn stack(parts: &[Tensor<T>]) -> Result<Tensor<T>> {
        let first = parts.first().ok_or_else(|| Error::Structure("no tensors to stack".into()))?;
        let mut data = Vec::with_capacity(parts.iter().map(|p| p.data.len()).sum());
        for p in parts {
            if (p.c, p.w, p.h) != (first.c, first.w, first.h) {
                return Err(Error::Structure("stacked tensors differ in shape".into()));
            }
            data.extend_from_slice(&p.data);
        }
        Ok(Tensor {
            n: parts.iter().map(|p| p.n).sum(),
            c: first.c,
            w: first.w,
            h: first.h,
            data,
        })
    }
}
