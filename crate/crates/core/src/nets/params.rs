use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// One named parameter or state buffer.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    /// Buffers such as running normalization statistics are not optimized.
    pub trainable: bool,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Flat list of tensors; layers refer to entries by index.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ParamSet {
    pub tensors: Vec<Tensor>,
}

impl ParamSet {
    pub(crate) fn push(&mut self, name: String, shape: Vec<usize>, trainable: bool, data: Vec<f32>) -> usize {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.tensors.push(Tensor { name, shape, trainable, data });
        self.tensors.len() - 1
    }

    #[inline]
    pub fn get(&self, idx: usize) -> &[f32] {
        &self.tensors[idx].data
    }

    #[inline]
    pub fn get_mut(&mut self, idx: usize) -> &mut [f32] {
        &mut self.tensors[idx].data
    }

    pub fn zeros_like(&self) -> Grads {
        Grads { tensors: self.tensors.iter().map(|t| vec![0.0; t.data.len()]).collect() }
    }

    pub fn num_trainable(&self) -> usize {
        self.tensors.iter().filter(|t| t.trainable).map(|t| t.data.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    /// Order-sensitive FNV-1a hash over names and raw bits.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |b: u8| {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        };
        for t in &self.tensors {
            t.name.bytes().for_each(&mut eat);
            for v in &t.data {
                v.to_bits().to_le_bytes().into_iter().for_each(&mut eat);
            }
        }
        h
    }

    /// Replaces the data of every tensor, checking names and shapes against
    /// this set's layout.
    pub fn load_from(&mut self, other: &ParamSet) -> Result<()> {
        if other.tensors.len() != self.tensors.len() {
            return Err(Error::ParamLayout(format!(
                "expected {} tensors, found {}",
                self.tensors.len(),
                other.tensors.len()
            )));
        }
        for (dst, src) in self.tensors.iter_mut().zip(&other.tensors) {
            if dst.name != src.name || dst.shape != src.shape || src.data.len() != dst.numel() {
                return Err(Error::ParamLayout(format!(
                    "tensor {} {:?} does not match {} {:?}",
                    src.name, src.shape, dst.name, dst.shape
                )));
            }
            dst.data.copy_from_slice(&src.data);
        }
        Ok(())
    }
}

/// Gradient buffers shaped like a [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub tensors: Vec<Vec<f32>>,
}

impl Grads {
    pub fn zero(&mut self) {
        self.tensors.iter_mut().for_each(|t| t.iter_mut().for_each(|v| *v = 0.0));
    }

    pub fn add_scaled(&mut self, other: &Grads, s: f32) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += s * y;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.tensors.iter().flatten().map(|&v| v as f64 * v as f64).sum())
    }
}
