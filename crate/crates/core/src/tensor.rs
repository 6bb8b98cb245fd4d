use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Dense rank-3 buffer laid out as `(batch, time, channels)`, channels fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3 {
    data: Vec<f64>,
    batch: usize,
    time: usize,
    channels: usize,
}

/// ECG waveforms, `samples × time × leads`.
pub type SignalBatch = Tensor3;

impl Tensor3 {
    pub fn zeros(batch: usize, time: usize, channels: usize) -> Self {
        Self {
            data: vec![0.0; batch * time * channels],
            batch,
            time,
            channels,
        }
    }

    pub fn from_vec(batch: usize, time: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        let expected = batch * time * channels;
        if data.len() != expected {
            return Err(Error::ShapeMismatch {
                what: "tensor buffer length",
                expected,
                found: data.len(),
            });
        }
        Ok(Self {
            data,
            batch,
            time,
            channels,
        })
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.batch, self.time, self.channels)
    }

    #[inline]
    pub fn batch(&self) -> usize {
        self.batch
    }

    #[inline]
    pub fn time(&self) -> usize {
        self.time
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn at(&self, b: usize, t: usize, c: usize) -> f64 {
        self.data[(b * self.time + t) * self.channels + c]
    }

    /// One sample as a `time × channels` slice.
    pub fn sample(&self, b: usize) -> &[f64] {
        let len = self.time * self.channels;
        &self.data[b * len..(b + 1) * len]
    }

    pub fn sample_mut(&mut self, b: usize) -> &mut [f64] {
        let len = self.time * self.channels;
        &mut self.data[b * len..(b + 1) * len]
    }

    /// New tensor holding the listed samples, in order.
    pub fn select(&self, rows: &[usize]) -> Tensor3 {
        let mut out = Tensor3::zeros(rows.len(), self.time, self.channels);
        for (dst, &src) in rows.iter().enumerate() {
            out.sample_mut(dst).copy_from_slice(self.sample(src));
        }
        out
    }
}
