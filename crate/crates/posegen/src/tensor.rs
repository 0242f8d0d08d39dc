//! Dense f32 tensor in NCHW layout.
//!
//! The whole crate runs on this one type: images are `[n, 3, h, w]`,
//! feature maps `[n, c, h, w]`, logit vectors `[n, k, 1, 1]`.

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: [usize; 4],
    data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(shape: [usize; 4]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; len],
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<f32>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape {:?} does not match data length {}",
            shape,
            data.len()
        );
        Tensor { shape, data }
    }

    pub fn filled(shape: [usize; 4], value: f32) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape,
            data: vec![value; len],
        }
    }

    #[inline]
    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.shape[0]
    }

    #[inline]
    pub fn c(&self) -> usize {
        self.shape[1]
    }

    #[inline]
    pub fn h(&self) -> usize {
        self.shape[2]
    }

    #[inline]
    pub fn w(&self) -> usize {
        self.shape[3]
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    /// Size of one sample (c * h * w).
    #[inline]
    pub fn sample_len(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }

    #[inline]
    pub fn sample(&self, n: usize) -> &[f32] {
        let sl = self.sample_len();
        &self.data[n * sl..(n + 1) * sl]
    }

    #[inline]
    pub fn sample_mut(&mut self, n: usize) -> &mut [f32] {
        let sl = self.sample_len();
        &mut self.data[n * sl..(n + 1) * sl]
    }

    /// Select a single sample as a `[1, c, h, w]` tensor.
    pub fn slice_sample(&self, n: usize) -> Tensor {
        Tensor::from_vec(
            [1, self.shape[1], self.shape[2], self.shape[3]],
            self.sample(n).to_vec(),
        )
    }

    /// Stack `[1, c, h, w]` tensors along the batch axis.
    pub fn stack(samples: &[Tensor]) -> Tensor {
        assert!(!samples.is_empty());
        let [_, c, h, w] = samples[0].shape;
        let mut out = Tensor::zeros([samples.len(), c, h, w]);
        for (i, s) in samples.iter().enumerate() {
            assert_eq!(s.shape, [1, c, h, w]);
            out.sample_mut(i).copy_from_slice(&s.data);
        }
        out
    }

    /// Concatenate along the channel axis.
    pub fn concat_channels(a: &Tensor, b: &Tensor) -> Tensor {
        assert_eq!(a.n(), b.n());
        assert_eq!(a.h(), b.h());
        assert_eq!(a.w(), b.w());
        let (n, h, w) = (a.n(), a.h(), a.w());
        let (ca, cb) = (a.c(), b.c());
        let mut out = Tensor::zeros([n, ca + cb, h, w]);
        let hw = h * w;
        for i in 0..n {
            let dst = out.sample_mut(i);
            dst[..ca * hw].copy_from_slice(a.sample(i));
            dst[ca * hw..].copy_from_slice(b.sample(i));
        }
        out
    }

    /// Split a channel-concatenated gradient back into the two parts.
    pub fn split_channels(&self, ca: usize) -> (Tensor, Tensor) {
        let (n, c, h, w) = (self.n(), self.c(), self.h(), self.w());
        assert!(ca <= c);
        let cb = c - ca;
        let hw = h * w;
        let mut a = Tensor::zeros([n, ca, h, w]);
        let mut b = Tensor::zeros([n, cb, h, w]);
        for i in 0..n {
            let src = self.sample(i);
            a.sample_mut(i).copy_from_slice(&src[..ca * hw]);
            b.sample_mut(i).copy_from_slice(&src[ca * hw..]);
        }
        (a, b)
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += b;
        }
    }

    pub fn scale(&mut self, k: f32) {
        for a in self.data.iter_mut() {
            *a *= k;
        }
    }

    /// Mean of all elements, accumulated in f64.
    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|&x| x as f64).sum::<f64>() / self.data.len() as f64
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f32> {
        self.data.iter()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_then_split_round_trips() {
        let a = Tensor::from_vec([2, 2, 1, 2], (0..8).map(|x| x as f32).collect());
        let b = Tensor::from_vec([2, 1, 1, 2], (8..12).map(|x| x as f32).collect());
        let cat = Tensor::concat_channels(&a, &b);
        assert_eq!(cat.shape(), [2, 3, 1, 2]);
        let (a2, b2) = cat.split_channels(2);
        assert_eq!(a, a2);
        assert_eq!(b, b2);
    }

    #[test]
    fn stack_preserves_order() {
        let s0 = Tensor::filled([1, 1, 2, 2], 1.0);
        let s1 = Tensor::filled([1, 1, 2, 2], 2.0);
        let st = Tensor::stack(&[s0, s1]);
        assert_eq!(st.sample(0), &[1.0; 4]);
        assert_eq!(st.sample(1), &[2.0; 4]);
    }

    #[test]
    fn mean_uses_all_elements() {
        let t = Tensor::from_vec([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(t.mean(), 2.5);
    }
}
