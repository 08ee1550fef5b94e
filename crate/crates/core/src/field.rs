//! Dense space-time samples indexed `(time, x, y)`, time-major then row-major.

use crate::C64;

#[derive(Clone, Debug, PartialEq)]
pub struct Field3<T> {
    dims: [usize; 3],
    data: Vec<T>,
}

pub type ComplexField = Field3<C64>;
pub type RealField = Field3<f64>;

impl<T: Copy + Default> Field3<T> {
    pub fn zeros(dims: [usize; 3]) -> Self {
        Self { dims, data: vec![T::default(); dims[0] * dims[1] * dims[2]] }
    }

    pub fn from_vec(dims: [usize; 3], data: Vec<T>) -> Option<Self> {
        (data.len() == dims[0] * dims[1] * dims[2]).then_some(Self { dims, data })
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for m in 0..dims[0] {
            for i in 0..dims[1] {
                for j in 0..dims[2] {
                    data.push(f(m, i, j));
                }
            }
        }
        Self { dims, data }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn slice_len(&self) -> usize {
        self.dims[1] * self.dims[2]
    }

    #[inline]
    pub fn index(&self, m: usize, i: usize, j: usize) -> usize {
        (m * self.dims[1] + i) * self.dims[2] + j
    }

    #[inline]
    pub fn get(&self, m: usize, i: usize, j: usize) -> T {
        self.data[self.index(m, i, j)]
    }

    #[inline]
    pub fn set(&mut self, m: usize, i: usize, j: usize, v: T) {
        let p = self.index(m, i, j);
        self.data[p] = v;
    }

    pub fn slice(&self, m: usize) -> &[T] {
        let n = self.slice_len();
        &self.data[m * n..(m + 1) * n]
    }

    /// Slice `m`, or the only slice of a single-level (static) field.
    pub fn level(&self, m: usize) -> &[T] {
        self.slice(if self.dims[0] == 1 { 0 } else { m })
    }

    pub fn slice_mut(&mut self, m: usize) -> &mut [T] {
        let n = self.slice_len();
        &mut self.data[m * n..(m + 1) * n]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U: Copy + Default>(&self, f: impl Fn(T) -> U) -> Field3<U> {
        Field3 { dims: self.dims, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map<U: Copy + Default, V: Copy + Default>(
        &self,
        other: &Field3<U>,
        f: impl Fn(T, U) -> V,
    ) -> Field3<V> {
        assert_eq!(self.dims, other.dims, "field shape mismatch");
        Field3 {
            dims: self.dims,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }
}

impl RealField {
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl ComplexField {
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |a, v| a.max(v.norm()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub fn conj(&self) -> Self {
        self.map(|v| v.conj())
    }
}
