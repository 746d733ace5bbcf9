//! Dense rank-4 tensors in NCHW layout.
//!
//! Element `(n, c, h, w)` lives at `((n * C + c) * H + h) * W + w` of the flat
//! buffer. There are no strided views and no broadcasting; every shape change
//! is an explicit copy.

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::Float;

use crate::error::{shape_err, Error, Result};

/// Numeric precision of a [`Scalar`] type.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    /// 32-bit floats, used for training and inference.
    Standard,
    /// 64-bit floats, used for gradient checks.
    High,
}

/// Floating-point element type usable in tensors.
pub trait Scalar: Float + Default + Debug + Sum + Send + Sync + 'static {
    const PRECISION: Precision;

    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;

    /// `c = alpha * a * b + beta * c` on row/column strided matrices,
    /// `a` is `m x k`, `b` is `k x n`, `c` is `m x n`.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: (&[Self], isize, isize),
        b: (&[Self], isize, isize),
        beta: Self,
        c: (&mut [Self], isize, isize),
    );
}

fn check_gemm_extent(rows: usize, cols: usize, rs: isize, cs: isize, len: usize) {
    if rows == 0 || cols == 0 {
        return;
    }
    let last = (rows - 1) as isize * rs + (cols - 1) as isize * cs;
    assert!(rs >= 0 && cs >= 0 && (last as usize) < len, "gemm operand out of bounds");
}

macro_rules! impl_scalar {
    ($t:ty, $p:expr, $gemm:path) => {
        impl Scalar for $t {
            const PRECISION: Precision = $p;

            #[inline]
            fn from_f64(v: f64) -> Self {
                v as $t
            }

            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: (&[Self], isize, isize),
                b: (&[Self], isize, isize),
                beta: Self,
                c: (&mut [Self], isize, isize),
            ) {
                check_gemm_extent(m, k, a.1, a.2, a.0.len());
                check_gemm_extent(k, n, b.1, b.2, b.0.len());
                check_gemm_extent(m, n, c.1, c.2, c.0.len());
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: every index touched by the kernel is bounds-checked above.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.0.as_ptr(),
                        a.1,
                        a.2,
                        b.0.as_ptr(),
                        b.1,
                        b.2,
                        beta,
                        c.0.as_mut_ptr(),
                        c.1,
                        c.2,
                    );
                }
            }
        }
    };
}

impl_scalar!(f32, Precision::Standard, matrixmultiply::sgemm);
impl_scalar!(f64, Precision::High, matrixmultiply::dgemm);

/// Elementwise binary operation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    dims: [usize; 4],
    data: Vec<T>,
}

fn element_count(dims: [usize; 4]) -> Result<usize> {
    if dims.contains(&0) {
        return Err(Error::Dimension(format!("all dims must be >= 1, got {dims:?}")));
    }
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .filter(|&n| n <= isize::MAX as usize / std::mem::size_of::<f64>())
        .ok_or_else(|| Error::Dimension(format!("dims {dims:?} overflow")))
}

impl<T: Scalar> Tensor<T> {
    pub fn new(dims: [usize; 4], fill: T) -> Result<Self> {
        let len = element_count(dims)?;
        Ok(Tensor { dims, data: vec![fill; len] })
    }

    pub fn zeros(dims: [usize; 4]) -> Result<Self> {
        Self::new(dims, T::zero())
    }

    pub fn from_vec(dims: [usize; 4], data: Vec<T>) -> Result<Self> {
        let len = element_count(dims)?;
        if data.len() != len {
            return Err(shape_err!("buffer of {} elements for dims {dims:?}", data.len()));
        }
        Ok(Tensor { dims, data })
    }

    /// Builds a tensor from `f64` values, rounding to `T`.
    pub fn from_f64_slice(dims: [usize; 4], data: &[f64]) -> Result<Self> {
        Self::from_vec(dims, data.iter().map(|&v| T::from_f64(v)).collect())
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn batch(&self) -> usize {
        self.dims[0]
    }

    pub fn channels(&self) -> usize {
        self.dims[1]
    }

    pub fn height(&self) -> usize {
        self.dims[2]
    }

    pub fn width(&self) -> usize {
        self.dims[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
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

    /// Flat offset of `(n, c, h, w)`.
    #[inline]
    pub fn offset(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        let [_, cc, hh, ww] = self.dims;
        debug_assert!(n < self.dims[0] && c < cc && h < hh && w < ww);
        ((n * cc + c) * hh + h) * ww + w
    }

    #[inline]
    pub fn get(&self, n: usize, c: usize, h: usize, w: usize) -> T {
        self.data[self.offset(n, c, h, w)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, h: usize, w: usize, v: T) {
        let i = self.offset(n, c, h, w);
        self.data[i] = v;
    }

    /// Contiguous `H * W` slice of one channel of one sample.
    pub fn plane(&self, n: usize, c: usize) -> &[T] {
        let hw = self.dims[2] * self.dims[3];
        let start = (n * self.dims[1] + c) * hw;
        &self.data[start..start + hw]
    }

    /// Contiguous `C * H * W` slice of one sample.
    pub fn sample(&self, n: usize) -> &[T] {
        let chw = self.dims[1] * self.dims[2] * self.dims[3];
        &self.data[n * chw..(n + 1) * chw]
    }

    pub fn elementwise(&self, other: &Tensor<T>, op: BinaryOp) -> Result<Tensor<T>> {
        if self.dims != other.dims {
            return Err(shape_err!("elementwise {:?} vs {:?}", self.dims, other.dims));
        }
        let f: fn(T, T) -> T = match op {
            BinaryOp::Add => |a, b| a + b,
            BinaryOp::Sub => |a, b| a - b,
            BinaryOp::Mul => |a, b| a * b,
        };
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Tensor { dims: self.dims, data })
    }

    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.elementwise(other, BinaryOp::Add)
    }

    pub fn sub(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.elementwise(other, BinaryOp::Sub)
    }

    pub fn mul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.elementwise(other, BinaryOp::Mul)
    }

    /// In-place `self += other`.
    pub fn add_assign(&mut self, other: &Tensor<T>) -> Result<()> {
        if self.dims != other.dims {
            return Err(shape_err!("add_assign {:?} vs {:?}", self.dims, other.dims));
        }
        self.data.iter_mut().zip(&other.data).for_each(|(a, &b)| *a = *a + b);
        Ok(())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Tensor<T> {
        Tensor { dims: self.dims, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn scale(&self, k: T) -> Tensor<T> {
        self.map(|v| v * k)
    }

    /// `Σ a[i]² / len`.
    pub fn reduce_mean_square(&self) -> T {
        let sum = self.data.iter().fold(T::zero(), |acc, &v| acc + v * v);
        sum / T::from_f64(self.data.len() as f64)
    }

    /// `Σ a[i] * b[i]`, accumulated in `f64`.
    pub fn dot(&self, other: &Tensor<T>) -> Result<f64> {
        if self.dims != other.dims {
            return Err(shape_err!("dot {:?} vs {:?}", self.dims, other.dims));
        }
        Ok(self.data.iter().zip(&other.data).map(|(&a, &b)| a.as_f64() * b.as_f64()).sum())
    }

    /// Converts to another precision.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor { dims: self.dims, data: self.data.iter().map(|&v| U::from_f64(v.as_f64())).collect() }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn create_fills() {
        let t = Tensor::<f32>::new([1, 1, 2, 2], 0.0).unwrap();
        assert_eq!(t.data(), &[0.0; 4]);
        let t = Tensor::<f32>::new([1, 2, 1, 1], 3.5).unwrap();
        assert_eq!(t.data(), &[3.5, 3.5]);
        assert_eq!(Tensor::<f64>::new([2, 3, 4, 5], 1.0).unwrap().len(), 120);
    }

    #[test]
    fn create_rejects_bad_dims() {
        assert!(matches!(Tensor::<f32>::zeros([1, 0, 2, 2]), Err(Error::Dimension(_))));
        let huge = usize::MAX / 2;
        assert!(matches!(Tensor::<f32>::zeros([huge, huge, 1, 1]), Err(Error::Dimension(_))));
        assert!(matches!(Tensor::<f32>::from_vec([1, 1, 2, 2], vec![0.0; 3]), Err(Error::Shape(_))));
    }

    #[test]
    fn elementwise_cases() {
        let x = Tensor::<f64>::from_vec([1, 1, 1, 3], vec![1.0, -2.0, 0.5]).unwrap();
        let z = Tensor::zeros([1, 1, 1, 3]).unwrap();
        assert_eq!(x.add(&z).unwrap(), x);
        assert_eq!(x.sub(&x).unwrap(), z);
        let a = Tensor::<f32>::from_vec([1, 1, 1, 2], vec![2.0, 3.0]).unwrap();
        let b = Tensor::<f32>::from_vec([1, 1, 1, 2], vec![4.0, 5.0]).unwrap();
        assert_eq!(a.mul(&b).unwrap().data(), &[8.0, 15.0]);
        let c = Tensor::<f32>::zeros([1, 2, 1, 1]).unwrap();
        assert!(matches!(a.add(&c), Err(Error::Shape(_))));
    }

    #[test]
    fn mean_square_cases() {
        assert_eq!(Tensor::<f64>::zeros([1, 1, 2, 2]).unwrap().reduce_mean_square(), 0.0);
        assert_eq!(Tensor::<f64>::new([1, 1, 2, 2], 1.0).unwrap().reduce_mean_square(), 1.0);
        let t = Tensor::<f64>::from_vec([1, 1, 1, 2], vec![3.0, 4.0]).unwrap();
        assert_eq!(t.reduce_mean_square(), 12.5);
    }

    #[test]
    fn layout_formula() {
        let data: Vec<f64> = (0..120).map(f64::from).collect();
        let t = Tensor::from_vec([2, 3, 4, 5], data).unwrap();
        assert_eq!(t.get(1, 2, 3, 4), 119.0);
        assert_eq!(t.get(1, 0, 0, 0), 60.0);
        assert_eq!(t.get(0, 1, 2, 3), 33.0);
        assert_eq!(t.plane(1, 1), &t.data()[80..100]);
    }

    fn tensor_strategy() -> impl Strategy<Value = (Tensor<f64>, Tensor<f64>, Tensor<f64>)> {
        (1usize..3, 1usize..3, 1usize..5, 1usize..5).prop_flat_map(|(n, c, h, w)| {
            let len = n * c * h * w;
            let v = || proptest::collection::vec(-10.0f64..10.0, len);
            (v(), v(), v()).prop_map(move |(a, b, c2)| {
                let d = [n, c, h, w];
                (
                    Tensor::from_vec(d, a).unwrap(),
                    Tensor::from_vec(d, b).unwrap(),
                    Tensor::from_vec(d, c2).unwrap(),
                )
            })
        })
    }

    proptest! {
        #[test]
        fn set_then_get(n in 0usize..2, c in 0usize..3, h in 0usize..4, w in 0usize..5, v in -1e6f64..1e6) {
            let mut t = Tensor::<f64>::zeros([2, 3, 4, 5]).unwrap();
            t.set(n, c, h, w, v);
            prop_assert_eq!(t.get(n, c, h, w), v);
            prop_assert_eq!(t.data()[((n * 3 + c) * 4 + h) * 5 + w], v);
        }

        #[test]
        fn add_commutes_and_associates((a, b, c) in tensor_strategy()) {
            prop_assert_eq!(a.add(&b).unwrap(), b.add(&a).unwrap());
            let l = a.add(&b).unwrap().add(&c).unwrap();
            let r = a.add(&b.add(&c).unwrap()).unwrap();
            for (x, y) in l.data().iter().zip(r.data()) {
                prop_assert!((x - y).abs() <= 4.0 * f64::EPSILON * (x.abs().max(1.0) * 30.0));
            }
        }

        #[test]
        fn mean_square_is_quadratic((a, _, _) in tensor_strategy(), k in -5.0f64..5.0) {
            let lhs = a.scale(k).reduce_mean_square();
            let rhs = k * k * a.reduce_mean_square();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1e-300));
        }
    }
}
