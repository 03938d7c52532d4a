//! Scalar abstraction used by the network kernels.
//!
//! Layers are written once over [`Real`] and instantiated for plain `f32`
//! and for [`Dual`] numbers. Running a first-order backward pass with dual
//! inputs yields an exact Hessian-vector product, which is what the gradient
//! penalty needs to differentiate through an input gradient.

use core::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

pub trait Real:
    Copy
    + Default
    + PartialEq
    + core::fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + Send
    + Sync
    + 'static
{
    fn from_f32(x: f32) -> Self;
    /// Primal value.
    fn val(self) -> f32;
    /// Tangent (directional derivative). Always zero for plain floats.
    fn tan(self) -> f32;
    /// Multiplication by a constant.
    fn scale(self, w: f32) -> Self;
    fn sqrt(self) -> Self;
    fn tanh(self) -> Self;
    fn sigmoid(self) -> Self;
    fn is_finite(self) -> bool;

    #[inline]
    fn zero() -> Self {
        Self::default()
    }
}

impl Real for f32 {
    #[inline]
    fn from_f32(x: f32) -> Self {
        x
    }
    #[inline]
    fn val(self) -> f32 {
        self
    }
    #[inline]
    fn tan(self) -> f32 {
        0.0
    }
    #[inline]
    fn scale(self, w: f32) -> Self {
        self * w
    }
    #[inline]
    fn sqrt(self) -> Self {
        libm::sqrtf(self)
    }
    #[inline]
    fn tanh(self) -> Self {
        libm::tanhf(self)
    }
    #[inline]
    fn sigmoid(self) -> Self {
        sigmoid(self)
    }
    #[inline]
    fn is_finite(self) -> bool {
        f32::is_finite(self)
    }
}

#[inline]
pub(crate) fn sigmoid(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::expf(-x))
    } else {
        let e = libm::expf(x);
        e / (1.0 + e)
    }
}

/// Forward-mode dual number `v + d·ε` with `ε² = 0`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[repr(C)]
pub struct Dual {
    pub v: f32,
    pub d: f32,
}

impl Dual {
    pub const fn new(v: f32, d: f32) -> Self {
        Self { v, d }
    }
}

impl Add for Dual {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.v + o.v, self.d + o.d)
    }
}

impl Sub for Dual {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.v - o.v, self.d - o.d)
    }
}

impl Mul for Dual {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Self::new(self.v * o.v, self.v * o.d + self.d * o.v)
    }
}

impl Div for Dual {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let q = self.v / o.v;
        Self::new(q, (self.d - q * o.d) / o.v)
    }
}

impl Neg for Dual {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.v, -self.d)
    }
}

impl AddAssign for Dual {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        self.v += o.v;
        self.d += o.d;
    }
}

impl Real for Dual {
    #[inline]
    fn from_f32(x: f32) -> Self {
        Self::new(x, 0.0)
    }
    #[inline]
    fn val(self) -> f32 {
        self.v
    }
    #[inline]
    fn tan(self) -> f32 {
        self.d
    }
    #[inline]
    fn scale(self, w: f32) -> Self {
        Self::new(self.v * w, self.d * w)
    }
    #[inline]
    fn sqrt(self) -> Self {
        let s = libm::sqrtf(self.v);
        let d = if s > 0.0 { self.d / (2.0 * s) } else { 0.0 };
        Self::new(s, d)
    }
    #[inline]
    fn tanh(self) -> Self {
        let t = libm::tanhf(self.v);
        Self::new(t, self.d * (1.0 - t * t))
    }
    #[inline]
    fn sigmoid(self) -> Self {
        let s = sigmoid(self.v);
        Self::new(s, self.d * s * (1.0 - s))
    }
    #[inline]
    fn is_finite(self) -> bool {
        self.v.is_finite() && self.d.is_finite()
    }
}
