//! Successive-cancellation decoding of polar and convolutional polar codes
//! over finite-state (Markov) channels, formulated as tensor-network
//! contraction.
//!
//! The crate is organized around five pieces:
//!
//! - [`tensor`]: a minimal dense tensor type with contraction, index
//!   fixing/summation and the constant tensors (point masses, all-ones,
//!   CNOT) everything else is built from;
//! - [`channel`]: memoryless and finite-state channel models, the
//!   Gilbert-Elliott construction, sampling, and the matrix-product-operator
//!   (MPO) form of a received word's likelihood;
//! - [`code`] / [`construct`]: polar and convolutional polar encoding
//!   circuits, and frozen-set construction from first-undetected-error
//!   probabilities;
//! - [`decoder`]: three interchangeable successive-cancellation engines —
//!   exponential brute force, a polynomial chain sweep, and the fast
//!   recursive block-message engine with recycling;
//! - [`sim`]: Monte Carlo frame-error-rate estimation over the three
//!   decoding regimes (memoryless, interleaved, correlated).
//!
//! All numeric kernels are generic over the scalar type through [`Scalar`];
//! `f64` aliases are exported at the crate root.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub mod channel;
pub mod code;
pub mod construct;
pub mod decoder;
pub mod scaled;
pub mod sim;
pub mod tensor;
pub mod verify;

/// Floating-point scalar the numeric core is generic over.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Shorthand for lossy conversion from `f64` literals.
    fn from_f64_lossy(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 conversion")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

pub use channel::{FiniteStateChannel, MemorylessChannel, Mpo};
pub use code::{Circuit, CodeFamily, CodeSpec};
pub use construct::ConstructionMode;
pub use decoder::{DecodeOptions, DecodeState, Engine, ScDecoder, StepTable, WindowLeg};
pub use scaled::Scaled;
pub use tensor::Tensor;

/// Concrete double-precision aliases.
pub type Tensor64 = Tensor<f64>;
pub type Tensor32 = Tensor<f32>;
pub type MemorylessChannel64 = MemorylessChannel<f64>;
pub type FiniteStateChannel64 = FiniteStateChannel<f64>;
pub type Mpo64 = Mpo<f64>;
pub type Scaled64 = Scaled<f64>;
pub type StepTable64 = StepTable<f64>;
pub type DecodeState64 = DecodeState<f64>;
