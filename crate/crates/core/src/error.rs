use num_complex::Complex64 as C64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("evaluation at λ = 0")]
    ZeroLambda,
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("point {0} lies in an excluded disk")]
    Excluded(C64),
    #[error("grid fields carry no derivative jets; use d_z/d_zbar on the grid")]
    GridOrder,
    #[error("point {0} is outside the grid chart")]
    OutsideChart(C64),
    #[error("rank drop at {z}: expected rank {expected}")]
    RankDrop { z: C64, expected: usize },
    #[error("field is not unitary (deviation {0:e})")]
    NotUnitary(f64),
    #[error("map is not harmonic (residual {0:e})")]
    NotHarmonic(f64),
    #[error("matrix not invertible at {0}")]
    NotInvertible(C64),
    #[error("already constant: A_z vanishes identically")]
    AlreadyConstant,
    #[error("budget exhausted after {steps} steps")]
    BudgetExhausted { steps: usize, trace: Vec<(usize, usize)> },
    #[error("window too small: loop degrees [{dmin}, {dmax}] need R >= {need_r}, S >= {need_s}")]
    WindowTooSmall { dmin: i32, dmax: i32, need_r: usize, need_s: usize },
    #[error("window exhausted: a component reached degree {0}")]
    WindowExhausted(i32),
    #[error("intersection rank ambiguous: singular value gap {sigma_k:e} vs {sigma_next:e}")]
    IntersectionAmbiguous { sigma_k: f64, sigma_next: f64 },
    #[error("subbundles not orthogonal (overlap {0:e})")]
    NonOrthogonal(f64),
    #[error("vertices do not span: rank sum {found}, ambient {expected}")]
    NonSpanning { expected: usize, found: usize },
    #[error("matrix is not normal (deviation {0:e})")]
    NotNormal(f64),
    #[error("strongly isotropic map has no first return map")]
    StronglyIsotropic,
    #[error("constant map: A_z vanishes identically")]
    ConstantMap,
    #[error("radius {r} violates the contraction bound {bound}")]
    RadiusTooLarge { r: f64, bound: f64 },
    #[error("Neumann series does not contract (measured ratio {0})")]
    NonContraction(f64),
    #[error("field is not a unit real vector (deviation {0:e})")]
    NotUnitVector(f64),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
