use half::f16;
use serde::{Deserialize, Serialize};

/// Arithmetic precision of the victim's final projection, or of values an
/// API emits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    Fp64,
    Fp32,
    /// Emulated half precision: operands and products are rounded to the
    /// nearest f16, accumulation happens in f32, the result is rounded to f16.
    Fp16,
}

impl Precision {
    /// Round `x` to the nearest value representable at this precision.
    pub fn round(self, x: f64) -> f64 {
        match self {
            Precision::Fp64 => x,
            Precision::Fp32 => x as f32 as f64,
            Precision::Fp16 => f16::from_f64(x).to_f64(),
        }
    }

    /// The coarser of two precisions.
    pub fn coarser(self, other: Precision) -> Precision {
        if self.rank() >= other.rank() {
            self
        } else {
            other
        }
    }

    fn rank(self) -> u8 {
        match self {
            Precision::Fp64 => 0,
            Precision::Fp32 => 1,
            Precision::Fp16 => 2,
        }
    }

    /// Mean of `values` computed the way a framework would at this precision
    /// (f32 accumulation for the reduced formats), rounded to this precision.
    pub fn mean(self, values: impl Iterator<Item = f64>) -> f64 {
        match self {
            Precision::Fp64 => {
                let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
                s / n.max(1) as f64
            }
            Precision::Fp32 | Precision::Fp16 => {
                let (s, n) = values.fold((0.0f32, 0usize), |(s, n), v| (s + v as f32, n + 1));
                self.round((s / n.max(1) as f32) as f64)
            }
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Precision::Fp64 => "fp64",
            Precision::Fp32 => "fp32",
            Precision::Fp16 => "fp16",
        }
    }
}

impl std::str::FromStr for Precision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fp64" => Ok(Precision::Fp64),
            "fp32" => Ok(Precision::Fp32),
            "fp16" => Ok(Precision::Fp16),
            other => Err(format!("unknown precision `{other}` (expected fp64, fp32 or fp16)")),
        }
    }
}

/// Row-major copy of a projection matrix prepared for reduced-precision
/// matrix-vector products.
#[derive(Debug, Clone)]
pub(crate) struct ReducedProjection {
    precision: Precision,
    cols: usize,
    data: Vec<f32>,
}

impl ReducedProjection {
    pub(crate) fn new(precision: Precision, w: &nalgebra::DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(w.len());
        for i in 0..w.nrows() {
            for j in 0..w.ncols() {
                data.push(precision.round(w[(i, j)]) as f32);
            }
        }
        ReducedProjection { precision, cols: w.ncols(), data }
    }

    /// `W x` accumulated in f32, with f16 rounding of operands, products and
    /// result under `Fp16`. The result is not rounded for `Fp32`.
    pub(crate) fn apply(&self, x: &[f64]) -> Vec<f64> {
        let xs: Vec<f32> = x.iter().map(|&v| self.precision.round(v) as f32).collect();
        self.data
            .chunks_exact(self.cols)
            .map(|row| match self.precision {
                Precision::Fp16 => {
                    let acc = row.iter().zip(&xs).fold(0.0f32, |acc, (&w, &v)| {
                        acc + f16::from_f32(w * v).to_f32()
                    });
                    acc as f64
                }
                _ => row.iter().zip(&xs).map(|(&w, &v)| w * v).sum::<f32>() as f64,
            })
            .collect()
    }
}
