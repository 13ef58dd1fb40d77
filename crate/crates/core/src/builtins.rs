//! Built-in example pairs. Each instance is assembled from blocks
//! `Bᵢ = [[Aᵢ, −Cᵢᵀ], [Cᵢ, Dᵢ]]`, so `K` is spanned by the first `k` axes.

use serde::Serialize;

use crate::decomposition::BlockFamily;
use crate::error::{GuasError, Result};
use crate::linalg::Mat;
use crate::matrix_core::MatrixPair;

pub const EXAMPLE_NAMES: [&str; 5] = ["hurwitz", "shared-output", "kdeux", "torus", "mason"];

#[derive(Debug, Clone, PartialEq)]
pub struct ExampleInstance {
    pub name: String,
    pub description: String,
    pub pair: MatrixPair,
    pub expected: ExpectedOutcome,
}

/// What is known about the instance, independently of the analyzer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpectedOutcome {
    /// Conclusion the analyzer is expected to print.
    pub conclusion: &'static str,
    /// Whether the switched system is known to be GUAS.
    pub guas: bool,
    pub note: String,
}

fn rotation(omega: f64) -> Mat {
    Mat::from_row_slice(2, 2, &[0.0, omega, -omega, 0.0])
}

fn pair_from_blocks(blocks: &BlockFamily, p: Option<Mat>) -> Result<MatrixPair> {
    MatrixPair::new(blocks.assemble(0.0), blocks.assemble(1.0), p)
}

/// A single Hurwitz matrix `[[A, −Cᵀ], [C, D]]` with `A` a unit rotation,
/// `C = [1 0]`, `D = [−1]`, used as both modes.
pub fn hurwitz_example() -> ExampleInstance {
    let c = Mat::from_row_slice(1, 2, &[1.0, 0.0]);
    let d = Mat::from_row_slice(1, 1, &[-1.0]);
    let blocks = BlockFamily::new(rotation(1.0), rotation(1.0), c.clone(), c, d.clone(), d)
        .expect("consistent block shapes");
    ExampleInstance {
        name: "hurwitz".into(),
        description: "one matrix [[A, -C^T], [C, D]] with A a rotation, C = [1 0], D = [-1], used for both modes".into(),
        pair: pair_from_blocks(&blocks, None).expect("valid pair"),
        expected: ExpectedOutcome {
            conclusion: "GUAS_dimK_le2",
            guas: true,
            note: "the matrix is Hurwitz because (C, A) is observable and D + D^T < 0".into(),
        },
    }
}

/// Family 1: common skew `A` and common `C` with `(C, A)` observable, `D₀ ≠ D₁`.
/// Family 2: `A = 0` and `C_λ` injective for every λ.
pub fn shared_output_example(family: u8) -> Result<ExampleInstance> {
    let (blocks, conclusion, note) = match family {
        1 => {
            let c = Mat::from_row_slice(1, 2, &[1.0, 0.0]);
            (
                BlockFamily::new(
                    rotation(1.0),
                    rotation(1.0),
                    c.clone(),
                    c,
                    Mat::from_row_slice(1, 1, &[-1.0]),
                    Mat::from_row_slice(1, 1, &[-3.0]),
                )?,
                "GUAS_dimK_le2",
                "the bilinear system does not depend on λ and (C, A) is observable",
            )
        }
        2 => (
            BlockFamily::new(
                Mat::zeros(2, 2),
                Mat::zeros(2, 2),
                Mat::identity(2, 2),
                Mat::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]),
                -Mat::identity(2, 2),
                -Mat::identity(2, 2) * 2.0,
            )?,
            "GUAS_C_injective",
            "A = 0, so the system is GUAS iff C_λ is one-to-one for all λ, which holds here",
        ),
        other => {
            return Err(GuasError::InvalidArgument(format!(
                "shared-output family must be 1 or 2, got {other}"
            )))
        }
    };
    Ok(ExampleInstance {
        name: "shared-output".into(),
        description: format!("shared-output family {family}"),
        pair: pair_from_blocks(&blocks, None)?,
        expected: ExpectedOutcome {
            conclusion,
            guas: true,
            note: note.into(),
        },
    })
}

/// `dim K = 2`: `A₀`, `A₁` rotations at rates `a`, `b`; `C₀ = [1 0]`, `C₁ = [0 1]`, `D = [−1]`.
pub fn kdeux_blocks(a: f64, b: f64) -> BlockFamily {
    let d = Mat::from_row_slice(1, 1, &[-1.0]);
    BlockFamily::new(
        rotation(a),
        rotation(b),
        Mat::from_row_slice(1, 2, &[1.0, 0.0]),
        Mat::from_row_slice(1, 2, &[0.0, 1.0]),
        d.clone(),
        d,
    )
    .expect("consistent block shapes")
}

/// Closed form of `det Kalman(λ)` for [`kdeux_blocks`].
pub fn kdeux_kalman_determinant(a: f64, b: f64, lambda: f64) -> f64 {
    (2.0 * lambda * lambda - 2.0 * lambda + 1.0) * ((1.0 - lambda) * a + lambda * b)
}

pub fn kdeux_example(a: f64, b: f64) -> ExampleInstance {
    let guas = a * b > 0.0;
    ExampleInstance {
        name: "kdeux".into(),
        description: format!("dim K = 2 rotations at rates a = {a}, b = {b} with outputs x1 and x2"),
        pair: pair_from_blocks(&kdeux_blocks(a, b), None).expect("valid pair"),
        expected: ExpectedOutcome {
            conclusion: if guas { "GUAS_dimK_le2" } else { "NOT_GUAS_constant_input" },
            guas,
            note: "GUAS iff ab > 0".into(),
        },
    }
}

/// `A` block-diagonal with rotations `[[0, −a_j], [a_j, 0]]`,
/// `C₀ = [1 0 1 0 …]`, `C₁ = [0 1 0 1 …]`, `Dᵢ = [−dᵢ]`.
pub fn torus_blocks(freqs: &[f64], d0: f64, d1: f64) -> Result<BlockFamily> {
    if freqs.is_empty() {
        return Err(GuasError::InvalidArgument("torus needs at least one frequency".into()));
    }
    if !(d0 > 0.0 && d1 > 0.0) {
        return Err(GuasError::InvalidArgument(format!(
            "torus needs positive d0, d1, got {d0}, {d1}"
        )));
    }
    let q = freqs.len();
    let mut a = Mat::zeros(2 * q, 2 * q);
    let mut c0 = Mat::zeros(1, 2 * q);
    let mut c1 = Mat::zeros(1, 2 * q);
    for (j, &w) in freqs.iter().enumerate() {
        a[(2 * j, 2 * j + 1)] = -w;
        a[(2 * j + 1, 2 * j)] = w;
        c0[(0, 2 * j)] = 1.0;
        c1[(0, 2 * j + 1)] = 1.0;
    }
    BlockFamily::new(
        a.clone(),
        a,
        c0,
        c1,
        Mat::from_row_slice(1, 1, &[-d0]),
        Mat::from_row_slice(1, 1, &[-d1]),
    )
}

pub fn torus_default_freqs() -> Vec<f64> {
    vec![1.0, 2f64.sqrt()]
}

pub fn torus_example(freqs: &[f64], d0: f64, d1: f64) -> Result<ExampleInstance> {
    let blocks = torus_blocks(freqs, d0, d1)?;
    Ok(ExampleInstance {
        name: "torus".into(),
        description: format!("torus with frequencies {freqs:?}, d0 = {d0}, d1 = {d1}"),
        pair: pair_from_blocks(&blocks, None)?,
        expected: ExpectedOutcome {
            conclusion: "INCONCLUSIVE",
            guas: true,
            note: "GUAS for rationally independent frequencies: every orbit of A is dense in its torus and so leaves F. \
                   That density argument is outside the automated sufficient conditions."
                .into(),
        },
    })
}

/// Planar pair with a weak but no strict common quadratic Lyapunov function.
pub fn mason_pair() -> MatrixPair {
    let r2 = 2f64.sqrt();
    let b0 = Mat::from_row_slice(2, 2, &[-1.0, -1.0, 1.0, -1.0]);
    let b1 = Mat::from_row_slice(2, 2, &[-1.0, -3.0 - 2.0 * r2, 3.0 - 2.0 * r2, -1.0]);
    let p = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 3.0 + 2.0 * r2]);
    MatrixPair::new(b0, b1, Some(p)).expect("valid pair")
}

pub fn mason_example() -> ExampleInstance {
    ExampleInstance {
        name: "mason".into(),
        description: "planar pair, GUAS with a weak common quadratic Lyapunov function and no strict one".into(),
        pair: mason_pair(),
        expected: ExpectedOutcome {
            conclusion: "GUAS_trivial_kernel",
            guas: true,
            note: "the curves det M_i = 0 are ellipses touching at r = 3 + 2√2, so no strict P exists".into(),
        },
    }
}

/// Instance by name with default parameters.
pub fn example_by_name(name: &str) -> Result<ExampleInstance> {
    match name {
        "hurwitz" => Ok(hurwitz_example()),
        "shared-output" => shared_output_example(2),
        "kdeux" => Ok(kdeux_example(1.0, 1.0)),
        "torus" => torus_example(&torus_default_freqs(), 1.0, 2.0),
        "mason" => Ok(mason_example()),
        other => Err(GuasError::UnknownExample(other.to_string())),
    }
}
