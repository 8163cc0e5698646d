//! Reduction of prestrained thin elastic sheets to effective plate models.
//!
//! The pipeline goes from a 3D energy density and a prestrain `Ā + hB` to
//! the plane-stress relaxed form, then to thickness moments (effective
//! bending tensor, preferred curvature, residue), and evaluates the limiting
//! plate energy on discrete midsurfaces. The `ansatz` and `regimes` modules
//! check the reduction against direct 3D energy quadrature.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ansatz;
pub mod effective;
pub mod elastic;
pub mod midsurface;
pub mod par;
pub mod prestrain;
pub mod quadrature;
pub mod regimes;
pub mod relax;
pub mod sampling;
pub mod symalg;
pub mod verify;

pub use symalg::{Mat3, QuadForm2, QuadForm3, SymMat2, SymMat3, Vec2, Vec3};

use thiserror::Error as ThisError;

/// Any error raised by the library.
#[derive(Debug, ThisError, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Symalg(#[from] symalg::SymalgError),
    #[error(transparent)]
    Elastic(#[from] elastic::ElasticError),
    #[error(transparent)]
    Relax(#[from] relax::RelaxError),
    #[error(transparent)]
    Effective(#[from] effective::EffectiveError),
    #[error(transparent)]
    Midsurface(#[from] midsurface::MidsurfaceError),
    #[error(transparent)]
    Ansatz(#[from] ansatz::AnsatzError),
    #[error(transparent)]
    Regimes(#[from] regimes::RegimesError),
}

impl Error {
    /// True when the error points at invalid input (parameters, exponents,
    /// geometry) rather than a numerical failure.
    pub fn is_input_error(&self) -> bool {
        use ansatz::AnsatzError as A;
        use elastic::ElasticError as E;
        use midsurface::MidsurfaceError as M;
        use regimes::RegimesError as R;
        matches!(
            self,
            Error::Elastic(E::BadModuli { .. } | E::StepTooSmall { .. })
                | Error::Midsurface(M::GridTooSmall { .. } | M::SizeMismatch { .. })
                | Error::Ansatz(
                    A::BadTarget { .. }
                        | A::BadThickness { .. }
                        | A::PreconditionII { .. }
                        | A::NotIsometric { .. }
                        | A::VaryingCurvature { .. }
                )
                | Error::Regimes(
                    R::GeometryOverlap { .. }
                        | R::BadExponents { .. }
                        | R::NotCommuting { .. }
                        | R::NonIdentityAbar { .. }
                        | R::BadThickness { .. }
                        | R::TooFewThicknesses { .. }
                )
        )
    }
}
