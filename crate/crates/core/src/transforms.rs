//! Pre- and post-processing of embedding spaces and the projection solvers.
//!
//! The pipeline for a fully processed model is:
//!
//! 1. length-normalize, mean-center, length-normalize again ([`s1_normalize`]),
//! 2. whiten both spaces with a ZCA transform fitted on the dictionary rows,
//! 3. map with the SVD factors of the whitened cross-covariance `X_Dᵀ Z_D`,
//!    re-weighted by the square roots of its singular values on both sides,
//! 4. de-whiten each side back into its own variance structure.
//!
//! Steps 2–4 are [`full_projection_step`]. [`solve_orthogonal`] is the plain
//! orthogonal Procrustes solution used by the `orthg-*` configurations.

use log::warn;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dictionary::Dictionary;
use crate::embeddings::EmbeddingSpace;
use crate::error::{Error, Result};
use crate::linalg::{self, gather_rows};

/// Relative floor applied to singular values when inverting for whitening.
pub const WHITENING_EPS: f64 = 1e-9;

/// Unit-normalize every row. Returns the new space and the number of zero rows.
pub fn length_normalize(space: &EmbeddingSpace) -> (EmbeddingSpace, usize) {
    let mut v = space.vectors().to_owned();
    let zeros = linalg::normalize_rows(&mut v);
    if zeros > 0 {
        warn!("{zeros} zero vectors left unnormalized");
    }
    (space.with_vectors(v), zeros)
}

/// Unit-normalize rows, center each dimension, unit-normalize again.
///
/// Zero rows (before or after centering) stay zero; the returned count sums
/// both normalization stages.
pub fn s1_normalize(space: &EmbeddingSpace) -> (EmbeddingSpace, usize) {
    let mut v = space.vectors().to_owned();
    let mut zeros = linalg::normalize_rows(&mut v);
    let mean = v.mean_axis(Axis(0)).expect("non-empty space");
    v -= &mean;
    zeros += linalg::normalize_rows(&mut v);
    if zeros > 0 {
        warn!("{zeros} zero vectors encountered during normalization");
    }
    (space.with_vectors(v), zeros)
}

/// ZCA whitening operator `T = V · diag(1 / max(sᵢ, ε·s₁)) · Vᵀ` for `A = U·diag(s)·Vᵀ`.
#[derive(Debug, Clone)]
pub struct WhiteningTransform {
    matrix: Array2<f64>,
    inverse: Array2<f64>,
    regularizer: f64,
}

impl WhiteningTransform {
    /// `d × d` whitening matrix, applied on the right: `A · T`.
    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.matrix.view()
    }

    /// `T⁻¹`, built from the same clamped spectrum.
    pub fn inverse(&self) -> ArrayView2<'_, f64> {
        self.inverse.view()
    }

    pub fn regularizer(&self) -> f64 {
        self.regularizer
    }
}

/// Fit a ZCA whitening transform on the rows of `a`.
///
/// `eps` is relative to the largest singular value: directions whose singular
/// value falls at or below `eps · s_max` are projected out (pseudo-inverse), so
/// a dictionary smaller than the dimension whitens only its own span. When
/// `a` is all zeros the identity is returned.
pub fn whitening_transform(a: ArrayView2<f64>, eps: f64) -> Result<WhiteningTransform> {
    let (n, d) = a.dim();
    if n == 0 || d == 0 {
        return Err(Error::Dimension("cannot whiten an empty matrix".into()));
    }
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::config("whitening regularizer must be positive"));
    }
    let (s, v) = linalg::right_singular_basis(a);
    let top = s[0];
    if top <= 0.0 {
        return Ok(WhiteningTransform {
            matrix: Array2::eye(d),
            inverse: Array2::eye(d),
            regularizer: eps,
        });
    }
    // directions below the cutoff are dropped rather than amplified
    let kept = s.mapv(|x| if x > eps * top { x } else { 0.0 });
    let inv = kept.mapv(|x| if x > 0.0 { x.recip() } else { 0.0 });
    let matrix = (&v * &inv).dot(&v.t());
    let inverse = (&v * &kept).dot(&v.t());
    Ok(WhiteningTransform {
        matrix,
        inverse,
        regularizer: eps,
    })
}

/// Which solver produced a [`ProjectionModel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionMode {
    Orthogonal,
    Full,
}

/// Projection step used inside self-learning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    /// Orthogonal Procrustes only.
    OrthogonalOnly,
    /// Whitening, orthogonal map, symmetric re-weighting, de-whitening.
    FullS2S4,
}

/// Linear maps taking both monolingual spaces into a shared space.
#[derive(Debug, Clone)]
pub struct ProjectionModel {
    pub mode: ProjectionMode,
    /// Composed `d × d` source map (`X ↦ X·w_x`).
    pub w_x: Array2<f64>,
    /// Composed `d × d` target map.
    pub w_z: Array2<f64>,
    /// Left singular vectors `U` of the (whitened) cross-covariance.
    pub rotation_x: Array2<f64>,
    /// Right singular vectors `V`.
    pub rotation_z: Array2<f64>,
    pub whitening_x: Option<WhiteningTransform>,
    pub whitening_z: Option<WhiteningTransform>,
    /// `Uᵀ T_x⁻¹ U`.
    pub dewhiten_x: Option<Array2<f64>>,
    /// `Vᵀ T_z⁻¹ V`.
    pub dewhiten_z: Option<Array2<f64>>,
    /// Singular values of the cross-covariance, non-increasing.
    pub singular_values: Array1<f64>,
}

impl ProjectionModel {
    pub fn dim(&self) -> usize {
        self.w_x.nrows()
    }

    pub fn map_source(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.w_x)
    }

    pub fn map_target(&self, z: ArrayView2<f64>) -> Array2<f64> {
        z.dot(&self.w_z)
    }

    /// `max |WᵀW − I|` over both maps.
    pub fn orthogonality_error(&self) -> f64 {
        linalg::orthogonality_error(self.w_x.view()).max(linalg::orthogonality_error(self.w_z.view()))
    }
}

fn check_inputs(x: ArrayView2<f64>, z: ArrayView2<f64>, dict: &Dictionary) -> Result<()> {
    if dict.is_empty() {
        return Err(Error::EmptyDictionary("projection needs at least one pair".into()));
    }
    if x.ncols() != z.ncols() {
        return Err(Error::Dimension(format!(
            "source dimension {} differs from target dimension {}",
            x.ncols(),
            z.ncols()
        )));
    }
    for &(s, t) in dict.pairs() {
        if s >= x.nrows() || t >= z.nrows() {
            return Err(Error::Dimension(format!(
                "pair ({s}, {t}) outside {}×{} matrices",
                x.nrows(),
                z.nrows()
            )));
        }
    }
    Ok(())
}

/// Orthogonal Procrustes: `W_x = U`, `W_z = V` for `U Σ Vᵀ = X_Dᵀ Z_D`.
pub fn solve_orthogonal(x: ArrayView2<f64>, z: ArrayView2<f64>, dict: &Dictionary) -> Result<ProjectionModel> {
    projection_step(x, z, dict, StepOptions::ORTHOGONAL)
}

/// Whitening, SVD map, symmetric re-weighting and de-whitening in one step.
pub fn full_projection_step(
    x: ArrayView2<f64>,
    z: ArrayView2<f64>,
    dict: &Dictionary,
    eps: f64,
) -> Result<ProjectionModel> {
    projection_step(
        x,
        z,
        dict,
        StepOptions {
            whiten: true,
            reweight: true,
            eps,
        },
    )
}

/// Dispatch on the step kind with the default regularizer.
pub fn solve_projection(
    kind: StepKind,
    x: ArrayView2<f64>,
    z: ArrayView2<f64>,
    dict: &Dictionary,
) -> Result<ProjectionModel> {
    match kind {
        StepKind::OrthogonalOnly => solve_orthogonal(x, z, dict),
        StepKind::FullS2S4 => full_projection_step(x, z, dict, WHITENING_EPS),
    }
}

#[derive(Debug, Clone, Copy)]
struct StepOptions {
    whiten: bool,
    reweight: bool,
    eps: f64,
}

impl StepOptions {
    const ORTHOGONAL: StepOptions = StepOptions {
        whiten: false,
        reweight: false,
        eps: WHITENING_EPS,
    };
}

fn projection_step(
    x: ArrayView2<f64>,
    z: ArrayView2<f64>,
    dict: &Dictionary,
    opts: StepOptions,
) -> Result<ProjectionModel> {
    check_inputs(x, z, dict)?;
    let d = x.ncols();
    let x_d = gather_rows(x, &dict.source_indices());
    let z_d = gather_rows(z, &dict.target_indices());

    let (white_x, white_z) = if opts.whiten {
        (
            Some(whitening_transform(x_d.view(), opts.eps)?),
            Some(whitening_transform(z_d.view(), opts.eps)?),
        )
    } else {
        (None, None)
    };
    let (xw_d, zw_d) = match (&white_x, &white_z) {
        (Some(tx), Some(tz)) => (x_d.dot(&tx.matrix), z_d.dot(&tz.matrix)),
        _ => (x_d, z_d),
    };

    let cross = xw_d.t().dot(&zw_d);
    let dec = linalg::svd(cross.view());
    let u = dec.u;
    let v = dec.vt.t().to_owned();
    let s = dec.s;

    if !opts.whiten && !opts.reweight {
        return Ok(ProjectionModel {
            mode: ProjectionMode::Orthogonal,
            w_x: u.clone(),
            w_z: v.clone(),
            rotation_x: u,
            rotation_z: v,
            whitening_x: None,
            whitening_z: None,
            dewhiten_x: None,
            dewhiten_z: None,
            singular_values: s,
        });
    }

    let weights = if opts.reweight {
        s.mapv(|x| x.max(0.0).sqrt())
    } else {
        Array1::ones(d)
    };
    let mut map_x = &u * &weights;
    let mut map_z = &v * &weights;
    let (mut dewhiten_x, mut dewhiten_z) = (None, None);
    if let (Some(tx), Some(tz)) = (&white_x, &white_z) {
        let dx = u.t().dot(&tx.inverse).dot(&u);
        let dz = v.t().dot(&tz.inverse).dot(&v);
        map_x = tx.matrix.dot(&map_x).dot(&dx);
        map_z = tz.matrix.dot(&map_z).dot(&dz);
        dewhiten_x = Some(dx);
        dewhiten_z = Some(dz);
    }

    Ok(ProjectionModel {
        mode: ProjectionMode::Full,
        w_x: map_x,
        w_z: map_z,
        rotation_x: u,
        rotation_z: v,
        whitening_x: white_x,
        whitening_z: white_z,
        dewhiten_x,
        dewhiten_z,
        singular_values: s,
    })
}
