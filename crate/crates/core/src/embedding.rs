//! Reconstructive maps from the latent plane into `d` dimensions.
//!
//! A [`ReconstructiveMap`] first applies a smooth bijection of the plane
//! (affine map followed by a componentwise monotone warp), then lifts the
//! result into `R^d` through a matrix with orthonormal columns plus an
//! offset. The lift preserves distances, so posteriors over embedded points
//! equal the planar posteriors at their preimages: the bijection's Jacobian
//! scales every class likelihood and the marginal alike and cancels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::{LabeledDataset, Mixture, Mixture2D};
use crate::oracle::{posterior_2d, PosteriorVector};
use crate::rng::{standard_normal_pair, RngKey};

/// Largest residual norm for which a point counts as on the embedded plane.
pub const ON_MANIFOLD_TOL: f64 = 1e-6;

const ORTHONORMAL_TOL: f64 = 1e-12;

/// `x = basis * u + offset` with orthonormal basis columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLift")]
pub struct IsometricLift {
    /// `d` rows of the `d x 2` basis matrix.
    basis: Vec<[f64; 2]>,
    offset: Vec<f64>,
}

#[derive(Deserialize)]
struct RawLift {
    basis: Vec<[f64; 2]>,
    offset: Vec<f64>,
}

impl TryFrom<RawLift> for IsometricLift {
    type Error = Error;
    fn try_from(raw: RawLift) -> Result<Self> {
        IsometricLift::new(raw.basis, raw.offset)
    }
}

fn gram(basis: &[[f64; 2]]) -> [[f64; 2]; 2] {
    let mut g = [[0.0; 2]; 2];
    for row in basis {
        for i in 0..2 {
            for j in 0..2 {
                g[i][j] += row[i] * row[j];
            }
        }
    }
    g
}

impl IsometricLift {
    pub fn new(basis: Vec<[f64; 2]>, offset: Vec<f64>) -> Result<Self> {
        let d = basis.len();
        if d < 2 {
            return Err(Error::InvalidEmbedding(format!("lift dimension must be >= 2, got {d}")));
        }
        if offset.len() != d {
            return Err(Error::DimensionMismatch { expected: d, actual: offset.len() });
        }
        if basis.iter().flatten().chain(&offset).any(|v| !v.is_finite()) {
            return Err(Error::InvalidEmbedding("non-finite lift parameter".into()));
        }
        let g = gram(&basis);
        let err = (g[0][0] - 1.0).abs().max((g[1][1] - 1.0).abs()).max(g[0][1].abs());
        if err > ORTHONORMAL_TOL {
            return Err(Error::InvalidEmbedding(format!(
                "basis columns are not orthonormal (max |BᵀB - I| = {err:e})"
            )));
        }
        Ok(Self { basis, offset })
    }

    /// Identity lift on the plane (`d = 2`, basis `I`, zero offset).
    pub fn identity() -> Self {
        Self { basis: vec![[1.0, 0.0], [0.0, 1.0]], offset: vec![0.0, 0.0] }
    }

    pub fn with_offset(self, offset: Vec<f64>) -> Result<Self> {
        Self::new(self.basis, offset)
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[[f64; 2]] {
        &self.basis
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    /// `basisᵀ basis`, which is `I` up to rounding.
    pub fn gram(&self) -> [[f64; 2]; 2] {
        gram(&self.basis)
    }

    pub fn apply(&self, u: [f64; 2]) -> Vec<f64> {
        self.basis
            .iter()
            .zip(&self.offset)
            .map(|(b, o)| b[0] * u[0] + b[1] * u[1] + o)
            .collect()
    }

    /// Orthogonal projection onto the lifted plane: `(coordinates, residual norm)`.
    pub fn project(&self, x: &[f64]) -> Result<([f64; 2], f64)> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), actual: x.len() });
        }
        let mut u = [0.0; 2];
        for ((b, xi), o) in self.basis.iter().zip(x).zip(&self.offset) {
            let c = xi - o;
            u[0] += b[0] * c;
            u[1] += b[1] * c;
        }
        let residual = self
            .basis
            .iter()
            .zip(x)
            .zip(&self.offset)
            .map(|((b, xi), o)| {
                let r = xi - o - b[0] * u[0] - b[1] * u[1];
                r * r
            })
            .sum::<f64>()
            .sqrt();
        Ok((u, residual))
    }
}

/// Lift to `d` dimensions with a seeded random orthonormal basis (Gram–Schmidt
/// with one re-orthogonalization pass) and zero offset.
pub fn make_lift(d: usize, seed: u64) -> Result<IsometricLift> {
    if d < 2 {
        return Err(Error::InvalidEmbedding(format!("lift dimension must be >= 2, got {d}")));
    }
    let mut rng = RngKey::new(seed, 0).rng();
    let mut a = vec![0.0; d];
    let mut b = vec![0.0; d];
    for i in 0..d {
        let (z1, z2) = standard_normal_pair(&mut rng);
        a[i] = z1;
        b[i] = z2;
    }
    normalize(&mut a);
    for _ in 0..2 {
        let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        for (bi, ai) in b.iter_mut().zip(&a) {
            *bi -= dot * ai;
        }
        normalize(&mut b);
    }
    IsometricLift::new(a.into_iter().zip(b).map(|(x, y)| [x, y]).collect(), vec![0.0; d])
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
}

/// Componentwise strictly increasing smooth warp with a closed-form inverse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Warp {
    Identity,
    /// `w_i = scale_i * asinh(u_i / width_i)`
    Asinh { scale: [f64; 2], width: [f64; 2] },
    /// `w_i = scale_i * sinh(u_i / width_i)`
    Sinh { scale: [f64; 2], width: [f64; 2] },
}

impl Warp {
    fn validate(&self) -> Result<()> {
        match self {
            Warp::Identity => Ok(()),
            Warp::Asinh { scale, width } | Warp::Sinh { scale, width } => {
                if scale.iter().chain(width).all(|v| v.is_finite() && *v > 0.0) {
                    Ok(())
                } else {
                    Err(Error::InvalidEmbedding(format!(
                        "warp scale and width must be finite and > 0 ({scale:?}, {width:?})"
                    )))
                }
            }
        }
    }

    pub fn apply(&self, u: [f64; 2]) -> [f64; 2] {
        match *self {
            Warp::Identity => u,
            Warp::Asinh { scale, width } => {
                [0, 1].map(|i| scale[i] * (u[i] / width[i]).asinh())
            }
            Warp::Sinh { scale, width } => [0, 1].map(|i| scale[i] * (u[i] / width[i]).sinh()),
        }
    }

    pub fn inverse(&self, w: [f64; 2]) -> [f64; 2] {
        match *self {
            Warp::Identity => w,
            Warp::Asinh { scale, width } => [0, 1].map(|i| width[i] * (w[i] / scale[i]).sinh()),
            Warp::Sinh { scale, width } => [0, 1].map(|i| width[i] * (w[i] / scale[i]).asinh()),
        }
    }

    /// Per-coordinate derivative `dw_i / du_i`, strictly positive.
    pub fn derivative(&self, u: [f64; 2]) -> [f64; 2] {
        match *self {
            Warp::Identity => [1.0, 1.0],
            Warp::Asinh { scale, width } => [0, 1].map(|i| {
                let t = u[i] / width[i];
                scale[i] / (width[i] * (1.0 + t * t).sqrt())
            }),
            Warp::Sinh { scale, width } => {
                [0, 1].map(|i| scale[i] / width[i] * (u[i] / width[i]).cosh())
            }
        }
    }
}

/// `v -> warp(matrix * v + shift)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBijection")]
pub struct PlanarBijection {
    matrix: [[f64; 2]; 2],
    shift: [f64; 2],
    warp: Warp,
    #[serde(skip)]
    inverse: [[f64; 2]; 2],
}

#[derive(Deserialize)]
struct RawBijection {
    matrix: [[f64; 2]; 2],
    shift: [f64; 2],
    warp: Warp,
}

impl TryFrom<RawBijection> for PlanarBijection {
    type Error = Error;
    fn try_from(raw: RawBijection) -> Result<Self> {
        PlanarBijection::new(raw.matrix, raw.shift, raw.warp)
    }
}

impl PlanarBijection {
    pub fn new(matrix: [[f64; 2]; 2], shift: [f64; 2], warp: Warp) -> Result<Self> {
        if matrix.iter().flatten().chain(&shift).any(|v| !v.is_finite()) {
            return Err(Error::InvalidEmbedding("non-finite affine parameter".into()));
        }
        let det = matrix[0][0] * matrix[1][1] - matrix[0][1] * matrix[1][0];
        if det == 0.0 || !det.is_finite() {
            return Err(Error::InvalidEmbedding(format!("affine matrix is singular (det = {det})")));
        }
        warp.validate()?;
        let inverse = [
            [matrix[1][1] / det, -matrix[0][1] / det],
            [-matrix[1][0] / det, matrix[0][0] / det],
        ];
        Ok(Self { matrix, shift, warp, inverse })
    }

    pub fn identity() -> Self {
        Self::affine([[1.0, 0.0], [0.0, 1.0]], [0.0, 0.0]).expect("identity is invertible")
    }

    pub fn affine(matrix: [[f64; 2]; 2], shift: [f64; 2]) -> Result<Self> {
        Self::new(matrix, shift, Warp::Identity)
    }

    pub fn matrix(&self) -> [[f64; 2]; 2] {
        self.matrix
    }

    pub fn warp(&self) -> &Warp {
        &self.warp
    }

    fn affine_part(&self, v: [f64; 2]) -> [f64; 2] {
        let m = &self.matrix;
        [
            m[0][0] * v[0] + m[0][1] * v[1] + self.shift[0],
            m[1][0] * v[0] + m[1][1] * v[1] + self.shift[1],
        ]
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        self.warp.apply(self.affine_part(v))
    }

    pub fn inverse(&self, w: [f64; 2]) -> [f64; 2] {
        let u = self.warp.inverse(w);
        let (a, b) = (u[0] - self.shift[0], u[1] - self.shift[1]);
        let m = &self.inverse;
        [m[0][0] * a + m[0][1] * b, m[1][0] * a + m[1][1] * b]
    }

    /// `|det J|` at `v`: `|det matrix| * prod_i warp'(u_i)`.
    pub fn jacobian_det(&self, v: [f64; 2]) -> f64 {
        let m = &self.matrix;
        let det = (m[0][0] * m[1][1] - m[0][1] * m[1][0]).abs();
        let d = self.warp.derivative(self.affine_part(v));
        det * d[0] * d[1]
    }
}

pub fn bijection_jacobian(bij: &PlanarBijection, v: [f64; 2]) -> f64 {
    bij.jacobian_det(v)
}

/// Planar bijection followed by an isometric lift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructiveMap {
    pub bijection: PlanarBijection,
    pub lift: IsometricLift,
}

impl ReconstructiveMap {
    pub fn new(bijection: PlanarBijection, lift: IsometricLift) -> Self {
        Self { bijection, lift }
    }

    pub fn identity() -> Self {
        Self::new(PlanarBijection::identity(), IsometricLift::identity())
    }

    pub fn dim(&self) -> usize {
        self.lift.dim()
    }

    pub fn embed(&self, v: [f64; 2]) -> Result<Vec<f64>> {
        if !v.iter().all(|c| c.is_finite()) {
            return Err(Error::NonFinite(format!("latent point {v:?}")));
        }
        Ok(self.lift.apply(self.bijection.apply(v)))
    }

    pub fn invert(&self, x: &[f64]) -> Result<[f64; 2]> {
        if !x.iter().all(|c| c.is_finite()) {
            return Err(Error::NonFinite("embedded point".into()));
        }
        let (u, residual) = self.lift.project(x)?;
        if residual > ON_MANIFOLD_TOL {
            return Err(Error::OffManifold { residual });
        }
        Ok(self.bijection.inverse(u))
    }
}

pub fn embed(map: &ReconstructiveMap, v: [f64; 2]) -> Result<Vec<f64>> {
    map.embed(v)
}

pub fn invert(map: &ReconstructiveMap, x: &[f64]) -> Result<[f64; 2]> {
    map.invert(x)
}

/// True posterior at an embedded point, via its planar preimage.
pub fn posterior_via_embedding(
    model: &Mixture2D,
    map: &ReconstructiveMap,
    x: &[f64],
) -> Result<PosteriorVector> {
    posterior_2d(model, map.invert(x)?)
}

/// Sample plane points from `model` and map each through `map`.
pub fn sample_embedded(
    model: &Mixture2D,
    map: &ReconstructiveMap,
    n: usize,
    key: impl Into<RngKey>,
) -> Result<LabeledDataset> {
    let plane = model.sample(n, key);
    let mut out = LabeledDataset::with_capacity(map.dim(), model.num_components(), n);
    for (v, y) in plane.iter() {
        out.push(&map.embed([v[0], v[1]])?, y)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::ten_digit_2d;

    fn warped() -> PlanarBijection {
        PlanarBijection::new(
            [[1.2, 0.4], [-0.3, 0.9]],
            [0.5, -1.0],
            Warp::Asinh { scale: [3.0, 2.0], width: [2.0, 4.0] },
        )
        .unwrap()
    }

    fn dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
    }

    #[test]
    fn planar_lift_preserves_norm() {
        let map = ReconstructiveMap::new(PlanarBijection::identity(), make_lift(2, 3).unwrap());
        let v = [3.0, -4.0];
        let x = map.embed(v).unwrap();
        assert!((dist(&x, &[0.0, 0.0]) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn lift_basis_is_orthonormal() {
        for d in [2, 3, 17, 784] {
            let g = make_lift(d, d as u64).unwrap().gram();
            assert!((g[0][0] - 1.0).abs() < 1e-12);
            assert!((g[1][1] - 1.0).abs() < 1e-12);
            assert!(g[0][1].abs() < 1e-12);
        }
        assert!(make_lift(1, 0).is_err());
        assert_eq!(make_lift(10, 5).unwrap(), make_lift(10, 5).unwrap());
    }

    #[test]
    fn identity_and_translation() {
        let id = ReconstructiveMap::identity();
        assert_eq!(id.embed([1.5, -2.5]).unwrap(), vec![1.5, -2.5]);
        let lift = make_lift(5, 1).unwrap().with_offset(vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let map = ReconstructiveMap::new(PlanarBijection::identity(), lift);
        assert_eq!(map.embed([0.0, 0.0]).unwrap(), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(map.invert(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap(), [0.0, 0.0]);
    }

    #[test]
    fn asinh_warp_round_trips() {
        let map = ReconstructiveMap::new(warped(), make_lift(12, 9).unwrap());
        for v in [[0.0, 0.0], [7.5, -3.0], [-20.0, 14.0]] {
            let back = map.invert(&map.embed(v).unwrap()).unwrap();
            assert!((back[0] - v[0]).abs() < 1e-9 && (back[1] - v[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn off_manifold_is_rejected() {
        let lift = make_lift(3, 2).unwrap();
        // unit normal of the lifted plane: cross product of the basis columns
        let b = lift.basis();
        let n = [
            b[1][0] * b[2][1] - b[2][0] * b[1][1],
            b[2][0] * b[0][1] - b[0][0] * b[2][1],
            b[0][0] * b[1][1] - b[1][0] * b[0][1],
        ];
        let map = ReconstructiveMap::new(PlanarBijection::identity(), lift);
        let mut x = map.embed([1.0, 2.0]).unwrap();
        for i in 0..3 {
            x[i] += n[i];
        }
        match map.invert(&x) {
            Err(Error::OffManifold { residual }) => assert!((residual - 1.0).abs() < 1e-9),
            other => panic!("expected off-manifold error, got {other:?}"),
        }
        assert!(matches!(map.invert(&[0.0, 0.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn jacobian_closed_forms() {
        let id = PlanarBijection::identity();
        assert_eq!(id.jacobian_det([3.0, 1.0]), 1.0);
        let aff = PlanarBijection::affine([[2.0, 1.0], [0.5, -3.0]], [1.0, 1.0]).unwrap();
        for v in [[0.0, 0.0], [4.0, -9.0]] {
            assert!((aff.jacobian_det(v) - 6.5).abs() < 1e-15);
        }
        assert!(PlanarBijection::affine([[1.0, 2.0], [2.0, 4.0]], [0.0, 0.0]).is_err());
        assert!(PlanarBijection::new(
            [[1.0, 0.0], [0.0, 1.0]],
            [0.0, 0.0],
            Warp::Sinh { scale: [1.0, -1.0], width: [1.0, 1.0] }
        )
        .is_err());
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let bij = warped();
        let h = 1e-6;
        for v in [[0.3, -0.7], [5.0, 2.0], [-4.0, 8.0]] {
            let mut j = [[0.0; 2]; 2];
            for c in 0..2 {
                let mut vp = v;
                let mut vm = v;
                vp[c] += h;
                vm[c] -= h;
                let (fp, fm) = (bij.apply(vp), bij.apply(vm));
                for r in 0..2 {
                    j[r][c] = (fp[r] - fm[r]) / (2.0 * h);
                }
            }
            let fd = (j[0][0] * j[1][1] - j[0][1] * j[1][0]).abs();
            assert!((fd - bij.jacobian_det(v)).abs() < 1e-6, "{fd} vs {}", bij.jacobian_det(v));
        }
    }

    #[test]
    fn identity_map_posterior_matches_plane() {
        let m = ten_digit_2d();
        let map = ReconstructiveMap::identity();
        let v = [1.0, -3.0];
        assert_eq!(
            posterior_via_embedding(&m, &map, &v).unwrap(),
            posterior_2d(&m, v).unwrap()
        );
    }

    #[test]
    fn lift_only_posterior_matches_plane() {
        let m = ten_digit_2d();
        let map = ReconstructiveMap::new(PlanarBijection::identity(), make_lift(64, 4).unwrap());
        for v in [[0.0, 0.0], [-13.0, 5.0], [9.0, -7.5]] {
            let a = posterior_via_embedding(&m, &map, &map.embed(v).unwrap()).unwrap();
            let b = posterior_2d(&m, v).unwrap();
            for k in 0..10 {
                assert!((a[k] - b[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn embedded_dataset_shape() {
        let map = ReconstructiveMap::new(warped(), make_lift(8, 1).unwrap());
        let d = sample_embedded(&ten_digit_2d(), &map, 50, 3).unwrap();
        assert_eq!(d.dim(), 8);
        assert_eq!(d.len(), 50);
        for (x, _) in d.iter() {
            assert!(map.invert(x).is_ok());
        }
    }

    #[test]
    fn map_json_round_trip_is_exact() {
        let map = ReconstructiveMap::new(warped(), make_lift(6, 2).unwrap());
        let json = serde_json::to_string(&map).unwrap();
        let back: ReconstructiveMap = serde_json::from_str(&json).unwrap();
        assert_eq!(back, map);
        assert!(json.contains(r#""warp":{"kind":"asinh""#), "{json}");
    }
}
