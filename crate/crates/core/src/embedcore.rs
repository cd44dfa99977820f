//! Seeded sampling of Gaussian and Haar-orthogonal matrices, effective
//! subspace projections and the minimal-norm reduced minimizer.
//!
//! All randomness flows through [`SeededRng`], a ChaCha8 generator keyed by
//! a `(master_seed, stream_id)` pair. Standard normal variates come from the
//! ziggurat sampler of `rand_distr` 0.5; matrices are filled in row-major
//! order. Both choices are part of the reproducibility contract: changing
//! either changes every recorded run.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Orthonormality tolerance for subspace bases and rotations.
pub const ORTHO_TOL: f64 = 1e-10;
/// Relative singular-value threshold below which `B` is treated as rank deficient.
pub const RANK_TOL: f64 = 1e-12;

/// Mixes a sequence of tags into a single 64-bit stream identifier.
pub fn stream_id(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        h = splitmix64(h ^ splitmix64(p));
    }
    h
}

/// Stable 64-bit tag for a string label (FNV-1a).
pub fn label_tag(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A reproducible random stream identified by `(master_seed, stream_id)`.
#[derive(Clone, Debug)]
pub struct SeededRng {
    master_seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(master_seed);
        inner.set_stream(stream_id);
        Self {
            master_seed,
            stream_id,
            inner,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// A fresh stream under the same master seed, keyed by this stream and `tag`.
    /// Independent of how many values have been drawn from `self`.
    pub fn derive(&self, tag: u64) -> SeededRng {
        SeededRng::new(self.master_seed, stream_id(&[self.stream_id, tag]))
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform draw in `[lo, hi]`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.inner.random::<f64>()
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// `rows × cols` matrix of i.i.d. standard normals, drawn in row-major order.
pub fn sample_gaussian(rows: usize, cols: usize, rng: &mut SeededRng) -> Matrix {
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.standard_normal()).collect();
    Matrix::from_row_slice(rows, cols, &data)
}

/// Haar-distributed `n × n` orthogonal matrix: QR of a Gaussian matrix with
/// the columns of `Q` flipped so that `diag(R) > 0`.
pub fn sample_haar_orthogonal(n: usize, rng: &mut SeededRng) -> Matrix {
    let g = sample_gaussian(n, n, rng);
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Uniform draw in `[-1, 1]^dim`.
pub fn sample_uniform_box(dim: usize, rng: &mut SeededRng) -> Vector {
    Vector::from_iterator(dim, (0..dim).map(|_| rng.uniform(-1.0, 1.0)))
}

/// Largest absolute deviation of `MᵀM` from the identity.
pub fn orthonormality_residual(m: &Matrix) -> f64 {
    let g = m.transpose() * m;
    let n = g.nrows();
    (g - Matrix::identity(n, n)).amax()
}

/// Orthonormal bases `U` (effective, `D × d_e`) and `V` (constant, `D × (D - d_e)`).
#[derive(Clone, Debug)]
pub struct EffectiveSubspace {
    u: Matrix,
    v: Matrix,
}

impl EffectiveSubspace {
    pub fn new(u: Matrix, v: Matrix) -> Result<Self> {
        let dim = u.nrows();
        if v.nrows() != dim || u.ncols() + v.ncols() != dim {
            return Err(Error::DimensionMismatch(format!(
                "U is {}x{}, V is {}x{}",
                u.nrows(),
                u.ncols(),
                v.nrows(),
                v.ncols()
            )));
        }
        if u.ncols() == 0 {
            return Err(Error::InvalidArgument(
                "effective dimension must be >= 1".into(),
            ));
        }
        let ru = orthonormality_residual(&u);
        let rv = if v.ncols() > 0 {
            orthonormality_residual(&v)
        } else {
            0.0
        };
        let cross = if v.ncols() > 0 {
            (u.transpose() * &v).amax()
        } else {
            0.0
        };
        if ru > ORTHO_TOL || rv > ORTHO_TOL || cross > ORTHO_TOL {
            return Err(Error::InvalidArgument(format!(
                "bases not orthonormal: |UᵀU-I|={ru:.2e}, |VᵀV-I|={rv:.2e}, |UᵀV|={cross:.2e}"
            )));
        }
        Ok(Self { u, v })
    }

    /// `U = [I 0]ᵀ`, `V = [0 I]ᵀ`.
    pub fn aligned(dim: usize, d_e: usize) -> Result<Self> {
        if d_e == 0 || d_e > dim {
            return Err(Error::InvalidArgument(format!("d_e={d_e} with D={dim}")));
        }
        let eye = Matrix::identity(dim, dim);
        Self::new(
            eye.columns(0, d_e).into_owned(),
            eye.columns(d_e, dim - d_e).into_owned(),
        )
    }

    /// Bases read off the rows of an orthogonal matrix: the first `d_e` rows span
    /// the effective subspace.
    pub fn from_rotation(q: &Matrix, d_e: usize) -> Result<Self> {
        let dim = q.nrows();
        if q.ncols() != dim || d_e == 0 || d_e > dim {
            return Err(Error::DimensionMismatch(format!(
                "rotation {}x{} with d_e={d_e}",
                q.nrows(),
                q.ncols()
            )));
        }
        let u = q.rows(0, d_e).transpose();
        let v = q.rows(d_e, dim - d_e).transpose();
        Self::new(u, v)
    }

    pub fn u(&self) -> &Matrix {
        &self.u
    }

    pub fn v(&self) -> &Matrix {
        &self.v
    }

    pub fn ambient_dim(&self) -> usize {
        self.u.nrows()
    }

    pub fn effective_dim(&self) -> usize {
        self.u.ncols()
    }

    pub fn is_aligned(&self) -> bool {
        let d_e = self.effective_dim();
        self.u.iter().enumerate().all(|(idx, &x)| {
            // column-major storage
            let (i, j) = (idx % self.u.nrows(), idx / self.u.nrows());
            let expect = if i == j && j < d_e { 1.0 } else { 0.0 };
            (x - expect).abs() <= 1e-12
        })
    }

    /// `(UUᵀx, VVᵀx)`.
    pub fn project(&self, x: &Vector) -> Result<(Vector, Vector)> {
        if x.len() != self.ambient_dim() {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} for D={}",
                x.len(),
                self.ambient_dim()
            )));
        }
        let top = &self.u * (self.u.transpose() * x);
        let perp = &self.v * (self.v.transpose() * x);
        Ok((top, perp))
    }
}

/// The affine map `y ↦ Ay + p` from `ℝ^d` into `ℝ^D`, anchored at `p ∈ [-1,1]^D`.
#[derive(Clone, Debug)]
pub struct Embedding {
    a: Matrix,
    p: Vector,
}

impl Embedding {
    pub fn new(a: Matrix, p: Vector) -> Result<Self> {
        let (dim, d) = a.shape();
        if d == 0 || dim < d {
            return Err(Error::InvalidArgument(format!(
                "embedding matrix is {dim}x{d}"
            )));
        }
        if p.len() != dim {
            return Err(Error::DimensionMismatch(format!(
                "anchor of length {} for D={dim}",
                p.len()
            )));
        }
        if p.iter().any(|v| !v.is_finite() || v.abs() > 1.0 + 1e-9) {
            return Err(Error::InvalidArgument(
                "anchor point outside [-1,1]^D".into(),
            ));
        }
        let p = p.map(|v| v.clamp(-1.0, 1.0));
        Ok(Self { a, p })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn p(&self) -> &Vector {
        &self.p
    }

    pub fn ambient_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn reduced_dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn map(&self, y: &Vector) -> Vector {
        &self.a * y + &self.p
    }
}

/// Minimum Euclidean-norm solution of `B y = z*`, i.e. `Bᵀ(BBᵀ)⁻¹z*`,
/// computed from a thin QR factorisation of `Bᵀ`.
pub fn minimal_norm_y(b: &Matrix, z_star: &Vector) -> Result<Vector> {
    let (d_e, d) = b.shape();
    if z_star.len() != d_e {
        return Err(Error::DimensionMismatch(format!(
            "B is {d_e}x{d} but z* has length {}",
            z_star.len()
        )));
    }
    if d < d_e {
        return Err(Error::Degenerate(format!(
            "B is {d_e}x{d}: cannot have full row rank"
        )));
    }
    let sv = b.clone().svd(false, false).singular_values;
    let smax = sv.max();
    let smin = sv.min();
    if !(smax > 0.0) || smin <= RANK_TOL * smax {
        return Err(Error::Degenerate(format!(
            "B is rank deficient (σ_min/σ_max = {:.3e})",
            if smax > 0.0 { smin / smax } else { 0.0 }
        )));
    }
    // Bᵀ = QR with Q: d × d_e, R: d_e × d_e; then B y = z ⇔ Rᵀ Qᵀ y = z and the
    // minimal-norm solution lies in range(Q).
    let qr = b.transpose().qr();
    let q = qr.q();
    let r = qr.r();
    let c = r
        .transpose()
        .solve_lower_triangular(z_star)
        .ok_or_else(|| Error::Degenerate("triangular factor is singular".into()))?;
    Ok(q * c)
}

/// `w = VᵀA y₂*`, the constant-subspace component of `A y₂*`.
pub fn compute_w(sub: &EffectiveSubspace, a: &Matrix, y2: &Vector) -> Result<Vector> {
    if a.nrows() != sub.ambient_dim() || a.ncols() != y2.len() {
        return Err(Error::DimensionMismatch(format!(
            "A is {}x{}, y has length {}, D={}",
            a.nrows(),
            a.ncols(),
            y2.len(),
            sub.ambient_dim()
        )));
    }
    Ok(sub.v().transpose() * (a * y2))
}

/// The pieces of the minimal-norm reduced minimizer for one embedding.
#[derive(Clone, Debug)]
pub struct ReducedMinimizer {
    /// `z*` with `U z* = x_top* - p_top`.
    pub z: Vector,
    /// `y₂* = Bᵀ(BBᵀ)⁻¹z*`; zero when `x_top* = p_top`.
    pub y: Vector,
}

/// Solves for the minimal-norm `y` with `A y + p` on the affine set
/// `x_top* + range(V)`.
pub fn reduced_minimizer(
    sub: &EffectiveSubspace,
    a: &Matrix,
    x_top_star: &Vector,
    p: &Vector,
) -> Result<ReducedMinimizer> {
    if a.nrows() != sub.ambient_dim()
        || x_top_star.len() != sub.ambient_dim()
        || p.len() != sub.ambient_dim()
    {
        return Err(Error::DimensionMismatch("reduced_minimizer inputs".into()));
    }
    let z = sub.u().transpose() * (x_top_star - p);
    if z.norm() == 0.0 {
        return Ok(ReducedMinimizer {
            z,
            y: Vector::zeros(a.ncols()),
        });
    }
    let b = sub.u().transpose() * a;
    let y = minimal_norm_y(&b, &z)?;
    Ok(ReducedMinimizer { z, y })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_is_deterministic() {
        let a = sample_gaussian(2, 3, &mut SeededRng::new(7, 0));
        let b = sample_gaussian(2, 3, &mut SeededRng::new(7, 0));
        assert_eq!(a, b);
        let c = sample_gaussian(2, 3, &mut SeededRng::new(7, 1));
        assert_ne!(a, c);
    }

    #[test]
    fn gaussian_single_entry_is_finite() {
        for seed in 0..20 {
            let m = sample_gaussian(1, 1, &mut SeededRng::new(seed, 3));
            assert!(m[(0, 0)].is_finite());
        }
    }

    #[test]
    fn gaussian_entry_moments() {
        let samples = 2000;
        let mut sum = Matrix::zeros(10, 4);
        let mut sumsq = Matrix::zeros(10, 4);
        let mut rng = SeededRng::new(11, 0);
        for _ in 0..samples {
            let m = sample_gaussian(10, 4, &mut rng);
            sum += &m;
            sumsq += m.component_mul(&m);
        }
        let n = samples as f64;
        for idx in 0..40 {
            let mean = sum[idx] / n;
            let var = sumsq[idx] / n - mean * mean;
            assert!(mean.abs() <= 3.0 / n.sqrt(), "mean {mean}");
            // sd of the sample variance of N(0,1) is sqrt(2/n)
            assert!((var - 1.0).abs() <= 3.0 * (2.0 / n).sqrt(), "var {var}");
        }
    }

    #[test]
    fn haar_is_orthogonal() {
        let q = sample_haar_orthogonal(3, &mut SeededRng::new(1, 2));
        assert!(orthonormality_residual(&q) <= 1e-10);
        let q5 = sample_haar_orthogonal(5, &mut SeededRng::new(3, 2));
        assert!((q5.determinant().abs() - 1.0).abs() <= 1e-8);
    }

    #[test]
    fn haar_one_dimensional_is_fair_sign() {
        let n = 4000;
        let mut rng = SeededRng::new(99, 0);
        let plus = (0..n)
            .filter(|_| {
                let q = sample_haar_orthogonal(1, &mut rng)[(0, 0)];
                assert!((q.abs() - 1.0).abs() < 1e-12);
                q > 0.0
            })
            .count();
        let freq = plus as f64 / n as f64;
        assert!((freq - 0.5).abs() <= 3.0 / (n as f64).sqrt(), "freq {freq}");
    }

    #[test]
    fn aligned_projection() {
        let sub = EffectiveSubspace::aligned(4, 2).unwrap();
        let x = Vector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let (top, perp) = sub.project(&x).unwrap();
        assert_eq!(top.as_slice(), &[1.0, 2.0, 0.0, 0.0]);
        assert_eq!(perp.as_slice(), &[0.0, 0.0, 3.0, 4.0]);
        assert!(sub.is_aligned());
    }

    #[test]
    fn projection_of_effective_vector_has_no_perp_part() {
        let q = sample_haar_orthogonal(6, &mut SeededRng::new(5, 5));
        let sub = EffectiveSubspace::from_rotation(&q, 2).unwrap();
        assert!(!sub.is_aligned());
        let x = sub.u() * Vector::from_vec(vec![0.3, -1.2]);
        let (top, perp) = sub.project(&x).unwrap();
        assert!(perp.amax() <= 1e-10);
        assert!((top - x).amax() <= 1e-10);
    }

    #[test]
    fn projection_dimension_mismatch() {
        let sub = EffectiveSubspace::aligned(4, 2).unwrap();
        assert!(matches!(
            sub.project(&Vector::zeros(3)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn subspace_rejects_non_orthonormal() {
        let u = Matrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let v = Matrix::from_row_slice(2, 1, &[1.0, -1.0]);
        assert!(EffectiveSubspace::new(u, v).is_err());
    }

    #[test]
    fn min_norm_identity_system() {
        let b = Matrix::identity(2, 2);
        let y = minimal_norm_y(&b, &Vector::from_vec(vec![3.0, 4.0])).unwrap();
        assert!((y - Vector::from_vec(vec![3.0, 4.0])).amax() < 1e-14);
    }

    #[test]
    fn min_norm_zero_rhs() {
        let b = sample_gaussian(2, 4, &mut SeededRng::new(1, 1));
        let y = minimal_norm_y(&b, &Vector::zeros(2)).unwrap();
        assert_eq!(y.amax(), 0.0);
    }

    #[test]
    fn min_norm_rank_deficient() {
        let b = Matrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert!(matches!(
            minimal_norm_y(&b, &Vector::from_vec(vec![1.0, 2.0])),
            Err(Error::Degenerate(_))
        ));
        let wide = Matrix::from_row_slice(2, 1, &[1.0, 2.0]);
        assert!(minimal_norm_y(&wide, &Vector::from_vec(vec![1.0, 2.0])).is_err());
    }

    #[test]
    fn min_norm_beats_null_space_perturbations() {
        let mut rng = SeededRng::new(21, 0);
        let b = sample_gaussian(2, 4, &mut rng);
        let z = Vector::from_vec(vec![rng.standard_normal(), rng.standard_normal()]);
        let y = minimal_norm_y(&b, &z).unwrap();
        assert!((&b * &y - &z).norm() <= 1e-8 * z.norm().max(1.0));
        // null space of B from the full SVD
        let svd = b.clone().svd(false, true);
        let vt = svd.v_t.unwrap();
        let full = {
            // complete the row space basis to R^4 via QR of [Vᵀ_rows | I]
            let mut m = Matrix::zeros(4, 4);
            m.rows_mut(0, 2).copy_from(&vt);
            let seed = sample_gaussian(2, 4, &mut rng);
            m.rows_mut(2, 2).copy_from(&seed);
            m.transpose().qr().q()
        };
        let null = full.columns(2, 2).into_owned();
        assert!((&b * &null).amax() < 1e-10);
        for _ in 0..100 {
            let c = Vector::from_vec(vec![rng.standard_normal(), rng.standard_normal()]);
            let n = &null * c;
            assert!(y.norm() <= (&y + &n).norm() + 1e-12);
            assert!(y.dot(&n).abs() <= 1e-8 * n.norm().max(1.0));
        }
    }

    #[test]
    fn w_vanishes_when_constant_rows_are_zero() {
        let sub = EffectiveSubspace::aligned(4, 2).unwrap();
        let mut a = sample_gaussian(4, 2, &mut SeededRng::new(3, 3));
        a.rows_mut(2, 2).fill(0.0);
        let w = compute_w(&sub, &a, &Vector::from_vec(vec![0.5, -0.25])).unwrap();
        assert_eq!(w.amax(), 0.0);
    }

    #[test]
    fn w_two_dimensional_hand_computation() {
        // D = 2, d_e = d = 1, U = e1, V = e2, A = (2, 3)ᵀ.
        let sub = EffectiveSubspace::aligned(2, 1).unwrap();
        let a = Matrix::from_row_slice(2, 1, &[2.0, 3.0]);
        let x_top = Vector::from_vec(vec![0.5, 0.0]);
        let p = Vector::from_vec(vec![-0.1, 0.4]);
        let rm = reduced_minimizer(&sub, &a, &x_top, &p).unwrap();
        // z* = 0.6, B = 2 ⇒ y = 0.3 and w = 3 * 0.3.
        assert!((rm.y[0] - 0.3).abs() < 1e-14);
        let w = compute_w(&sub, &a, &rm.y).unwrap();
        assert!((w[0] - 0.9).abs() < 1e-14);
    }

    #[test]
    fn reconstruction_identity_random_instance() {
        let mut rng = SeededRng::new(8, 8);
        let q = sample_haar_orthogonal(7, &mut rng);
        let sub = EffectiveSubspace::from_rotation(&q, 2).unwrap();
        let a = sample_gaussian(7, 3, &mut rng);
        let x_top = sub.u() * Vector::from_vec(vec![0.4, -0.7]);
        let p = sample_uniform_box(7, &mut rng);
        let rm = reduced_minimizer(&sub, &a, &x_top, &p).unwrap();
        let w = compute_w(&sub, &a, &rm.y).unwrap();
        let lhs = &a * &rm.y;
        let rhs = sub.u() * &rm.z + sub.v() * &w;
        assert!((lhs.clone() - rhs).norm() <= 1e-8);
        let (p_top, _) = sub.project(&p).unwrap();
        assert!((lhs - (&x_top - p_top + sub.v() * &w)).norm() <= 1e-8);
    }

    #[test]
    fn derived_streams_are_stable() {
        let base = SeededRng::new(5, 17);
        let mut used = base.clone();
        for _ in 0..10 {
            used.standard_normal();
        }
        let mut a = base.derive(3);
        let mut b = used.derive(3);
        assert_eq!(a.next_u64(), b.next_u64());
    }
}
