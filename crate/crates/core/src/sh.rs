//! Real spherical harmonics up to degree 4.
//!
//! Coefficients are ordered by band, `m` from `-l` to `l` within a band.
//! Bands 0..=3 use the sign convention of the common 3DGS color
//! evaluation, so coefficients read from trained scenes evaluate
//! identically.

use nalgebra::{DMatrix, Vector3};

use crate::error::{Error, Result};

pub const MAX_DEGREE: usize = 4;

pub const SH_C0: f64 = 0.282_094_791_773_878_14;
const SH_C1: f64 = 0.488_602_511_902_919_9;
const SH_C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
const SH_C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];
const SH_C4: [f64; 9] = [
    2.503_342_941_796_704_5,
    -1.770_130_769_779_930_4,
    0.946_174_695_757_560_1,
    -0.669_046_543_557_289_2,
    0.105_785_546_915_204_31,
    -0.669_046_543_557_289_2,
    0.473_087_347_878_780_04,
    -1.770_130_769_779_930_4,
    0.625_835_735_449_176_1,
];

/// Number of coefficients for one channel of degree `degree`.
pub const fn coeff_count(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

/// Degree whose coefficient count is `n`, if `n` is a perfect square.
pub fn degree_for_count(n: usize) -> Option<usize> {
    (0..=MAX_DEGREE).find(|&l| coeff_count(l) == n)
}

/// Writes all basis values `Y_lm(dir)` for `l <= degree` into `out`.
pub fn basis(degree: usize, dir: &Vector3<f64>, out: &mut [f64]) {
    debug_assert!(degree <= MAX_DEGREE);
    debug_assert!(out.len() >= coeff_count(degree));
    let (x, y, z) = (dir.x, dir.y, dir.z);
    out[0] = SH_C0;
    if degree < 1 {
        return;
    }
    out[1] = -SH_C1 * y;
    out[2] = SH_C1 * z;
    out[3] = -SH_C1 * x;
    if degree < 2 {
        return;
    }
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let (xy, yz, xz) = (x * y, y * z, x * z);
    out[4] = SH_C2[0] * xy;
    out[5] = SH_C2[1] * yz;
    out[6] = SH_C2[2] * (2.0 * zz - xx - yy);
    out[7] = SH_C2[3] * xz;
    out[8] = SH_C2[4] * (xx - yy);
    if degree < 3 {
        return;
    }
    out[9] = SH_C3[0] * y * (3.0 * xx - yy);
    out[10] = SH_C3[1] * xy * z;
    out[11] = SH_C3[2] * y * (4.0 * zz - xx - yy);
    out[12] = SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
    out[13] = SH_C3[4] * x * (4.0 * zz - xx - yy);
    out[14] = SH_C3[5] * z * (xx - yy);
    out[15] = SH_C3[6] * x * (xx - 3.0 * yy);
    if degree < 4 {
        return;
    }
    out[16] = SH_C4[0] * xy * (xx - yy);
    out[17] = SH_C4[1] * yz * (3.0 * xx - yy);
    out[18] = SH_C4[2] * xy * (7.0 * zz - 1.0);
    out[19] = SH_C4[3] * yz * (7.0 * zz - 3.0);
    out[20] = SH_C4[4] * (35.0 * zz * zz - 30.0 * zz + 3.0);
    out[21] = SH_C4[5] * xz * (7.0 * zz - 3.0);
    out[22] = SH_C4[6] * (xx - yy) * (7.0 * zz - 1.0);
    out[23] = SH_C4[7] * xz * (xx - 3.0 * yy);
    out[24] = SH_C4[8] * (xx * (xx - 3.0 * yy) - yy * (3.0 * xx - yy));
}

pub fn basis_vec(degree: usize, dir: &Vector3<f64>) -> Vec<f64> {
    let mut out = vec![0.0; coeff_count(degree)];
    basis(degree, dir, &mut out);
    out
}

/// Evaluates `sum_lm c_lm Y_lm(dir)`.
pub fn sh_eval(coeffs: &[f64], dir: &Vector3<f64>, degree: usize) -> Result<f64> {
    if degree > MAX_DEGREE {
        return Err(Error::invalid(format!("sh degree {degree} > {MAX_DEGREE}")));
    }
    if coeffs.len() != coeff_count(degree) {
        return Err(Error::invalid(format!(
            "expected {} sh coefficients for degree {degree}, got {}",
            coeff_count(degree),
            coeffs.len()
        )));
    }
    Ok(eval_unchecked(coeffs, dir, degree))
}

#[inline]
pub(crate) fn eval_unchecked(coeffs: &[f64], dir: &Vector3<f64>, degree: usize) -> f64 {
    let mut b = [0.0; coeff_count(MAX_DEGREE)];
    basis(degree, dir, &mut b);
    coeffs.iter().zip(b.iter()).map(|(c, y)| c * y).sum()
}

/// `n` near-uniform unit directions on a Fibonacci lattice.
pub fn fibonacci_sphere(n: usize) -> Vec<Vector3<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            Vector3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

const FIT_RIDGE: f64 = 1e-8;
const RANK_TOL: f64 = 1e-9;

/// Least-squares SH fitter for a fixed direction set. The solve matrix is
/// precomputed once, so fitting many sphere functions is a mat-vec each.
#[derive(Clone, Debug)]
pub struct ShFitter {
    degree: usize,
    n_samples: usize,
    // coeff_count x n_samples
    solve: DMatrix<f64>,
}

impl ShFitter {
    pub fn new(directions: &[Vector3<f64>], degree: usize) -> Result<Self> {
        if degree > MAX_DEGREE {
            return Err(Error::invalid(format!("sh degree {degree} > {MAX_DEGREE}")));
        }
        let nc = coeff_count(degree);
        if directions.len() < nc {
            return Err(Error::invalid(format!(
                "sh fit needs at least {nc} samples, got {}",
                directions.len()
            )));
        }
        let mut design = DMatrix::zeros(directions.len(), nc);
        let mut b = vec![0.0; nc];
        for (i, d) in directions.iter().enumerate() {
            basis(degree, d, &mut b);
            for (j, v) in b.iter().enumerate() {
                design[(i, j)] = *v;
            }
        }
        let gram = design.transpose() * &design;
        let eig = gram.clone().symmetric_eigenvalues();
        let max = eig.max();
        let min = eig.min();
        if !(min > RANK_TOL * max) {
            return Err(Error::invalid(format!(
                "sh fit design is rank deficient (eigenvalue ratio {:e})",
                min / max
            )));
        }
        let regularized = gram + DMatrix::identity(nc, nc) * FIT_RIDGE;
        let chol = regularized
            .cholesky()
            .ok_or_else(|| Error::invalid("sh fit normal equations not positive definite"))?;
        let solve = chol.solve(&design.transpose());
        Ok(Self {
            degree,
            n_samples: directions.len(),
            solve,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn fit(&self, samples: &[f64]) -> Result<Vec<f64>> {
        if samples.len() != self.n_samples {
            return Err(Error::invalid(format!(
                "expected {} samples, got {}",
                self.n_samples,
                samples.len()
            )));
        }
        let mut out = vec![0.0; self.solve.nrows()];
        self.fit_into(samples, &mut out);
        Ok(out)
    }

    pub(crate) fn fit_into(&self, samples: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (i, s) in samples.iter().enumerate() {
                acc += self.solve[(j, i)] * s;
            }
            *o = acc;
        }
    }
}

/// One-shot least-squares fit of SH coefficients to sampled values.
pub fn sh_fit(samples: &[f64], directions: &[Vector3<f64>], degree: usize) -> Result<Vec<f64>> {
    if samples.len() != directions.len() {
        return Err(Error::invalid("sample and direction counts differ"));
    }
    ShFitter::new(directions, degree)?.fit(samples)
}
