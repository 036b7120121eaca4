//! Dense real matrix exponential.
//!
//! [`expm`] first tries a real-Schur fast path that applies when the input is
//! normal (the Schur form is then block diagonal with 1×1 and 2×2 blocks, each
//! of which has a closed-form exponential). Anything else goes through
//! scaling and squaring with a diagonal Padé approximant, choosing the degree
//! from Higham's θ_m thresholds on the 1-norm.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const THETA: [(usize, f64); 5] = [
    (3, 1.495_585_217_958_292e-2),
    (5, 2.539_398_330_063_23e-1),
    (7, 9.504_178_996_162_932e-1),
    (9, 2.097_847_961_257_068),
    (13, 5.371_920_351_148_152),
];

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [
    17_297_280.0,
    8_648_640.0,
    1_995_840.0,
    277_200.0,
    25_200.0,
    1_512.0,
    56.0,
    1.0,
];
const B9: [f64; 10] = [
    17_643_225_600.0,
    8_821_612_800.0,
    2_075_673_600.0,
    302_702_400.0,
    30_270_240.0,
    2_162_160.0,
    110_880.0,
    3_960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

/// `exp(m)`, using the normal fast path when it applies.
pub fn expm(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(e) = expm_normal(m) {
        return Ok(e);
    }
    expm_pade(m)
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Scaling and squaring with a Padé approximant of degree 3, 5, 7, 9 or 13.
pub fn expm_pade(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::MatrixExponential("matrix is not square".into()));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::MatrixExponential("non-finite entry".into()));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(m.clone());
    }
    let norm = one_norm(m);
    let ident = DMatrix::<f64>::identity(n, n);

    for &(deg, theta) in &THETA[..4] {
        if norm <= theta {
            let (u, v) = pade_low(m, deg, &ident);
            return solve_pade(&u, &v);
        }
    }

    let theta13 = THETA[4].1;
    let s = if norm > theta13 {
        (norm / theta13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let a = m / 2f64.powi(s);
    let (u, v) = pade13(&a, &ident);
    let mut r = solve_pade(&u, &v)?;
    for _ in 0..s {
        r = &r * &r;
    }
    if r.iter().any(|x| !x.is_finite()) {
        return Err(Error::MatrixExponential(format!(
            "overflow after {s} squarings (norm {norm:.3e})"
        )));
    }
    Ok(r)
}

fn pade_low(a: &DMatrix<f64>, deg: usize, ident: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let b: &[f64] = match deg {
        3 => &B3,
        5 => &B5,
        7 => &B7,
        9 => &B9,
        _ => unreachable!("unsupported Padé degree {deg}"),
    };
    let a2 = a * a;
    let mut powers = vec![ident.clone(), a2.clone()];
    while powers.len() * 2 <= deg {
        let next = powers.last().unwrap() * &a2;
        powers.push(next);
    }
    let mut u_inner = DMatrix::zeros(a.nrows(), a.ncols());
    let mut v = DMatrix::zeros(a.nrows(), a.ncols());
    for (k, p) in powers.iter().enumerate() {
        u_inner += p * b[2 * k + 1];
        v += p * b[2 * k];
    }
    (a * u_inner, v)
}

fn pade13(a: &DMatrix<f64>, ident: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let b = &B13;
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_hi = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]);
    let u = a * (u_hi + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + ident * b[1]);
    let v_hi = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]);
    let v = v_hi + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + ident * b[0];
    (u, v)
}

fn solve_pade(u: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = v + u;
    let q = v - u;
    q.lu()
        .solve(&p)
        .ok_or_else(|| Error::MatrixExponential("singular Padé denominator".into()))
}

/// Exponential through the real Schur form, valid for normal matrices.
///
/// Returns `None` when the matrix is not normal to working precision, the
/// Schur iteration does not converge, or the quasi-triangular factor is not
/// block diagonal.
pub fn expm_normal(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if !m.is_square() || m.iter().any(|x| !x.is_finite()) {
        return None;
    }
    let n = m.nrows();
    let scale = m.amax();
    if scale == 0.0 {
        return Some(DMatrix::identity(n, n));
    }
    let mt = m.transpose();
    let comm = m * &mt - &mt * m;
    if comm.amax() > 1e-12 * scale * scale * n as f64 {
        return None;
    }
    let (q, t) = m.clone().try_schur(f64::EPSILON, 10_000)?.unpack();

    let tol = 1e-10 * scale;
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)].abs() > tol {
            blocks.push((i, 2));
            i += 2;
        } else {
            blocks.push((i, 1));
            i += 1;
        }
    }
    let mut et = DMatrix::zeros(n, n);
    let mut covered = DMatrix::from_element(n, n, false);
    for &(i, size) in &blocks {
        if size == 1 {
            et[(i, i)] = t[(i, i)].exp();
            covered[(i, i)] = true;
        } else {
            let e = exp2x2(t[(i, i)], t[(i, i + 1)], t[(i + 1, i)], t[(i + 1, i + 1)]);
            for (r, c) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                et[(i + r, i + c)] = e[r][c];
                covered[(i + r, i + c)] = true;
            }
        }
    }
    for r in 0..n {
        for c in 0..n {
            if !covered[(r, c)] && t[(r, c)].abs() > tol {
                return None;
            }
        }
    }
    Some(&q * et * q.transpose())
}

/// Closed-form exponential of `[[a, b], [c, d]]`.
fn exp2x2(a: f64, b: f64, c: f64, d: f64) -> [[f64; 2]; 2] {
    let s = 0.5 * (a + d);
    let (na, nd) = (a - s, d - s);
    // N = M - sI satisfies N² = q I.
    let q = na * na + b * c;
    let (ch, sh_over) = if q < 0.0 {
        let w = (-q).sqrt();
        (w.cos(), w.sin() / w)
    } else if q > 0.0 {
        let w = q.sqrt();
        (w.cosh(), w.sinh() / w)
    } else {
        (1.0, 1.0)
    };
    let es = s.exp();
    [
        [es * (ch + sh_over * na), es * sh_over * b],
        [es * sh_over * c, es * (ch + sh_over * nd)],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Taylor series with enough terms for small norms; independent of both
    // production routes.
    fn taylor(m: &DMatrix<f64>) -> DMatrix<f64> {
        let n = m.nrows();
        let mut term = DMatrix::<f64>::identity(n, n);
        let mut sum = term.clone();
        for k in 1..60 {
            term = &term * m / k as f64;
            sum += &term;
        }
        sum
    }

    fn random(n: usize, scale: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |_, _| scale * (rng.random::<f64>() - 0.5))
    }

    #[test]
    fn pade_matches_taylor_for_every_degree() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &scale in &[1e-3, 0.05, 0.3, 0.8, 1.5, 3.0] {
            let m = random(6, scale, &mut rng);
            let diff = (expm_pade(&m).unwrap() - taylor(&m)).amax();
            assert!(diff < 1e-13, "scale {scale}: {diff}");
        }
    }

    #[test]
    fn rotation_generator() {
        let theta: f64 = 37.3;
        let m = DMatrix::from_row_slice(2, 2, &[0.0, theta, -theta, 0.0]);
        let expected = DMatrix::from_row_slice(2, 2, &[theta.cos(), theta.sin(), -theta.sin(), theta.cos()]);
        assert!((expm_pade(&m).unwrap() - &expected).amax() < 1e-12);
        assert!((expm_normal(&m).unwrap() - &expected).amax() < 1e-12);
    }

    #[test]
    fn symmetric_matches_eigen_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random(5, 4.0, &mut rng);
        let s = &a + a.transpose();
        let eig = s.clone().symmetric_eigen();
        let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::exp));
        let expected = &eig.eigenvectors * d * eig.eigenvectors.transpose();
        let rel = |x: DMatrix<f64>| (x - &expected).amax() / expected.amax();
        assert!(rel(expm_pade(&s).unwrap()) < 1e-12);
        assert!(rel(expm_normal(&s).unwrap()) < 1e-12);
    }

    #[test]
    fn normal_path_agrees_with_pade_on_damped_rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            // Orthogonal similarity of a block-diagonal damped rotation.
            let n = 8;
            let mut blk = DMatrix::zeros(n, n);
            for k in 0..n / 2 {
                let g = rng.random::<f64>();
                let w = 20.0 * (rng.random::<f64>() - 0.5);
                let i = 2 * k;
                blk[(i, i)] = -g;
                blk[(i + 1, i + 1)] = -g;
                blk[(i, i + 1)] = w;
                blk[(i + 1, i)] = -w;
            }
            let q = random(n, 1.0, &mut rng).qr().q();
            let m = &q * blk * q.transpose() * 3.0;
            let fast = expm_normal(&m).expect("normal input");
            let pade = expm_pade(&m).unwrap();
            assert!((fast - pade).amax() < 1e-11);
        }
    }

    #[test]
    fn non_normal_is_refused_by_fast_path() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 5.0, 0.0, 2.0]);
        assert!(expm_normal(&m).is_none());
        let e = expm(&m).unwrap();
        // Upper-triangular closed form.
        let e1 = 1f64.exp();
        let e2 = 2f64.exp();
        let expected = DMatrix::from_row_slice(2, 2, &[e1, 5.0 * (e2 - e1), 0.0, e2]);
        assert!((e - expected).amax() < 1e-12);
    }

    #[test]
    fn rejects_non_finite() {
        let m = DMatrix::from_row_slice(1, 1, &[f64::NAN]);
        assert!(expm(&m).is_err());
    }
}
