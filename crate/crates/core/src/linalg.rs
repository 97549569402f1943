//! Dense linear-algebra helpers that nalgebra does not provide directly.
//!
//! The main piece is a nonsymmetric eigensolver: Householder reduction to
//! upper Hessenberg form followed by single-shift complex QR iterations
//! (Wilkinson shifts, exceptional shifts on stagnation) to reach a complex
//! Schur form `A = Q T Q^*`. Eigenvectors are recovered by back substitution
//! on `T`. The reduced matrices this crate feeds it are small (rank of an
//! estimated operator, typically below a hundred).

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};

use crate::error::{Result, SgotError};

pub type C64 = Complex<f64>;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };

pub fn to_complex(m: &DMatrix<f64>) -> DMatrix<C64> {
    m.map(|v| C64::new(v, 0.0))
}

pub fn real_part(m: &DMatrix<C64>) -> DMatrix<f64> {
    m.map(|v| v.re)
}

/// Eigenpairs of a general square matrix, `A v_i = values[i] v_i`, columns of
/// `vectors` normalized to unit Euclidean norm.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<C64>,
    pub vectors: DMatrix<C64>,
}

/// Reduce `a` to upper Hessenberg form in place, accumulating the unitary
/// similarity in `q` (`a_in = q a_out q^*`).
fn hessenberg(a: &mut DMatrix<C64>, q: &mut DMatrix<C64>) {
    let n = a.nrows();
    if n < 3 {
        return;
    }
    for k in 0..n - 2 {
        let mut norm2 = 0.0;
        for i in k + 1..n {
            norm2 += a[(i, k)].norm_sqr();
        }
        let norm = norm2.sqrt();
        if norm == 0.0 {
            continue;
        }
        let x0 = a[(k + 1, k)];
        let phase = if x0.norm() == 0.0 { ONE } else { x0 / x0.norm() };
        // v = x + phase * |x| e1
        let mut v: Vec<C64> = (k + 1..n).map(|i| a[(i, k)]).collect();
        v[0] += phase * norm;
        let vnorm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        // A <- H A, H = I - 2 v v^* / (v^* v)
        for j in 0..n {
            let mut s = ZERO;
            for (t, vi) in v.iter().enumerate() {
                s += vi.conj() * a[(k + 1 + t, j)];
            }
            let s = s * (2.0 / vnorm2);
            for (t, vi) in v.iter().enumerate() {
                a[(k + 1 + t, j)] -= vi * s;
            }
        }
        // A <- A H, Q <- Q H
        for mat in [&mut *a, &mut *q] {
            for i in 0..n {
                let mut s = ZERO;
                for (t, vi) in v.iter().enumerate() {
                    s += mat[(i, k + 1 + t)] * vi;
                }
                let s = s * (2.0 / vnorm2);
                for (t, vi) in v.iter().enumerate() {
                    mat[(i, k + 1 + t)] -= s * vi.conj();
                }
            }
        }
        for i in k + 2..n {
            a[(i, k)] = ZERO;
        }
    }
}

/// Eigenvalue of the 2x2 block `[[a, b], [c, d]]` closest to `d`.
fn wilkinson_shift(a: C64, b: C64, c: C64, d: C64) -> C64 {
    let half = (a - d) * 0.5;
    let disc = (half * half + b * c).sqrt();
    let mean = (a + d) * 0.5;
    let l1 = mean + disc;
    let l2 = mean - disc;
    if (l1 - d).norm() <= (l2 - d).norm() {
        l1
    } else {
        l2
    }
}

/// Complex Schur decomposition `a = q t q^*` with `t` upper triangular.
pub fn schur(a: &DMatrix<C64>) -> Result<(DMatrix<C64>, DMatrix<C64>)> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(SgotError::Dimension(format!(
            "schur: matrix is {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let mut t = a.clone();
    let mut q = DMatrix::<C64>::identity(n, n);
    if n == 0 {
        return Ok((t, q));
    }
    if t.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(SgotError::Numerical("schur: non-finite input".into()));
    }
    hessenberg(&mut t, &mut q);

    let eps = f64::EPSILON;
    let scale = t.iter().map(|z| z.norm()).fold(0.0_f64, f64::max).max(f64::MIN_POSITIVE);
    let mut hi = n - 1;
    let mut iter = 0usize;
    let max_iter = 100 * n.max(10);
    let mut total = 0usize;
    while hi > 0 {
        // Deflate negligible subdiagonal entries.
        for k in (1..=hi).rev() {
            let tol = eps * (t[(k, k)].norm() + t[(k - 1, k - 1)].norm());
            if t[(k, k - 1)].norm() <= tol.max(eps * eps * scale) {
                t[(k, k - 1)] = ZERO;
            }
        }
        if t[(hi, hi - 1)] == ZERO {
            hi -= 1;
            iter = 0;
            continue;
        }
        let mut lo = hi - 1;
        while lo > 0 && t[(lo, lo - 1)] != ZERO {
            lo -= 1;
        }
        iter += 1;
        total += 1;
        if total > max_iter {
            return Err(SgotError::NonConvergence(
                "complex QR iteration did not converge".into(),
            ));
        }
        let sigma = if iter % 11 == 0 {
            // Exceptional shift to break cycles.
            t[(hi, hi)] + C64::new(0.75 * t[(hi, hi - 1)].norm(), 0.0)
        } else {
            wilkinson_shift(
                t[(hi - 1, hi - 1)],
                t[(hi - 1, hi)],
                t[(hi, hi - 1)],
                t[(hi, hi)],
            )
        };

        for i in lo..=hi {
            t[(i, i)] -= sigma;
        }
        let mut rots: Vec<(f64, C64)> = Vec::with_capacity(hi - lo);
        for k in lo..hi {
            let x = t[(k, k)];
            let y = t[(k + 1, k)];
            let r = (x.norm_sqr() + y.norm_sqr()).sqrt();
            let (c, s) = if r == 0.0 {
                (1.0, ZERO)
            } else if x.norm() == 0.0 {
                (0.0, y.conj() / y.norm())
            } else {
                (x.norm() / r, (x / x.norm()) * y.conj() / r)
            };
            for j in lo..n {
                let a1 = t[(k, j)];
                let a2 = t[(k + 1, j)];
                t[(k, j)] = a1 * c + s * a2;
                t[(k + 1, j)] = -s.conj() * a1 + a2 * c;
            }
            t[(k + 1, k)] = ZERO;
            rots.push((c, s));
        }
        for (idx, &(c, s)) in rots.iter().enumerate() {
            let k = lo + idx;
            let last = (k + 2).min(hi);
            for i in 0..=last {
                let a1 = t[(i, k)];
                let a2 = t[(i, k + 1)];
                t[(i, k)] = a1 * c + a2 * s.conj();
                t[(i, k + 1)] = -a1 * s + a2 * c;
            }
            for i in 0..n {
                let a1 = q[(i, k)];
                let a2 = q[(i, k + 1)];
                q[(i, k)] = a1 * c + a2 * s.conj();
                q[(i, k + 1)] = -a1 * s + a2 * c;
            }
        }
        for i in lo..=hi {
            t[(i, i)] += sigma;
        }
    }
    for j in 0..n {
        for i in j + 1..n {
            t[(i, j)] = ZERO;
        }
    }
    Ok((q, t))
}

/// Eigen-decomposition of a general complex matrix.
pub fn eig(a: &DMatrix<C64>) -> Result<EigenDecomposition> {
    let n = a.nrows();
    let (q, t) = schur(a)?;
    let norm_t = t.iter().map(|z| z.norm()).fold(0.0_f64, f64::max);
    let small = (f64::EPSILON * norm_t).max(f64::MIN_POSITIVE);
    let mut y = DMatrix::<C64>::zeros(n, n);
    for k in 0..n {
        let lambda = t[(k, k)];
        y[(k, k)] = ONE;
        for i in (0..k).rev() {
            let mut s = ZERO;
            for j in i + 1..=k {
                s += t[(i, j)] * y[(j, k)];
            }
            let mut denom = t[(i, i)] - lambda;
            if denom.norm() < small {
                denom = C64::new(small, 0.0);
            }
            y[(i, k)] = -s / denom;
        }
    }
    let mut vectors = &q * &y;
    for k in 0..n {
        let nrm = vectors.column(k).norm();
        if nrm > 0.0 {
            vectors.column_mut(k).unscale_mut(nrm);
        }
    }
    let values = (0..n).map(|k| t[(k, k)]).collect();
    Ok(EigenDecomposition { values, vectors })
}

/// Eigen-decomposition of a real matrix with the output made exactly
/// closed under conjugation: real eigenvalues get real eigenvectors and each
/// complex eigenvalue with positive imaginary part is immediately followed by
/// its exact conjugate partner. Ordering is by decreasing modulus.
pub fn eig_real(a: &DMatrix<f64>) -> Result<EigenDecomposition> {
    let n = a.nrows();
    let dec = eig(&to_complex(a))?;
    let scale = dec.values.iter().map(|z| z.norm()).fold(0.0_f64, f64::max).max(1e-300);
    let real_tol = 1e-10 * scale;

    let mut used = vec![false; n];
    let mut groups: Vec<(C64, DVector<C64>, bool)> = Vec::with_capacity(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| dec.values[j].im.partial_cmp(&dec.values[i].im).unwrap());
    for &i in &order {
        if used[i] {
            continue;
        }
        let z = dec.values[i];
        used[i] = true;
        if z.im.abs() <= real_tol {
            let v = dec.vectors.column(i).into_owned();
            // Rotate the phase so the vector is as real as possible.
            let (k, _) = v
                .iter()
                .enumerate()
                .fold((0, -1.0), |acc, (k, c)| if c.norm() > acc.1 { (k, c.norm()) } else { acc });
            let ph = v[k] / v[k].norm();
            let mut v = v.map(|c| C64::new((c / ph).re, 0.0));
            let nrm = v.norm();
            if nrm > 0.0 {
                v.unscale_mut(nrm);
            }
            groups.push((C64::new(z.re, 0.0), v, false));
        } else if z.im > 0.0 {
            // Pair with the closest unused eigenvalue in the lower half plane.
            let target = z.conj();
            let partner = (0..n)
                .filter(|&j| !used[j] && dec.values[j].im < 0.0)
                .min_by(|&x, &y| {
                    (dec.values[x] - target)
                        .norm()
                        .partial_cmp(&(dec.values[y] - target).norm())
                        .unwrap()
                });
            if let Some(j) = partner {
                used[j] = true;
            }
            groups.push((z, dec.vectors.column(i).into_owned(), true));
        } else {
            // Unpaired lower-half eigenvalue (only reachable through numerical
            // noise): represent it through its conjugate.
            groups.push((z.conj(), dec.vectors.column(i).map(|c| c.conj()), true));
        }
    }
    groups.sort_by(|a, b| b.0.norm().partial_cmp(&a.0.norm()).unwrap());
    let mut values = Vec::with_capacity(n);
    let mut cols: Vec<DVector<C64>> = Vec::with_capacity(n);
    for (z, v, pair) in groups {
        if values.len() >= n {
            break;
        }
        values.push(z);
        cols.push(v.clone());
        if pair && values.len() < n {
            values.push(z.conj());
            cols.push(v.map(|c| c.conj()));
        }
    }
    let vectors = DMatrix::from_columns(&cols);
    Ok(EigenDecomposition { values, vectors })
}

/// Ratio of extreme singular values; infinite when singular.
pub fn condition_number(m: &DMatrix<C64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 1.0;
    }
    let sv = m.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Symmetric eigen-decomposition with eigenvalues sorted in decreasing order.
pub fn sym_eig_desc(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let n = eig.eigenvalues.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap());
    let values = DVector::from_iterator(n, idx.iter().map(|&i| eig.eigenvalues[i]));
    let cols: Vec<DVector<f64>> = idx.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect();
    let vectors = if cols.is_empty() {
        DMatrix::zeros(m.nrows(), 0)
    } else {
        DMatrix::from_columns(&cols)
    };
    (values, vectors)
}

/// Apply a scalar function to the spectrum of a symmetric matrix.
pub fn sym_apply(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let (vals, vecs) = sym_eig_desc(m);
    let mut scaled = vecs.clone();
    for (j, &v) in vals.iter().enumerate() {
        let fv = f(v);
        scaled.column_mut(j).scale_mut(fv);
    }
    scaled * vecs.transpose()
}

/// Moore-Penrose pseudo-inverse of a symmetric PSD matrix, discarding
/// eigenvalues below `rtol * max_eigenvalue`.
pub fn pinv_sym(m: &DMatrix<f64>, rtol: f64) -> DMatrix<f64> {
    let (vals, _) = sym_eig_desc(m);
    let top = vals.iter().cloned().fold(0.0_f64, f64::max);
    let cut = rtol * top;
    sym_apply(m, |v| if v > cut && v > 0.0 { 1.0 / v } else { 0.0 })
}

/// Unitary factor `W = U V^*` of the polar decomposition `Z = W H`.
pub fn polar_unitary(z: &DMatrix<C64>) -> DMatrix<C64> {
    let svd = z.clone().svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    u * v_t
}

/// `a^* g b` for complex coefficient matrices and a real kernel matrix.
pub fn sandwich(a: &DMatrix<C64>, g: &DMatrix<f64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    a.adjoint() * to_complex(g) * b
}

/// Frobenius norm of a complex matrix.
pub fn fro(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_complex(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<C64> {
        DMatrix::from_fn(n, n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    /// Characteristic polynomial coefficients by Faddeev-LeVerrier, then
    /// roots by Durand-Kerner. Independent of the QR path.
    fn char_poly_roots(a: &DMatrix<C64>) -> Vec<C64> {
        let n = a.nrows();
        let mut coeffs = vec![ZERO; n + 1];
        coeffs[n] = ONE;
        let mut m = DMatrix::<C64>::zeros(n, n);
        for k in 1..=n {
            let am = a * &m;
            m = am + DMatrix::<C64>::identity(n, n) * coeffs[n - k + 1];
            let tr = (a * &m).trace();
            coeffs[n - k] = -tr / (k as f64);
        }
        let mut roots: Vec<C64> = (0..n).map(|k| C64::new(0.4, 0.9).powu(k as u32)).collect();
        let eval = |z: C64| coeffs.iter().rev().fold(ZERO, |acc, &c| acc * z + c);
        for _ in 0..2000 {
            for i in 0..n {
                let mut den = ONE;
                for j in 0..n {
                    if i != j {
                        den *= roots[i] - roots[j];
                    }
                }
                let step = eval(roots[i]) / den;
                roots[i] -= step;
            }
        }
        roots
    }

    #[test]
    fn eigenvalues_match_characteristic_polynomial_roots() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 1..=4 {
            for _ in 0..25 {
                let a = random_complex(n, &mut rng);
                let dec = eig(&a).unwrap();
                let roots = char_poly_roots(&a);
                for r in &roots {
                    let best = dec.values.iter().map(|v| (v - r).norm()).fold(f64::INFINITY, f64::min);
                    assert!(best < 1e-9, "n={n} root {r} not found, best {best}");
                }
            }
        }
    }

    #[test]
    fn eigenvector_residuals_are_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [1, 2, 5, 12, 40] {
            let a = random_complex(n, &mut rng);
            let dec = eig(&a).unwrap();
            for k in 0..n {
                let v = dec.vectors.column(k);
                let res = (&a * v - v * dec.values[k]).norm();
                assert!(res < 1e-10 * a.norm().max(1.0), "n={n} k={k} res={res}");
            }
        }
    }

    #[test]
    fn schur_is_a_unitary_similarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_complex(9, &mut rng);
        let (q, t) = schur(&a).unwrap();
        let back = &q * &t * q.adjoint();
        assert!(fro(&(back - &a)) < 1e-12 * fro(&a));
        let qq = q.adjoint() * &q;
        assert!(fro(&(qq - DMatrix::identity(9, 9))) < 1e-12);
    }

    #[test]
    fn real_matrix_conjugate_pairs_are_exact() {
        let theta = std::f64::consts::FRAC_PI_4;
        let r = 0.95;
        let a = DMatrix::from_row_slice(2, 2, &[r * theta.cos(), -r * theta.sin(), r * theta.sin(), r * theta.cos()]);
        let dec = eig_real(&a).unwrap();
        assert_eq!(dec.values[0], dec.values[1].conj());
        assert!((dec.values[0] - C64::from_polar(r, theta)).norm() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = DMatrix::from_fn(7, 7, |_, _| rng.random_range(-1.0..1.0));
        let dec = eig_real(&m).unwrap();
        for w in dec.values.windows(2) {
            assert!(w[0].norm() >= w[1].norm() - 1e-12);
        }
        let cm = to_complex(&m);
        for k in 0..7 {
            let v = dec.vectors.column(k);
            assert!((&cm * v - v * dec.values[k]).norm() < 1e-9);
        }
    }

    #[test]
    fn diagonal_and_defective_inputs_are_handled() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![ONE * 3.0, ONE * -1.0, ZERO]));
        let dec = eig(&d).unwrap();
        let mut v: Vec<f64> = dec.values.iter().map(|z| z.re).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(v, vec![-1.0, 0.0, 3.0]);
        let jordan = DMatrix::from_row_slice(2, 2, &[ONE, ONE, ZERO, ONE]);
        let dec = eig(&jordan).unwrap();
        assert!(condition_number(&dec.vectors) > 1e12);
    }

    #[test]
    fn polar_factor_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = random_complex(3, &mut rng);
        let w = polar_unitary(&z);
        assert!(fro(&(w.adjoint() * &w - DMatrix::identity(3, 3))) < 1e-12);
        let h = w.adjoint() * &z;
        assert!(fro(&(h.adjoint() - &h)) < 1e-12);
    }
}
