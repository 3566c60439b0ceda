//! Dense reference computations for the band solvers and the spectrum.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cylfront::banded::{thomas_solve, BandMatrix};
use cylfront::gap::{spectral_gap, symmetrize};
use cylfront::grid::{build_grid, CrossSectionField, GridConfig};
use cylfront::reaction::{CubicBistable, Model, ReactionModel};
use cylfront::wave::{assemble_linearization, bordered_solve, solve_wave, tanh_front, WaveSolution};

fn dense(a: &BandMatrix) -> DMatrix<f64> {
    let n = a.n();
    DMatrix::from_fn(n, n, |i, j| if j + a.kl() >= i && j <= i + a.ku() { a.get(i, j) } else { 0.0 })
}

fn random_band(rng: &mut ChaCha8Rng, n: usize, kl: usize, ku: usize) -> BandMatrix {
    let mut a = BandMatrix::zeros(n, kl, ku);
    for i in 0..n {
        for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
            a.set(i, j, rng.gen_range(-1.0..1.0));
        }
    }
    a
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn band_lu_matches_dense_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for trial in 0..40 {
        let n = rng.gen_range(2..60);
        let (kl, ku) = (rng.gen_range(0..5), rng.gen_range(0..5));
        // no diagonal dominance: pivoting has to do real work
        let a = random_band(&mut rng, n, kl, ku);
        let d = dense(&a);
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let Some(reference) = d.clone().lu().solve(&DVector::from_vec(b.clone())) else { continue };
        let x = a.factor().unwrap().solve(&b);
        let scale = reference.amax().max(1.0);
        assert!(max_diff(&x, reference.as_slice()) <= 1e-8 * scale * (n as f64), "trial {trial}");
    }
}

#[test]
fn thomas_matches_dense_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 50;
    let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..n).map(|_| 3.0 + rng.gen_range(0.0..1.0)).collect();
    let d: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let m = DMatrix::from_fn(n, n, |i, j| match j as isize - i as isize {
        0 => b[i],
        -1 => a[i],
        1 => c[i],
        _ => 0.0,
    });
    let reference = m.lu().solve(&DVector::from_vec(d.clone())).unwrap();
    let x = thomas_solve(&a, &b, &c, &d).unwrap();
    assert!(max_diff(&x, reference.as_slice()) <= 1e-13);
}

#[test]
fn bordered_solve_matches_dense_system() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 40;
    let mut a = random_band(&mut rng, n, 2, 2);
    for i in 0..n {
        a.add(i, i, 4.0);
    }
    let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let g: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let r: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let q = 0.3;
    let mut full = DMatrix::zeros(n + 1, n + 1);
    full.view_mut((0, 0), (n, n)).copy_from(&dense(&a));
    for i in 0..n {
        full[(i, n)] = b[i];
        full[(n, i)] = g[i];
    }
    let mut rhs = r.clone();
    rhs.push(q);
    let reference = full.lu().solve(&DVector::from_vec(rhs)).unwrap();
    let lu = a.factor().unwrap();
    let (x, s) = bordered_solve(&a, &lu, &b, &g, &r, q, 2);
    assert!(max_diff(&x, &reference.as_slice()[..n]) <= 1e-12);
    assert!((s - reference[n]).abs() <= 1e-12);
}

fn wave_on(gc: &GridConfig, model: &Model) -> WaveSolution {
    let g = build_grid(gc).unwrap();
    let seed = tanh_front(&g, &CrossSectionField::constant(&g, 1.0), 0.5, 0.0);
    solve_wave(model.clone(), &seed, 0.2).unwrap()
}

/// Smallest eigenvalue of `S` and of `S` compressed to the complement of `q`.
fn dense_spectrum(ws: &WaveSolution, model: &dyn ReactionModel) -> (f64, f64) {
    let op = symmetrize(ws, model).unwrap();
    let s = dense(&op.s);
    let n = s.nrows();
    let q = DVector::from_vec(op.q.clone()).normalize();
    let lambda0 = SymmetricEigen::new(s.clone()).eigenvalues.min();
    let p = DMatrix::identity(n, n) - &q * q.transpose();
    let compressed = &p * &s * &p + &q * q.transpose() * 1e3;
    let k = SymmetricEigen::new(compressed).eigenvalues.min();
    (lambda0, k)
}

#[test]
fn gap_matches_dense_oracle_1d() {
    let model: Model = Arc::new(CubicBistable::new(0.25));
    let ws = wave_on(&GridConfig::one_d(241, -12.0, 14.0), &model);
    let g = spectral_gap(&ws, model.as_ref()).unwrap();
    let (lambda0, k) = dense_spectrum(&ws, model.as_ref());
    assert!((g.lambda0 - lambda0).abs() <= 1e-9, "{} vs {lambda0}", g.lambda0);
    assert!((g.k - k).abs() <= 1e-9 * k.abs().max(1.0), "{} vs {k}", g.k);
    assert!((g.k_rayleigh - g.k).abs() <= 1e-8);
}

#[test]
fn unsymmetrized_linearization_has_the_same_bottom() {
    // eigenvalues of the raw nonsymmetric operator, no masses involved
    let model: Model = Arc::new(CubicBistable::new(0.25));
    let ws = wave_on(&GridConfig::one_d(201, -10.0, 12.0), &model);
    let a = assemble_linearization(ws.grid(), model.as_ref(), ws.c_dag, &ws.u_bar.gather_unknowns());
    let minus_a = -dense(&a);
    let ev = minus_a.complex_eigenvalues();
    let bottom = ev.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
    let max_im = ev.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    let g = spectral_gap(&ws, model.as_ref()).unwrap();
    assert!(max_im <= 1e-8, "imaginary parts {max_im}");
    assert!((bottom - g.lambda0).abs() <= 1e-8, "{bottom} vs {}", g.lambda0);
}

#[test]
fn gap_in_a_wide_neumann_section_is_the_first_transverse_mode() {
    // y-independent wave: transverse modes add (4/dy^2) sin^2(pi j / (2(n_y-1)))
    let model: Model = Arc::new(CubicBistable::new(0.25));
    let n_y = 5;
    let y_max = 12.0;
    let gc = GridConfig { n_y, y_max, ..GridConfig::one_d(241, -12.0, 14.0) };
    let ws = wave_on(&gc, &model);
    let g = spectral_gap(&ws, model.as_ref()).unwrap();
    let dy = y_max / (n_y - 1) as f64;
    let mu1 = 4.0 / (dy * dy) * (std::f64::consts::PI / (2.0 * (n_y - 1) as f64)).sin().powi(2);
    let ws1 = wave_on(&GridConfig::one_d(241, -12.0, 14.0), &model);
    let k1 = spectral_gap(&ws1, model.as_ref()).unwrap().k;
    assert!(mu1 < k1);
    // the truncated window leaves lambda0 slightly off zero; the mode is phi0 x psi1
    assert!((g.k - (g.lambda0 + mu1)).abs() <= 1e-10, "{} vs {}", g.k, g.lambda0 + mu1);
    let (_, k_dense) = dense_spectrum(&ws, model.as_ref());
    assert!((g.k - k_dense).abs() <= 1e-9);
}
