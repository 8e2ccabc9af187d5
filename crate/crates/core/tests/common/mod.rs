#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Matrix4, Vector4};
use twinsched::selftest::LinearSystem;

/// Posterior (mean, cov) per step by writing every state and observation as
/// an affine map of one latent vector of independent Gaussians
/// `[s0, w_1..w_N, v_1..v_N]` and conditioning that joint law directly.
pub fn latent_oracle(sys: &LinearSystem) -> Vec<(Vector4<f64>, Matrix4<f64>)> {
    let n_steps = sys.steps.len();
    let rows: Vec<usize> = sys.steps.iter().map(|s| s.h.nrows()).collect();
    let total_rows: usize = rows.iter().sum();
    let dim = 4 + 4 * n_steps + total_rows;

    let mut mz = DVector::zeros(dim);
    let mut cz = DMatrix::zeros(dim, dim);
    mz.rows_mut(0, 4).copy_from(&sys.initial.mean);
    cz.view_mut((0, 0), (4, 4)).copy_from(&sys.initial.cov);
    for k in 0..n_steps {
        let at = 4 + 4 * k;
        mz.rows_mut(at, 4).copy_from(&sys.model.noise_mean);
        cz.view_mut((at, at), (4, 4)).copy_from(&sys.model.noise_cov);
    }
    let mut v_at = 4 + 4 * n_steps;
    let mut v_offsets = Vec::with_capacity(n_steps);
    for (k, so) in sys.steps.iter().enumerate() {
        v_offsets.push(v_at);
        cz.view_mut((v_at, v_at), (rows[k], rows[k])).copy_from(&so.cov);
        v_at += rows[k];
    }

    // State maps: s_n = P s_{n-1} + w_n.
    let p = DMatrix::from_iterator(4, 4, sys.model.transition.iter().copied());
    let mut state_maps = Vec::with_capacity(n_steps + 1);
    let mut a = DMatrix::zeros(4, dim);
    a.view_mut((0, 0), (4, 4)).fill_with_identity();
    state_maps.push(a.clone());
    for k in 1..=n_steps {
        let mut next = &p * &a;
        let at = 4 + 4 * (k - 1);
        for i in 0..4 {
            next[(i, at + i)] += 1.0;
        }
        state_maps.push(next.clone());
        a = next;
    }

    let mut b = DMatrix::zeros(total_rows, dim);
    let mut row = 0;
    for (k, so) in sys.steps.iter().enumerate() {
        let h = DMatrix::from_iterator(rows[k], 4, so.h.iter().copied());
        let mut block = &h * &state_maps[k + 1];
        for i in 0..rows[k] {
            block[(i, v_offsets[k] + i)] += 1.0;
        }
        b.view_mut((row, 0), (rows[k], dim)).copy_from(&block);
        row += rows[k];
    }
    let y = DVector::from_iterator(total_rows, sys.steps.iter().flat_map(|s| s.values.iter().copied()));
    let y_mean = &b * &mz;
    let c_yy = &b * &cz * b.transpose();

    let mut out = Vec::with_capacity(n_steps);
    let mut seen = 0;
    for n in 1..=n_steps {
        seen += rows[n - 1];
        let a = &state_maps[n];
        let s_mean = a * &mz;
        let c_ss = a * &cz * a.transpose();
        let (mean, cov) = if seen == 0 {
            (s_mean, c_ss)
        } else {
            let c_sy = a * &cz * b.rows(0, seen).transpose();
            let c_oo = c_yy.view((0, 0), (seen, seen)).into_owned();
            let lu = c_oo.lu();
            let resid = y.rows(0, seen) - y_mean.rows(0, seen);
            let mean = &s_mean + &c_sy * lu.solve(&resid).expect("invertible");
            let cov = &c_ss - &c_sy * lu.solve(&c_sy.transpose()).expect("invertible");
            (mean, cov)
        };
        out.push((
            Vector4::from_iterator(mean.iter().copied()),
            Matrix4::from_iterator(cov.iter().copied()),
        ));
    }
    out
}

/// Worst per-step relative error of a belief trajectory against the oracle.
pub fn relative_error(beliefs: &[twinsched::estimator::Belief], oracle: &[(Vector4<f64>, Matrix4<f64>)]) -> f64 {
    beliefs
        .iter()
        .zip(oracle)
        .map(|(b, (m, c))| {
            let em = (b.mean - m).norm() / m.norm();
            let ec = (b.cov - c).norm() / c.norm();
            em.max(ec)
        })
        .fold(0.0, f64::max)
}
