//! Euclidean projection onto the probability simplex.
//!
//! Rows are projected with Michelot's pivoting scheme: start from the full
//! index set, compute the threshold that would make the kept entries sum to
//! one, discard every entry at or below it, and repeat until the set is
//! stable. The threshold only grows between rounds, so the loop ends in at
//! most `len` rounds and needs no sort.

/// Projects `z` onto the simplex, writing into `out`. Returns the threshold
/// `tau` such that `out[i] = max(z[i] - tau, 0)`.
pub fn sparsemax_row(z: &[f64], out: &mut [f64]) -> f64 {
    debug_assert_eq!(z.len(), out.len());
    let mut kept: Vec<f64> = z.to_vec();
    let tau = loop {
        let tau = (kept.iter().sum::<f64>() - 1.0) / kept.len() as f64;
        let before = kept.len();
        kept.retain(|&v| v > tau);
        if kept.len() == before {
            break tau;
        }
    };
    for (o, &v) in out.iter_mut().zip(z) {
        *o = (v - tau).max(0.0);
    }
    tau
}

/// Row-wise sparsemax of a row-major `rows × cols` buffer.
pub fn sparsemax_rows(z: &[f64], cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; z.len()];
    for (zr, or) in z.chunks(cols).zip(out.chunks_mut(cols)) {
        sparsemax_row(zr, or);
    }
    out
}

/// Vector-Jacobian product of sparsemax for one row: on the support the
/// incoming gradient is centred by its support mean; elsewhere it is zero.
pub fn sparsemax_row_backward(output: &[f64], grad_out: &[f64], grad_in: &mut [f64]) {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (&p, &g) in output.iter().zip(grad_out) {
        if p > 0.0 {
            sum += g;
            count += 1;
        }
    }
    let mean = if count > 0 { sum / count as f64 } else { 0.0 };
    for ((gi, &p), &g) in grad_in.iter_mut().zip(output).zip(grad_out) {
        *gi = if p > 0.0 { g - mean } else { 0.0 };
    }
}
