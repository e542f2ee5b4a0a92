use super::Tensor;
use crate::error::{Error, Result};

/// `c += a · b` for row-major `a: [m, k]`, `b: [k, n]`, `c: [m, n]`.
///
/// Every output element accumulates its k products in ascending order.
pub(crate) fn gemm(a: &[f64], b: &[f64], c: &mut [f64], k: usize, n: usize) {
    const BLOCK: usize = 4;
    let mut a_rows = a.chunks_exact(k * BLOCK);
    let mut c_rows = c.chunks_exact_mut(n * BLOCK);
    for (a4, c4) in (&mut a_rows).zip(&mut c_rows) {
        let (c0, rest) = c4.split_at_mut(n);
        let (c1, rest) = rest.split_at_mut(n);
        let (c2, c3) = rest.split_at_mut(n);
        let (a0, a1, a2, a3) = (&a4[..k], &a4[k..2 * k], &a4[2 * k..3 * k], &a4[3 * k..]);
        for (p, b_row) in b.chunks_exact(n).enumerate() {
            let (x0, x1, x2, x3) = (a0[p], a1[p], a2[p], a3[p]);
            for (j, &bv) in b_row.iter().enumerate() {
                c0[j] += x0 * bv;
                c1[j] += x1 * bv;
                c2[j] += x2 * bv;
                c3[j] += x3 * bv;
            }
        }
    }
    for (a_row, c_row) in a_rows.remainder().chunks_exact(k).zip(c_rows.into_remainder().chunks_exact_mut(n)) {
        for (&x, b_row) in a_row.iter().zip(b.chunks_exact(n)) {
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv += x * bv;
            }
        }
    }
}

/// `c += aᵀ · b` for `a: [m, k]`, `b: [m, n]`, `c: [k, n]`.
pub(crate) fn gemm_tn(a: &[f64], b: &[f64], c: &mut [f64], k: usize, n: usize) {
    for (a_row, b_row) in a.chunks_exact(k).zip(b.chunks_exact(n)) {
        for (&x, c_row) in a_row.iter().zip(c.chunks_exact_mut(n)) {
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv += x * bv;
            }
        }
    }
}

pub(crate) fn transpose(data: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = data[i * cols + j];
        }
    }
    out
}

fn check_temperature(temperature: f64) -> Result<()> {
    if temperature > 0.0 && temperature.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("temperature must be positive and finite, got {temperature}")))
    }
}

/// Row-wise `softmax(x / temperature)` over the trailing axis.
///
/// The row maximum is subtracted before exponentiating; this leaves the
/// result unchanged mathematically and keeps `exp` in range.
pub fn softmax_rows(x: &Tensor, temperature: f64) -> Result<Tensor> {
    check_temperature(temperature)?;
    let c = x.cols();
    let mut out = Vec::with_capacity(x.len());
    for row in x.data().chunks_exact(c) {
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let start = out.len();
        let mut sum = 0.0;
        for &v in row {
            let e = ((v - max) / temperature).exp();
            sum += e;
            out.push(e);
        }
        for p in &mut out[start..] {
            *p /= sum;
        }
    }
    Tensor::new(x.shape().to_vec(), out)
}

/// Row-wise `log softmax(x / temperature)`, computed as `z - logsumexp(z)`.
pub fn log_softmax_rows(x: &Tensor, temperature: f64) -> Result<Tensor> {
    check_temperature(temperature)?;
    let c = x.cols();
    let mut out = Vec::with_capacity(x.len());
    for row in x.data().chunks_exact(c) {
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v)) / temperature;
        let sum = row.iter().fold(0.0, |s, &v| s + (v / temperature - max).exp());
        let lse = max + sum.ln();
        out.extend(row.iter().map(|&v| v / temperature - lse));
    }
    Tensor::new(x.shape().to_vec(), out)
}

/// Per-row statistics kept for the layer-norm backward pass.
pub(crate) struct NormStats {
    pub xhat: Vec<f64>,
    pub inv_std: Vec<f64>,
}

pub(crate) fn layer_norm_with_stats(x: &Tensor, gain: &Tensor, bias: &Tensor, eps: f64) -> Result<(Tensor, NormStats)> {
    let d = x.cols();
    if gain.len() != d || bias.len() != d {
        return Err(Error::Dimension {
            op: "layer_norm",
            lhs: x.shape().to_vec(),
            rhs: gain.shape().to_vec(),
        });
    }
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("layer_norm eps must be positive, got {eps}")));
    }
    let rows = x.rows();
    let mut xhat = Vec::with_capacity(x.len());
    let mut out = Vec::with_capacity(x.len());
    let mut inv_std = Vec::with_capacity(rows);
    for row in x.data().chunks_exact(d) {
        let mean = row.iter().fold(0.0, |s, &v| s + v) / d as f64;
        // population variance
        let var = row.iter().fold(0.0, |s, &v| s + (v - mean) * (v - mean)) / d as f64;
        let r = 1.0 / (var + eps).sqrt();
        inv_std.push(r);
        for ((&v, &g), &b) in row.iter().zip(gain.data()).zip(bias.data()) {
            let h = (v - mean) * r;
            xhat.push(h);
            out.push(h * g + b);
        }
    }
    Ok((Tensor::new(x.shape().to_vec(), out)?, NormStats { xhat, inv_std }))
}

/// Standardizes each row to zero mean and unit population variance, then
/// applies `gain` and `bias` elementwise.
pub fn layer_norm(x: &Tensor, gain: &Tensor, bias: &Tensor, eps: f64) -> Result<Tensor> {
    layer_norm_with_stats(x, gain, bias, eps).map(|(t, _)| t)
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

/// `0.5 · x · (1 + tanh(sqrt(2/π) · (x + 0.044715 · x³)))`
pub fn gelu_scalar(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

pub(crate) fn gelu_derivative(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

pub fn gelu(x: &Tensor) -> Tensor {
    x.map(gelu_scalar)
}

pub fn tanh(x: &Tensor) -> Tensor {
    x.map(f64::tanh)
}

/// Key-padding mask for a batch of equally long sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMask {
    batch: usize,
    seq_len: usize,
    valid: Vec<bool>,
}

impl AttentionMask {
    pub fn new(batch: usize, seq_len: usize, valid: Vec<bool>) -> Result<Self> {
        if valid.len() != batch * seq_len {
            return Err(Error::Dimension {
                op: "attention mask",
                lhs: vec![batch, seq_len],
                rhs: vec![valid.len()],
            });
        }
        if let Some(b) = (0..batch).find(|&b| !valid[b * seq_len..(b + 1) * seq_len].iter().any(|&v| v)) {
            return Err(Error::Input(format!("sequence {b} has no unmasked position")));
        }
        Ok(AttentionMask { batch, seq_len, valid })
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn is_valid(&self, b: usize, pos: usize) -> bool {
        self.valid[b * self.seq_len + pos]
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }
}

/// Scaled dot-product attention over `heads` column slices of `q`, `k`, `v`
/// (each `[batch · seq, d]`). Masked keys receive exactly zero weight.
///
/// Returns the context `[batch · seq, d]` and the probabilities laid out
/// as `[batch, heads, seq, seq]`.
pub(crate) fn attention_forward(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    mask: &AttentionMask,
    heads: usize,
) -> Result<(Tensor, Vec<f64>)> {
    let (b_n, s) = (mask.batch, mask.seq_len);
    let d = q.cols();
    for t in [k, v] {
        if t.shape() != q.shape() {
            return Err(Error::Dimension {
                op: "attention",
                lhs: q.shape().to_vec(),
                rhs: t.shape().to_vec(),
            });
        }
    }
    if q.rows() != b_n * s || heads == 0 || d % heads != 0 {
        return Err(Error::Dimension {
            op: "attention",
            lhs: q.shape().to_vec(),
            rhs: vec![b_n, s, heads],
        });
    }
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let (qd, kd, vd) = (q.data(), k.data(), v.data());
    let mut ctx = vec![0.0; q.len()];
    let mut probs = vec![0.0; b_n * heads * s * s];
    for b in 0..b_n {
        let keys: Vec<usize> = (0..s).filter(|&j| mask.is_valid(b, j)).collect();
        for h in 0..heads {
            let off = h * dh;
            for i in 0..s {
                let qi = &qd[(b * s + i) * d + off..][..dh];
                let p_row = &mut probs[((b * heads + h) * s + i) * s..][..s];
                let mut max = f64::NEG_INFINITY;
                for &j in &keys {
                    let kj = &kd[(b * s + j) * d + off..][..dh];
                    let score = dot(qi, kj) * scale;
                    p_row[j] = score;
                    max = max.max(score);
                }
                let mut sum = 0.0;
                for &j in &keys {
                    let e = (p_row[j] - max).exp();
                    p_row[j] = e;
                    sum += e;
                }
                let out = &mut ctx[(b * s + i) * d + off..][..dh];
                for &j in &keys {
                    p_row[j] /= sum;
                    let p = p_row[j];
                    let vj = &vd[(b * s + j) * d + off..][..dh];
                    for (o, &x) in out.iter_mut().zip(vj) {
                        *o += p * x;
                    }
                }
            }
        }
    }
    Ok((Tensor::new(q.shape().to_vec(), ctx)?, probs))
}

/// Gradients of [`attention_forward`] w.r.t. `q`, `k`, `v`.
pub(crate) fn attention_backward(
    grad: &Tensor,
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    probs: &[f64],
    mask: &AttentionMask,
    heads: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (b_n, s) = (mask.batch, mask.seq_len);
    let d = q.cols();
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let (qd, kd, vd, gd) = (q.data(), k.data(), v.data(), grad.data());
    let mut gq = vec![0.0; q.len()];
    let mut gk = vec![0.0; k.len()];
    let mut gv = vec![0.0; v.len()];
    let mut dp = vec![0.0; s];
    for b in 0..b_n {
        let keys: Vec<usize> = (0..s).filter(|&j| mask.is_valid(b, j)).collect();
        for h in 0..heads {
            let off = h * dh;
            for i in 0..s {
                let p_row = &probs[((b * heads + h) * s + i) * s..][..s];
                let gi = &gd[(b * s + i) * d + off..][..dh];
                let mut weighted = 0.0;
                for &j in &keys {
                    let vj = &vd[(b * s + j) * d + off..][..dh];
                    dp[j] = dot(gi, vj);
                    weighted += p_row[j] * dp[j];
                    let gvj = &mut gv[(b * s + j) * d + off..][..dh];
                    for (o, &x) in gvj.iter_mut().zip(gi) {
                        *o += p_row[j] * x;
                    }
                }
                let qi_off = (b * s + i) * d + off;
                for &j in &keys {
                    let ds = p_row[j] * (dp[j] - weighted) * scale;
                    let kj_off = (b * s + j) * d + off;
                    for c in 0..dh {
                        gq[qi_off + c] += ds * kd[kj_off + c];
                        gk[kj_off + c] += ds * qd[qi_off + c];
                    }
                }
            }
        }
    }
    (gq, gk, gv)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |s, (&x, &y)| s + x * y)
}
