use rand::Rng;

use super::tensor::{accumulate_tn, add_assign, gemm, matmul_nn, matmul_nt, Tensor};

pub(crate) const INIT_STD: f64 = 0.02;
pub(crate) const LN_EPS: f64 = 1e-5;

/// Depth-first enumeration of parameter tensors in a fixed order.
pub trait Visit {
    fn visit<'a>(&'a self, out: &mut Vec<&'a Tensor>);
    fn visit_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>);
}

/// `y = x·Wᵀ + b` with `W: out×in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: Tensor,
    pub b: Tensor,
}

impl Linear {
    pub(crate) fn new(name: &str, out: usize, inp: usize, rng: &mut impl Rng) -> Self {
        Linear {
            w: Tensor::normal(format!("{name}.weight"), &[out, inp], INIT_STD, rng),
            b: Tensor::zeros(format!("{name}.bias"), &[out], false),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.shape[1]
    }

    pub fn out_dim(&self) -> usize {
        self.w.shape[0]
    }

    pub(crate) fn forward(&self, x: &[f64], n: usize) -> Vec<f64> {
        let (inp, out) = (self.in_dim(), self.out_dim());
        let mut y = matmul_nt(x, &self.w.data, n, inp, out);
        for row in y.chunks_exact_mut(out) {
            add_assign(row, &self.b.data);
        }
        y
    }

    /// Accumulates parameter gradients into `g`; returns `dx` when asked.
    pub(crate) fn backward(&self, x: &[f64], dy: &[f64], n: usize, g: &mut Linear, want_dx: bool) -> Option<Vec<f64>> {
        let (inp, out) = (self.in_dim(), self.out_dim());
        accumulate_tn(&mut g.w.data, dy, x, n, out, inp);
        for row in dy.chunks_exact(out) {
            add_assign(&mut g.b.data, row);
        }
        want_dx.then(|| matmul_nn(dy, &self.w.data, n, out, inp))
    }
}

impl Visit for Linear {
    fn visit<'a>(&'a self, out: &mut Vec<&'a Tensor>) {
        out.extend([&self.w, &self.b]);
    }
    fn visit_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        out.extend([&mut self.w, &mut self.b]);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub g: Tensor,
    pub b: Tensor,
}

pub(crate) struct NormCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
}

impl LayerNorm {
    pub(crate) fn new(name: &str, d: usize) -> Self {
        LayerNorm {
            g: Tensor::filled(format!("{name}.scale"), &[d], 1.0),
            b: Tensor::zeros(format!("{name}.bias"), &[d], false),
        }
    }

    pub(crate) fn forward(&self, x: &[f64]) -> (Vec<f64>, NormCache) {
        let d = self.g.len();
        let n = x.len() / d;
        let mut y = vec![0.0; x.len()];
        let mut xhat = vec![0.0; x.len()];
        let mut inv_std = Vec::with_capacity(n);
        for (i, row) in x.chunks_exact(d).enumerate() {
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
            let s = 1.0 / (var + LN_EPS).sqrt();
            inv_std.push(s);
            for j in 0..d {
                let h = (row[j] - mean) * s;
                xhat[i * d + j] = h;
                y[i * d + j] = h * self.g.data[j] + self.b.data[j];
            }
        }
        (y, NormCache { xhat, inv_std })
    }

    pub(crate) fn backward(&self, cache: &NormCache, dy: &[f64], g: &mut LayerNorm) -> Vec<f64> {
        let d = self.g.len();
        let mut dx = vec![0.0; dy.len()];
        let mut dxhat = vec![0.0; d];
        for (i, dyr) in dy.chunks_exact(d).enumerate() {
            let xh = &cache.xhat[i * d..(i + 1) * d];
            let mut mean_d = 0.0;
            let mut mean_dx = 0.0;
            for j in 0..d {
                g.g.data[j] += dyr[j] * xh[j];
                g.b.data[j] += dyr[j];
                dxhat[j] = dyr[j] * self.g.data[j];
                mean_d += dxhat[j];
                mean_dx += dxhat[j] * xh[j];
            }
            mean_d /= d as f64;
            mean_dx /= d as f64;
            for j in 0..d {
                dx[i * d + j] = cache.inv_std[i] * (dxhat[j] - mean_d - xh[j] * mean_dx);
            }
        }
        dx
    }
}

impl Visit for LayerNorm {
    fn visit<'a>(&'a self, out: &mut Vec<&'a Tensor>) {
        out.extend([&self.g, &self.b]);
    }
    fn visit_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        out.extend([&mut self.g, &mut self.b]);
    }
}

/// Multi-head scaled dot-product attention with separate query and
/// key/value inputs (self-attention passes the same input twice).
#[derive(Debug, Clone, PartialEq)]
pub struct Attention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub n_heads: usize,
}

pub(crate) struct AttnCache {
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// Softmax weights, `heads × nq × nk`.
    pub(crate) probs: Vec<f64>,
    ctx: Vec<f64>,
    nq: usize,
    nk: usize,
}

impl Attention {
    pub(crate) fn new(name: &str, d: usize, n_heads: usize, rng: &mut impl Rng) -> Self {
        Attention {
            q: Linear::new(&format!("{name}.q"), d, d, rng),
            k: Linear::new(&format!("{name}.k"), d, d, rng),
            v: Linear::new(&format!("{name}.v"), d, d, rng),
            o: Linear::new(&format!("{name}.o"), d, d, rng),
            n_heads,
        }
    }

    pub(crate) fn forward(&self, xq: &[f64], xkv: &[f64], causal: bool) -> (Vec<f64>, AttnCache) {
        let d = self.q.out_dim();
        let (nq, nk) = (xq.len() / d, xkv.len() / d);
        let dh = d / self.n_heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let q = self.q.forward(xq, nq);
        let k = self.k.forward(xkv, nk);
        let v = self.v.forward(xkv, nk);
        let mut probs = vec![0.0; self.n_heads * nq * nk];
        let mut ctx = vec![0.0; nq * d];
        for h in 0..self.n_heads {
            let p = &mut probs[h * nq * nk..(h + 1) * nq * nk];
            gemm(nq, dh, nk, scale, &q[h * dh..], (d, 1), &k[h * dh..], (1, d), 0.0, p, (nk, 1));
            for i in 0..nq {
                let row = &mut p[i * nk..(i + 1) * nk];
                let visible = if causal { i + 1 } else { nk };
                let max = row[..visible].iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for s in &mut row[..visible] {
                    *s = (*s - max).exp();
                    sum += *s;
                }
                row[..visible].iter_mut().for_each(|s| *s /= sum);
                row[visible..].fill(0.0);
            }
            gemm(nq, nk, dh, 1.0, p, (nk, 1), &v[h * dh..], (d, 1), 0.0, &mut ctx[h * dh..], (d, 1));
        }
        let out = self.o.forward(&ctx, nq);
        (
            out,
            AttnCache {
                q,
                k,
                v,
                probs,
                ctx,
                nq,
                nk,
            },
        )
    }

    /// Returns `(d xq, d xkv)`.
    pub(crate) fn backward(
        &self,
        c: &AttnCache,
        xq: &[f64],
        xkv: &[f64],
        dout: &[f64],
        g: &mut Attention,
    ) -> (Vec<f64>, Vec<f64>) {
        let d = self.q.out_dim();
        let (nq, nk) = (c.nq, c.nk);
        let dh = d / self.n_heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let dctx = self.o.backward(&c.ctx, dout, nq, &mut g.o, true).expect("dx requested");
        let mut dq = vec![0.0; nq * d];
        let mut dk = vec![0.0; nk * d];
        let mut dv = vec![0.0; nk * d];
        let mut ds = vec![0.0; nq * nk];
        for h in 0..self.n_heads {
            let p = &c.probs[h * nq * nk..(h + 1) * nq * nk];
            // dP = dctx_h · v_hᵀ
            gemm(nq, dh, nk, 1.0, &dctx[h * dh..], (d, 1), &c.v[h * dh..], (1, d), 0.0, &mut ds, (nk, 1));
            // dv_h = Pᵀ · dctx_h
            gemm(nk, nq, dh, 1.0, p, (1, nk), &dctx[h * dh..], (d, 1), 0.0, &mut dv[h * dh..], (d, 1));
            for i in 0..nq {
                let pr = &p[i * nk..(i + 1) * nk];
                let dr = &mut ds[i * nk..(i + 1) * nk];
                let dot: f64 = pr.iter().zip(dr.iter()).map(|(a, b)| a * b).sum();
                for (s, &pv) in dr.iter_mut().zip(pr) {
                    *s = pv * (*s - dot);
                }
            }
            gemm(nq, nk, dh, scale, &ds, (nk, 1), &c.k[h * dh..], (d, 1), 0.0, &mut dq[h * dh..], (d, 1));
            gemm(nk, nq, dh, scale, &ds, (1, nk), &c.q[h * dh..], (d, 1), 0.0, &mut dk[h * dh..], (d, 1));
        }
        let dxq = self.q.backward(xq, &dq, nq, &mut g.q, true).expect("dx requested");
        let mut dxkv = self.k.backward(xkv, &dk, nk, &mut g.k, true).expect("dx requested");
        let dxv = self.v.backward(xkv, &dv, nk, &mut g.v, true).expect("dx requested");
        add_assign(&mut dxkv, &dxv);
        (dxq, dxkv)
    }
}

impl Visit for Attention {
    fn visit<'a>(&'a self, out: &mut Vec<&'a Tensor>) {
        for l in [&self.q, &self.k, &self.v, &self.o] {
            l.visit(out);
        }
    }
    fn visit_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        for l in [&mut self.q, &mut self.k, &mut self.v, &mut self.o] {
            l.visit_mut(out);
        }
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
}

pub(crate) struct MlpCache {
    pre: Vec<f64>,
    act: Vec<f64>,
}

impl Mlp {
    pub(crate) fn new(name: &str, d: usize, d_ff: usize, rng: &mut impl Rng) -> Self {
        Mlp {
            fc1: Linear::new(&format!("{name}.fc1"), d_ff, d, rng),
            fc2: Linear::new(&format!("{name}.fc2"), d, d_ff, rng),
        }
    }

    pub(crate) fn forward(&self, x: &[f64]) -> (Vec<f64>, MlpCache) {
        let n = x.len() / self.fc1.in_dim();
        let pre = self.fc1.forward(x, n);
        let act: Vec<f64> = pre.iter().map(|&v| gelu(v)).collect();
        let y = self.fc2.forward(&act, n);
        (y, MlpCache { pre, act })
    }

    pub(crate) fn backward(&self, c: &MlpCache, x: &[f64], dy: &[f64], g: &mut Mlp) -> Vec<f64> {
        let n = x.len() / self.fc1.in_dim();
        let mut dact = self.fc2.backward(&c.act, dy, n, &mut g.fc2, true).expect("dx requested");
        dact.iter_mut().zip(&c.pre).for_each(|(da, &p)| *da *= gelu_grad(p));
        self.fc1.backward(x, &dact, n, &mut g.fc1, true).expect("dx requested")
    }
}

impl Visit for Mlp {
    fn visit<'a>(&'a self, out: &mut Vec<&'a Tensor>) {
        self.fc1.visit(out);
        self.fc2.visit(out);
    }
    fn visit_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        self.fc1.visit_mut(out);
        self.fc2.visit_mut(out);
    }
}

/// Pre-norm bidirectional block: `x + attn(ln(x))`, then `+ mlp(ln(·))`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderBlock {
    pub ln1: LayerNorm,
    pub attn: Attention,
    pub ln2: LayerNorm,
    pub mlp: Mlp,
}

pub(crate) struct EncoderBlockCache {
    a: Vec<f64>,
    ln1: NormCache,
    pub(crate) attn: AttnCache,
    b: Vec<f64>,
    ln2: NormCache,
    mlp: MlpCache,
}

impl EncoderBlock {
    pub(crate) fn new(name: &str, d: usize, n_heads: usize, d_ff: usize, rng: &mut impl Rng) -> Self {
        EncoderBlock {
            ln1: LayerNorm::new(&format!("{name}.ln1"), d),
            attn: Attention::new(&format!("{name}.attn"), d, n_heads, rng),
            ln2: LayerNorm::new(&format!("{name}.ln2"), d),
            mlp: Mlp::new(&format!("{name}.mlp"), d, d_ff, rng),
        }
    }

    pub(crate) fn forward(&self, x: &[f64]) -> (Vec<f64>, EncoderBlockCache) {
        let (a, ln1) = self.ln1.forward(x);
        let (att, attn) = self.attn.forward(&a, &a, false);
        let mut h = x.to_vec();
        add_assign(&mut h, &att);
        let (b, ln2) = self.ln2.forward(&h);
        let (m, mlp) = self.mlp.forward(&b);
        add_assign(&mut h, &m);
        (h, EncoderBlockCache { a, ln1, attn, b, ln2, mlp })
    }

    pub(crate) fn backward(&self, c: &EncoderBlockCache, dy: &[f64], g: &mut EncoderBlock) -> Vec<f64> {
        let db = self.mlp.backward(&c.mlp, &c.b, dy, &mut g.mlp);
        let mut dh = dy.to_vec();
        add_assign(&mut dh, &self.ln2.backward(&c.ln2, &db, &mut g.ln2));
        let (mut da, dkv) = self.attn.backward(&c.attn, &c.a, &c.a, &dh, &mut g.attn);
        add_assign(&mut da, &dkv);
        add_assign(&mut dh, &self.ln1.backward(&c.ln1, &da, &mut g.ln1));
        dh
    }
}

impl Visit for EncoderBlock {
    fn visit<'a>(&'a self, out: &mut Vec<&'a Tensor>) {
        self.ln1.visit(out);
        self.attn.visit(out);
        self.ln2.visit(out);
        self.mlp.visit(out);
    }
    fn visit_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        self.ln1.visit_mut(out);
        self.attn.visit_mut(out);
        self.ln2.visit_mut(out);
        self.mlp.visit_mut(out);
    }
}

/// Pre-norm decoder block: causal self-attention, cross-attention over the
/// encoder states, then MLP, each with a residual connection.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderBlock {
    pub ln1: LayerNorm,
    pub self_attn: Attention,
    pub ln2: LayerNorm,
    pub cross_attn: Attention,
    pub ln3: LayerNorm,
    pub mlp: Mlp,
}

pub(crate) struct DecoderBlockCache {
    a: Vec<f64>,
    ln1: NormCache,
    pub(crate) self_attn: AttnCache,
    b: Vec<f64>,
    ln2: NormCache,
    pub(crate) cross_attn: AttnCache,
    c: Vec<f64>,
    ln3: NormCache,
    mlp: MlpCache,
}

impl DecoderBlock {
    pub(crate) fn new(name: &str, d: usize, n_heads: usize, d_ff: usize, rng: &mut impl Rng) -> Self {
        DecoderBlock {
            ln1: LayerNorm::new(&format!("{name}.ln1"), d),
            self_attn: Attention::new(&format!("{name}.self_attn"), d, n_heads, rng),
            ln2: LayerNorm::new(&format!("{name}.ln2"), d),
            cross_attn: Attention::new(&format!("{name}.cross_attn"), d, n_heads, rng),
            ln3: LayerNorm::new(&format!("{name}.ln3"), d),
            mlp: Mlp::new(&format!("{name}.mlp"), d, d_ff, rng),
        }
    }

    pub(crate) fn forward(&self, x: &[f64], enc: &[f64]) -> (Vec<f64>, DecoderBlockCache) {
        let (a, ln1) = self.ln1.forward(x);
        let (sa, self_attn) = self.self_attn.forward(&a, &a, true);
        let mut h = x.to_vec();
        add_assign(&mut h, &sa);
        let (b, ln2) = self.ln2.forward(&h);
        let (ca, cross_attn) = self.cross_attn.forward(&b, enc, false);
        add_assign(&mut h, &ca);
        let (c, ln3) = self.ln3.forward(&h);
        let (m, mlp) = self.mlp.forward(&c);
        add_assign(&mut h, &m);
        (
            h,
            DecoderBlockCache {
                a,
                ln1,
                self_attn,
                b,
                ln2,
                cross_attn,
                c,
                ln3,
                mlp,
            },
        )
    }

    /// Returns `(dx, d enc)`.
    pub(crate) fn backward(
        &self,
        c: &DecoderBlockCache,
        enc: &[f64],
        dy: &[f64],
        g: &mut DecoderBlock,
    ) -> (Vec<f64>, Vec<f64>) {
        let dc = self.mlp.backward(&c.mlp, &c.c, dy, &mut g.mlp);
        let mut dh = dy.to_vec();
        add_assign(&mut dh, &self.ln3.backward(&c.ln3, &dc, &mut g.ln3));
        let (db, denc) = self.cross_attn.backward(&c.cross_attn, &c.b, enc, &dh, &mut g.cross_attn);
        add_assign(&mut dh, &self.ln2.backward(&c.ln2, &db, &mut g.ln2));
        let (mut da, dkv) = self.self_attn.backward(&c.self_attn, &c.a, &c.a, &dh, &mut g.self_attn);
        add_assign(&mut da, &dkv);
        add_assign(&mut dh, &self.ln1.backward(&c.ln1, &da, &mut g.ln1));
        (dh, denc)
    }
}

impl Visit for DecoderBlock {
    fn visit<'a>(&'a self, out: &mut Vec<&'a Tensor>) {
        self.ln1.visit(out);
        self.self_attn.visit(out);
        self.ln2.visit(out);
        self.cross_attn.visit(out);
        self.ln3.visit(out);
        self.mlp.visit(out);
    }
    fn visit_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        self.ln1.visit_mut(out);
        self.self_attn.visit_mut(out);
        self.ln2.visit_mut(out);
        self.cross_attn.visit_mut(out);
        self.ln3.visit_mut(out);
        self.mlp.visit_mut(out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_derivative_matches_difference() {
        for &x in &[-3.0, -0.7, 0.0, 0.4, 2.5] {
            let h = 1e-5;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn layer_norm_normalizes() {
        let ln = LayerNorm::new("ln", 4);
        let (y, _) = ln.forward(&[1.0, 2.0, 3.0, 4.0]);
        let mean: f64 = y.iter().sum::<f64>() / 4.0;
        let var: f64 = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-4);
    }
}
