//! Pre-norm decoder-only transformer with hand-written backward pass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::params::{InitKind, Layout};
use crate::scalar::{matmul, Scalar, View};
use crate::{ModelConfig, ModelError};

const LN_EPS: f64 = 1e-5;
const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone)]
pub struct Model<F: Scalar> {
    pub config: ModelConfig,
    pub layout: Layout,
    pub params: Vec<F>,
}

/// Logits for every input position, plus per-layer attention when requested
/// (`n_heads x n x n`, row-major, zero above the diagonal).
#[derive(Debug, Clone)]
pub struct Forward<F> {
    pub n: usize,
    pub logits: Vec<F>,
    pub attention: Option<Vec<Vec<F>>>,
}

impl<F: Scalar> Forward<F> {
    pub fn row(&self, i: usize) -> &[F] {
        let v = self.logits.len() / self.n;
        &self.logits[i * v..(i + 1) * v]
    }
}

struct BlockActs<F> {
    x_in: Vec<F>,
    ln1: Vec<F>,
    ln1_stats: Vec<(F, F)>,
    qkv: Vec<F>,
    probs: Vec<F>,
    att: Vec<F>,
    attn_mask: Option<Vec<F>>,
    x_mid: Vec<F>,
    ln2: Vec<F>,
    ln2_stats: Vec<(F, F)>,
    fc: Vec<F>,
    act: Vec<F>,
    mlp_mask: Option<Vec<F>>,
}

struct Acts<F> {
    n: usize,
    emb_mask: Option<Vec<F>>,
    blocks: Vec<BlockActs<F>>,
    x_out: Vec<F>,
    lnf: Vec<F>,
    lnf_stats: Vec<(F, F)>,
    logits: Vec<F>,
}

fn layer_norm<F: Scalar>(x: &[F], g: &[F], b: &[F], d: usize) -> (Vec<F>, Vec<(F, F)>) {
    let n = x.len() / d;
    let mut y = vec![F::zero(); x.len()];
    let mut stats = Vec::with_capacity(n);
    let inv_d = F::one() / F::lit(d as f64);
    for i in 0..n {
        let row = &x[i * d..(i + 1) * d];
        let mean = row.iter().copied().sum::<F>() * inv_d;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() * inv_d;
        let rstd = F::one() / (var + F::lit(LN_EPS)).sqrt();
        for j in 0..d {
            y[i * d + j] = (row[j] - mean) * rstd * g[j] + b[j];
        }
        stats.push((mean, rstd));
    }
    (y, stats)
}

/// Adds the input gradient to `dx`, and parameter gradients to `dg`/`db`.
fn layer_norm_backward<F: Scalar>(
    x: &[F],
    stats: &[(F, F)],
    g: &[F],
    dy: &[F],
    dx: &mut [F],
    dg: &mut [F],
    db: &mut [F],
    d: usize,
) {
    let inv_d = F::one() / F::lit(d as f64);
    let mut xhat = vec![F::zero(); d];
    let mut dxhat = vec![F::zero(); d];
    for (i, &(mean, rstd)) in stats.iter().enumerate() {
        let (xr, dyr) = (&x[i * d..(i + 1) * d], &dy[i * d..(i + 1) * d]);
        let mut m1 = F::zero();
        let mut m2 = F::zero();
        for j in 0..d {
            xhat[j] = (xr[j] - mean) * rstd;
            dxhat[j] = dyr[j] * g[j];
            dg[j] += dyr[j] * xhat[j];
            db[j] += dyr[j];
            m1 += dxhat[j];
            m2 += dxhat[j] * xhat[j];
        }
        m1 *= inv_d;
        m2 *= inv_d;
        for j in 0..d {
            dx[i * d + j] += rstd * (dxhat[j] - m1 - xhat[j] * m2);
        }
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

fn gelu<F: Scalar>(x: F) -> F {
    let (c, a, half) = (F::lit(GELU_C), F::lit(GELU_A), F::lit(0.5));
    half * x * (F::one() + (c * (x + a * x * x * x)).tanh())
}

fn gelu_grad<F: Scalar>(x: F) -> F {
    let (c, a, half) = (F::lit(GELU_C), F::lit(GELU_A), F::lit(0.5));
    let t = (c * (x + a * x * x * x)).tanh();
    half * (F::one() + t) + half * x * (F::one() - t * t) * c * (F::one() + F::lit(3.0) * a * x * x)
}

fn add_bias<F: Scalar>(y: &mut [F], b: &[F]) {
    for row in y.chunks_mut(b.len()) {
        row.iter_mut().zip(b).for_each(|(v, &bb)| *v += bb);
    }
}

fn bias_grad<F: Scalar>(dy: &[F], db: &mut [F]) {
    for row in dy.chunks(db.len()) {
        db.iter_mut().zip(row).for_each(|(g, &v)| *g += v);
    }
}

/// Causal softmax of one score row in place; entries after `i` become zero.
fn causal_softmax<F: Scalar>(row: &mut [F], i: usize, scale: F) {
    let mut max = F::neg_infinity();
    for v in &mut row[..=i] {
        *v *= scale;
        if *v > max {
            max = *v;
        }
    }
    let mut sum = F::zero();
    for v in &mut row[..=i] {
        *v = (*v - max).exp();
        sum += *v;
    }
    let inv = F::one() / sum;
    row[..=i].iter_mut().for_each(|v| *v *= inv);
    row[i + 1..].iter_mut().for_each(|v| *v = F::zero());
}

fn dropout_mask<F: Scalar>(len: usize, p: f64, rng: &mut ChaCha8Rng) -> Vec<F> {
    let keep = F::lit(1.0 / (1.0 - p));
    (0..len).map(|_| if rng.gen::<f64>() < p { F::zero() } else { keep }).collect()
}

impl<F: Scalar> Model<F> {
    /// Normal(0, 0.02) weights, unit norm gains, zero biases.
    pub fn init(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut params = vec![F::zero(); layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        for t in &layout.tensors {
            match t.init_kind() {
                InitKind::Zero => {}
                InitKind::One => params[t.range()].iter_mut().for_each(|v| *v = F::one()),
                InitKind::Normal => params[t.range()].iter_mut().for_each(|v| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *v = F::lit(z * INIT_STD);
                }),
            }
        }
        Ok(Self { config, layout, params })
    }

    pub fn from_params(config: ModelConfig, params: Vec<F>) -> Result<Self, ModelError> {
        config.validate()?;
        let layout = Layout::new(&config);
        if params.len() != layout.total {
            return Err(ModelError::Format(format!("expected {} parameters, got {}", layout.total, params.len())));
        }
        Ok(Self { config, layout, params })
    }

    /// The same model in another precision.
    pub fn cast<G: Scalar>(&self) -> Model<G> {
        Model {
            config: self.config.clone(),
            layout: self.layout.clone(),
            params: self.params.iter().map(|&v| G::lit(v.to_f64().expect("finite"))).collect(),
        }
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    fn check_ids(&self, ids: &[u32]) -> Result<(), ModelError> {
        if ids.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        if ids.len() > self.config.context_length {
            return Err(ModelError::ContextOverflow { len: ids.len(), max: self.config.context_length });
        }
        if let Some(&bad) = ids.iter().find(|&&t| t as usize >= self.config.vocab_size) {
            return Err(ModelError::TokenOutOfRange(bad));
        }
        Ok(())
    }

    fn run(&self, ids: &[u32], mut dropout: Option<&mut ChaCha8Rng>) -> Acts<F> {
        let c = &self.config;
        let (n, d, f, h) = (ids.len(), c.d_model, c.d_ff, c.n_heads);
        let hd = c.head_dim();
        let p = &self.params;
        let lay = &self.layout;
        let drop_p = if dropout.is_some() { c.dropout } else { 0.0 };
        let mut mask = |len: usize| -> Option<Vec<F>> {
            match dropout.as_deref_mut() {
                Some(rng) if drop_p > 0.0 => Some(dropout_mask(len, drop_p, rng)),
                _ => None,
            }
        };

        let mut x = vec![F::zero(); n * d];
        let (wte, wpe) = (&p[lay.wte.clone()], &p[lay.wpe.clone()]);
        for (i, &t) in ids.iter().enumerate() {
            let t = t as usize;
            for j in 0..d {
                x[i * d + j] = wte[t * d + j] + wpe[i * d + j];
            }
        }
        let emb_mask = mask(n * d);
        if let Some(m) = &emb_mask {
            x.iter_mut().zip(m).for_each(|(v, &k)| *v *= k);
        }

        let scale = F::one() / F::lit(hd as f64).sqrt();
        let mut blocks = Vec::with_capacity(c.n_layers);
        for s in &lay.blocks {
            let x_in = x.clone();
            let (ln1, ln1_stats) = layer_norm(&x, &p[s.ln1_g.clone()], &p[s.ln1_b.clone()], d);
            let mut qkv = vec![F::zero(); n * 3 * d];
            matmul(View::new(&ln1, n, d), false, View::new(&p[s.w_qkv.clone()], d, 3 * d), false, &mut qkv, 3 * d, false);
            add_bias(&mut qkv, &p[s.b_qkv.clone()]);
            let mut probs = vec![F::zero(); h * n * n];
            let mut att = vec![F::zero(); n * d];
            for head in 0..h {
                let q = View::strided(&qkv[head * hd..], n, hd, 3 * d);
                let k = View::strided(&qkv[d + head * hd..], n, hd, 3 * d);
                let v = View::strided(&qkv[2 * d + head * hd..], n, hd, 3 * d);
                let pr = &mut probs[head * n * n..(head + 1) * n * n];
                matmul(q, false, k, true, pr, n, false);
                for i in 0..n {
                    causal_softmax(&mut pr[i * n..(i + 1) * n], i, scale);
                }
                matmul(View::new(pr, n, n), false, v, false, &mut att[head * hd..], d, false);
            }
            let mut proj = vec![F::zero(); n * d];
            matmul(View::new(&att, n, d), false, View::new(&p[s.w_o.clone()], d, d), false, &mut proj, d, false);
            add_bias(&mut proj, &p[s.b_o.clone()]);
            let attn_mask = mask(n * d);
            if let Some(m) = &attn_mask {
                proj.iter_mut().zip(m).for_each(|(v, &k)| *v *= k);
            }
            x.iter_mut().zip(&proj).for_each(|(a, &b)| *a += b);
            let x_mid = x.clone();

            let (ln2, ln2_stats) = layer_norm(&x, &p[s.ln2_g.clone()], &p[s.ln2_b.clone()], d);
            let mut fc = vec![F::zero(); n * f];
            matmul(View::new(&ln2, n, d), false, View::new(&p[s.w_fc.clone()], d, f), false, &mut fc, f, false);
            add_bias(&mut fc, &p[s.b_fc.clone()]);
            let act: Vec<F> = fc.iter().map(|&v| gelu(v)).collect();
            let mut out = vec![F::zero(); n * d];
            matmul(View::new(&act, n, f), false, View::new(&p[s.w_proj.clone()], f, d), false, &mut out, d, false);
            add_bias(&mut out, &p[s.b_proj.clone()]);
            let mlp_mask = mask(n * d);
            if let Some(m) = &mlp_mask {
                out.iter_mut().zip(m).for_each(|(v, &k)| *v *= k);
            }
            x.iter_mut().zip(&out).for_each(|(a, &b)| *a += b);
            blocks.push(BlockActs {
                x_in,
                ln1,
                ln1_stats,
                qkv,
                probs,
                att,
                attn_mask,
                x_mid,
                ln2,
                ln2_stats,
                fc,
                act,
                mlp_mask,
            });
        }
        let (lnf, lnf_stats) = layer_norm(&x, &p[lay.lnf_g.clone()], &p[lay.lnf_b.clone()], d);
        let v = c.vocab_size;
        let mut logits = vec![F::zero(); n * v];
        matmul(View::new(&lnf, n, d), false, View::new(wte, v, d), true, &mut logits, v, false);
        Acts { n, emb_mask, blocks, x_out: x, lnf, lnf_stats, logits }
    }

    /// Logits at every position of `ids`.
    pub fn forward(&self, ids: &[u32], capture_attention: bool) -> Result<Forward<F>, ModelError> {
        self.check_ids(ids)?;
        let acts = self.run(ids, None);
        let attention = capture_attention.then(|| acts.blocks.iter().map(|b| b.probs.clone()).collect());
        Ok(Forward { n: acts.n, logits: acts.logits, attention })
    }

    /// Mean next-token cross-entropy over every target position of the batch.
    pub fn loss(&self, batch: &[Vec<u32>]) -> Result<f64, ModelError> {
        let total = count_targets(batch)?;
        let mut sum = 0.0;
        for seq in batch {
            self.check_ids(seq)?;
            let acts = self.run(&seq[..seq.len() - 1], None);
            sum += xent(&acts.logits, &seq[1..], self.config.vocab_size, None);
        }
        Ok(sum / total as f64)
    }

    /// Mean loss and its gradient, added into `grad`. Dropout is active only
    /// when a generator is supplied.
    pub fn loss_and_grad(
        &self,
        batch: &[Vec<u32>],
        grad: &mut [F],
        mut dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<f64, ModelError> {
        assert_eq!(grad.len(), self.params.len(), "gradient buffer size");
        let total = count_targets(batch)?;
        let norm = F::one() / F::lit(total as f64);
        let mut sum = 0.0;
        for seq in batch {
            self.check_ids(seq)?;
            let input = &seq[..seq.len() - 1];
            let acts = self.run(input, dropout.as_deref_mut());
            let mut dlogits = vec![F::zero(); acts.logits.len()];
            sum += xent(&acts.logits, &seq[1..], self.config.vocab_size, Some((&mut dlogits, norm)));
            self.backward(input, &acts, &dlogits, grad);
        }
        let loss = sum / total as f64;
        if !loss.is_finite() {
            return Err(ModelError::NonFiniteLoss(loss));
        }
        Ok(loss)
    }

    fn backward(&self, ids: &[u32], a: &Acts<F>, dlogits: &[F], grad: &mut [F]) {
        let c = &self.config;
        let (n, d, f, h, v) = (a.n, c.d_model, c.d_ff, c.n_heads, c.vocab_size);
        let hd = c.head_dim();
        let p = &self.params;
        let lay = &self.layout;
        let scale = F::one() / F::lit(hd as f64).sqrt();

        // Tied output head.
        let mut dlnf = vec![F::zero(); n * d];
        matmul(View::new(dlogits, n, v), false, View::new(&p[lay.wte.clone()], v, d), false, &mut dlnf, d, false);
        matmul(View::new(dlogits, n, v), true, View::new(&a.lnf, n, d), false, &mut grad[lay.wte.clone()], d, true);
        let mut dx = vec![F::zero(); n * d];
        {
            let (dg, db) = split_two(grad, lay.lnf_g.clone(), lay.lnf_b.clone());
            layer_norm_backward(&a.x_out, &a.lnf_stats, &p[lay.lnf_g.clone()], &dlnf, &mut dx, dg, db, d);
        }

        for (s, b) in lay.blocks.iter().zip(&a.blocks).rev() {
            // MLP branch.
            let mut dout = dx.clone();
            if let Some(m) = &b.mlp_mask {
                dout.iter_mut().zip(m).for_each(|(g, &k)| *g *= k);
            }
            matmul(View::new(&b.act, n, f), true, View::new(&dout, n, d), false, &mut grad[s.w_proj.clone()], d, true);
            bias_grad(&dout, &mut grad[s.b_proj.clone()]);
            let mut dfc = vec![F::zero(); n * f];
            matmul(View::new(&dout, n, d), false, View::new(&p[s.w_proj.clone()], f, d), true, &mut dfc, f, false);
            dfc.iter_mut().zip(&b.fc).for_each(|(g, &x)| *g *= gelu_grad(x));
            matmul(View::new(&b.ln2, n, d), true, View::new(&dfc, n, f), false, &mut grad[s.w_fc.clone()], f, true);
            bias_grad(&dfc, &mut grad[s.b_fc.clone()]);
            let mut dln2 = vec![F::zero(); n * d];
            matmul(View::new(&dfc, n, f), false, View::new(&p[s.w_fc.clone()], d, f), true, &mut dln2, d, false);
            {
                let (dg, db) = split_two(grad, s.ln2_g.clone(), s.ln2_b.clone());
                layer_norm_backward(&b.x_mid, &b.ln2_stats, &p[s.ln2_g.clone()], &dln2, &mut dx, dg, db, d);
            }

            // Attention branch.
            let mut dproj = dx.clone();
            if let Some(m) = &b.attn_mask {
                dproj.iter_mut().zip(m).for_each(|(g, &k)| *g *= k);
            }
            matmul(View::new(&b.att, n, d), true, View::new(&dproj, n, d), false, &mut grad[s.w_o.clone()], d, true);
            bias_grad(&dproj, &mut grad[s.b_o.clone()]);
            let mut datt = vec![F::zero(); n * d];
            matmul(View::new(&dproj, n, d), false, View::new(&p[s.w_o.clone()], d, d), true, &mut datt, d, false);
            let mut dqkv = vec![F::zero(); n * 3 * d];
            let mut dp = vec![F::zero(); n * n];
            for head in 0..h {
                let q = View::strided(&b.qkv[head * hd..], n, hd, 3 * d);
                let k = View::strided(&b.qkv[d + head * hd..], n, hd, 3 * d);
                let vv = View::strided(&b.qkv[2 * d + head * hd..], n, hd, 3 * d);
                let pr = &b.probs[head * n * n..(head + 1) * n * n];
                let d_o = View::strided(&datt[head * hd..], n, hd, d);
                matmul(d_o, false, vv, true, &mut dp, n, false);
                matmul(View::new(pr, n, n), true, d_o, false, &mut dqkv[2 * d + head * hd..], 3 * d, false);
                for i in 0..n {
                    let (prow, drow) = (&pr[i * n..(i + 1) * n], &mut dp[i * n..(i + 1) * n]);
                    let dot: F = (0..=i).map(|j| prow[j] * drow[j]).sum();
                    for j in 0..=i {
                        drow[j] = prow[j] * (drow[j] - dot) * scale;
                    }
                    drow[i + 1..].iter_mut().for_each(|x| *x = F::zero());
                }
                matmul(View::new(&dp, n, n), false, k, false, &mut dqkv[head * hd..], 3 * d, false);
                matmul(View::new(&dp, n, n), true, q, false, &mut dqkv[d + head * hd..], 3 * d, false);
            }
            matmul(View::new(&b.ln1, n, d), true, View::new(&dqkv, n, 3 * d), false, &mut grad[s.w_qkv.clone()], 3 * d, true);
            bias_grad(&dqkv, &mut grad[s.b_qkv.clone()]);
            let mut dln1 = vec![F::zero(); n * d];
            matmul(View::new(&dqkv, n, 3 * d), false, View::new(&p[s.w_qkv.clone()], d, 3 * d), true, &mut dln1, d, false);
            let (dg, db) = split_two(grad, s.ln1_g.clone(), s.ln1_b.clone());
            layer_norm_backward(&b.x_in, &b.ln1_stats, &p[s.ln1_g.clone()], &dln1, &mut dx, dg, db, d);
        }

        if let Some(m) = &a.emb_mask {
            dx.iter_mut().zip(m).for_each(|(g, &k)| *g *= k);
        }
        let (wte0, wpe0) = (lay.wte.start, lay.wpe.start);
        for (i, &t) in ids.iter().enumerate() {
            for j in 0..d {
                grad[wte0 + t as usize * d + j] += dx[i * d + j];
                grad[wpe0 + i * d + j] += dx[i * d + j];
            }
        }
    }

    /// Starts an incremental decoding session.
    pub fn session(&self) -> Session<'_, F> {
        let n = self.config.n_layers;
        Session { model: self, keys: vec![Vec::new(); n], values: vec![Vec::new(); n], len: 0 }
    }
}

/// Two disjoint mutable sub-slices of `grad`, the first range before the second.
fn split_two<F>(grad: &mut [F], a: std::ops::Range<usize>, b: std::ops::Range<usize>) -> (&mut [F], &mut [F]) {
    assert!(a.end <= b.start);
    let (lo, hi) = grad.split_at_mut(b.start);
    (&mut lo[a], &mut hi[..b.end - b.start])
}

fn count_targets(batch: &[Vec<u32>]) -> Result<usize, ModelError> {
    if batch.is_empty() || batch.iter().any(|s| s.len() < 2) {
        return Err(ModelError::EmptyInput);
    }
    Ok(batch.iter().map(|s| s.len() - 1).sum())
}

/// Summed cross-entropy of `targets` under row-wise logits. With `grad`,
/// writes `(softmax - onehot) * scale` into the supplied buffer.
fn xent<F: Scalar>(logits: &[F], targets: &[u32], v: usize, grad: Option<(&mut [F], F)>) -> f64 {
    let mut total = 0.0;
    let mut grad = grad;
    for (i, &t) in targets.iter().enumerate() {
        let row = &logits[i * v..(i + 1) * v];
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        let sum: F = row.iter().map(|&x| (x - max).exp()).sum();
        let lse = max + sum.ln();
        total += (lse - row[t as usize]).to_f64().unwrap_or(f64::NAN);
        if let Some((g, scale)) = grad.as_mut() {
            let out = &mut g[i * v..(i + 1) * v];
            for (o, &x) in out.iter_mut().zip(row) {
                *o = (x - lse).exp() * *scale;
            }
            out[t as usize] -= *scale;
        }
    }
    total
}

/// Cached keys and values for one sequence being extended a token at a time.
/// Cloning branches the sequence.
#[derive(Clone)]
pub struct Session<'m, F: Scalar> {
    model: &'m Model<F>,
    keys: Vec<Vec<F>>,
    values: Vec<Vec<F>>,
    len: usize,
}

impl<F: Scalar> Session<'_, F> {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Appends one token and returns the next-token logits.
    pub fn push(&mut self, token: u32) -> Result<Vec<F>, ModelError> {
        let m = self.model;
        let c = &m.config;
        if self.len >= c.context_length {
            return Err(ModelError::ContextOverflow { len: self.len + 1, max: c.context_length });
        }
        if token as usize >= c.vocab_size {
            return Err(ModelError::TokenOutOfRange(token));
        }
        let (d, f, h, v) = (c.d_model, c.d_ff, c.n_heads, c.vocab_size);
        let hd = c.head_dim();
        let p = &m.params;
        let lay = &m.layout;
        let pos = self.len;
        let t = token as usize;
        let mut x: Vec<F> = (0..d).map(|j| p[lay.wte.start + t * d + j] + p[lay.wpe.start + pos * d + j]).collect();
        let scale = F::one() / F::lit(hd as f64).sqrt();
        let n = pos + 1;
        for (l, s) in lay.blocks.iter().enumerate() {
            let (ln1, _) = layer_norm(&x, &p[s.ln1_g.clone()], &p[s.ln1_b.clone()], d);
            let mut qkv = vec![F::zero(); 3 * d];
            matmul(View::new(&ln1, 1, d), false, View::new(&p[s.w_qkv.clone()], d, 3 * d), false, &mut qkv, 3 * d, false);
            add_bias(&mut qkv, &p[s.b_qkv.clone()]);
            self.keys[l].extend_from_slice(&qkv[d..2 * d]);
            self.values[l].extend_from_slice(&qkv[2 * d..]);
            let (keys, values) = (&self.keys[l], &self.values[l]);
            let mut att = vec![F::zero(); d];
            let mut scores = vec![F::zero(); n];
            for head in 0..h {
                let q = View::new(&qkv[head * hd..head * hd + hd], 1, hd);
                matmul(q, false, View::strided(&keys[head * hd..], n, hd, d), true, &mut scores, n, false);
                causal_softmax(&mut scores, n - 1, scale);
                matmul(
                    View::new(&scores, 1, n),
                    false,
                    View::strided(&values[head * hd..], n, hd, d),
                    false,
                    &mut att[head * hd..],
                    d,
                    false,
                );
            }
            let mut proj = vec![F::zero(); d];
            matmul(View::new(&att, 1, d), false, View::new(&p[s.w_o.clone()], d, d), false, &mut proj, d, false);
            add_bias(&mut proj, &p[s.b_o.clone()]);
            x.iter_mut().zip(&proj).for_each(|(a, &b)| *a += b);
            let (ln2, _) = layer_norm(&x, &p[s.ln2_g.clone()], &p[s.ln2_b.clone()], d);
            let mut fc = vec![F::zero(); f];
            matmul(View::new(&ln2, 1, d), false, View::new(&p[s.w_fc.clone()], d, f), false, &mut fc, f, false);
            add_bias(&mut fc, &p[s.b_fc.clone()]);
            fc.iter_mut().for_each(|v| *v = gelu(*v));
            let mut out = vec![F::zero(); d];
            matmul(View::new(&fc, 1, f), false, View::new(&p[s.w_proj.clone()], f, d), false, &mut out, d, false);
            add_bias(&mut out, &p[s.b_proj.clone()]);
            x.iter_mut().zip(&out).for_each(|(a, &b)| *a += b);
        }
        let (lnf, _) = layer_norm(&x, &p[lay.lnf_g.clone()], &p[lay.lnf_b.clone()], d);
        let mut logits = vec![F::zero(); v];
        matmul(View::new(&lnf, 1, d), false, View::new(&p[lay.wte.clone()], v, d), true, &mut logits, v, false);
        self.len += 1;
        Ok(logits)
    }
}
